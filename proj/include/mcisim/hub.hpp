#pragma once
// Transport-independent message dispatcher. The Hub owns every hosted
// session and its log; transports feed it raw messages per connection and
// deliver the returned envelopes in order. All calls must be serialized by
// the caller (the network server runs the Hub on a single strand), which
// gives each session a single total order of effects.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mcisim/protocol.hpp"
#include "mcisim/session.hpp"
#include "mcisim/telemetry.hpp"

namespace mcisim {

using ConnectionId = std::uint64_t;

struct Outgoing {
  ConnectionId connection = 0;
  Envelope envelope;
  bool close_after = false;  // transport closes once this is flushed
};

struct HubConfig {
  MasterCaseList cases;
  std::optional<std::filesystem::path> log_dir;
  SessionConfig session_defaults;
};

class Hub {
 public:
  // Monotonic milliseconds; session clocks are offsets from StartSession.
  using Clock = std::function<std::uint64_t()>;

  Hub(HubConfig config, Clock clock);
  ~Hub();

  ConnectionId connect();
  void disconnect(ConnectionId id);

  std::vector<Outgoing> handle(ConnectionId id, std::string_view raw);
  std::vector<Outgoing> handle(ConnectionId id, const Envelope& message);

  // Drives stream ticks and expiry for every running session.
  std::vector<Outgoing> tick();

  const Session* find_session(std::string_view session_id) const;
  const EventLog* find_log(std::string_view session_id) const;
  std::vector<std::string> session_ids() const;

 private:
  struct Connection {
    bool welcomed = false;
    std::string client_id;
    Role role_intent = Role::Trainee;
    std::uint64_t out_seq = 0;
    std::optional<std::string> session_id;
    bool subscribed = false;
  };

  struct Hosted {
    std::unique_ptr<Session> session;
    std::unique_ptr<EventLog> log;
    std::uint64_t started_at = 0;
    std::set<ConnectionId> members;
  };

  class Batch;

  void dispatch(Batch& out, ConnectionId id, Connection& conn, const Envelope& msg);
  void handle_hello(Batch& out, ConnectionId id, Connection& conn, const Envelope& msg);
  void handle_create(Batch& out, ConnectionId id, const Envelope& msg);
  void handle_join(Batch& out, ConnectionId id, Connection& conn, const Envelope& msg);
  void handle_subscribe(Batch& out, ConnectionId id, Connection& conn, Hosted& hosted,
                        const Envelope& msg);
  void handle_session_command(Batch& out, ConnectionId id, Connection& conn, Hosted& hosted,
                              const Envelope& msg);

  std::uint64_t session_clock(const Hosted& hosted) const;
  void flush_events(Batch& out, Hosted& hosted);
  nlohmann::json snapshot(const Hosted& hosted) const;
  std::string unique_client_id(std::string name) const;
  std::string next_session_id();

  HubConfig config_;
  Clock clock_;
  ConnectionId next_connection_ = 1;
  std::uint64_t session_counter_ = 0;
  std::map<ConnectionId, Connection> connections_;
  std::map<std::string, Hosted, std::less<>> sessions_;
};

}  // namespace mcisim
