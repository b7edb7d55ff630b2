#pragma once
// Network front end for the Hub. One listening port serves both raw TCP
// (newline-delimited JSON) and WebSocket; a connection whose first bytes are
// "GET " is treated as an HTTP upgrade. Everything runs on one io_context
// thread, so the Hub is never touched concurrently.

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <string>

#include "mcisim/hub.hpp"

namespace mcisim {

// Per-connection outbound buffer. A client that falls more than `limit`
// messages behind is disconnected as lagged.
class OutboundQueue {
 public:
  explicit OutboundQueue(std::size_t limit = kOutboundLimit) : limit_(limit) {}

  // False when the queue is already at its limit (message not queued).
  bool push(std::string message);
  const std::string& front() const { return items_.front(); }
  void pop() { items_.pop_front(); }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  std::size_t limit() const { return limit_; }

 private:
  std::size_t limit_;
  std::deque<std::string> items_;
};

struct NetServerOptions {
  std::string address = "0.0.0.0";
  std::uint16_t port = kDefaultPort;  // 0 picks an ephemeral port
  std::chrono::milliseconds tick_interval{20};
  std::size_t outbound_limit = kOutboundLimit;
};

class NetServer {
 public:
  // Binds immediately; throws on failure.
  NetServer(Hub& hub, NetServerOptions options = {});
  ~NetServer();

  std::uint16_t port() const;

  // Serves until stop(). Call from exactly one thread.
  void run();
  // Safe from any thread.
  void stop();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace mcisim
