#pragma once
// Wire envelope shared by the raw TCP (newline-delimited) and WebSocket
// transports. One JSON object per message.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace mcisim {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 7440;
inline constexpr const char* kPortEnvVar = "MCI_SIM_PORT";
inline constexpr std::size_t kOutboundLimit = 1000;

struct Envelope {
  int v = kProtocolVersion;
  std::string type;
  std::optional<std::string> session;
  std::string sender;
  std::uint64_t seq = 0;
  std::uint64_t ts_ms = 0;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::ordered_json envelope_to_json(const Envelope& e);
std::string serialize_envelope(const Envelope& e);

// Throws Error{Format} for malformed JSON and Error{Protocol} for a
// well-formed document that is not an envelope.
Envelope parse_envelope(std::string_view text);

}  // namespace mcisim
