#include "mcisim/protocol.hpp"

#include "json_fields.hpp"
#include "mcisim/error.hpp"

namespace mcisim {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json envelope_to_json(const Envelope& e) {
  ordered_json j;
  j["v"] = e.v;
  j["type"] = e.type;
  j["session"] = e.session ? ordered_json(*e.session) : ordered_json(nullptr);
  j["sender"] = e.sender;
  j["seq"] = e.seq;
  j["ts_ms"] = e.ts_ms;
  j["payload"] = e.payload;
  return j;
}

std::string serialize_envelope(const Envelope& e) { return envelope_to_json(e).dump(); }

Envelope parse_envelope(std::string_view text) {
  const json j = detail::parse_json_document(text, "message");
  auto fail = [](const std::string& what) { throw Error(ErrorCode::Protocol, what); };
  if (!j.is_object()) fail("message must be a JSON object");

  Envelope e;
  if (auto it = j.find("v"); it == j.end() || !it->is_number_integer()) {
    fail("message.v must be an integer");
  } else {
    e.v = it->get<int>();
  }
  if (auto it = j.find("type"); it == j.end() || !it->is_string()) {
    fail("message.type must be a string");
  } else {
    e.type = it->get<std::string>();
  }
  if (auto it = j.find("session"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) fail("message.session must be a string or null");
    e.session = it->get<std::string>();
  }
  if (auto it = j.find("sender"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) fail("message.sender must be a string");
    e.sender = it->get<std::string>();
  }
  if (auto it = j.find("seq"); it != j.end()) {
    if (!it->is_number_unsigned()) fail("message.seq must be an unsigned integer");
    e.seq = it->get<std::uint64_t>();
  }
  if (auto it = j.find("ts_ms"); it != j.end()) {
    if (!it->is_number_unsigned()) fail("message.ts_ms must be an unsigned integer");
    e.ts_ms = it->get<std::uint64_t>();
  }
  if (auto it = j.find("payload"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) fail("message.payload must be an object");
    e.payload = *it;
  }
  return e;
}

}  // namespace mcisim
