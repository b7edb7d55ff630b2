#include "mcisim/events.hpp"

#include <array>

#include "json_fields.hpp"
#include "mcisim/error.hpp"

namespace mcisim {
namespace {

using detail::Fields;
using detail::format_error;
using nlohmann::json;
using nlohmann::ordered_json;

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view s, const std::array<Enum, N>& values) {
  for (Enum v : values) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

template <typename Enum>
Enum require_enum(Fields& f, std::string_view key,
                  std::optional<Enum> (*parse)(std::string_view)) {
  const auto s = f.get_string(key);
  auto v = parse(s);
  if (!v) format_error(f.child(key), "unknown value '" + s + "'");
  return *v;
}

ordered_json pose_numbers(const Pose& p) {
  return {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"yaw_deg", p.yaw_deg}};
}

ordered_json vec(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number()) {
    format_error(path, "expected [x, y, z]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<int> ints_from(const json& j, const std::string& path) {
  if (!j.is_array()) format_error(path, "expected integer array");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_integer()) format_error(path + "[" + std::to_string(i) + "]", "expected integer");
    out.push_back(j[i].get<int>());
  }
  return out;
}

struct ToJson {
  ordered_json operator()(const ev::SessionStart& e) const {
    ordered_json parts = ordered_json::array();
    for (const auto& p : e.participants) {
      parts.push_back({{"responder_id", p.responder_id}, {"role", to_string(p.role)}});
    }
    return {{"participants", parts}};
  }
  ordered_json operator()(const ev::SessionEnd& e) const { return {{"reason", e.reason}}; }
  ordered_json operator()(const ev::ParticipantJoined& e) const {
    return {{"role", to_string(e.role)}};
  }
  ordered_json operator()(const ev::HandSample& e) const {
    return {{"sensor", to_string(e.sensor)}, {"pose", pose_numbers(e.pose)}};
  }
  ordered_json operator()(const ev::GazeSample& e) const {
    return {{"origin", vec(e.origin)}, {"direction", vec(e.direction)}};
  }
  ordered_json operator()(const ev::ZoneEnter& e) const { return {{"zone", to_string(e.zone)}}; }
  ordered_json operator()(const ev::ZoneExit& e) const {
    return {{"zone", to_string(e.zone)},
            {"duration_ms", e.duration_ms},
            {"ticks_emitted", e.ticks_emitted}};
  }
  ordered_json operator()(const ev::VitalsReadout& e) const {
    return {{"channel", to_string(e.channel)}, {"values", e.values}};
  }
  ordered_json operator()(const ev::HeartbeatTick&) const { return ordered_json::object(); }
  ordered_json operator()(const ev::BreathTick&) const { return ordered_json::object(); }
  ordered_json operator()(const ev::VoiceQuery& e) const { return {{"query", to_string(e.query)}}; }
  ordered_json operator()(const ev::GestureResponse& e) const {
    return {{"waved", e.waved}, {"pointed_to_injury", e.pointed_to_injury}};
  }
  ordered_json operator()(const ev::TagAssigned& e) const {
    return {{"category", to_string(e.category)}};
  }
  ordered_json operator()(const ev::AuthorToggled& e) const { return {{"active", e.active}}; }
  ordered_json operator()(const ev::PatientPlaced& e) const {
    return {{"pose", pose_numbers(e.pose)}};
  }
  ordered_json operator()(const ev::VisibilitySet& e) const { return {{"visible", e.visible}}; }
  ordered_json operator()(const ev::ParamTweak& e) const {
    return {{"key", e.key}, {"value", e.value}};
  }
  ordered_json operator()(const ev::FacilitatorPrompt& e) const {
    return {{"channel", to_string(e.channel)}};
  }
  ordered_json operator()(const ev::FacilitatorValue& e) const {
    return {{"channel", to_string(e.channel)}, {"value", e.value}};
  }
  ordered_json operator()(const ev::CrossCheckMismatch& e) const {
    return {{"channel", to_string(e.channel)}, {"submitted", e.submitted}, {"truth", e.truth}};
  }
};

Pose pose_from_numbers(Fields& f, std::string_view key) {
  Fields p(f.at(key), f.child(key));
  Pose out;
  out.x = p.get_decimal("x");
  out.y = p.get_decimal("y");
  out.z = p.get_decimal("z");
  out.yaw_deg = p.get_decimal("yaw_deg");
  p.finish();
  return out;
}

EventPayload payload_from_json(std::string_view kind, const json& j, const std::string& path) {
  Fields f(j, path);
  EventPayload out;
  if (kind == "SessionStart") {
    ev::SessionStart e;
    const json& arr = f.get_array("participants");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Fields p(arr[i], f.child("participants") + "[" + std::to_string(i) + "]");
      Participant part;
      part.responder_id = p.get_string("responder_id");
      part.role = require_enum<Role>(p, "role", &parse_role);
      p.finish();
      e.participants.push_back(std::move(part));
    }
    out = std::move(e);
  } else if (kind == "SessionEnd") {
    out = ev::SessionEnd{f.get_string("reason")};
  } else if (kind == "ParticipantJoined") {
    out = ev::ParticipantJoined{require_enum<Role>(f, "role", &parse_role)};
  } else if (kind == "HandSample") {
    ev::HandSample e;
    e.sensor = require_enum<Sensor>(f, "sensor", &parse_sensor);
    e.pose = pose_from_numbers(f, "pose");
    out = e;
  } else if (kind == "GazeSample") {
    ev::GazeSample e;
    e.origin = vec_from(f.at("origin"), f.child("origin"));
    e.direction = vec_from(f.at("direction"), f.child("direction"));
    out = e;
  } else if (kind == "ZoneEnter") {
    out = ev::ZoneEnter{require_enum<ZoneKind>(f, "zone", &parse_zone)};
  } else if (kind == "ZoneExit") {
    ev::ZoneExit e;
    e.zone = require_enum<ZoneKind>(f, "zone", &parse_zone);
    e.duration_ms = f.get_u64("duration_ms");
    e.ticks_emitted = f.get_u64("ticks_emitted");
    out = e;
  } else if (kind == "VitalsReadout") {
    ev::VitalsReadout e;
    e.channel = require_enum<VitalChannel>(f, "channel", &parse_channel);
    e.values = ints_from(f.at("values"), f.child("values"));
    out = e;
  } else if (kind == "HeartbeatTick") {
    out = ev::HeartbeatTick{};
  } else if (kind == "BreathTick") {
    out = ev::BreathTick{};
  } else if (kind == "VoiceQuery") {
    out = ev::VoiceQuery{require_enum<Query>(f, "query", &parse_query)};
  } else if (kind == "GestureResponse") {
    ev::GestureResponse e;
    e.waved = f.get_bool("waved");
    e.pointed_to_injury = f.get_bool("pointed_to_injury");
    out = e;
  } else if (kind == "TagAssigned") {
    out = ev::TagAssigned{require_enum<TriageCategory>(f, "category", &parse_category)};
  } else if (kind == "AuthorToggled") {
    out = ev::AuthorToggled{f.get_bool("active")};
  } else if (kind == "PatientPlaced") {
    out = ev::PatientPlaced{pose_from_numbers(f, "pose")};
  } else if (kind == "VisibilitySet") {
    out = ev::VisibilitySet{f.get_bool("visible")};
  } else if (kind == "ParamTweak") {
    ev::ParamTweak e;
    e.key = f.get_string("key");
    e.value = f.get_decimal("value");
    out = e;
  } else if (kind == "FacilitatorPrompt") {
    out = ev::FacilitatorPrompt{require_enum<VitalChannel>(f, "channel", &parse_channel)};
  } else if (kind == "FacilitatorValue") {
    ev::FacilitatorValue e;
    e.channel = require_enum<VitalChannel>(f, "channel", &parse_channel);
    e.value = ints_from(f.at("value"), f.child("value"));
    out = e;
  } else if (kind == "CrossCheckMismatch") {
    ev::CrossCheckMismatch e;
    e.channel = require_enum<VitalChannel>(f, "channel", &parse_channel);
    e.submitted = ints_from(f.at("submitted"), f.child("submitted"));
    e.truth = ints_from(f.at("truth"), f.child("truth"));
    out = e;
  } else {
    format_error(path, "unknown event kind '" + std::string(kind) + "'");
  }
  f.finish();
  return out;
}

constexpr std::array<Role, 2> kRoles = {Role::Trainee, Role::Facilitator};
constexpr std::array<Sensor, 3> kSensors = {Sensor::Palm, Sensor::TwoFingers, Sensor::Head};
constexpr std::array<ZoneKind, 4> kZones = {ZoneKind::Bicep, ZoneKind::Wrist, ZoneKind::Chest,
                                            ZoneKind::HeadProximity};
constexpr std::array<VitalChannel, 3> kChannels = {VitalChannel::BloodPressure,
                                                   VitalChannel::Heartbeat, VitalChannel::Breath};
constexpr std::array<Query, 2> kQueries = {Query::CanYouWave, Query::ShowMeWhereItHurts};

}  // namespace

std::string_view to_string(Role r) { return r == Role::Trainee ? "trainee" : "facilitator"; }

std::string_view to_string(Sensor s) {
  switch (s) {
    case Sensor::Palm: return "palm";
    case Sensor::TwoFingers: return "two_fingers";
    case Sensor::Head: return "head";
  }
  return "palm";
}

std::string_view to_string(ZoneKind z) {
  switch (z) {
    case ZoneKind::Bicep: return "bicep";
    case ZoneKind::Wrist: return "wrist";
    case ZoneKind::Chest: return "chest";
    case ZoneKind::HeadProximity: return "head_proximity";
  }
  return "bicep";
}

std::string_view to_string(VitalChannel c) {
  switch (c) {
    case VitalChannel::BloodPressure: return "blood_pressure";
    case VitalChannel::Heartbeat: return "heartbeat";
    case VitalChannel::Breath: return "breath";
  }
  return "heartbeat";
}

std::string_view to_string(Query q) {
  return q == Query::CanYouWave ? "can_you_wave" : "show_me_where_it_hurts";
}

std::optional<Role> parse_role(std::string_view s) { return lookup(s, kRoles); }
std::optional<Sensor> parse_sensor(std::string_view s) { return lookup(s, kSensors); }
std::optional<ZoneKind> parse_zone(std::string_view s) { return lookup(s, kZones); }
std::optional<VitalChannel> parse_channel(std::string_view s) { return lookup(s, kChannels); }
std::optional<Query> parse_query(std::string_view s) { return lookup(s, kQueries); }

std::string_view kind_name(const EventPayload& payload) {
  static constexpr std::array<std::string_view, std::variant_size_v<EventPayload>> kNames = {
      "SessionStart",      "SessionEnd",      "ParticipantJoined", "HandSample",
      "GazeSample",        "ZoneEnter",       "ZoneExit",          "VitalsReadout",
      "HeartbeatTick",     "BreathTick",      "VoiceQuery",        "GestureResponse",
      "TagAssigned",       "AuthorToggled",   "PatientPlaced",     "VisibilitySet",
      "ParamTweak",        "FacilitatorPrompt", "FacilitatorValue", "CrossCheckMismatch"};
  return kNames[payload.index()];
}

bool is_input_event(const SessionEvent& e) {
  if (const auto* end = e.as<ev::SessionEnd>()) return end->reason != kTimeLimitReason;
  return std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        return std::is_same_v<T, ev::SessionStart> || std::is_same_v<T, ev::ParticipantJoined> ||
               std::is_same_v<T, ev::HandSample> || std::is_same_v<T, ev::GazeSample> ||
               std::is_same_v<T, ev::ZoneEnter> || std::is_same_v<T, ev::ZoneExit> ||
               std::is_same_v<T, ev::VoiceQuery> || std::is_same_v<T, ev::TagAssigned> ||
               std::is_same_v<T, ev::AuthorToggled> || std::is_same_v<T, ev::PatientPlaced> ||
               std::is_same_v<T, ev::VisibilitySet> || std::is_same_v<T, ev::ParamTweak> ||
               std::is_same_v<T, ev::FacilitatorValue>;
      },
      e.payload);
}

bool is_facilitator_only(const SessionEvent& e) {
  return e.is<ev::FacilitatorPrompt>() || e.is<ev::FacilitatorValue>() ||
         e.is<ev::CrossCheckMismatch>();
}

bool is_shared_state(const SessionEvent& e) {
  return e.is<ev::SessionStart>() || e.is<ev::SessionEnd>() || e.is<ev::ParticipantJoined>() ||
         e.is<ev::TagAssigned>() || e.is<ev::AuthorToggled>() || e.is<ev::PatientPlaced>() ||
         e.is<ev::VisibilitySet>() || e.is<ev::ParamTweak>();
}

ordered_json event_to_json(const SessionEvent& e) {
  ordered_json j;
  j["seq"] = e.seq;
  j["ts_ms"] = e.ts_ms;
  j["responder_id"] = e.responder_id ? ordered_json(*e.responder_id) : ordered_json(nullptr);
  j["instance_id"] = e.instance_id ? ordered_json(*e.instance_id) : ordered_json(nullptr);
  j["kind"] = kind_name(e.payload);
  j["data"] = std::visit(ToJson{}, e.payload);
  return j;
}

SessionEvent event_from_json(const json& j, const std::string& path) {
  Fields f(j, path);
  SessionEvent e;
  e.seq = f.get_u64("seq");
  e.ts_ms = f.get_u64("ts_ms");
  const json& responder = f.at("responder_id");
  if (responder.is_string()) {
    e.responder_id = responder.get<std::string>();
  } else if (!responder.is_null()) {
    format_error(f.child("responder_id"), "expected string or null");
  }
  const json& instance = f.at("instance_id");
  if (instance.is_string()) {
    e.instance_id = instance.get<std::string>();
  } else if (!instance.is_null()) {
    format_error(f.child("instance_id"), "expected string or null");
  }
  const auto kind = f.get_string("kind");
  e.payload = payload_from_json(kind, f.at("data"), f.child("data"));
  f.finish();
  return e;
}

std::string serialize_event(const SessionEvent& e) { return event_to_json(e).dump(); }

}  // namespace mcisim
