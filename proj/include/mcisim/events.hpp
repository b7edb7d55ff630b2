#pragma once
// Session telemetry records. One SessionEvent is one line of a
// session-<id>.jsonl log after the header line.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mcisim/scenario.hpp"
#include "mcisim/types.hpp"

namespace mcisim {

enum class Role { Trainee, Facilitator };
enum class Sensor { Palm, TwoFingers, Head };
enum class ZoneKind { Bicep, Wrist, Chest, HeadProximity };
enum class VitalChannel { BloodPressure, Heartbeat, Breath };
enum class Query { CanYouWave, ShowMeWhereItHurts };

std::string_view to_string(Role r);
std::string_view to_string(Sensor s);
std::string_view to_string(ZoneKind z);
std::string_view to_string(VitalChannel c);
std::string_view to_string(Query q);
std::optional<Role> parse_role(std::string_view s);
std::optional<Sensor> parse_sensor(std::string_view s);
std::optional<ZoneKind> parse_zone(std::string_view s);
std::optional<VitalChannel> parse_channel(std::string_view s);
std::optional<Query> parse_query(std::string_view s);

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Vec3&) const = default;
};

struct Participant {
  std::string responder_id;
  Role role = Role::Trainee;

  bool operator==(const Participant&) const = default;
};

namespace ev {

struct SessionStart {
  std::vector<Participant> participants;
  bool operator==(const SessionStart&) const = default;
};
// reason "time_limit" is engine-emitted; anything else was requested.
struct SessionEnd {
  std::string reason;
  bool operator==(const SessionEnd&) const = default;
};
struct ParticipantJoined {
  Role role = Role::Trainee;
  bool operator==(const ParticipantJoined&) const = default;
};
struct HandSample {
  Sensor sensor = Sensor::Palm;
  Pose pose;
  bool operator==(const HandSample&) const = default;
};
struct GazeSample {
  Vec3 origin;
  Vec3 direction;
  bool operator==(const GazeSample&) const = default;
};
struct ZoneEnter {
  ZoneKind zone = ZoneKind::Bicep;
  bool operator==(const ZoneEnter&) const = default;
};
struct ZoneExit {
  ZoneKind zone = ZoneKind::Bicep;
  std::uint64_t duration_ms = 0;
  std::uint64_t ticks_emitted = 0;
  bool operator==(const ZoneExit&) const = default;
};
struct VitalsReadout {
  VitalChannel channel = VitalChannel::BloodPressure;
  std::vector<int> values;
  bool operator==(const VitalsReadout&) const = default;
};
struct HeartbeatTick {
  bool operator==(const HeartbeatTick&) const = default;
};
struct BreathTick {
  bool operator==(const BreathTick&) const = default;
};
struct VoiceQuery {
  Query query = Query::CanYouWave;
  bool operator==(const VoiceQuery&) const = default;
};
struct GestureResponse {
  bool waved = false;
  bool pointed_to_injury = false;
  bool operator==(const GestureResponse&) const = default;
};
struct TagAssigned {
  TriageCategory category = TriageCategory::Black;
  bool operator==(const TagAssigned&) const = default;
};
struct AuthorToggled {
  bool active = false;
  bool operator==(const AuthorToggled&) const = default;
};
struct PatientPlaced {
  Pose pose;
  bool operator==(const PatientPlaced&) const = default;
};
struct VisibilitySet {
  bool visible = false;
  bool operator==(const VisibilitySet&) const = default;
};
struct ParamTweak {
  std::string key;
  double value = 0.0;
  bool operator==(const ParamTweak&) const = default;
};
struct FacilitatorPrompt {
  VitalChannel channel = VitalChannel::Heartbeat;
  bool operator==(const FacilitatorPrompt&) const = default;
};
struct FacilitatorValue {
  VitalChannel channel = VitalChannel::Heartbeat;
  std::vector<int> value;
  bool operator==(const FacilitatorValue&) const = default;
};
struct CrossCheckMismatch {
  VitalChannel channel = VitalChannel::Heartbeat;
  std::vector<int> submitted;
  std::vector<int> truth;
  bool operator==(const CrossCheckMismatch&) const = default;
};

}  // namespace ev

using EventPayload =
    std::variant<ev::SessionStart, ev::SessionEnd, ev::ParticipantJoined, ev::HandSample,
                 ev::GazeSample, ev::ZoneEnter, ev::ZoneExit, ev::VitalsReadout,
                 ev::HeartbeatTick, ev::BreathTick, ev::VoiceQuery, ev::GestureResponse,
                 ev::TagAssigned, ev::AuthorToggled, ev::PatientPlaced, ev::VisibilitySet,
                 ev::ParamTweak, ev::FacilitatorPrompt, ev::FacilitatorValue,
                 ev::CrossCheckMismatch>;

inline constexpr std::string_view kTimeLimitReason = "time_limit";

struct SessionEvent {
  std::uint64_t seq = 0;
  std::uint64_t ts_ms = 0;
  std::optional<std::string> responder_id;
  std::optional<std::string> instance_id;
  EventPayload payload;

  template <typename T>
  bool is() const {
    return std::holds_alternative<T>(payload);
  }
  template <typename T>
  const T* as() const {
    return std::get_if<T>(&payload);
  }

  bool operator==(const SessionEvent&) const = default;
};

std::string_view kind_name(const EventPayload& payload);

// Input-class events are caused by a participant command and are refed by
// replay; all others are emitted by the engine and regenerated.
bool is_input_event(const SessionEvent& e);

// Only facilitator clients may see these (prompts, submitted values, mismatches).
bool is_facilitator_only(const SessionEvent& e);

// Events that change state every participant must agree on.
bool is_shared_state(const SessionEvent& e);

nlohmann::ordered_json event_to_json(const SessionEvent& e);
SessionEvent event_from_json(const nlohmann::json& j, const std::string& path = "$");

// Compact single-line form used in the log.
std::string serialize_event(const SessionEvent& e);

}  // namespace mcisim
