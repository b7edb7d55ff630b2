#pragma once
// Live simulation core. A Session is a deterministic fold over commands
// stamped with an injected session clock; every command appends the events
// it caused to an outbox the caller drains with take_events().

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "mcisim/events.hpp"
#include "mcisim/scenario.hpp"
#include "mcisim/types.hpp"

namespace mcisim {

// Sphere in the patient-local frame: x lateral, y up from the feet,
// z toward the patient's front.
struct BodyZone {
  ZoneKind kind = ZoneKind::Bicep;
  Vec3 center_offset;
  double radius = 0.0;

  bool operator==(const BodyZone&) const = default;
};

// Every tunable the facilitator can tweak lives here.
struct SessionConfig {
  int time_limit_s = kTimeLimitS;
  std::uint64_t bp_dwell_ms = 3000;
  double query_range_m = 2.0;
  std::vector<BodyZone> zones = {
      {ZoneKind::Bicep, {-0.18, 1.25, 0.0}, 0.12},
      {ZoneKind::Bicep, {0.18, 1.25, 0.0}, 0.12},
      {ZoneKind::Wrist, {-0.30, 1.00, 0.0}, 0.08},
      {ZoneKind::Wrist, {0.30, 1.00, 0.0}, 0.08},
      {ZoneKind::Chest, {0.0, 1.30, 0.05}, 0.25},
      {ZoneKind::HeadProximity, {0.0, 1.55, 0.0}, 0.35},
  };

  std::uint64_t time_limit_ms() const { return static_cast<std::uint64_t>(time_limit_s) * 1000; }

  bool operator==(const SessionConfig&) const = default;
};

// Height of a lying patient's back-plane above the floor.
inline constexpr double kLyingBaseHeightM = 0.15;

// World-frame center of a zone on a placed patient.
Vec3 zone_world_center(const PatientInstance& inst, const BodyZone& zone);

struct ZoneMatch {
  std::string instance_id;
  BodyZone zone;
  double distance_m = 0.0;
};

// Palm matches Bicep, TwoFingers matches Wrist, Head matches Chest or
// HeadProximity. Nearest containing zone wins, then smaller instance_id.
std::optional<ZoneMatch> detect_zone(const Pose& sensor_pose, Sensor sensor,
                                     const Scenario& scenario,
                                     const SessionConfig& config = {});

VitalChannel channel_for(ZoneKind zone);

enum class Phase { Lobby, Running, AuthorMode, Complete };
std::string_view to_string(Phase p);

struct TagRecord {
  TriageCategory category = TriageCategory::Black;
  std::string responder_id;
  std::uint64_t ts_ms = 0;

  bool operator==(const TagRecord&) const = default;
};

struct HoldKey {
  std::string responder_id;
  std::string instance_id;
  ZoneKind zone = ZoneKind::Bicep;

  auto operator<=>(const HoldKey&) const = default;
};

struct ActiveHold {
  std::uint64_t start_ms = 0;
  VitalChannel channel = VitalChannel::Heartbeat;
  int rate_per_min = 0;          // streams: hr or rr; 0 = never ticks
  std::uint64_t ticks_emitted = 0;
  bool readout_pending = false;  // blood pressure dwell still running
  bool prompt_only = false;      // actor mode: facilitator supplies the value

  bool operator==(const ActiveHold&) const = default;
};

struct SessionState {
  std::string session_id;
  Scenario scenario;
  Phase phase = Phase::Lobby;
  std::vector<Participant> participants;
  std::uint64_t clock_ms = 0;
  std::map<std::string, TagRecord> tags;
  std::map<HoldKey, ActiveHold> active_holds;
  std::map<std::pair<std::string, VitalChannel>, std::vector<int>> overrides;
  std::set<std::pair<std::string, VitalChannel>> pending_prompts;
  std::map<std::string, Vec3> responder_positions;
  SessionConfig config;

  const Participant* participant(std::string_view responder_id) const;
  int trainee_count() const;

  bool operator==(const SessionState&) const = default;
};

struct BpReadout {
  int sys = 0;
  int dia = 0;
  bool operator==(const BpReadout&) const = default;
};
struct ReadoutPending {
  std::uint64_t dwell_ms = 0;
  bool operator==(const ReadoutPending&) const = default;
};
struct StreamStarted {
  VitalChannel channel = VitalChannel::Heartbeat;
  double period_ms = 0.0;  // 0 when the rate is zero and no tick ever comes
  bool operator==(const StreamStarted&) const = default;
};
struct GestureResult {
  bool waved = false;
  bool pointed_to_injury = false;
  bool operator==(const GestureResult&) const = default;
};
struct PromptIssued {
  VitalChannel channel = VitalChannel::Heartbeat;
  std::string instance_id;
  bool operator==(const PromptIssued&) const = default;
};

using InteractionResult =
    std::variant<BpReadout, ReadoutPending, StreamStarted, GestureResult, PromptIssued>;

struct HoldStart {
  InteractionResult result;
  bool already_active = false;
};

struct HoldSummary {
  std::uint64_t duration_ms = 0;
  std::uint64_t ticks_emitted = 0;
};

struct CrossCheckResult {
  bool matches_truth = false;
  std::vector<int> truth;
};

// Tweakable keys; the zone radius keys are "zone_radius.<zone>".
inline constexpr std::string_view kParamTimeLimit = "time_limit_s";
inline constexpr std::string_view kParamBpDwell = "bp_dwell_ms";
inline constexpr std::string_view kParamQueryRange = "query_range_m";
inline constexpr std::string_view kParamZoneRadiusPrefix = "zone_radius.";

class Session {
 public:
  // Throws Error{Integrity} when an instance references an unknown case.
  Session(std::string session_id, Scenario scenario, const MasterCaseList& cases,
          SessionConfig config = {}, std::vector<Participant> participants = {});

  const SessionState& state() const { return state_; }
  const PatientCase& case_for(std::string_view instance_id) const;

  // Events produced since the last call, in emission order, seq unassigned.
  std::vector<SessionEvent> take_events();

  // Lobby / author mode.
  void join(const Participant& participant);
  const SessionState& toggle_author_mode(std::string_view facilitator_id);
  void place_patient(std::string_view facilitator_id, std::string_view instance_id,
                     const Pose& pose);
  void set_visibility(std::string_view facilitator_id, std::string_view instance_id,
                      bool visible);
  void start();

  // Any phase; time_limit_s only before start.
  void param_tweak(std::string_view facilitator_id, std::string_view key, double value,
                   std::uint64_t ts_ms);

  // Advances the clock, emitting due stream ticks, readouts, and expiry.
  void tick(std::uint64_t now_ms);

  // Running-phase commands. Each first advances the clock to ts_ms.
  std::optional<ZoneMatch> sensor_sample(std::string_view responder_id, Sensor sensor,
                                         const Pose& pose, std::uint64_t ts_ms);
  void gaze_sample(std::string_view responder_id, const Vec3& origin, const Vec3& direction,
                   std::uint64_t ts_ms);
  HoldStart begin_hold(std::string_view responder_id, std::string_view instance_id,
                       ZoneKind zone, std::uint64_t ts_ms);
  HoldSummary end_hold(std::string_view responder_id, std::string_view instance_id,
                       ZoneKind zone, std::uint64_t ts_ms);
  GestureResult cognitive_query(std::string_view responder_id, std::string_view instance_id,
                                Query query, std::uint64_t ts_ms);
  void assign_tag(std::string_view responder_id, std::string_view instance_id,
                  TriageCategory category, std::uint64_t ts_ms);
  CrossCheckResult facilitator_submit(std::string_view facilitator_id,
                                      std::string_view instance_id, VitalChannel channel,
                                      const std::vector<int>& value, std::uint64_t ts_ms);
  void end(std::string_view facilitator_id, std::uint64_t ts_ms);

  // Re-executes the command behind an input-class event (replay).
  void apply(const SessionEvent& input);

 private:
  void emit(std::uint64_t ts, std::optional<std::string> responder,
            std::optional<std::string> instance, EventPayload payload);
  void advance_running(std::uint64_t ts_ms);
  void require_running() const;
  const Participant& require_role(std::string_view responder_id, Role role) const;
  const PatientInstance& require_instance(std::string_view instance_id) const;
  std::vector<int> truth_for(std::string_view instance_id, VitalChannel channel) const;

  SessionState state_;
  MasterCaseList case_list_;
  std::map<std::string, PatientCase, std::less<>> cases_;  // by instance_id
  std::vector<SessionEvent> outbox_;
};

// Creates a session with the given participants and starts it.
Session start_session(std::string session_id, Scenario scenario, const MasterCaseList& cases,
                      std::vector<Participant> participants, SessionConfig config = {});

}  // namespace mcisim
