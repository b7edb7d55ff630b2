#include "mcisim/session.hpp"

#include <cmath>
#include <limits>

#include "mcisim/error.hpp"

namespace mcisim {
namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

bool sensor_matches(Sensor sensor, ZoneKind zone) {
  switch (sensor) {
    case Sensor::Palm: return zone == ZoneKind::Bicep;
    case Sensor::TwoFingers: return zone == ZoneKind::Wrist;
    case Sensor::Head: return zone == ZoneKind::Chest || zone == ZoneKind::HeadProximity;
  }
  return false;
}

double dist(const Vec3& a, const Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z); }

// Time of the k-th tick (k >= 1) of a stream at rate_per_min, rounded up to
// the next millisecond so that a hold of d ms sees floor(d / period) ticks.
std::uint64_t tick_offset(std::uint64_t k, int rate_per_min) {
  const auto rate = static_cast<std::uint64_t>(rate_per_min);
  return (k * 60000 + rate - 1) / rate;
}

std::optional<std::uint64_t> next_due(const ActiveHold& h, std::uint64_t dwell_ms) {
  if (h.prompt_only) return std::nullopt;
  if (h.channel == VitalChannel::BloodPressure) {
    if (!h.readout_pending) return std::nullopt;
    return h.start_ms + dwell_ms;
  }
  if (h.rate_per_min <= 0) return std::nullopt;
  return h.start_ms + tick_offset(h.ticks_emitted + 1, h.rate_per_min);
}

}  // namespace

Vec3 zone_world_center(const PatientInstance& inst, const BodyZone& zone) {
  // Local (lateral, forward, height) before yaw.
  const Vec3& o = zone.center_offset;
  double lateral = o.x;
  double forward = o.z;
  double height = o.y;
  if (inst.posture == Posture::Lying) {
    // Lying on the back with the head toward the pose's forward direction.
    forward = o.y;
    height = kLyingBaseHeightM + o.z;
  }
  const double yaw = inst.pose.yaw_deg * kDegToRad;
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {inst.pose.x + lateral * c - forward * s, inst.pose.y + lateral * s + forward * c,
          inst.pose.z + height};
}

std::optional<ZoneMatch> detect_zone(const Pose& sensor_pose, Sensor sensor,
                                     const Scenario& scenario, const SessionConfig& config) {
  const Vec3 p{sensor_pose.x, sensor_pose.y, sensor_pose.z};
  std::optional<ZoneMatch> best;
  for (const auto& inst : scenario.instances) {
    for (const auto& zone : config.zones) {
      if (!sensor_matches(sensor, zone.kind)) continue;
      const double d = dist(p, zone_world_center(inst, zone));
      if (d > zone.radius) continue;
      const bool better = !best || d < best->distance_m ||
                          (d == best->distance_m && inst.instance_id < best->instance_id);
      if (better) best = ZoneMatch{inst.instance_id, zone, d};
    }
  }
  return best;
}

VitalChannel channel_for(ZoneKind zone) {
  switch (zone) {
    case ZoneKind::Bicep: return VitalChannel::BloodPressure;
    case ZoneKind::Wrist: return VitalChannel::Heartbeat;
    case ZoneKind::Chest:
    case ZoneKind::HeadProximity: return VitalChannel::Breath;
  }
  return VitalChannel::Heartbeat;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Lobby: return "lobby";
    case Phase::Running: return "running";
    case Phase::AuthorMode: return "author_mode";
    case Phase::Complete: return "complete";
  }
  return "lobby";
}

const Participant* SessionState::participant(std::string_view responder_id) const {
  for (const auto& p : participants) {
    if (p.responder_id == responder_id) return &p;
  }
  return nullptr;
}

int SessionState::trainee_count() const {
  int n = 0;
  for (const auto& p : participants) n += p.role == Role::Trainee ? 1 : 0;
  return n;
}

Session::Session(std::string session_id, Scenario scenario, const MasterCaseList& cases,
                 SessionConfig config, std::vector<Participant> participants) {
  for (const auto& inst : scenario.instances) {
    const PatientCase* c = cases.find(inst.case_id);
    if (!c) {
      throw Error(ErrorCode::Integrity, "instance " + inst.instance_id +
                                            " references unknown case " + inst.case_id);
    }
    cases_.emplace(inst.instance_id, *c);
  }
  case_list_ = cases;
  config.time_limit_s = scenario.time_limit_s;
  state_.session_id = std::move(session_id);
  state_.scenario = std::move(scenario);
  state_.config = std::move(config);
  for (auto& p : participants) join(p);
  outbox_.clear();
}

const PatientCase& Session::case_for(std::string_view instance_id) const {
  auto it = cases_.find(instance_id);
  if (it == cases_.end()) {
    throw Error(ErrorCode::NotFound, "unknown instance_id '" + std::string(instance_id) + "'");
  }
  return it->second;
}

std::vector<SessionEvent> Session::take_events() {
  std::vector<SessionEvent> out;
  out.swap(outbox_);
  return out;
}

void Session::emit(std::uint64_t ts, std::optional<std::string> responder,
                   std::optional<std::string> instance, EventPayload payload) {
  SessionEvent e;
  e.ts_ms = ts;
  e.responder_id = std::move(responder);
  e.instance_id = std::move(instance);
  e.payload = std::move(payload);
  outbox_.push_back(std::move(e));
}

const Participant& Session::require_role(std::string_view responder_id, Role role) const {
  const Participant* p = state_.participant(responder_id);
  if (!p) {
    throw Error(ErrorCode::Role,
                "'" + std::string(responder_id) + "' is not a participant of this session");
  }
  if (p->role != role) {
    throw Error(ErrorCode::Role, "'" + std::string(responder_id) + "' is a " +
                                     std::string(to_string(p->role)) + "; action requires " +
                                     std::string(to_string(role)));
  }
  return *p;
}

const PatientInstance& Session::require_instance(std::string_view instance_id) const {
  const PatientInstance* inst = state_.scenario.find(instance_id);
  if (!inst) {
    throw Error(ErrorCode::NotFound, "unknown instance_id '" + std::string(instance_id) + "'");
  }
  return *inst;
}

void Session::require_running() const {
  if (state_.phase == Phase::Complete && state_.clock_ms > state_.config.time_limit_ms()) {
    throw Error(ErrorCode::Expired, "session expired at " +
                                        std::to_string(state_.config.time_limit_ms()) + " ms");
  }
  if (state_.phase != Phase::Running) {
    throw Error(ErrorCode::Phase,
                "session is " + std::string(to_string(state_.phase)) + ", not running");
  }
}

void Session::advance_running(std::uint64_t ts_ms) {
  tick(ts_ms);
  require_running();
}

std::vector<int> Session::truth_for(std::string_view instance_id, VitalChannel channel) const {
  const Vitals& v = case_for(instance_id).vitals;
  switch (channel) {
    case VitalChannel::BloodPressure: return {v.bp_sys_mmhg, v.bp_dia_mmhg};
    case VitalChannel::Heartbeat: return {v.hr_bpm};
    case VitalChannel::Breath: return {v.rr_bpm};
  }
  return {};
}

void Session::join(const Participant& participant) {
  if (state_.phase == Phase::Complete) throw Error(ErrorCode::Phase, "session is complete");
  if (state_.phase == Phase::Running && participant.role == Role::Trainee) {
    throw Error(ErrorCode::Phase, "trainees cannot join a running session");
  }
  if (participant.responder_id.empty()) throw Error(ErrorCode::Input, "empty responder_id");
  if (state_.participant(participant.responder_id)) {
    throw Error(ErrorCode::Input, "'" + participant.responder_id + "' already joined");
  }
  state_.participants.push_back(participant);
  emit(state_.clock_ms, participant.responder_id, std::nullopt,
       ev::ParticipantJoined{participant.role});
}

const SessionState& Session::toggle_author_mode(std::string_view facilitator_id) {
  require_role(facilitator_id, Role::Facilitator);
  if (state_.phase == Phase::Lobby) {
    state_.phase = Phase::AuthorMode;
  } else if (state_.phase == Phase::AuthorMode) {
    state_.phase = Phase::Lobby;
  } else {
    throw Error(ErrorCode::Phase, "author mode can only be toggled before the session starts");
  }
  emit(state_.clock_ms, std::string(facilitator_id), std::nullopt,
       ev::AuthorToggled{state_.phase == Phase::AuthorMode});
  return state_;
}

void Session::place_patient(std::string_view facilitator_id, std::string_view instance_id,
                            const Pose& pose) {
  require_role(facilitator_id, Role::Facilitator);
  if (state_.phase != Phase::AuthorMode) {
    throw Error(ErrorCode::Phase, "patients can only be placed in author mode");
  }
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.z) ||
      !std::isfinite(pose.yaw_deg) || pose.z < 0.0) {
    throw Error(ErrorCode::Input, "pose must be finite with z >= 0");
  }
  state_.scenario = mcisim::place_patient(state_.scenario, instance_id, pose);
  emit(state_.clock_ms, std::string(facilitator_id), std::string(instance_id),
       ev::PatientPlaced{state_.scenario.find(instance_id)->pose});
}

void Session::set_visibility(std::string_view facilitator_id, std::string_view instance_id,
                             bool visible) {
  require_role(facilitator_id, Role::Facilitator);
  if (state_.phase != Phase::AuthorMode) {
    throw Error(ErrorCode::Phase, "visibility can only be changed in author mode");
  }
  state_.scenario = mcisim::set_visibility(state_.scenario, instance_id, visible);
  emit(state_.clock_ms, std::string(facilitator_id), std::string(instance_id),
       ev::VisibilitySet{visible});
}

void Session::start() {
  if (state_.phase == Phase::AuthorMode) {
    throw Error(ErrorCode::Phase, "leave author mode before starting");
  }
  if (state_.phase != Phase::Lobby) {
    throw Error(ErrorCode::Phase, "session already " + std::string(to_string(state_.phase)));
  }
  const int required = state_.scenario.required_responders;
  if (state_.trainee_count() != required) {
    throw Error(ErrorCode::Precondition,
                std::string(to_string(state_.scenario.mode)) + " scenario requires " +
                    std::to_string(required) + (required == 1 ? " trainee" : " trainees") +
                    ", have " + std::to_string(state_.trainee_count()));
  }
  const auto problems = check_scenario(state_.scenario, case_list_);
  if (!problems.empty()) {
    throw Error(ErrorCode::Precondition, "scenario is not runnable: " + problems.front());
  }
  state_.phase = Phase::Running;
  state_.clock_ms = 0;
  emit(0, std::nullopt, std::nullopt, ev::SessionStart{state_.participants});
}

void Session::param_tweak(std::string_view facilitator_id, std::string_view key, double value,
                          std::uint64_t ts_ms) {
  if (state_.phase == Phase::Running) tick(ts_ms);
  require_role(facilitator_id, Role::Facilitator);
  if (state_.phase == Phase::Complete) throw Error(ErrorCode::Phase, "session is complete");

  SessionConfig& cfg = state_.config;
  auto positive = [&] {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw Error(ErrorCode::Input, std::string(key) + " must be positive");
    }
  };
  auto whole = [&] {
    if (value < 0.0 || value != std::floor(value) || value > 86'400'000.0) {
      throw Error(ErrorCode::Input, std::string(key) + " must be a non-negative integer");
    }
  };
  if (key == kParamTimeLimit) {
    if (state_.phase == Phase::Running) {
      throw Error(ErrorCode::Phase, "time_limit_s can only change before the session starts");
    }
    whole();
    positive();
    cfg.time_limit_s = static_cast<int>(value);
  } else if (key == kParamBpDwell) {
    whole();
    cfg.bp_dwell_ms = static_cast<std::uint64_t>(value);
  } else if (key == kParamQueryRange) {
    positive();
    cfg.query_range_m = value;
  } else if (key.starts_with(kParamZoneRadiusPrefix)) {
    auto zone = parse_zone(key.substr(kParamZoneRadiusPrefix.size()));
    if (!zone) throw Error(ErrorCode::Key, "unknown parameter '" + std::string(key) + "'");
    positive();
    for (auto& z : cfg.zones) {
      if (z.kind == *zone) z.radius = value;
    }
  } else {
    throw Error(ErrorCode::Key, "unknown parameter '" + std::string(key) + "'");
  }
  emit(state_.clock_ms, std::string(facilitator_id), std::nullopt,
       ev::ParamTweak{std::string(key), value});
}

void Session::tick(std::uint64_t now_ms) {
  if (now_ms < state_.clock_ms) {
    throw Error(ErrorCode::Clock, "clock moved backwards: " + std::to_string(now_ms) + " < " +
                                      std::to_string(state_.clock_ms));
  }
  if (state_.phase != Phase::Running) return;

  const std::uint64_t limit = state_.config.time_limit_ms();
  const std::uint64_t horizon = std::min(now_ms, limit);
  const std::uint64_t dwell = state_.config.bp_dwell_ms;
  for (;;) {
    auto best = state_.active_holds.end();
    std::uint64_t best_ts = std::numeric_limits<std::uint64_t>::max();
    for (auto it = state_.active_holds.begin(); it != state_.active_holds.end(); ++it) {
      auto due = next_due(it->second, dwell);
      if (due && *due < best_ts) {
        best_ts = *due;
        best = it;
      }
    }
    if (best == state_.active_holds.end() || best_ts > horizon) break;

    const HoldKey& key = best->first;
    ActiveHold& hold = best->second;
    if (hold.channel == VitalChannel::BloodPressure) {
      hold.readout_pending = false;
      emit(best_ts, key.responder_id, key.instance_id,
           ev::VitalsReadout{VitalChannel::BloodPressure,
                             truth_for(key.instance_id, VitalChannel::BloodPressure)});
    } else {
      ++hold.ticks_emitted;
      if (hold.channel == VitalChannel::Heartbeat) {
        emit(best_ts, key.responder_id, key.instance_id, ev::HeartbeatTick{});
      } else {
        emit(best_ts, key.responder_id, key.instance_id, ev::BreathTick{});
      }
    }
  }

  state_.clock_ms = now_ms;
  if (now_ms > limit) {
    state_.phase = Phase::Complete;
    state_.active_holds.clear();
    emit(now_ms, std::nullopt, std::nullopt, ev::SessionEnd{std::string(kTimeLimitReason)});
  }
}

std::optional<ZoneMatch> Session::sensor_sample(std::string_view responder_id, Sensor sensor,
                                                const Pose& pose, std::uint64_t ts_ms) {
  advance_running(ts_ms);
  if (!state_.participant(responder_id)) {
    throw Error(ErrorCode::Role,
                "'" + std::string(responder_id) + "' is not a participant of this session");
  }
  state_.responder_positions[std::string(responder_id)] = Vec3{pose.x, pose.y, pose.z};
  emit(state_.clock_ms, std::string(responder_id), std::nullopt, ev::HandSample{sensor, pose});
  return detect_zone(pose, sensor, state_.scenario, state_.config);
}

void Session::gaze_sample(std::string_view responder_id, const Vec3& origin,
                          const Vec3& direction, std::uint64_t ts_ms) {
  advance_running(ts_ms);
  if (!state_.participant(responder_id)) {
    throw Error(ErrorCode::Role,
                "'" + std::string(responder_id) + "' is not a participant of this session");
  }
  state_.responder_positions[std::string(responder_id)] = origin;
  emit(state_.clock_ms, std::string(responder_id), std::nullopt,
       ev::GazeSample{origin, direction});
}

HoldStart Session::begin_hold(std::string_view responder_id, std::string_view instance_id,
                              ZoneKind zone, std::uint64_t ts_ms) {
  advance_running(ts_ms);
  require_role(responder_id, Role::Trainee);
  require_instance(instance_id);
  const VitalChannel channel = channel_for(zone);
  const Vitals& vitals = case_for(instance_id).vitals;
  const int rate = channel == VitalChannel::Heartbeat ? vitals.hr_bpm : vitals.rr_bpm;
  const std::uint64_t dwell = state_.config.bp_dwell_ms;

  auto describe = [&](const ActiveHold& h) -> InteractionResult {
    if (h.prompt_only) return PromptIssued{channel, std::string(instance_id)};
    if (channel == VitalChannel::BloodPressure) {
      if (!h.readout_pending) return BpReadout{vitals.bp_sys_mmhg, vitals.bp_dia_mmhg};
      return ReadoutPending{dwell};
    }
    return StreamStarted{channel, rate > 0 ? 60000.0 / rate : 0.0};
  };

  HoldKey key{std::string(responder_id), std::string(instance_id), zone};
  if (auto it = state_.active_holds.find(key); it != state_.active_holds.end()) {
    return {describe(it->second), true};
  }

  ActiveHold hold;
  hold.start_ms = state_.clock_ms;
  hold.channel = channel;
  emit(state_.clock_ms, key.responder_id, key.instance_id, ev::ZoneEnter{zone});

  if (state_.scenario.mode == ScenarioMode::Actor) {
    hold.prompt_only = true;
    state_.pending_prompts.insert({key.instance_id, channel});
    emit(state_.clock_ms, key.responder_id, key.instance_id, ev::FacilitatorPrompt{channel});
  } else if (channel == VitalChannel::BloodPressure) {
    hold.readout_pending = dwell > 0;
    if (dwell == 0) {
      emit(state_.clock_ms, key.responder_id, key.instance_id,
           ev::VitalsReadout{channel, truth_for(instance_id, channel)});
    }
  } else {
    hold.rate_per_min = rate;
  }
  const InteractionResult result = describe(hold);
  state_.active_holds.emplace(std::move(key), hold);
  return {result, false};
}

HoldSummary Session::end_hold(std::string_view responder_id, std::string_view instance_id,
                              ZoneKind zone, std::uint64_t ts_ms) {
  advance_running(ts_ms);
  require_role(responder_id, Role::Trainee);
  HoldKey key{std::string(responder_id), std::string(instance_id), zone};
  auto it = state_.active_holds.find(key);
  if (it == state_.active_holds.end()) {
    throw Error(ErrorCode::Protocol, "no active " + std::string(to_string(zone)) + " hold on '" +
                                         std::string(instance_id) + "'");
  }
  HoldSummary summary{state_.clock_ms - it->second.start_ms, it->second.ticks_emitted};
  state_.active_holds.erase(it);
  emit(state_.clock_ms, key.responder_id, key.instance_id,
       ev::ZoneExit{zone, summary.duration_ms, summary.ticks_emitted});
  return summary;
}

GestureResult Session::cognitive_query(std::string_view responder_id,
                                       std::string_view instance_id, Query query,
                                       std::uint64_t ts_ms) {
  advance_running(ts_ms);
  require_role(responder_id, Role::Trainee);
  const PatientInstance& inst = require_instance(instance_id);
  auto pos = state_.responder_positions.find(std::string(responder_id));
  if (pos == state_.responder_positions.end()) {
    throw Error(ErrorCode::Range, "no known position for '" + std::string(responder_id) + "'");
  }
  const double d = std::hypot(pos->second.x - inst.pose.x, pos->second.y - inst.pose.y);
  if (d > state_.config.query_range_m) {
    throw Error(ErrorCode::Range, "'" + std::string(instance_id) + "' is out of query range");
  }
  const Script& script = case_for(instance_id).script;
  GestureResult r{script.gesture_on_wave_query, script.gesture_on_hurt_query};
  emit(state_.clock_ms, std::string(responder_id), std::string(instance_id),
       ev::VoiceQuery{query});
  emit(state_.clock_ms, std::string(responder_id), std::string(instance_id),
       ev::GestureResponse{r.waved, r.pointed_to_injury});
  return r;
}

void Session::assign_tag(std::string_view responder_id, std::string_view instance_id,
                         TriageCategory category, std::uint64_t ts_ms) {
  advance_running(ts_ms);
  require_role(responder_id, Role::Trainee);
  require_instance(instance_id);
  state_.tags[std::string(instance_id)] =
      TagRecord{category, std::string(responder_id), state_.clock_ms};
  emit(state_.clock_ms, std::string(responder_id), std::string(instance_id),
       ev::TagAssigned{category});
}

CrossCheckResult Session::facilitator_submit(std::string_view facilitator_id,
                                             std::string_view instance_id,
                                             VitalChannel channel, const std::vector<int>& value,
                                             std::uint64_t ts_ms) {
  advance_running(ts_ms);
  require_role(facilitator_id, Role::Facilitator);
  require_instance(instance_id);
  const std::pair<std::string, VitalChannel> prompt{std::string(instance_id), channel};
  if (!state_.pending_prompts.count(prompt)) {
    throw Error(ErrorCode::Protocol, "no pending " + std::string(to_string(channel)) +
                                         " prompt for '" + std::string(instance_id) + "'");
  }
  const std::size_t arity = channel == VitalChannel::BloodPressure ? 2 : 1;
  if (value.size() != arity) {
    throw Error(ErrorCode::Input, std::string(to_string(channel)) + " expects " +
                                      std::to_string(arity) + " value(s)");
  }
  state_.pending_prompts.erase(prompt);
  state_.overrides[prompt] = value;

  CrossCheckResult r{false, truth_for(instance_id, channel)};
  r.matches_truth = value == r.truth;
  emit(state_.clock_ms, std::string(facilitator_id), std::string(instance_id),
       ev::FacilitatorValue{channel, value});
  if (!r.matches_truth) {
    emit(state_.clock_ms, std::string(facilitator_id), std::string(instance_id),
         ev::CrossCheckMismatch{channel, value, r.truth});
  }
  return r;
}

void Session::end(std::string_view facilitator_id, std::uint64_t ts_ms) {
  if (state_.phase == Phase::Running) tick(ts_ms);
  require_role(facilitator_id, Role::Facilitator);
  if (state_.phase == Phase::Complete) require_running();
  state_.phase = Phase::Complete;
  state_.active_holds.clear();
  emit(state_.clock_ms, std::string(facilitator_id), std::nullopt,
       ev::SessionEnd{"ended_by_facilitator"});
}

void Session::apply(const SessionEvent& e) {
  auto responder = [&]() -> const std::string& {
    if (!e.responder_id) {
      throw Error(ErrorCode::Integrity, std::string(kind_name(e.payload)) + " without responder_id");
    }
    return *e.responder_id;
  };
  auto instance = [&]() -> const std::string& {
    if (!e.instance_id) {
      throw Error(ErrorCode::Integrity, std::string(kind_name(e.payload)) + " without instance_id");
    }
    return *e.instance_id;
  };

  if (const auto* p = e.as<ev::ParticipantJoined>()) {
    join({responder(), p->role});
  } else if (e.is<ev::AuthorToggled>()) {
    toggle_author_mode(responder());
  } else if (const auto* p = e.as<ev::PatientPlaced>()) {
    place_patient(responder(), instance(), p->pose);
  } else if (const auto* p = e.as<ev::VisibilitySet>()) {
    set_visibility(responder(), instance(), p->visible);
  } else if (const auto* p = e.as<ev::ParamTweak>()) {
    param_tweak(responder(), p->key, p->value, e.ts_ms);
  } else if (e.is<ev::SessionStart>()) {
    start();
  } else if (e.is<ev::SessionEnd>()) {
    end(responder(), e.ts_ms);
  } else if (const auto* p = e.as<ev::HandSample>()) {
    sensor_sample(responder(), p->sensor, p->pose, e.ts_ms);
  } else if (const auto* p = e.as<ev::GazeSample>()) {
    gaze_sample(responder(), p->origin, p->direction, e.ts_ms);
  } else if (const auto* p = e.as<ev::ZoneEnter>()) {
    begin_hold(responder(), instance(), p->zone, e.ts_ms);
  } else if (const auto* p = e.as<ev::ZoneExit>()) {
    end_hold(responder(), instance(), p->zone, e.ts_ms);
  } else if (const auto* p = e.as<ev::VoiceQuery>()) {
    cognitive_query(responder(), instance(), p->query, e.ts_ms);
  } else if (const auto* p = e.as<ev::TagAssigned>()) {
    assign_tag(responder(), instance(), p->category, e.ts_ms);
  } else if (const auto* p = e.as<ev::FacilitatorValue>()) {
    facilitator_submit(responder(), instance(), p->channel, p->value, e.ts_ms);
  } else {
    throw Error(ErrorCode::Integrity,
                std::string(kind_name(e.payload)) + " is engine-emitted, not a command");
  }
}

Session start_session(std::string session_id, Scenario scenario, const MasterCaseList& cases,
                      std::vector<Participant> participants, SessionConfig config) {
  Session s(std::move(session_id), std::move(scenario), cases, std::move(config),
            std::move(participants));
  s.start();
  return s;
}

}  // namespace mcisim
