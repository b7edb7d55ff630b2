#include "mcisim/hub.hpp"

#include <algorithm>
#include <cctype>

#include "mcisim/error.hpp"
#include "mcisim/scenario.hpp"

namespace mcisim {
namespace {

using nlohmann::json;

const std::string kServerSender = "server";

std::string require_string(const json& payload, const char* key) {
  auto it = payload.find(key);
  if (it == payload.end() || !it->is_string()) {
    throw Error(ErrorCode::Protocol, std::string("payload.") + key + " must be a string");
  }
  return it->get<std::string>();
}

template <typename Enum>
Enum require_enum(const json& payload, const char* key,
                  std::optional<Enum> (*parse)(std::string_view)) {
  const auto s = require_string(payload, key);
  auto v = parse(s);
  if (!v) throw Error(ErrorCode::Protocol, std::string("payload.") + key + ": unknown value '" + s + "'");
  return *v;
}

double require_number(const json& payload, const char* key) {
  auto it = payload.find(key);
  if (it == payload.end() || !it->is_number()) {
    throw Error(ErrorCode::Protocol, std::string("payload.") + key + " must be a number");
  }
  return it->get<double>();
}

Vec3 require_vec(const json& payload, const char* key) {
  auto it = payload.find(key);
  if (it == payload.end() || !it->is_array() || it->size() != 3 || !(*it)[0].is_number() ||
      !(*it)[1].is_number() || !(*it)[2].is_number()) {
    throw Error(ErrorCode::Protocol, std::string("payload.") + key + " must be [x, y, z]");
  }
  return {(*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>()};
}

Pose require_pose(const json& payload) {
  auto it = payload.find("pose");
  if (it == payload.end()) throw Error(ErrorCode::Protocol, "payload.pose is required");
  try {
    return pose_from_json(*it, "payload.pose");
  } catch (const Error& e) {
    throw Error(ErrorCode::Protocol, e.what());
  }
}

json interaction_to_json(const InteractionResult& r) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, BpReadout>) {
          return {{"kind", "BpReadout"}, {"sys", v.sys}, {"dia", v.dia}};
        } else if constexpr (std::is_same_v<T, ReadoutPending>) {
          return {{"kind", "ReadoutPending"}, {"dwell_ms", v.dwell_ms}};
        } else if constexpr (std::is_same_v<T, StreamStarted>) {
          return {{"kind", "StreamStarted"},
                  {"channel", to_string(v.channel)},
                  {"period_ms", v.period_ms}};
        } else if constexpr (std::is_same_v<T, GestureResult>) {
          return {{"kind", "GestureResponse"},
                  {"waved", v.waved},
                  {"pointed_to_injury", v.pointed_to_injury}};
        } else {
          return {{"kind", "FacilitatorPrompt"},
                  {"channel", to_string(v.channel)},
                  {"instance_id", v.instance_id}};
        }
      },
      r);
}

}  // namespace

class Hub::Batch {
 public:
  Batch(Hub& hub) : hub_(hub) {}

  void send(ConnectionId id, std::string type, const std::optional<std::string>& session,
            json payload, bool close_after = false) {
    auto it = hub_.connections_.find(id);
    if (it == hub_.connections_.end()) return;
    Envelope e;
    e.type = std::move(type);
    e.session = session;
    e.sender = kServerSender;
    e.seq = it->second.out_seq++;
    e.ts_ms = hub_.clock_();
    e.payload = std::move(payload);
    out_.push_back({id, std::move(e), close_after});
  }

  void error(ConnectionId id, const Envelope* ref, ErrorCode code, const std::string& message,
             bool close_after = false) {
    error(id, ref, std::string(to_string(code)), message, close_after);
  }

  void error(ConnectionId id, const Envelope* ref, const std::string& code,
             const std::string& message, bool close_after = false) {
    json payload = {{"code", code}, {"message", message}};
    if (ref) {
      payload["ref_type"] = ref->type;
      payload["ref_seq"] = ref->seq;
    }
    send(id, "Error", ref ? ref->session : std::nullopt, std::move(payload), close_after);
  }

  std::vector<Outgoing> take() { return std::move(out_); }

 private:
  Hub& hub_;
  std::vector<Outgoing> out_;
};

Hub::Hub(HubConfig config, Clock clock) : config_(std::move(config)), clock_(std::move(clock)) {
  if (config_.log_dir) std::filesystem::create_directories(*config_.log_dir);
}

Hub::~Hub() = default;

ConnectionId Hub::connect() {
  const ConnectionId id = next_connection_++;
  connections_.emplace(id, Connection{});
  return id;
}

void Hub::disconnect(ConnectionId id) {
  auto it = connections_.find(id);
  if (it == connections_.end()) return;
  if (it->second.session_id) {
    if (auto s = sessions_.find(*it->second.session_id); s != sessions_.end()) {
      s->second.members.erase(id);
    }
  }
  connections_.erase(it);
}

const Session* Hub::find_session(std::string_view session_id) const {
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : it->second.session.get();
}

const EventLog* Hub::find_log(std::string_view session_id) const {
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : it->second.log.get();
}

std::vector<std::string> Hub::session_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, h] : sessions_) ids.push_back(id);
  return ids;
}

std::vector<Outgoing> Hub::handle(ConnectionId id, std::string_view raw) {
  Batch out(*this);
  if (!connections_.count(id)) return {};
  Envelope msg;
  try {
    msg = parse_envelope(raw);
  } catch (const Error& e) {
    // Malformed JSON ends the connection; a bad envelope does not.
    const bool fatal = e.code() == ErrorCode::Format;
    out.error(id, nullptr, ErrorCode::Protocol, e.what(), fatal);
    return out.take();
  }
  Connection& conn = connections_.at(id);
  dispatch(out, id, conn, msg);
  return out.take();
}

std::vector<Outgoing> Hub::handle(ConnectionId id, const Envelope& msg) {
  Batch out(*this);
  auto it = connections_.find(id);
  if (it == connections_.end()) return {};
  dispatch(out, id, it->second, msg);
  return out.take();
}

std::vector<Outgoing> Hub::tick() {
  Batch out(*this);
  for (auto& [id, hosted] : sessions_) {
    if (hosted.session->state().phase != Phase::Running) continue;
    hosted.session->tick(session_clock(hosted));
    flush_events(out, hosted);
  }
  return out.take();
}

std::uint64_t Hub::session_clock(const Hosted& hosted) const {
  if (hosted.session->state().phase == Phase::Lobby ||
      hosted.session->state().phase == Phase::AuthorMode) {
    return 0;
  }
  const std::uint64_t now = clock_();
  // Never behind the session's own clock (a completed session keeps its last value).
  return std::max(now - hosted.started_at, hosted.session->state().clock_ms);
}

std::string Hub::unique_client_id(std::string name) const {
  std::string base;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
      base.push_back(c);
    }
  }
  if (base.empty()) base = "client";
  auto taken = [&](const std::string& id) {
    for (const auto& [cid, c] : connections_) {
      if (c.welcomed && c.client_id == id) return true;
    }
    for (const auto& [sid, h] : sessions_) {
      if (h.session->state().participant(id)) return true;
    }
    return false;
  };
  if (!taken(base)) return base;
  for (int n = 2;; ++n) {
    std::string candidate = base + "-" + std::to_string(n);
    if (!taken(candidate)) return candidate;
  }
}

std::string Hub::next_session_id() {
  for (;;) {
    std::string id = "s" + std::to_string(++session_counter_);
    if (sessions_.count(id)) continue;
    if (config_.log_dir &&
        std::filesystem::exists(*config_.log_dir / ("session-" + id + ".jsonl"))) {
      continue;
    }
    return id;
  }
}

nlohmann::json Hub::snapshot(const Hosted& hosted) const {
  const SessionState& st = hosted.session->state();
  json participants = json::array();
  for (const auto& p : st.participants) {
    participants.push_back({{"responder_id", p.responder_id}, {"role", to_string(p.role)}});
  }
  json tags = json::object();
  for (const auto& [id, t] : st.tags) {
    tags[id] = {{"category", to_string(t.category)},
                {"responder_id", t.responder_id},
                {"ts_ms", t.ts_ms}};
  }
  json radii = json::object();
  for (const auto& z : st.config.zones) radii[std::string(to_string(z.kind))] = z.radius;
  return {{"session_id", st.session_id},
          {"phase", to_string(st.phase)},
          {"clock_ms", st.clock_ms},
          {"time_limit_s", st.config.time_limit_s},
          {"scenario", scenario_to_json(st.scenario)},
          {"participants", participants},
          {"tags", tags},
          {"next_seq", hosted.log->next_seq()},
          {"config",
           {{"bp_dwell_ms", st.config.bp_dwell_ms},
            {"query_range_m", st.config.query_range_m},
            {"zone_radius", radii}}}};
}

void Hub::flush_events(Batch& out, Hosted& hosted) {
  for (auto& event : hosted.session->take_events()) {
    EventLog::Appended appended;
    try {
      appended = hosted.log->record(std::move(event));
    } catch (const Error& e) {
      for (ConnectionId m : hosted.members) {
        if (connections_.at(m).role_intent == Role::Facilitator) {
          out.error(m, nullptr, "telemetry", e.what());
        }
      }
      continue;
    }
    const SessionEvent& logged = hosted.log->events().back();
    const auto session_id = std::optional<std::string>(hosted.session->state().session_id);
    const json payload = event_to_json(logged);

    for (ConnectionId m : hosted.members) {
      const Connection& c = connections_.at(m);
      const Participant* p = hosted.session->state().participant(c.client_id);
      const bool facilitator = p && p->role == Role::Facilitator;
      bool deliver = false;
      if (c.subscribed) {
        deliver = true;
      } else if (is_facilitator_only(logged)) {
        deliver = facilitator;
      } else {
        deliver = is_shared_state(logged) ||
                  (logged.responder_id && *logged.responder_id == c.client_id);
      }
      if (deliver) out.send(m, "Event", session_id, payload);
      if (appended.write_error && facilitator) {
        out.error(m, nullptr, "telemetry",
                  *appended.write_error + " at seq " + std::to_string(appended.seq));
      }
    }
  }
}

void Hub::dispatch(Batch& out, ConnectionId id, Connection& conn, const Envelope& msg) {
  if (msg.type == "Hello") {
    handle_hello(out, id, conn, msg);
    return;
  }
  if (!conn.welcomed) {
    out.error(id, &msg, ErrorCode::Protocol, "Hello handshake required first");
    return;
  }
  if (msg.type == "Heartbeat") {
    out.send(id, "Heartbeat", msg.session, {{"echo_seq", msg.seq}});
    return;
  }
  try {
    if (msg.type == "CreateSession") {
      handle_create(out, id, msg);
      return;
    }
    if (msg.type == "JoinSession") {
      handle_join(out, id, conn, msg);
      return;
    }
    static const std::set<std::string, std::less<>> kSessionTypes = {
        "StartSession", "AuthorToggle",    "PlacePatient",      "SetVisibility",
        "SensorPose",   "GazeSample",      "BeginHold",         "EndHold",
        "CognitiveQuery", "AssignTag",     "FacilitatorSubmit", "ParamTweak",
        "EndSession",   "Subscribe"};
    if (!kSessionTypes.count(msg.type)) {
      out.error(id, &msg, "unknown_type", "unknown message type '" + msg.type + "'");
      return;
    }
    if (!msg.session) throw Error(ErrorCode::Protocol, msg.type + " requires a session");
    auto it = sessions_.find(*msg.session);
    if (it == sessions_.end()) {
      throw Error(ErrorCode::NotFound, "unknown session '" + *msg.session + "'");
    }
    if (conn.session_id != *msg.session) {
      throw Error(ErrorCode::Role, "not joined to session '" + *msg.session + "'");
    }
    Hosted& hosted = it->second;
    if (msg.type == "Subscribe") {
      handle_subscribe(out, id, conn, hosted, msg);
      return;
    }
    try {
      handle_session_command(out, id, conn, hosted, msg);
    } catch (...) {
      // Commands can advance the clock (expiry) before failing.
      flush_events(out, hosted);
      throw;
    }
    flush_events(out, hosted);
  } catch (const Error& e) {
    out.error(id, &msg, e.code(), e.what());
  }
}

void Hub::handle_hello(Batch& out, ConnectionId id, Connection& conn, const Envelope& msg) {
  if (conn.welcomed) {
    out.error(id, &msg, ErrorCode::Protocol, "Hello already completed");
    return;
  }
  const json& p = msg.payload;
  const int v = p.contains("v") && p["v"].is_number_integer() ? p["v"].get<int>() : msg.v;
  if (v != kProtocolVersion) {
    out.error(id, &msg, "version",
              "protocol version " + std::to_string(v) + " not supported (server speaks " +
                  std::to_string(kProtocolVersion) + ")",
              true);
    return;
  }
  Role role = Role::Trainee;
  if (auto it = p.find("role_intent"); it != p.end()) {
    auto r = it->is_string() ? parse_role(it->get<std::string>()) : std::nullopt;
    if (!r) {
      out.error(id, &msg, ErrorCode::Protocol, "role_intent must be 'trainee' or 'facilitator'");
      return;
    }
    role = *r;
  }
  std::string name = p.contains("name") && p["name"].is_string() ? p["name"].get<std::string>()
                                                                  : std::string("client");
  // A reconnecting console may reclaim its id when no live connection holds it.
  std::string client_id;
  if (auto it = p.find("resume_client_id"); it != p.end() && it->is_string()) {
    const auto wanted = it->get<std::string>();
    const bool live = std::any_of(connections_.begin(), connections_.end(), [&](const auto& kv) {
      return kv.second.welcomed && kv.second.client_id == wanted;
    });
    if (!live && !wanted.empty()) client_id = wanted;
  }
  if (client_id.empty()) client_id = unique_client_id(name);
  conn.welcomed = true;
  conn.client_id = client_id;
  conn.role_intent = role;
  out.send(id, "Welcome", std::nullopt,
           {{"client_id", client_id}, {"protocol_version", kProtocolVersion}});
}

void Hub::handle_create(Batch& out, ConnectionId id, const Envelope& msg) {
  const json& p = msg.payload;
  Scenario scenario;
  if (auto it = p.find("scenario"); it != p.end()) {
    try {
      scenario = parse_scenario(it->dump(), &config_.cases).scenario;
    } catch (const Error& e) {
      throw Error(ErrorCode::Protocol, std::string("payload.scenario: ") + e.what());
    }
  } else if (auto g = p.find("generate"); g != p.end() && g->is_object()) {
    const auto mode = require_string(*g, "mode");
    const auto seed_it = g->find("seed");
    if (seed_it == g->end() || !seed_it->is_number_unsigned()) {
      throw Error(ErrorCode::Protocol, "payload.generate.seed must be an unsigned integer");
    }
    const auto seed = seed_it->get<std::uint64_t>();
    if (mode == "virtual") {
      scenario = generate_virtual_scenario(config_.cases, seed);
    } else if (mode == "actor") {
      scenario = generate_actor_scenario(config_.cases, seed);
    } else {
      throw Error(ErrorCode::Protocol, "payload.generate.mode must be 'virtual' or 'actor'");
    }
  } else {
    throw Error(ErrorCode::Protocol, "CreateSession needs payload.scenario or payload.generate");
  }

  const std::string session_id = next_session_id();
  Hosted hosted;
  hosted.session = std::make_unique<Session>(session_id, scenario, config_.cases,
                                             config_.session_defaults);
  LogHeader header = make_header(session_id, scenario);
  if (config_.log_dir) {
    hosted.log = std::make_unique<EventLog>(
        EventLog::open_file(header, *config_.log_dir / ("session-" + session_id + ".jsonl")));
  } else {
    hosted.log = std::make_unique<EventLog>(header);
  }
  sessions_.emplace(session_id, std::move(hosted));
  out.send(id, "SessionCreated", session_id,
           {{"session_id", session_id},
            {"scenario_id", scenario.scenario_id},
            {"scenario", scenario_to_json(scenario)}});
}

void Hub::handle_join(Batch& out, ConnectionId id, Connection& conn, const Envelope& msg) {
  if (!msg.session) throw Error(ErrorCode::Protocol, "JoinSession requires a session");
  auto it = sessions_.find(*msg.session);
  if (it == sessions_.end()) {
    throw Error(ErrorCode::NotFound, "unknown session '" + *msg.session + "'");
  }
  if (conn.session_id && *conn.session_id != *msg.session) {
    throw Error(ErrorCode::Protocol, "already joined to session '" + *conn.session_id + "'");
  }
  Hosted& hosted = it->second;
  Role role = conn.role_intent;
  if (auto r = msg.payload.find("role"); r != msg.payload.end()) {
    auto parsed = r->is_string() ? parse_role(r->get<std::string>()) : std::nullopt;
    if (!parsed) throw Error(ErrorCode::Protocol, "payload.role must be 'trainee' or 'facilitator'");
    role = *parsed;
  }
  const Participant* existing = hosted.session->state().participant(conn.client_id);
  if (existing) {
    // Rejoin after reconnect: reattach without a new participant.
    if (existing->role != role) {
      throw Error(ErrorCode::Role, "'" + conn.client_id + "' already joined as " +
                                       std::string(to_string(existing->role)));
    }
  } else {
    try {
      hosted.session->join({conn.client_id, role});
    } catch (...) {
      flush_events(out, hosted);
      throw;
    }
  }
  conn.session_id = *msg.session;
  conn.role_intent = role;
  hosted.members.insert(id);
  flush_events(out, hosted);
  out.send(id, "Joined", *msg.session,
           {{"session_id", *msg.session},
            {"role", to_string(role)},
            {"snapshot", snapshot(hosted)}});
}

void Hub::handle_subscribe(Batch& out, ConnectionId id, Connection& conn, Hosted& hosted,
                           const Envelope& msg) {
  const Participant* p = hosted.session->state().participant(conn.client_id);
  if (!p || p->role != Role::Facilitator) {
    throw Error(ErrorCode::Role, "telemetry subscriptions are for facilitators");
  }
  std::uint64_t from = 0;
  if (auto it = msg.payload.find("from_seq"); it != msg.payload.end()) {
    if (!it->is_number_unsigned()) throw Error(ErrorCode::Protocol, "payload.from_seq must be unsigned");
    from = it->get<std::uint64_t>();
  }
  const auto& events = hosted.log->events();
  for (std::uint64_t s = from; s < events.size(); ++s) {
    out.send(id, "Event", msg.session, event_to_json(events[s]));
  }
  conn.subscribed = true;
  out.send(id, "Subscribed", msg.session, {{"next_seq", hosted.log->next_seq()}});
}

void Hub::handle_session_command(Batch& out, ConnectionId id, Connection& conn, Hosted& hosted,
                                 const Envelope& msg) {
  Session& s = *hosted.session;
  const json& p = msg.payload;
  const std::string& who = conn.client_id;
  const std::string& type = msg.type;

  if (type == "StartSession") {
    if (!s.state().participant(who)) {
      throw Error(ErrorCode::Role, "'" + who + "' is not a participant of this session");
    }
    s.start();
    hosted.started_at = clock_();
    out.send(id, "Ack", msg.session, {{"ref_seq", msg.seq}, {"phase", to_string(s.state().phase)}});
    return;
  }
  if (type == "AuthorToggle") {
    s.toggle_author_mode(who);
    out.send(id, "Ack", msg.session, {{"ref_seq", msg.seq}, {"phase", to_string(s.state().phase)}});
    return;
  }
  if (type == "PlacePatient") {
    s.place_patient(who, require_string(p, "instance_id"), require_pose(p));
    out.send(id, "Ack", msg.session, {{"ref_seq", msg.seq}});
    return;
  }
  if (type == "SetVisibility") {
    auto it = p.find("visible");
    if (it == p.end() || !it->is_boolean()) {
      throw Error(ErrorCode::Protocol, "payload.visible must be a boolean");
    }
    s.set_visibility(who, require_string(p, "instance_id"), it->get<bool>());
    out.send(id, "Ack", msg.session, {{"ref_seq", msg.seq}});
    return;
  }
  if (type == "ParamTweak") {
    s.param_tweak(who, require_string(p, "key"), require_number(p, "value"),
                  session_clock(hosted));
    out.send(id, "Ack", msg.session, {{"ref_seq", msg.seq}});
    return;
  }
  if (type == "EndSession") {
    s.end(who, session_clock(hosted));
    out.send(id, "Ack", msg.session, {{"ref_seq", msg.seq}, {"phase", to_string(s.state().phase)}});
    return;
  }

  const std::uint64_t now = session_clock(hosted);
  if (type == "SensorPose") {
    auto match = s.sensor_sample(who, require_enum<Sensor>(p, "sensor", &parse_sensor),
                                 require_pose(p), now);
    json reply = {{"ref_seq", msg.seq}, {"instance_id", nullptr}, {"zone", nullptr}};
    if (match) {
      reply["instance_id"] = match->instance_id;
      reply["zone"] = to_string(match->zone.kind);
      reply["distance_m"] = match->distance_m;
    }
    out.send(id, "ZoneMatch", msg.session, std::move(reply));
  } else if (type == "GazeSample") {
    s.gaze_sample(who, require_vec(p, "origin"), require_vec(p, "direction"), now);
  } else if (type == "BeginHold") {
    auto r = s.begin_hold(who, require_string(p, "instance_id"),
                          require_enum<ZoneKind>(p, "zone", &parse_zone), now);
    out.send(id, "HoldStarted", msg.session,
             {{"ref_seq", msg.seq},
              {"already_active", r.already_active},
              {"result", interaction_to_json(r.result)}});
  } else if (type == "EndHold") {
    auto r = s.end_hold(who, require_string(p, "instance_id"),
                        require_enum<ZoneKind>(p, "zone", &parse_zone), now);
    out.send(id, "HoldSummary", msg.session,
             {{"ref_seq", msg.seq},
              {"duration_ms", r.duration_ms},
              {"ticks_emitted", r.ticks_emitted}});
  } else if (type == "CognitiveQuery") {
    auto r = s.cognitive_query(who, require_string(p, "instance_id"),
                               require_enum<Query>(p, "query", &parse_query), now);
    out.send(id, "GestureResponse", msg.session,
             {{"ref_seq", msg.seq}, {"waved", r.waved}, {"pointed_to_injury", r.pointed_to_injury}});
  } else if (type == "AssignTag") {
    s.assign_tag(who, require_string(p, "instance_id"),
                 require_enum<TriageCategory>(p, "category", &parse_category), now);
    out.send(id, "Ack", msg.session, {{"ref_seq", msg.seq}});
  } else if (type == "FacilitatorSubmit") {
    std::vector<int> value;
    auto it = p.find("value");
    if (it != p.end() && it->is_number_integer()) {
      value.push_back(it->get<int>());
    } else if (it != p.end() && it->is_array()) {
      for (const auto& x : *it) {
        if (!x.is_number_integer()) throw Error(ErrorCode::Protocol, "payload.value must hold integers");
        value.push_back(x.get<int>());
      }
    } else {
      throw Error(ErrorCode::Protocol, "payload.value must be an integer or [sys, dia]");
    }
    auto r = s.facilitator_submit(who, require_string(p, "instance_id"),
                                  require_enum<VitalChannel>(p, "channel", &parse_channel), value,
                                  now);
    out.send(id, "CrossCheck", msg.session,
             {{"ref_seq", msg.seq}, {"matches_truth", r.matches_truth}, {"truth", r.truth}});
  }
}

}  // namespace mcisim
