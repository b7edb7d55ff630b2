#include <gtest/gtest.h>

#include "mcisim/case_list.hpp"
#include "mcisim/hub.hpp"

namespace mcisim {
namespace {

using nlohmann::json;

class HubTest : public ::testing::Test {
 protected:
  std::uint64_t now = 1'000'000;
  Hub hub{HubConfig{default_case_list(), std::nullopt, {}}, [this] { return now; }};
  std::map<ConnectionId, std::vector<Outgoing>> inbox;

  void collect(std::vector<Outgoing> out) {
    for (auto& o : out) inbox[o.connection].push_back(std::move(o));
  }

  void send(ConnectionId id, const std::string& type, json payload = json::object(),
            std::optional<std::string> session = std::nullopt) {
    json msg = {{"v", 1}, {"type", type}, {"seq", 0}, {"ts_ms", 0}, {"payload", payload}};
    msg["session"] = session ? json(*session) : json(nullptr);
    collect(hub.handle(id, msg.dump()));
  }

  ConnectionId hello(const std::string& name, const std::string& role) {
    const auto id = hub.connect();
    send(id, "Hello", {{"v", 1}, {"role_intent", role}, {"name", name}});
    return id;
  }

  std::vector<Outgoing> take(ConnectionId id) { return std::exchange(inbox[id], {}); }

  const Outgoing* last_of(ConnectionId id, const std::string& type) {
    const Outgoing* found = nullptr;
    for (const auto& o : inbox[id]) {
      if (o.envelope.type == type) found = &o;
    }
    return found;
  }

  std::vector<std::string> event_kinds(ConnectionId id) {
    std::vector<std::string> kinds;
    for (const auto& o : inbox[id]) {
      if (o.envelope.type == "Event") kinds.push_back(o.envelope.payload["kind"]);
    }
    return kinds;
  }

  std::string create(ConnectionId id, const std::string& mode, std::uint64_t seed) {
    send(id, "CreateSession", {{"generate", {{"mode", mode}, {"seed", seed}}}});
    const auto* created = last_of(id, "SessionCreated");
    EXPECT_TRUE(created);
    return created ? created->envelope.payload["session_id"].get<std::string>() : "";
  }

  std::string client_id(ConnectionId id) {
    for (const auto& o : inbox[id]) {
      if (o.envelope.type == "Welcome") return o.envelope.payload["client_id"];
    }
    return "";
  }
};

TEST_F(HubTest, HandshakeAssignsUniqueIds) {
  const auto a = hello("alice", "trainee");
  const auto b = hello("alice", "trainee");
  EXPECT_EQ(client_id(a), "alice");
  EXPECT_EQ(client_id(b), "alice-2");
  EXPECT_EQ(inbox[a][0].envelope.sender, "server");
}

TEST_F(HubTest, VersionMismatchCloses) {
  const auto id = hub.connect();
  send(id, "Hello", {{"v", 2}, {"role_intent", "trainee"}, {"name", "x"}});
  ASSERT_EQ(inbox[id].size(), 1u);
  EXPECT_EQ(inbox[id][0].envelope.type, "Error");
  EXPECT_EQ(inbox[id][0].envelope.payload["code"], "version");
  EXPECT_TRUE(inbox[id][0].close_after);
}

TEST_F(HubTest, HelloRequiredFirst) {
  const auto id = hub.connect();
  send(id, "CreateSession", {{"generate", {{"mode", "virtual"}, {"seed", 1}}}});
  ASSERT_EQ(inbox[id].size(), 1u);
  EXPECT_EQ(inbox[id][0].envelope.type, "Error");
  EXPECT_FALSE(inbox[id][0].close_after);
}

TEST_F(HubTest, MalformedAndUnknown) {
  const auto id = hello("a", "trainee");
  take(id);
  collect(hub.handle(id, "{nope"));
  ASSERT_EQ(inbox[id].size(), 1u);
  EXPECT_EQ(inbox[id][0].envelope.payload["code"], "protocol");
  EXPECT_TRUE(inbox[id][0].close_after);
  take(id);
  send(id, "Teleport");
  ASSERT_EQ(inbox[id].size(), 1u);
  EXPECT_EQ(inbox[id][0].envelope.payload["code"], "unknown_type");
  EXPECT_FALSE(inbox[id][0].close_after);
  take(id);
  collect(hub.handle(id, R"({"v":1,"payload":{}})"));
  EXPECT_EQ(inbox[id][0].envelope.payload["code"], "protocol");
  EXPECT_FALSE(inbox[id][0].close_after);
}

TEST_F(HubTest, OutgoingSeqIsPerConnection) {
  const auto id = hello("a", "trainee");
  send(id, "Heartbeat");
  send(id, "Heartbeat");
  ASSERT_EQ(inbox[id].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(inbox[id][i].envelope.seq, i);
}

TEST_F(HubTest, VirtualSessionFlow) {
  const auto f = hello("fac", "facilitator");
  const auto t = hello("trainee", "trainee");
  const auto sid = create(f, "virtual", 42);
  EXPECT_EQ(sid, "s1");
  send(f, "JoinSession", {{"role", "facilitator"}}, sid);
  send(t, "JoinSession", {{"role", "trainee"}}, sid);
  ASSERT_TRUE(last_of(t, "Joined"));
  EXPECT_EQ(last_of(t, "Joined")->envelope.payload["snapshot"]["phase"], "lobby");
  take(f);
  take(t);

  send(t, "StartSession", {}, sid);
  EXPECT_EQ(event_kinds(t), std::vector<std::string>{"SessionStart"});
  EXPECT_EQ(event_kinds(f), std::vector<std::string>{"SessionStart"});
  take(f);
  take(t);

  const Session* session = hub.find_session(sid);
  ASSERT_TRUE(session);
  const auto& inst = session->state().scenario.instances[0];
  now += 1000;
  send(t, "BeginHold", {{"instance_id", inst.instance_id}, {"zone", "wrist"}}, sid);
  ASSERT_TRUE(last_of(t, "HoldStarted"));
  now += 10000;
  collect(hub.tick());
  send(t, "EndHold", {{"instance_id", inst.instance_id}, {"zone", "wrist"}}, sid);
  const auto* summary = last_of(t, "HoldSummary");
  ASSERT_TRUE(summary);
  EXPECT_EQ(summary->envelope.payload["duration_ms"], 10000);
  const int hr = default_case_list().find(inst.case_id)->vitals.hr_bpm;
  EXPECT_EQ(summary->envelope.payload["ticks_emitted"], 10000 * hr / 60000);

  // Own stream events reach the trainee; the facilitator is not subscribed.
  const auto kinds = event_kinds(t);
  EXPECT_EQ(std::count(kinds.begin(), kinds.end(), "HeartbeatTick"), 10000 * hr / 60000);
  EXPECT_TRUE(event_kinds(f).empty());

  send(t, "AssignTag", {{"instance_id", inst.instance_id}, {"category", "red"}}, sid);
  EXPECT_EQ(event_kinds(f).back(), "TagAssigned");

  // Subscribing backfills everything from the log.
  take(f);
  send(f, "Subscribe", {{"from_seq", 0}}, sid);
  EXPECT_EQ(event_kinds(f).size(), hub.find_log(sid)->events().size());
  EXPECT_TRUE(last_of(f, "Subscribed"));
}

TEST_F(HubTest, SubscribeIsFacilitatorOnly) {
  const auto t = hello("t", "trainee");
  const auto sid = create(t, "virtual", 1);
  send(t, "JoinSession", {{"role", "trainee"}}, sid);
  take(t);
  send(t, "Subscribe", {}, sid);
  EXPECT_EQ(inbox[t].back().envelope.payload["code"], "role");
}

TEST_F(HubTest, CommandsNeedMembership) {
  const auto t = hello("t", "trainee");
  const auto sid = create(t, "virtual", 1);
  take(t);
  send(t, "StartSession", {}, sid);
  EXPECT_EQ(inbox[t].back().envelope.payload["code"], "role");
  send(t, "StartSession", {}, std::string("s99"));
  EXPECT_EQ(inbox[t].back().envelope.payload["code"], "not_found");
}

TEST_F(HubTest, ActorTeamTask) {
  const auto f = hello("fac", "facilitator");
  const auto a = hello("a", "trainee");
  const auto b = hello("b", "trainee");
  const auto sid = create(f, "actor", 7);
  send(f, "JoinSession", {{"role", "facilitator"}}, sid);
  send(a, "JoinSession", {{"role", "trainee"}}, sid);
  take(a);
  send(a, "StartSession", {}, sid);
  ASSERT_EQ(inbox[a].back().envelope.type, "Error");
  EXPECT_EQ(inbox[a].back().envelope.payload["code"], "precondition");
  send(b, "JoinSession", {{"role", "trainee"}}, sid);
  send(a, "StartSession", {}, sid);
  take(a);
  take(b);
  take(f);

  const auto& instances = hub.find_session(sid)->state().scenario.instances;
  for (std::size_t i = 0; i < 6; ++i) {
    now += 100;
    send(i % 2 ? b : a, "AssignTag", {{"instance_id", instances[i].instance_id}, {"category", "red"}},
         sid);
  }
  auto tags = [&](ConnectionId id) {
    std::vector<std::pair<std::string, std::uint64_t>> out;
    for (const auto& o : inbox[id]) {
      if (o.envelope.type == "Event" && o.envelope.payload["kind"] == "TagAssigned") {
        out.emplace_back(o.envelope.payload["instance_id"], o.envelope.payload["seq"]);
      }
    }
    return out;
  };
  EXPECT_EQ(tags(a).size(), 6u);
  EXPECT_EQ(tags(a), tags(b));
  EXPECT_EQ(tags(a), tags(f));

  // Cross-check: the prompt and the mismatch reach the facilitator only.
  take(a);
  take(b);
  take(f);
  const auto& inst = instances[0];
  const int hr = default_case_list().find(inst.case_id)->vitals.hr_bpm;
  send(a, "BeginHold", {{"instance_id", inst.instance_id}, {"zone", "wrist"}}, sid);
  EXPECT_EQ(last_of(a, "HoldStarted")->envelope.payload["result"]["kind"], "FacilitatorPrompt");
  send(f, "FacilitatorSubmit",
       {{"instance_id", inst.instance_id}, {"channel", "heartbeat"}, {"value", hr + 5}}, sid);
  EXPECT_EQ(last_of(f, "CrossCheck")->envelope.payload["matches_truth"], false);
  auto fk = event_kinds(f);
  EXPECT_EQ(std::count(fk.begin(), fk.end(), "CrossCheckMismatch"), 1);
  EXPECT_EQ(std::count(fk.begin(), fk.end(), "FacilitatorPrompt"), 1);
  for (auto id : {a, b}) {
    for (const auto& k : event_kinds(id)) {
      EXPECT_NE(k, "CrossCheckMismatch");
      EXPECT_NE(k, "FacilitatorPrompt");
      EXPECT_NE(k, "FacilitatorValue");
    }
  }
}

TEST_F(HubTest, ExpiryBroadcast) {
  const auto f = hello("fac", "facilitator");
  const auto t = hello("t", "trainee");
  const auto sid = create(f, "virtual", 3);
  send(f, "JoinSession", {{"role", "facilitator"}}, sid);
  send(t, "JoinSession", {{"role", "trainee"}}, sid);
  send(t, "StartSession", {}, sid);
  take(t);
  take(f);
  now += 599'999;
  send(t, "AssignTag", {{"instance_id", "p1"}, {"category", "red"}}, sid);
  EXPECT_EQ(event_kinds(t), std::vector<std::string>{"TagAssigned"});
  now += 2;
  send(t, "AssignTag", {{"instance_id", "p2"}, {"category", "red"}}, sid);
  EXPECT_EQ(event_kinds(t).back(), "SessionEnd");
  EXPECT_EQ(inbox[t].back().envelope.payload["code"], "session_expired");
  EXPECT_EQ(event_kinds(f).back(), "SessionEnd");
}

TEST_F(HubTest, RejoinAfterReconnect) {
  const auto t = hello("t", "trainee");
  const auto sid = create(t, "virtual", 3);
  send(t, "JoinSession", {{"role", "trainee"}}, sid);
  hub.disconnect(t);
  const auto t2 = hub.connect();
  send(t2, "Hello", {{"v", 1}, {"role_intent", "trainee"}, {"name", "t"}, {"resume_client_id", "t"}});
  EXPECT_EQ(client_id(t2), "t");
  send(t2, "JoinSession", {{"role", "trainee"}}, sid);
  ASSERT_TRUE(last_of(t2, "Joined"));
  EXPECT_EQ(hub.find_session(sid)->state().participants.size(), 1u);
}

TEST_F(HubTest, AuthorModeOverProtocol) {
  const auto f = hello("fac", "facilitator");
  const auto sid = create(f, "virtual", 3);
  send(f, "JoinSession", {{"role", "facilitator"}}, sid);
  send(f, "AuthorToggle", {}, sid);
  send(f, "PlacePatient",
       {{"instance_id", "p2"}, {"pose", {{"x", 1.5}, {"y", 2.5}, {"z", 0}, {"yaw_deg", 30}}}}, sid);
  send(f, "ParamTweak", {{"key", "bp_dwell_ms"}, {"value", 1500}}, sid);
  EXPECT_EQ(hub.find_session(sid)->state().scenario.find("p2")->pose, (Pose{1.5, 2.5, 0, 30}));
  EXPECT_EQ(hub.find_session(sid)->state().config.bp_dwell_ms, 1500u);
  for (const auto& o : inbox[f]) EXPECT_NE(o.envelope.type, "Error") << o.envelope.payload.dump();
}

TEST(HubLogs, WrittenAndReplayable) {
  const auto dir = std::filesystem::temp_directory_path() / "mcisim_hub_logs";
  std::filesystem::remove_all(dir);
  std::uint64_t now = 0;
  Hub hub(HubConfig{default_case_list(), dir, {}}, [&] { return now; });
  const auto id = hub.connect();
  auto send = [&](const std::string& type, json payload, std::optional<std::string> s = {}) {
    json msg = {{"v", 1}, {"type", type}, {"payload", payload}};
    if (s) msg["session"] = *s;
    return hub.handle(id, msg.dump());
  };
  send("Hello", {{"v", 1}, {"role_intent", "trainee"}, {"name", "t"}});
  send("CreateSession", {{"generate", {{"mode", "virtual"}, {"seed", 42}}}});
  send("JoinSession", {{"role", "trainee"}}, "s1");
  send("StartSession", {}, "s1");
  now = 500;
  send("BeginHold", {{"instance_id", "p1"}, {"zone", "bicep"}}, "s1");
  now = 5000;
  hub.tick();
  send("EndHold", {{"instance_id", "p1"}, {"zone", "bicep"}}, "s1");
  send("AssignTag", {{"instance_id", "p1"}, {"category", "grey"}}, "s1");

  const auto path = dir / "session-s1.jsonl";
  ASSERT_TRUE(std::filesystem::exists(path));
  const auto log = load_log(path);
  EXPECT_EQ(log.events.size(), hub.find_log("s1")->events().size());
  const auto scenario = generate_virtual_scenario(default_case_list(), 42);
  EXPECT_NO_THROW(replay(log, scenario, default_case_list()));

  // A fresh hub over the same directory never reuses a session id.
  Hub again(HubConfig{default_case_list(), dir, {}}, [] { return 0; });
  const auto c = again.connect();
  again.handle(c, R"({"v":1,"type":"Hello","payload":{"v":1,"role_intent":"trainee","name":"x"}})");
  const auto out = again.handle(
      c, R"({"v":1,"type":"CreateSession","payload":{"generate":{"mode":"virtual","seed":1}}})");
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out.back().envelope.payload["session_id"], "s2");
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mcisim
