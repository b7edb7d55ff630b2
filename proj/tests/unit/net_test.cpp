#include <gtest/gtest.h>

#include <chrono>

#include "mcisim/case_list.hpp"
#include "net_client.hpp"

namespace mcisim {
namespace {

using nlohmann::json;
using testing::LiveServer;
using testing::TcpClient;
using testing::WsClient;

HubConfig config() { return HubConfig{default_case_list(), std::nullopt, {}}; }

std::vector<std::string> tag_order(const testing::Client& c) {
  std::vector<std::string> out;
  for (const auto& m : c.history) {
    if (m["type"] == "Event" && m["payload"]["kind"] == "TagAssigned") {
      out.push_back(m["payload"]["instance_id"].get<std::string>() + "@" +
                    std::to_string(m["payload"]["seq"].get<std::uint64_t>()));
    }
  }
  return out;
}

TEST(OutboundQueue, Limit) {
  OutboundQueue q(3);
  EXPECT_TRUE(q.push("a"));
  EXPECT_TRUE(q.push("b"));
  EXPECT_TRUE(q.push("c"));
  EXPECT_FALSE(q.push("d"));
  EXPECT_EQ(q.size(), 3u);
  q.pop();
  EXPECT_EQ(q.front(), "b");
  EXPECT_TRUE(q.push("d"));
  EXPECT_EQ(OutboundQueue().limit(), kOutboundLimit);
}

TEST(Net, TeamSyncOverTcp) {
  const auto t0 = std::chrono::steady_clock::now();
  LiveServer server(config());
  TcpClient fac(server.port()), a(server.port()), b(server.port());
  ASSERT_TRUE(fac.hello("fac", "facilitator"));
  ASSERT_TRUE(a.hello("alpha", "trainee"));
  ASSERT_TRUE(b.hello("bravo", "trainee"));

  fac.send("CreateSession", {{"generate", {{"mode", "actor"}, {"seed", 7}}}});
  auto created = fac.wait_type("SessionCreated");
  ASSERT_TRUE(created);
  const std::string sid = (*created)["payload"]["session_id"];
  const auto instances = (*created)["payload"]["scenario"]["instances"];
  ASSERT_EQ(instances.size(), 20u);

  fac.send("JoinSession", {{"role", "facilitator"}}, sid);
  ASSERT_TRUE(fac.wait_type("Joined"));
  a.send("JoinSession", {{"role", "trainee"}}, sid);
  ASSERT_TRUE(a.wait_type("Joined"));

  // One trainee is not a team.
  a.send("StartSession", {}, sid);
  auto refused = a.wait_type("Error");
  ASSERT_TRUE(refused);
  EXPECT_EQ((*refused)["payload"]["code"], "precondition");

  b.send("JoinSession", {{"role", "trainee"}}, sid);
  ASSERT_TRUE(b.wait_type("Joined"));
  a.send("StartSession", {}, sid);
  ASSERT_TRUE(a.wait_event("SessionStart"));
  ASSERT_TRUE(b.wait_event("SessionStart"));

  // Both trainees tag concurrently without waiting for each other.
  for (std::size_t i = 0; i < 10; ++i) {
    auto& who = i % 2 ? b : a;
    who.send("AssignTag", {{"instance_id", instances[i]["instance_id"]}, {"category", "yellow"}},
             sid);
  }
  auto got_all = [](testing::Client& c) {
    int n = static_cast<int>(tag_order(c).size());
    while (n < 10) {
      if (!c.wait_event("TagAssigned")) return false;
      ++n;
    }
    return true;
  };
  ASSERT_TRUE(got_all(a));
  ASSERT_TRUE(got_all(b));
  ASSERT_TRUE(got_all(fac));
  EXPECT_EQ(tag_order(a).size(), 10u);
  EXPECT_EQ(tag_order(a), tag_order(b));
  EXPECT_EQ(tag_order(a), tag_order(fac));
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
}

TEST(Net, WebSocketAndTcpShareSessions) {
  LiveServer server(config());
  WsClient fac(server.port());
  TcpClient t(server.port());
  ASSERT_TRUE(fac.hello("console", "facilitator"));
  ASSERT_TRUE(t.hello("trainee", "trainee"));
  fac.send("CreateSession", {{"generate", {{"mode", "virtual"}, {"seed", 42}}}});
  auto created = fac.wait_type("SessionCreated");
  ASSERT_TRUE(created);
  const std::string sid = (*created)["payload"]["session_id"];
  fac.send("JoinSession", {{"role", "facilitator"}}, sid);
  ASSERT_TRUE(fac.wait_type("Joined"));
  t.send("JoinSession", {{"role", "trainee"}}, sid);
  ASSERT_TRUE(t.wait_type("Joined"));
  fac.send("Subscribe", {{"from_seq", 0}}, sid);
  ASSERT_TRUE(fac.wait_type("Subscribed"));
  t.send("StartSession", {}, sid);
  ASSERT_TRUE(fac.wait_event("SessionStart"));

  t.send("BeginHold", {{"instance_id", "p1"}, {"zone", "wrist"}}, sid);
  auto started = t.wait_type("HoldStarted");
  ASSERT_TRUE(started);
  EXPECT_EQ((*started)["payload"]["result"]["kind"], "StreamStarted");
  t.send("AssignTag", {{"instance_id", "p1"}, {"category", "green"}}, sid);
  auto tag = fac.wait_event("TagAssigned");
  ASSERT_TRUE(tag);
  EXPECT_EQ((*tag)["payload"]["data"]["category"], "green");
  EXPECT_EQ((*tag)["sender"], "server");
  EXPECT_EQ((*tag)["session"], sid);
}

TEST(Net, MalformedJsonClosesTcp) {
  LiveServer server(config());
  TcpClient c(server.port());
  ASSERT_TRUE(c.hello("x", "trainee"));
  c.send_raw("{this is not json");
  auto err = c.wait_type("Error");
  ASSERT_TRUE(err);
  EXPECT_EQ((*err)["payload"]["code"], "protocol");
  EXPECT_FALSE(c.recv(std::chrono::milliseconds(2000)));
  EXPECT_TRUE(c.closed());
}

TEST(Net, UnknownTypeKeepsConnection) {
  LiveServer server(config());
  TcpClient c(server.port());
  ASSERT_TRUE(c.hello("x", "trainee"));
  c.send("Fly");
  auto err = c.wait_type("Error");
  ASSERT_TRUE(err);
  EXPECT_EQ((*err)["payload"]["code"], "unknown_type");
  c.send("Heartbeat");
  EXPECT_TRUE(c.wait_type("Heartbeat"));
}

TEST(Net, LaggingClientIsDropped) {
  LiveServer server(config(), 8);
  WsClient fac(server.port());
  ASSERT_TRUE(fac.hello("fac", "facilitator"));
  fac.send("CreateSession", {{"generate", {{"mode", "virtual"}, {"seed", 42}}}});
  auto created = fac.wait_type("SessionCreated");
  ASSERT_TRUE(created);
  const std::string sid = (*created)["payload"]["session_id"];
  fac.send("JoinSession", {{"role", "facilitator"}}, sid);
  ASSERT_TRUE(fac.wait_type("Joined"));
  // The client never reads while the edits pile up; the backfill alone is
  // larger than the queue limit.
  fac.send("AuthorToggle", {}, sid);
  for (int i = 0; i < 20; ++i) {
    fac.send("ParamTweak", {{"key", "query_range_m"}, {"value", 2.0 + i}}, sid);
  }
  fac.send("Subscribe", {{"from_seq", 0}}, sid);
  while (fac.recv(std::chrono::milliseconds(2000))) {
  }
  EXPECT_EQ(fac.close_reason, "lagged");
}

TEST(Net, PortZeroPicksEphemeral) {
  LiveServer a(config()), b(config());
  EXPECT_NE(a.port(), 0);
  EXPECT_NE(a.port(), b.port());
}

}  // namespace
}  // namespace mcisim
