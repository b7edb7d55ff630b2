#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mcisim/case_list.hpp"
#include "mcisim/error.hpp"
#include "mcisim/telemetry.hpp"
#include "scripted.hpp"

namespace mcisim {
namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Committed {
  Scenario scenario;
  std::string log;
  std::string report;
};

Committed committed(const std::string& name) {
  const auto dir = testing::fixture_dir() / name;
  return {load_scenario(dir / "scenario.json", &default_case_list()).scenario,
          read_text(dir / "session.jsonl"), read_text(dir / "report.json")};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

TEST(Fixtures, MatchScriptedSessions) {
  for (const auto& run : testing::all_scripted_runs()) {
    const auto c = committed(run.name);
    EXPECT_EQ(serialize_scenario(run.scenario), serialize_scenario(c.scenario)) << run.name;
    EXPECT_EQ(run.log_jsonl, c.log) << run.name << ": rerun make_fixtures";
    EXPECT_EQ(run.report_json, c.report) << run.name;
  }
}

TEST(Replay, CommittedLogsAreIdentical) {
  for (const char* name : {"virtual_all_correct", "virtual_four_of_five", "actor_three_untagged"}) {
    const auto c = committed(name);
    const auto record = replay(parse_log(c.log), c.scenario, default_case_list());
    EXPECT_EQ(serialize_report(score(record, c.scenario, default_case_list())), c.report) << name;
  }
}

TEST(Replay, MutationsAreLocated) {
  const auto c = committed("virtual_all_correct");
  const auto lines = lines_of(c.log);
  const auto parsed = parse_log(c.log);

  // Engine events are regenerated, so any edit to one is caught at its own
  // seq. Input events are re-executed; one stamped before the clock is
  // rejected at its seq.
  struct Case {
    std::function<bool(const SessionEvent&)> pick;
    std::function<void(nlohmann::json&)> mutate;
    bool drop = false;
  };
  std::vector<Case> cases = {
      {[](const SessionEvent& e) { return e.is<ev::HeartbeatTick>(); },
       [](nlohmann::json& j) { j["ts_ms"] = j["ts_ms"].get<std::uint64_t>() + 1; }},
      {[](const SessionEvent& e) { return e.is<ev::VitalsReadout>(); },
       [](nlohmann::json& j) { j["data"]["values"][0] = 1; }},
      {[](const SessionEvent& e) { return e.is<ev::BreathTick>(); }, nullptr, true},
      {[](const SessionEvent& e) { return e.is<ev::TagAssigned>(); },
       [](nlohmann::json& j) { j["ts_ms"] = 0; }},
  };
  for (const auto& mc : cases) {
    std::uint64_t seq = 0;
    while (!mc.pick(parsed.events[seq])) ++seq;
    auto mutated = lines;
    if (mc.drop) {
      mutated.erase(mutated.begin() + 1 + seq);
      // Later lines keep their original seqs; renumber so only content differs.
      for (std::size_t i = 1 + seq; i < mutated.size(); ++i) {
        auto j = nlohmann::json::parse(mutated[i]);
        j["seq"] = i - 1;
        mutated[i] = serialize_event(event_from_json(j));
      }
    } else {
      auto j = nlohmann::json::parse(mutated[1 + seq]);
      mc.mutate(j);
      mutated[1 + seq] = serialize_event(event_from_json(j));
    }
    try {
      replay(parse_log(join(mutated)), c.scenario, default_case_list());
      ADD_FAILURE() << "mutation at seq " << seq << " not detected";
    } catch (const DivergenceError& e) {
      EXPECT_EQ(e.seq(), seq) << e.what();
      EXPECT_EQ(e.code(), ErrorCode::Divergence);
    }
  }
}

// An edited input is replayed as given; the first engine event it changes is
// where the divergence shows.
TEST(Replay, ShiftedHoldShowsAtFirstTick) {
  const auto c = committed("virtual_all_correct");
  auto lines = lines_of(c.log);
  const auto parsed = parse_log(c.log);
  std::uint64_t enter = 0;
  while (!(parsed.events[enter].is<ev::ZoneEnter>() &&
           parsed.events[enter].as<ev::ZoneEnter>()->zone == ZoneKind::Wrist)) {
    ++enter;
  }
  auto j = nlohmann::json::parse(lines[1 + enter]);
  j["ts_ms"] = j["ts_ms"].get<std::uint64_t>() + 100;
  lines[1 + enter] = serialize_event(event_from_json(j));
  std::uint64_t first_tick = enter;
  while (!parsed.events[first_tick].is<ev::HeartbeatTick>()) ++first_tick;
  try {
    replay(parse_log(join(lines)), c.scenario, default_case_list());
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.seq(), first_tick);
  }
}

TEST(Replay, TruncatedLogDiverges) {
  const auto c = committed("virtual_all_correct");
  auto lines = lines_of(c.log);
  const auto parsed = parse_log(c.log);
  // Drop everything after the first BP readout's ZoneEnter: the readout is owed.
  std::size_t cut = 0;
  while (!parsed.events[cut].is<ev::VitalsReadout>()) ++cut;
  lines.resize(1 + cut);
  try {
    replay(parse_log(join(lines)), c.scenario, default_case_list());
  } catch (const DivergenceError&) {
    FAIL() << "a prefix ending before an owed event is still a valid log";
  }
}

TEST(Replay, HeaderMismatch) {
  const auto c = committed("virtual_all_correct");
  const auto other = generate_virtual_scenario(default_case_list(), 43);
  try {
    replay(parse_log(c.log), other, default_case_list());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Integrity);
  }
  auto list = default_case_list();
  list.version = "mcl-2";
  EXPECT_THROW(replay(parse_log(c.log), c.scenario, list), Error);
}

TEST(Scoring, AllCorrect) {
  const auto run = testing::run_all_correct();
  EXPECT_DOUBLE_EQ(run.report.accuracy, 1.0);
  EXPECT_EQ(run.report.overtriage_count, 0);
  EXPECT_EQ(run.report.undertriage_count, 0);
  for (const auto& [id, p] : run.report.per_patient) {
    EXPECT_EQ(p.time_in_task_ms, 36500u) << id;
  }
}

TEST(Scoring, FourOfFive) {
  const auto run = testing::run_four_of_five();
  EXPECT_DOUBLE_EQ(run.report.accuracy, 0.8);
  EXPECT_EQ(run.report.correct_count, 4);
  EXPECT_EQ(run.report.overtriage_count, 1);
  EXPECT_EQ(run.report.undertriage_count, 0);
  EXPECT_EQ(run.report.untagged_count, 0);
  const auto yellow = index_of(TriageCategory::Yellow);
  EXPECT_EQ(run.report.confusion[yellow][index_of(TriageCategory::Red)], 1);
  bool saw_retag = false;
  for (const auto& [id, p] : run.report.per_patient) {
    if (p.history.size() == 2) {
      saw_retag = true;
      EXPECT_EQ(p.truth, TriageCategory::Green);
      EXPECT_EQ(p.tagged, TriageCategory::Green);
      EXPECT_EQ(p.history.front().category, TriageCategory::Yellow);
    }
  }
  EXPECT_TRUE(saw_retag);
}

TEST(Scoring, ActorFixtureMatchesHandMatrix) {
  const auto run = testing::run_actor_untagged();
  // Rows: truth black, grey, red, yellow, green. Columns add Untagged.
  const std::array<std::array<int, 6>, 5> expected = {{
      {3, 0, 0, 0, 0, 0},
      {0, 2, 1, 0, 0, 1},
      {0, 0, 3, 1, 0, 1},
      {0, 0, 0, 4, 0, 1},
      {0, 0, 0, 0, 3, 0},
  }};
  EXPECT_EQ(run.report.confusion, expected);
  int untagged = 0;
  for (std::size_t r = 0; r < 5; ++r) {
    int row = 0;
    for (int v : run.report.confusion[r]) row += v;
    EXPECT_EQ(row, kCaseListHistogram[r]);
    untagged += run.report.confusion[r][kUntaggedColumn];
  }
  EXPECT_EQ(untagged, 3);
  EXPECT_EQ(run.report.untagged_count, 3);
  EXPECT_DOUBLE_EQ(run.report.accuracy, 15.0 / 20.0);
  EXPECT_EQ(run.report.overtriage_count, 1);
  EXPECT_EQ(run.report.undertriage_count, 1);

  int mismatches = 0;
  for (const auto& e : parse_log(run.log_jsonl).events) mismatches += e.is<ev::CrossCheckMismatch>();
  EXPECT_EQ(mismatches, 1);
}

TEST(Scoring, OnlyFinalTagCounts) {
  const auto scenario = generate_virtual_scenario(default_case_list(), 42);
  Session s = start_session("s", scenario, default_case_list(), {{"t1", Role::Trainee}});
  const auto& inst = scenario.instances[0];
  const auto truth = default_case_list().find(inst.case_id)->ground_truth;
  const auto wrong = truth == TriageCategory::Red ? TriageCategory::Green : TriageCategory::Red;
  s.assign_tag("t1", inst.instance_id, truth, 1000);
  s.assign_tag("t1", inst.instance_id, wrong, 2000);
  EventLog log(make_header("s", scenario, {{"t1", Role::Trainee}}));
  for (auto& e : s.take_events()) log.record(std::move(e));
  const auto record = replay(parse_log(log.to_jsonl()), scenario, default_case_list());
  const auto report = score(record, scenario, default_case_list());
  EXPECT_EQ(report.per_patient.at(inst.instance_id).tagged, wrong);
  EXPECT_EQ(report.correct_count, 0);
  EXPECT_EQ(report.untagged_count, 4);
  EXPECT_EQ(report.per_patient.at(inst.instance_id).time_in_task_ms, 1000u);
  EXPECT_FALSE(report.per_patient.at(scenario.instances[1].instance_id).time_in_task_ms);
}

TEST(EventLog, SeqAndClose) {
  const auto scenario = generate_virtual_scenario(default_case_list(), 1);
  EventLog log(make_header("s", scenario));
  SessionEvent e;
  e.payload = ev::SessionStart{};
  EXPECT_EQ(log.record(e).seq, 0u);
  e.payload = ev::SessionEnd{"ended_by_facilitator"};
  e.seq = 99;
  EXPECT_EQ(log.record(e).seq, 1u);
  EXPECT_TRUE(log.closed());
  try {
    log.record(e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::ClosedLog);
  }
  const auto parsed = parse_log(log.to_jsonl());
  EXPECT_EQ(parsed.events.size(), 2u);
  EXPECT_EQ(parsed.header, log.header());
}

TEST(EventLog, FileSinkWritesHeaderFirst) {
  const auto scenario = generate_virtual_scenario(default_case_list(), 1);
  const auto path = std::filesystem::temp_directory_path() / "mcisim_log_test.jsonl";
  {
    auto log = EventLog::open_file(make_header("s", scenario), path);
    EXPECT_EQ(lines_of(read_text(path)).size(), 1u);
    SessionEvent e;
    e.payload = ev::SessionStart{};
    EXPECT_FALSE(log.record(e).write_error);
    EXPECT_EQ(read_text(path), log.to_jsonl());
  }
  EXPECT_EQ(load_log(path).events.size(), 1u);
  std::filesystem::remove(path);
}

TEST(EventLog, WriteFailureIsReportedNotFatal) {
  const auto scenario = generate_virtual_scenario(default_case_list(), 1);
  auto sink = std::make_unique<std::ostringstream>();
  auto* raw = sink.get();
  EventLog log(make_header("s", scenario), std::move(sink));
  raw->setstate(std::ios::badbit);
  SessionEvent e;
  e.payload = ev::SessionStart{};
  const auto r = log.record(e);
  EXPECT_TRUE(r.write_error);
  EXPECT_EQ(log.write_failures(), 1u);
  EXPECT_EQ(log.events().size(), 1u);
}

TEST(ParseLog, Errors) {
  EXPECT_THROW(parse_log(""), Error);
  const auto c = committed("virtual_all_correct");
  auto lines = lines_of(c.log);
  lines[3] = "{not json";
  try {
    parse_log(join(lines));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Format);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  lines = lines_of(c.log);
  std::swap(lines[2], lines[3]);
  EXPECT_THROW(parse_log(join(lines)), Error);
}

TEST(Events, RoundTripEveryKind) {
  const auto c = committed("actor_three_untagged");
  std::set<std::string> kinds;
  for (const auto& e : parse_log(c.log).events) {
    kinds.insert(std::string(kind_name(e.payload)));
    EXPECT_EQ(event_from_json(nlohmann::json::parse(serialize_event(e))), e);
  }
  EXPECT_TRUE(kinds.count("FacilitatorPrompt"));
  EXPECT_TRUE(kinds.count("CrossCheckMismatch"));
}

}  // namespace
}  // namespace mcisim
