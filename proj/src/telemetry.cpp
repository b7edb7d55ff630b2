#include "mcisim/telemetry.hpp"

#include <deque>
#include <fstream>
#include <sstream>

#include "json_fields.hpp"
#include "mcisim/error.hpp"
#include "mcisim/salt.hpp"

namespace mcisim {
namespace {

using detail::Fields;
using nlohmann::json;
using nlohmann::ordered_json;

std::string line_context(std::size_t line_no) { return "line " + std::to_string(line_no); }

}  // namespace

LogHeader make_header(std::string session_id, const Scenario& scenario,
                      std::vector<Participant> participants) {
  LogHeader h;
  h.session_id = std::move(session_id);
  h.scenario_id = scenario.scenario_id;
  h.scenario_sha256 = scenario_sha256(scenario);
  h.case_list_version = scenario.case_list_version;
  h.participants = std::move(participants);
  return h;
}

ordered_json header_to_json(const LogHeader& h) {
  ordered_json parts = ordered_json::array();
  for (const auto& p : h.participants) {
    parts.push_back({{"responder_id", p.responder_id}, {"role", to_string(p.role)}});
  }
  ordered_json j;
  j["format_version"] = h.format_version;
  j["session_id"] = h.session_id;
  j["scenario_id"] = h.scenario_id;
  j["scenario_sha256"] = h.scenario_sha256;
  j["case_list_version"] = h.case_list_version;
  j["participants"] = std::move(parts);
  return j;
}

LogHeader header_from_json(const json& j) {
  Fields f(j, "header");
  LogHeader h;
  h.format_version = static_cast<int>(f.get_int("format_version", 1, 1'000'000));
  if (h.format_version != kLogFormatVersion) {
    detail::format_error(f.child("format_version"),
                         "unsupported version " + std::to_string(h.format_version));
  }
  h.session_id = f.get_string("session_id");
  h.scenario_id = f.get_string("scenario_id");
  h.scenario_sha256 = f.get_string("scenario_sha256");
  h.case_list_version = f.get_string("case_list_version");
  const json& parts = f.get_array("participants");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Fields p(parts[i], f.child("participants") + "[" + std::to_string(i) + "]");
    Participant part;
    part.responder_id = p.get_string("responder_id");
    const auto role = p.get_string("role");
    auto r = parse_role(role);
    if (!r) detail::format_error(p.child("role"), "unknown role '" + role + "'");
    part.role = *r;
    p.finish();
    h.participants.push_back(std::move(part));
  }
  f.finish();
  return h;
}

EventLog::EventLog(LogHeader header) : header_(std::move(header)) {}

EventLog::EventLog(LogHeader header, std::unique_ptr<std::ostream> sink)
    : header_(std::move(header)), sink_(std::move(sink)) {
  if (auto err = write_line(header_to_json(header_).dump())) ++write_failures_;
}

EventLog EventLog::open_file(LogHeader header, const std::filesystem::path& path) {
  auto out = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
  if (!out->is_open()) {
    throw Error(ErrorCode::Input, "cannot open session log '" + path.string() + "'");
  }
  return EventLog(std::move(header), std::move(out));
}

std::optional<std::string> EventLog::write_line(const std::string& line) {
  if (!sink_) return std::nullopt;
  *sink_ << line << '\n';
  sink_->flush();
  if (!*sink_) {
    sink_->clear();
    return "telemetry write failed";
  }
  return std::nullopt;
}

EventLog::Appended EventLog::record(SessionEvent event) {
  if (closed_) {
    throw Error(ErrorCode::ClosedLog, "session log " + header_.session_id + " is closed");
  }
  event.seq = events_.size();
  Appended out;
  out.seq = event.seq;
  out.write_error = write_line(serialize_event(event));
  if (out.write_error) ++write_failures_;
  if (event.is<ev::SessionEnd>()) closed_ = true;
  events_.push_back(std::move(event));
  return out;
}

std::string EventLog::to_jsonl() const {
  std::string out = header_to_json(header_).dump() + "\n";
  for (const auto& e : events_) out += serialize_event(e) + "\n";
  return out;
}

ParsedLog parse_log(std::string_view text) {
  ParsedLog out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = detail::parse_json_document(line, line_context(line_no));
      if (!have_header) {
        out.header = header_from_json(j);
        have_header = true;
      } else {
        auto e = event_from_json(j, line_context(line_no));
        if (e.seq != out.events.size()) {
          throw Error(ErrorCode::Format, line_context(line_no) + ": seq " + std::to_string(e.seq) +
                                             " out of order, expected " +
                                             std::to_string(out.events.size()));
        }
        out.events.push_back(std::move(e));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Format) throw;
      const std::string what = e.what();
      throw Error(ErrorCode::Format, what.rfind("line ", 0) == 0
                                         ? what
                                         : line_context(line_no) + ": " + what);
    }
  }
  if (!have_header) throw Error(ErrorCode::Format, "session log is empty (missing header)");
  return out;
}

ParsedLog load_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Input, "cannot open session log '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_log(ss.str());
}

SessionRecord replay(const ParsedLog& log, const Scenario& scenario, const MasterCaseList& cases,
                     const SessionConfig& config) {
  const auto sha = scenario_sha256(scenario);
  if (log.header.scenario_sha256 != sha) {
    throw Error(ErrorCode::Integrity, "log header scenario_sha256 " + log.header.scenario_sha256 +
                                          " does not match scenario " + sha);
  }
  if (log.header.scenario_id != scenario.scenario_id) {
    throw Error(ErrorCode::Integrity, "log header scenario_id '" + log.header.scenario_id +
                                          "' does not match '" + scenario.scenario_id + "'");
  }
  if (log.header.case_list_version != cases.version) {
    throw Error(ErrorCode::Integrity, "log was recorded against case list '" +
                                          log.header.case_list_version + "', have '" +
                                          cases.version + "'");
  }

  Session session(log.header.session_id, scenario, cases, config, log.header.participants);
  std::vector<SessionEvent> regenerated;
  std::deque<SessionEvent> pending;

  auto pull = [&] {
    for (auto& e : session.take_events()) {
      e.seq = regenerated.size() + pending.size();
      pending.push_back(std::move(e));
    }
  };

  for (const auto& logged : log.events) {
    const std::uint64_t expected_seq = regenerated.size();
    if (pending.empty()) {
      try {
        if (is_input_event(logged)) {
          session.apply(logged);
        } else {
          session.tick(logged.ts_ms);
        }
      } catch (const Error& e) {
        pull();
        if (!pending.empty() && serialize_event(pending.front()) != serialize_event(logged)) {
          throw DivergenceError(expected_seq, "first divergence at seq " +
                                                  std::to_string(expected_seq) +
                                                  ": log has " + serialize_event(logged) +
                                                  ", replay produced " +
                                                  serialize_event(pending.front()));
        }
        throw DivergenceError(expected_seq, "first divergence at seq " +
                                                std::to_string(expected_seq) +
                                                ": replay rejected logged event (" + e.what() +
                                                ")");
      }
      pull();
    }
    if (pending.empty()) {
      throw DivergenceError(expected_seq, "first divergence at seq " +
                                              std::to_string(expected_seq) +
                                              ": log has " + serialize_event(logged) +
                                              ", replay produced nothing");
    }
    const std::string want = serialize_event(pending.front());
    const std::string got = serialize_event(logged);
    if (want != got) {
      throw DivergenceError(expected_seq, "first divergence at seq " +
                                              std::to_string(expected_seq) + ": log has " + got +
                                              ", replay produced " + want);
    }
    regenerated.push_back(std::move(pending.front()));
    pending.pop_front();
  }
  if (!pending.empty()) {
    const auto seq = pending.front().seq;
    throw DivergenceError(seq, "first divergence at seq " + std::to_string(seq) +
                                   ": log ends, replay produced " +
                                   serialize_event(pending.front()));
  }

  SessionRecord record;
  record.header = log.header;
  record.final_state = session.state();
  record.events = std::move(regenerated);
  return record;
}

std::optional<std::uint64_t> time_in_task(const SessionRecord& record,
                                          std::string_view instance_id) {
  std::optional<std::uint64_t> first;
  std::optional<std::uint64_t> last_tag;
  for (const auto& e : record.events) {
    if (!e.instance_id || *e.instance_id != instance_id) continue;
    const bool directed = e.is<ev::ZoneEnter>() || e.is<ev::VoiceQuery>() ||
                          e.is<ev::TagAssigned>();
    if (directed && !first) first = e.ts_ms;
    if (e.is<ev::TagAssigned>()) last_tag = e.ts_ms;
  }
  if (!last_tag) return std::nullopt;
  return *last_tag - *first;
}

TriageReport score(const SessionRecord& record, const Scenario& scenario,
                   const MasterCaseList& cases) {
  TriageReport r;
  for (const auto& inst : scenario.instances) {
    const PatientCase* c = cases.find(inst.case_id);
    if (!c) {
      throw Error(ErrorCode::Integrity, "instance " + inst.instance_id +
                                            " references unknown case " + inst.case_id);
    }
    r.per_patient[inst.instance_id].truth = c->ground_truth;
  }

  std::optional<std::uint64_t> end_ts;
  for (const auto& e : record.events) {
    if (e.instance_id && !r.per_patient.count(*e.instance_id)) {
      throw Error(ErrorCode::Integrity, "event seq " + std::to_string(e.seq) +
                                            " references unknown instance '" + *e.instance_id +
                                            "'");
    }
    if (const auto* tag = e.as<ev::TagAssigned>()) {
      auto& p = r.per_patient[*e.instance_id];
      p.tagged = tag->category;
      p.history.push_back({tag->category, e.responder_id.value_or(""), e.ts_ms});
    }
    if (e.is<ev::SessionEnd>() && !end_ts) end_ts = e.ts_ms;
  }
  if (end_ts) {
    r.session_duration_ms = *end_ts;
  } else if (!record.events.empty()) {
    r.session_duration_ms = record.events.back().ts_ms;
  }

  for (auto& [id, p] : r.per_patient) {
    p.time_in_task_ms = time_in_task(record, id);
    const auto row = index_of(p.truth);
    if (!p.tagged) {
      ++r.confusion[row][kUntaggedColumn];
      ++r.untagged_count;
      continue;
    }
    ++r.confusion[row][index_of(*p.tagged)];
    const int tagged_rank = salt::treatment_priority(*p.tagged).rank;
    const int truth_rank = salt::treatment_priority(p.truth).rank;
    if (tagged_rank < truth_rank) {
      ++r.overtriage_count;
    } else if (tagged_rank > truth_rank) {
      ++r.undertriage_count;
    } else {
      ++r.correct_count;
    }
  }
  const auto total = r.per_patient.size();
  r.accuracy = total == 0 ? 0.0 : static_cast<double>(r.correct_count) / static_cast<double>(total);
  return r;
}

ordered_json report_to_json(const TriageReport& r) {
  ordered_json confusion = ordered_json::array();
  for (const auto& row : r.confusion) confusion.push_back(row);
  ordered_json columns = ordered_json::array();
  for (auto c : kAllCategories) columns.push_back(to_string(c));
  columns.push_back("untagged");
  ordered_json rows = ordered_json::array();
  for (auto c : kAllCategories) rows.push_back(to_string(c));

  ordered_json patients = ordered_json::object();
  for (const auto& [id, p] : r.per_patient) {
    ordered_json history = ordered_json::array();
    for (const auto& t : p.history) {
      history.push_back(
          {{"category", to_string(t.category)}, {"responder_id", t.responder_id}, {"ts_ms", t.ts_ms}});
    }
    ordered_json j;
    j["truth"] = to_string(p.truth);
    j["tagged"] = p.tagged ? ordered_json(to_string(*p.tagged)) : ordered_json("untagged");
    j["time_in_task_ms"] = p.time_in_task_ms ? ordered_json(*p.time_in_task_ms) : ordered_json(nullptr);
    j["retag_count"] = p.history.empty() ? 0 : p.history.size() - 1;
    j["history"] = std::move(history);
    patients[id] = std::move(j);
  }

  ordered_json j;
  j["accuracy"] = r.accuracy;
  j["correct_count"] = r.correct_count;
  j["overtriage_count"] = r.overtriage_count;
  j["undertriage_count"] = r.undertriage_count;
  j["untagged_count"] = r.untagged_count;
  j["confusion_rows"] = std::move(rows);
  j["confusion_columns"] = std::move(columns);
  j["confusion"] = std::move(confusion);
  j["per_patient"] = std::move(patients);
  j["session_duration_ms"] = r.session_duration_ms;
  return j;
}

std::string serialize_report(const TriageReport& r) { return report_to_json(r).dump(2) + "\n"; }

}  // namespace mcisim
