#pragma once
// Append-only session log (JSON lines), deterministic replay, and triage
// scoring.
//
// Log layout: line 0 is the header, every following line one SessionEvent in
// seq order. Seqs are assigned here, never by callers.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mcisim/events.hpp"
#include "mcisim/scenario.hpp"
#include "mcisim/session.hpp"

namespace mcisim {

inline constexpr int kLogFormatVersion = 1;

struct LogHeader {
  int format_version = kLogFormatVersion;
  std::string session_id;
  std::string scenario_id;
  std::string scenario_sha256;
  std::string case_list_version;
  std::vector<Participant> participants;

  bool operator==(const LogHeader&) const = default;
};

LogHeader make_header(std::string session_id, const Scenario& scenario,
                      std::vector<Participant> participants = {});

nlohmann::ordered_json header_to_json(const LogHeader& h);
LogHeader header_from_json(const nlohmann::json& j);

class EventLog {
 public:
  struct Appended {
    std::uint64_t seq = 0;
    std::optional<std::string> write_error;  // telemetry loss, never fatal
  };

  // In-memory only.
  explicit EventLog(LogHeader header);
  // Mirrors every line to sink; the header is written immediately.
  EventLog(LogHeader header, std::unique_ptr<std::ostream> sink);

  static EventLog open_file(LogHeader header, const std::filesystem::path& path);

  // Assigns the next seq. Throws Error{ClosedLog} once SessionEnd is logged.
  Appended record(SessionEvent event);

  const LogHeader& header() const { return header_; }
  const std::vector<SessionEvent>& events() const { return events_; }
  bool closed() const { return closed_; }
  std::uint64_t next_seq() const { return events_.size(); }
  std::uint64_t write_failures() const { return write_failures_; }

  std::string to_jsonl() const;

 private:
  std::optional<std::string> write_line(const std::string& line);

  LogHeader header_;
  std::vector<SessionEvent> events_;
  std::unique_ptr<std::ostream> sink_;
  bool closed_ = false;
  std::uint64_t write_failures_ = 0;
};

struct ParsedLog {
  LogHeader header;
  std::vector<SessionEvent> events;
};

// Throws Error{Format} naming the offending line.
ParsedLog parse_log(std::string_view text);
ParsedLog load_log(const std::filesystem::path& path);

struct SessionRecord {
  LogHeader header;
  SessionState final_state;
  std::vector<SessionEvent> events;
};

// Refeeds input-class events through a fresh Session and requires the
// engine-emitted events to regenerate byte-for-byte. Throws
// Error{Integrity} on header mismatch and DivergenceError at the first
// differing seq.
SessionRecord replay(const ParsedLog& log, const Scenario& scenario, const MasterCaseList& cases,
                     const SessionConfig& config = {});

struct PatientScore {
  TriageCategory truth = TriageCategory::Black;
  std::optional<TriageCategory> tagged;
  std::optional<std::uint64_t> time_in_task_ms;
  std::vector<TagRecord> history;  // every tag in log order; the last one counts
};

// Confusion columns: the five categories, then Untagged.
inline constexpr std::size_t kUntaggedColumn = 5;

struct TriageReport {
  double accuracy = 0.0;
  std::array<std::array<int, 6>, 5> confusion{};
  int correct_count = 0;
  int overtriage_count = 0;
  int undertriage_count = 0;
  int untagged_count = 0;
  std::map<std::string, PatientScore> per_patient;
  std::uint64_t session_duration_ms = 0;
};

TriageReport score(const SessionRecord& record, const Scenario& scenario,
                   const MasterCaseList& cases);

// Final tag ts minus the first ZoneEnter, VoiceQuery, or TagAssigned aimed at
// the patient; nullopt when never tagged.
std::optional<std::uint64_t> time_in_task(const SessionRecord& record,
                                          std::string_view instance_id);

nlohmann::ordered_json report_to_json(const TriageReport& report);
std::string serialize_report(const TriageReport& report);

}  // namespace mcisim
