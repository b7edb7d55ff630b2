// mcisim: operator entry points for the MCI triage training server.
//
// Exit codes: 0 success, 2 input/validation error, 3 integrity/divergence.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mcisim/case_list.hpp"
#include "mcisim/error.hpp"
#include "mcisim/hub.hpp"
#include "mcisim/net_server.hpp"
#include "mcisim/scenario.hpp"
#include "mcisim/telemetry.hpp"

using namespace mcisim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitIntegrity = 3;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Integrity:
    case ErrorCode::Divergence:
      return kExitIntegrity;
    default:
      return kExitInput;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Input, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::Input, "cannot write " + path);
}

MasterCaseList cases_from(const std::string& path) {
  return path.empty() ? default_case_list() : load_case_list(path);
}

void print_violations(const ValidationReport& report, std::ostream& os) {
  for (const auto& v : report.violations) {
    os << "  [" << v.rule << "]";
    if (!v.case_id.empty()) os << " " << v.case_id;
    os << ": " << v.message << "\n";
  }
}

// Validated list or exit code 2 with the report on stderr.
std::optional<MasterCaseList> checked_cases(const std::string& path) {
  MasterCaseList list = cases_from(path);
  const auto report = validate_case_list(list);
  if (!report.valid()) {
    std::cerr << "case list invalid (" << report.violations.size() << " violations):\n";
    print_violations(report, std::cerr);
    return std::nullopt;
  }
  return list;
}

std::string summary_line(const Scenario& s, const MasterCaseList& list) {
  std::array<int, 5> hist{};
  bool all_hidden = true, all_visible = true;
  for (const auto& inst : s.instances) {
    if (const auto* c = list.find(inst.case_id)) ++hist[index_of(c->ground_truth)];
    all_hidden = all_hidden && !inst.visible;
    all_visible = all_visible && inst.visible;
  }
  std::ostringstream os;
  os << s.scenario_id << ": " << s.instances.size() << " patients (";
  for (std::size_t i = 0; i < kAllCategories.size(); ++i) {
    os << (i ? " " : "") << to_string(kAllCategories[i]) << "=" << hist[i];
  }
  os << ")";
  if (s.mode == ScenarioMode::Virtual) {
    os << ", demographic quota " << (satisfies_demographic_quota(s) ? "met" : "NOT met");
  }
  os << ", visible: " << (all_hidden ? "false" : all_visible ? "true" : "mixed");
  return os.str();
}

std::atomic<NetServer*> g_server{nullptr};

void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(std::optional<std::uint16_t> port_flag, const std::string& case_list,
              const std::string& log_dir) {
  auto list = checked_cases(case_list);
  if (!list) return kExitInput;

  std::uint16_t port = kDefaultPort;
  if (port_flag) {
    port = *port_flag;
  } else if (const char* env = std::getenv(kPortEnvVar); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0 || v > 65535) {
      std::cerr << kPortEnvVar << " must be a port number, got '" << env << "'\n";
      return kExitInput;
    }
    port = static_cast<std::uint16_t>(v);
  }

  HubConfig cfg;
  cfg.cases = std::move(*list);
  if (!log_dir.empty()) cfg.log_dir = log_dir;
  const auto t0 = std::chrono::steady_clock::now();
  Hub hub(std::move(cfg), [t0] {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count());
  });

  NetServerOptions opts;
  opts.port = port;
  NetServer server(hub, opts);
  std::cout << "listening on :" << server.port() << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.run();
  g_server = nullptr;
  return kExitOk;
}

std::optional<Area> parse_area(const std::string& text) {
  // "WxD" or "X0,Y0,WxD"
  Area a;
  std::string dims = text;
  if (auto comma = text.rfind(','); comma != std::string::npos) {
    std::istringstream origin(text.substr(0, comma));
    char sep = 0;
    if (!(origin >> a.x0 >> sep >> a.y0) || sep != ',') return std::nullopt;
    dims = text.substr(comma + 1);
  }
  std::istringstream d(dims);
  char x = 0;
  if (!(d >> a.width >> x >> a.depth) || (x != 'x' && x != 'X') || !d.eof()) return std::nullopt;
  return a;
}

int cmd_gen(const std::string& mode, std::uint64_t seed, const std::string& out,
            const std::string& layout, const std::string& area_text, const std::string& briefs,
            const std::string& case_list) {
  auto list = checked_cases(case_list);
  if (!list) return kExitInput;

  Scenario s;
  if (mode == "virtual") {
    if (!layout.empty()) throw Error(ErrorCode::Input, "--layout applies to actor mode only");
    Area area = kDefaultVirtualArea;
    if (!area_text.empty()) {
      auto parsed = parse_area(area_text);
      if (!parsed) throw Error(ErrorCode::Input, "--area must look like 10x10 or 0,0,10x10");
      area = *parsed;
    }
    s = generate_virtual_scenario(*list, seed, area);
  } else {
    if (!area_text.empty()) throw Error(ErrorCode::Input, "--area applies to virtual mode only");
    std::optional<std::vector<Pose>> poses;
    if (!layout.empty()) poses = parse_layout(read_file(layout));
    s = generate_actor_scenario(*list, seed, poses);
  }
  save_scenario(s, out);
  if (!briefs.empty()) write_file(briefs, actor_briefs(s, *list));
  std::cout << summary_line(s, *list) << "\n";
  return kExitOk;
}

int cmd_validate(const std::string& path) {
  const auto list = load_case_list(path);
  const auto report = validate_case_list(list);
  if (report.valid()) {
    std::cout << path << ": ok (" << list.cases.size() << " cases, version " << list.version
              << ")\n";
    return kExitOk;
  }
  std::cout << path << ": " << report.violations.size() << " violations\n";
  print_violations(report, std::cout);
  return kExitInput;
}

struct Loaded {
  MasterCaseList cases;
  Scenario scenario;
  ParsedLog log;
};

Loaded load_inputs(const std::string& log_path, const std::string& scenario_path,
                   const std::string& case_list) {
  Loaded in;
  in.cases = cases_from(case_list);
  auto loaded = load_scenario(scenario_path, &in.cases);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  in.scenario = std::move(loaded.scenario);
  in.log = load_log(log_path);
  return in;
}

int cmd_replay(const std::string& log_path, const std::string& scenario_path,
               const std::string& case_list) {
  const auto in = load_inputs(log_path, scenario_path, case_list);
  try {
    replay(in.log, in.scenario, in.cases);
  } catch (const DivergenceError& e) {
    std::cout << "divergence at seq " << e.seq() << "\n";
    std::cerr << e.what() << "\n";
    return kExitIntegrity;
  }
  std::cout << "identical (" << in.log.events.size() << " events)\n";
  return kExitOk;
}

int cmd_report(const std::string& log_path, const std::string& scenario_path,
               const std::string& out, const std::string& case_list) {
  const auto in = load_inputs(log_path, scenario_path, case_list);
  const auto record = replay(in.log, in.scenario, in.cases);
  const auto report = score(record, in.scenario, in.cases);
  if (!out.empty()) write_file(out, serialize_report(report));
  std::printf("accuracy %.2f, overtriage %d, undertriage %d, untagged %d\n", report.accuracy,
              report.overtriage_count, report.undertriage_count, report.untagged_count);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCI triage training server and tools"};
  app.require_subcommand(1);

  std::optional<std::uint16_t> port;
  std::string case_list, log_dir;
  auto* serve = app.add_subcommand("serve", "Run the session server");
  serve->add_option("--port", port, "TCP port (default 7440, or $MCI_SIM_PORT)");
  serve->add_option("--case-list", case_list, "Master case list JSON (default: built in)")
      ->check(CLI::ExistingFile);
  serve->add_option("--log-dir", log_dir, "Directory for per-session JSONL logs");

  std::string mode = "virtual", out, layout, area, briefs;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("gen", "Generate a scenario file");
  gen->add_option("--mode", mode)->check(CLI::IsMember({"virtual", "actor"}));
  gen->add_option("--seed", seed)->required();
  gen->add_option("--out", out)->required();
  gen->add_option("--layout", layout, "Actor mode: JSON array of 20 poses")
      ->check(CLI::ExistingFile);
  gen->add_option("--area", area, "Virtual mode floor area, WxD or X0,Y0,WxD metres");
  gen->add_option("--briefs", briefs, "Also write printable actor briefs here");
  gen->add_option("--case-list", case_list)->check(CLI::ExistingFile);

  std::string path;
  auto* validate = app.add_subcommand("validate", "Check a master case list");
  validate->add_option("path", path)->required()->check(CLI::ExistingFile);

  std::string log, scenario;
  auto* rep = app.add_subcommand("replay", "Re-run a session log and compare");
  rep->add_option("log", log)->required()->check(CLI::ExistingFile);
  rep->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
  rep->add_option("--case-list", case_list)->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Score a session log");
  report->add_option("log", log)->required()->check(CLI::ExistingFile);
  report->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
  report->add_option("--out", out);
  report->add_option("--case-list", case_list)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*serve) return cmd_serve(port, case_list, log_dir);
    if (*gen) return cmd_gen(mode, seed, out, layout, area, briefs, case_list);
    if (*validate) return cmd_validate(path);
    if (*rep) return cmd_replay(log, scenario, case_list);
    if (*report) return cmd_report(log, scenario, out, case_list);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
