#include "mcisim/case_list.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "json_fields.hpp"
#include "mcisim/error.hpp"
#include "mcisim/salt.hpp"

namespace mcisim {

// Defined in the generated default_cases.cpp (embedded data/cases.json).
extern const char* const kDefaultCaseListJson;

namespace {

using detail::Fields;
using detail::format_error;
using nlohmann::json;
using nlohmann::ordered_json;

Vitals parse_vitals(const json& j, const std::string& path) {
  Fields f(j, path);
  Vitals v;
  v.hr_bpm = static_cast<int>(f.get_int("hr_bpm", 0, 250));
  v.rr_bpm = static_cast<int>(f.get_int("rr_bpm", 0, 60));
  v.bp_sys_mmhg = static_cast<int>(f.get_int("bp_sys_mmhg", 0, 260));
  v.bp_dia_mmhg = static_cast<int>(f.get_int("bp_dia_mmhg", 0, 160));
  f.finish();
  return v;
}

SortObservation parse_sort(const json& j, const std::string& path) {
  Fields f(j, path);
  SortObservation s;
  s.can_walk = f.get_bool("can_walk");
  s.responds_to_commands = f.get_bool("responds_to_commands");
  f.finish();
  return s;
}

AssessmentFlags parse_flags(const json& j, const std::string& path) {
  Fields f(j, path);
  AssessmentFlags a;
  a.breathing_after_airway = f.get_bool("breathing_after_airway");
  a.obeys_commands_or_purposeful = f.get_bool("obeys_commands_or_purposeful");
  a.has_peripheral_pulse = f.get_bool("has_peripheral_pulse");
  a.in_respiratory_distress = f.get_bool("in_respiratory_distress");
  a.major_hemorrhage_uncontrolled = f.get_bool("major_hemorrhage_uncontrolled");
  a.likely_survivable_given_resources = f.get_bool("likely_survivable_given_resources");
  a.minor_injuries_only = f.get_bool("minor_injuries_only");
  f.finish();
  return a;
}

Script parse_script(const json& j, const std::string& path) {
  Fields f(j, path);
  Script s;
  const auto movement = f.get_string("movement_loop");
  auto m = parse_movement(movement);
  if (!m) format_error(f.child("movement_loop"), "unknown movement '" + movement + "'");
  s.movement_loop = *m;
  const json& lines = f.get_array("voice_lines");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!lines[i].is_string()) {
      format_error(f.child("voice_lines") + "[" + std::to_string(i) + "]", "expected string");
    }
    s.voice_lines.push_back(lines[i].get<std::string>());
  }
  s.gesture_on_wave_query = f.get_bool("gesture_on_wave_query");
  s.gesture_on_hurt_query = f.get_bool("gesture_on_hurt_query");
  f.finish();
  return s;
}

PatientCase parse_case(const json& j, const std::string& path) {
  Fields f(j, path);
  PatientCase c;
  c.case_id = f.get_string("case_id");
  c.vitals = parse_vitals(f.at("vitals"), f.child("vitals"));
  c.sort_obs = parse_sort(f.at("sort_obs"), f.child("sort_obs"));
  c.flags = parse_flags(f.at("flags"), f.child("flags"));
  const auto truth = f.get_string("ground_truth");
  auto cat = parse_category(truth);
  if (!cat) format_error(f.child("ground_truth"), "unknown category '" + truth + "'");
  c.ground_truth = *cat;
  c.injuries_text = f.get_string("injuries_text");
  c.moulage = f.get_bool("moulage");
  c.script = parse_script(f.at("script"), f.child("script"));
  f.finish();
  return c;
}

void add(ValidationReport& r, std::string_view rule, std::string case_id, std::string message) {
  r.violations.push_back({std::string(rule), std::move(case_id), std::move(message)});
}

}  // namespace

bool ValidationReport::has(std::string_view rule) const {
  for (const auto& v : violations) {
    if (v.rule == rule) return true;
  }
  return false;
}

bool ValidationReport::has(std::string_view rule, std::string_view case_id) const {
  for (const auto& v : violations) {
    if (v.rule == rule && v.case_id == case_id) return true;
  }
  return false;
}

ValidationReport validate_case_list(const MasterCaseList& list) {
  ValidationReport r;

  if (list.cases.size() != kCaseListLength) {
    add(r, rules::kLength, "",
        "expected " + std::to_string(kCaseListLength) + " cases, found " +
            std::to_string(list.cases.size()));
  }

  std::array<int, 5> histogram{};
  for (const auto& c : list.cases) ++histogram[index_of(c.ground_truth)];
  if (histogram != kCaseListHistogram) {
    std::ostringstream msg;
    msg << "category histogram";
    for (auto cat : kAllCategories) {
      msg << ' ' << to_string(cat) << '=' << histogram[index_of(cat)] << "/"
          << kCaseListHistogram[index_of(cat)];
    }
    add(r, rules::kHistogram, "", msg.str());
  }

  std::map<std::string, int> ids;
  for (const auto& c : list.cases) {
    if (++ids[c.case_id] == 2) add(r, rules::kUniqueCaseId, c.case_id, "duplicate case_id");
  }

  for (const auto& c : list.cases) {
    const auto& v = c.vitals;
    const auto& fl = c.flags;
    if ((v.rr_bpm > 0) != fl.breathing_after_airway) {
      add(r, rules::kBreathingVsRr, c.case_id,
          "rr_bpm=" + std::to_string(v.rr_bpm) + " but breathing_after_airway=" +
              (fl.breathing_after_airway ? "true" : "false"));
    }
    if (v.bp_dia_mmhg > v.bp_sys_mmhg) {
      add(r, rules::kBpOrder, c.case_id,
          "bp_dia_mmhg " + std::to_string(v.bp_dia_mmhg) + " exceeds bp_sys_mmhg " +
              std::to_string(v.bp_sys_mmhg));
    }
    const auto classified = salt::classify(fl);
    if (classified != c.ground_truth) {
      add(r, rules::kGroundTruth, c.case_id,
          "flags classify as " + std::string(to_string(classified)) + ", ground_truth is " +
              std::string(to_string(c.ground_truth)));
    }
    if (fl.minor_injuries_only &&
        (fl.in_respiratory_distress || fl.major_hemorrhage_uncontrolled)) {
      add(r, rules::kMinorInjuries, c.case_id,
          "minor_injuries_only with respiratory distress or uncontrolled hemorrhage");
    }
    const auto derived = derive_flags_from_vitals(v, c.sort_obs);
    if (fl.breathing_after_airway && *derived.has_peripheral_pulse != fl.has_peripheral_pulse) {
      add(r, rules::kPulseVsBp, c.case_id,
          "has_peripheral_pulse disagrees with bp_sys_mmhg=" + std::to_string(v.bp_sys_mmhg));
    }
    if (fl.breathing_after_airway &&
        *derived.obeys_commands_or_purposeful != fl.obeys_commands_or_purposeful) {
      add(r, rules::kObeysVsResponds, c.case_id,
          "obeys_commands_or_purposeful disagrees with sort_obs.responds_to_commands");
    }
    if (c.script.gesture_on_wave_query != c.sort_obs.responds_to_commands) {
      add(r, rules::kScriptWave, c.case_id,
          "script.gesture_on_wave_query disagrees with sort_obs.responds_to_commands");
    }
  }
  return r;
}

PartialFlags derive_flags_from_vitals(const Vitals& vitals, const SortObservation& cognition) {
  PartialFlags p;
  p.breathing_after_airway = vitals.rr_bpm > 0;
  p.has_peripheral_pulse = vitals.bp_sys_mmhg >= kPeripheralPulseSysMmhg;
  p.obeys_commands_or_purposeful = cognition.responds_to_commands;
  return p;
}

MasterCaseList parse_case_list(std::string_view text) {
  const json doc = detail::parse_json_document(text, "case list");
  Fields f(doc, "$");
  MasterCaseList list;
  list.version = f.get_string("version");
  const json& cases = f.get_array("cases");
  for (std::size_t i = 0; i < cases.size(); ++i) {
    list.cases.push_back(parse_case(cases[i], "$.cases[" + std::to_string(i) + "]"));
  }
  f.finish();
  return list;
}

MasterCaseList load_case_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Input, "cannot open case list '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_case_list(ss.str());
}

ordered_json script_to_json(const Script& s) {
  ordered_json j;
  j["movement_loop"] = to_string(s.movement_loop);
  j["voice_lines"] = s.voice_lines;
  j["gesture_on_wave_query"] = s.gesture_on_wave_query;
  j["gesture_on_hurt_query"] = s.gesture_on_hurt_query;
  return j;
}

ordered_json case_list_to_json(const MasterCaseList& list) {
  ordered_json cases = ordered_json::array();
  for (const auto& c : list.cases) {
    ordered_json j;
    j["case_id"] = c.case_id;
    j["vitals"] = {{"hr_bpm", c.vitals.hr_bpm},
                   {"rr_bpm", c.vitals.rr_bpm},
                   {"bp_sys_mmhg", c.vitals.bp_sys_mmhg},
                   {"bp_dia_mmhg", c.vitals.bp_dia_mmhg}};
    j["sort_obs"] = {{"can_walk", c.sort_obs.can_walk},
                     {"responds_to_commands", c.sort_obs.responds_to_commands}};
    const auto& f = c.flags;
    j["flags"] = {{"breathing_after_airway", f.breathing_after_airway},
                  {"obeys_commands_or_purposeful", f.obeys_commands_or_purposeful},
                  {"has_peripheral_pulse", f.has_peripheral_pulse},
                  {"in_respiratory_distress", f.in_respiratory_distress},
                  {"major_hemorrhage_uncontrolled", f.major_hemorrhage_uncontrolled},
                  {"likely_survivable_given_resources", f.likely_survivable_given_resources},
                  {"minor_injuries_only", f.minor_injuries_only}};
    j["ground_truth"] = to_string(c.ground_truth);
    j["injuries_text"] = c.injuries_text;
    j["moulage"] = c.moulage;
    j["script"] = script_to_json(c.script);
    cases.push_back(std::move(j));
  }
  ordered_json doc;
  doc["version"] = list.version;
  doc["cases"] = std::move(cases);
  return doc;
}

std::string serialize_case_list(const MasterCaseList& list) {
  return case_list_to_json(list).dump(2) + "\n";
}

std::string_view default_case_list_json() { return kDefaultCaseListJson; }

const MasterCaseList& default_case_list() {
  static const MasterCaseList list = parse_case_list(kDefaultCaseListJson);
  return list;
}

}  // namespace mcisim
