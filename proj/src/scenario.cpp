#include "mcisim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json_fields.hpp"
#include "mcisim/case_list.hpp"
#include "mcisim/digest.hpp"
#include "mcisim/error.hpp"
#include "mcisim/rng.hpp"
#include "mcisim/salt.hpp"

namespace mcisim {
namespace {

using detail::Fields;
using detail::format_error;
using nlohmann::json;
using nlohmann::ordered_json;

double snap(double v) { return std::round(v * 1000.0) / 1000.0 + 0.0; }

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", snap(v));
  return buf;
}

std::string instance_id_for(std::size_t index) { return "p" + std::to_string(index + 1); }

Demographics demographics_from_draw(std::uint64_t draw) {
  return {kAllRaces[draw / kAllGenders.size()], kAllGenders[draw % kAllGenders.size()]};
}

Posture posture_for(const PatientCase& c) {
  return salt::sort_group(c.sort_obs) == salt::SortGroup::Still ? Posture::Lying
                                                                : Posture::Standing;
}

void check_area(const Area& area) {
  if (!(area.width > 0.0) || !(area.depth > 0.0) || !std::isfinite(area.width) ||
      !std::isfinite(area.depth) || !std::isfinite(area.x0) || !std::isfinite(area.y0)) {
    throw Error(ErrorCode::Input, "placement area must have positive finite width and depth");
  }
}

// Rejection sampling: each instance gets up to kLayoutRetryBound candidates.
std::vector<Pose> sample_layout(Rng& rng, std::size_t count, const Area& area) {
  std::vector<Pose> placed;
  placed.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kLayoutRetryBound && !ok; ++attempt) {
      Pose p;
      p.x = rng.uniform(area.x0, area.x0 + area.width);
      p.y = rng.uniform(area.y0, area.y0 + area.depth);
      p.yaw_deg = rng.uniform(0.0, 360.0);
      p = p.quantized();
      if (p.yaw_deg >= 360.0) p.yaw_deg = 0.0;
      ok = std::all_of(placed.begin(), placed.end(),
                       [&](const Pose& q) { return distance(p, q) >= kMinSeparationM; });
      if (ok) placed.push_back(p);
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "cannot place " << count << " patients " << kMinSeparationM
          << " m apart in a " << area.width << " m x " << area.depth
          << " m area; use a larger area";
      throw Error(ErrorCode::Layout, msg.str());
    }
  }
  return placed;
}

PatientInstance& find_mut(Scenario& s, std::string_view instance_id) {
  for (auto& inst : s.instances) {
    if (inst.instance_id == instance_id) return inst;
  }
  throw Error(ErrorCode::NotFound, "unknown instance_id '" + std::string(instance_id) + "'");
}

Demographics parse_demographics(const json& j, const std::string& path) {
  Fields f(j, path);
  Demographics d;
  const auto race = f.get_string("race");
  const auto gender = f.get_string("gender");
  auto r = parse_race(race);
  if (!r) format_error(f.child("race"), "unknown race '" + race + "'");
  auto g = parse_gender(gender);
  if (!g) format_error(f.child("gender"), "unknown gender '" + gender + "'");
  d.race = *r;
  d.gender = *g;
  f.finish();
  return d;
}

Script parse_instance_script(const json& j, const std::string& path) {
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

}  // namespace

Pose Pose::quantized() const { return {snap(x), snap(y), snap(z), snap(yaw_deg)}; }

double distance(const Pose& a, const Pose& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

std::string_view to_string(Posture p) { return p == Posture::Lying ? "lying" : "standing"; }

std::string_view to_string(ScenarioMode m) {
  return m == ScenarioMode::Actor ? "actor" : "virtual";
}

const PatientInstance* Scenario::find(std::string_view instance_id) const {
  for (const auto& inst : instances) {
    if (inst.instance_id == instance_id) return &inst;
  }
  return nullptr;
}

Scenario generate_virtual_scenario(const MasterCaseList& list, std::uint64_t seed,
                                   const Area& area) {
  check_area(area);
  Rng rng(seed);

  // Draw order is fixed: category picks, then demographics, then poses.
  std::vector<const PatientCase*> picked;
  for (auto cat : kAllCategories) {
    std::vector<const PatientCase*> subset;
    for (const auto& c : list.cases) {
      if (c.ground_truth == cat) subset.push_back(&c);
    }
    if (subset.empty()) {
      throw Error(ErrorCode::Generation,
                  "case list has no " + std::string(to_string(cat)) + " cases");
    }
    picked.push_back(subset[rng.uniform_index(subset.size())]);
  }
  rng.shuffle(std::span(picked));

  std::array<Demographics, kVirtualPatientCount> demo{};
  std::array<Demographics, 4> quota = kQuotaDemographics;
  rng.shuffle(std::span(quota));
  std::copy(quota.begin(), quota.end(), demo.begin());
  demo[4] = demographics_from_draw(rng.uniform_index(kAllRaces.size() * kAllGenders.size()));

  const auto poses = sample_layout(rng, kVirtualPatientCount, area);

  Scenario s;
  s.scenario_id = "virtual-" + std::to_string(seed);
  s.mode = ScenarioMode::Virtual;
  s.seed = seed;
  s.case_list_version = list.version;
  s.time_limit_s = kTimeLimitS;
  s.required_responders = 1;
  for (std::size_t i = 0; i < kVirtualPatientCount; ++i) {
    PatientInstance inst;
    inst.instance_id = instance_id_for(i);
    inst.case_id = picked[i]->case_id;
    inst.demographics = demo[i];
    inst.pose = poses[i];
    inst.posture = posture_for(*picked[i]);
    inst.visible = true;
    s.instances.push_back(std::move(inst));
  }
  return s;
}

Scenario generate_actor_scenario(const MasterCaseList& list, std::uint64_t seed,
                                 const std::optional<std::vector<Pose>>& layout) {
  if (layout && layout->size() != list.cases.size()) {
    throw Error(ErrorCode::Input, "layout has " + std::to_string(layout->size()) +
                                      " poses, expected " + std::to_string(list.cases.size()));
  }
  Rng rng(seed);

  std::vector<const PatientCase*> order;
  for (const auto& c : list.cases) order.push_back(&c);
  rng.shuffle(std::span(order));

  std::vector<Demographics> demo;
  for (std::size_t i = 0; i < order.size(); ++i) {
    demo.push_back(demographics_from_draw(rng.uniform_index(kAllRaces.size() * kAllGenders.size())));
  }

  std::vector<Pose> poses;
  if (layout) {
    for (std::size_t i = 0; i < layout->size(); ++i) {
      const Pose p = (*layout)[i].quantized();
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
          !std::isfinite(p.yaw_deg) || p.z < 0.0) {
        throw Error(ErrorCode::Input, "layout pose " + std::to_string(i) + " is invalid");
      }
      poses.push_back(p);
    }
  } else {
    poses = sample_layout(rng, order.size(), kDefaultActorArea);
  }

  Scenario s;
  s.scenario_id = "actor-" + std::to_string(seed);
  s.mode = ScenarioMode::Actor;
  s.seed = seed;
  s.case_list_version = list.version;
  s.time_limit_s = kTimeLimitS;
  s.required_responders = 2;
  for (std::size_t i = 0; i < order.size(); ++i) {
    PatientInstance inst;
    inst.instance_id = instance_id_for(i);
    inst.case_id = order[i]->case_id;
    inst.demographics = demo[i];
    inst.pose = poses[i];
    inst.posture = posture_for(*order[i]);
    inst.visible = false;
    inst.script = order[i]->script;
    s.instances.push_back(std::move(inst));
  }
  return s;
}

Scenario place_patient(const Scenario& scenario, std::string_view instance_id, const Pose& pose) {
  Scenario out = scenario;
  find_mut(out, instance_id).pose = pose.quantized();
  return out;
}

Scenario set_visibility(const Scenario& scenario, std::string_view instance_id, bool visible) {
  Scenario out = scenario;
  find_mut(out, instance_id).visible = visible;
  return out;
}

bool satisfies_demographic_quota(const Scenario& scenario) {
  std::multiset<Demographics> have;
  for (const auto& inst : scenario.instances) have.insert(inst.demographics);
  for (const auto& q : kQuotaDemographics) {
    auto it = have.find(q);
    if (it == have.end()) return false;
    have.erase(it);
  }
  return true;
}

std::vector<std::string> check_scenario(const Scenario& s, const MasterCaseList& list) {
  std::vector<std::string> problems;
  std::set<std::string> ids;
  std::vector<const PatientCase*> cases;
  for (const auto& inst : s.instances) {
    if (!ids.insert(inst.instance_id).second) {
      problems.push_back("duplicate instance_id " + inst.instance_id);
    }
    const PatientCase* c = list.find(inst.case_id);
    if (!c) {
      problems.push_back(inst.instance_id + " references unknown case " + inst.case_id);
    } else {
      cases.push_back(c);
    }
  }
  if (s.time_limit_s != kTimeLimitS) {
    problems.push_back("time_limit_s must be " + std::to_string(kTimeLimitS));
  }

  if (s.mode == ScenarioMode::Virtual) {
    if (s.instances.size() != kVirtualPatientCount) {
      problems.push_back("virtual scenario needs exactly 5 instances");
    }
    if (s.required_responders != 1) problems.push_back("virtual scenario needs 1 responder");
    std::set<TriageCategory> cats;
    for (const auto* c : cases) cats.insert(c->ground_truth);
    if (cats.size() != kAllCategories.size() || cases.size() != kVirtualPatientCount) {
      problems.push_back("virtual scenario must cover all five categories exactly once");
    }
    if (!satisfies_demographic_quota(s)) {
      problems.push_back("virtual scenario misses the demographic quota");
    }
    for (const auto& inst : s.instances) {
      if (!inst.visible) problems.push_back(inst.instance_id + " must be visible in virtual mode");
    }
  } else {
    if (s.required_responders != 2) problems.push_back("actor scenario needs 2 responders");
    std::multiset<std::string> refs;
    for (const auto& inst : s.instances) refs.insert(inst.case_id);
    bool all_once = s.instances.size() == list.cases.size();
    for (const auto& c : list.cases) all_once = all_once && refs.count(c.case_id) == 1;
    if (!all_once) problems.push_back("actor scenario must reference every case exactly once");
    for (const auto& inst : s.instances) {
      if (inst.visible) problems.push_back(inst.instance_id + " must be invisible in actor mode");
    }
  }
  return problems;
}

ordered_json pose_to_json(const Pose& p) {
  return {{"x", fixed3(p.x)}, {"y", fixed3(p.y)}, {"z", fixed3(p.z)},
          {"yaw_deg", fixed3(p.yaw_deg)}};
}

Pose pose_from_json(const json& j, const std::string& path) {
  Fields f(j, path);
  Pose p;
  p.x = f.get_decimal("x");
  p.y = f.get_decimal("y");
  p.z = f.get_decimal("z");
  p.yaw_deg = f.get_decimal("yaw_deg");
  f.finish();
  if (p.z < 0.0) format_error(f.child("z"), "must be >= 0");
  return p;
}

ordered_json scenario_to_json(const Scenario& s) {
  ordered_json instances = ordered_json::array();
  for (const auto& inst : s.instances) {
    ordered_json j;
    j["instance_id"] = inst.instance_id;
    j["case_id"] = inst.case_id;
    j["demographics"] = {{"race", to_string(inst.demographics.race)},
                         {"gender", to_string(inst.demographics.gender)}};
    j["pose"] = pose_to_json(inst.pose);
    j["posture"] = to_string(inst.posture);
    j["visible"] = inst.visible;
    if (inst.script) j["script"] = script_to_json(*inst.script);
    instances.push_back(std::move(j));
  }
  ordered_json doc;
  doc["scenario_id"] = s.scenario_id;
  doc["mode"] = to_string(s.mode);
  doc["seed"] = s.seed;
  doc["case_list_version"] = s.case_list_version;
  doc["time_limit_s"] = s.time_limit_s;
  doc["required_responders"] = s.required_responders;
  doc["instances"] = std::move(instances);
  return doc;
}

std::string serialize_scenario(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

Scenario scenario_from_json(const json& doc) {
  Fields f(doc, "$");
  Scenario s;
  s.scenario_id = f.get_string("scenario_id");
  const auto mode = f.get_string("mode");
  if (mode == "virtual") {
    s.mode = ScenarioMode::Virtual;
  } else if (mode == "actor") {
    s.mode = ScenarioMode::Actor;
  } else {
    format_error(f.child("mode"), "expected 'virtual' or 'actor'");
  }
  s.seed = f.get_u64("seed");
  s.case_list_version = f.get_string("case_list_version");
  s.time_limit_s = static_cast<int>(f.get_int("time_limit_s", 1, 86400));
  s.required_responders = static_cast<int>(f.get_int("required_responders", 1, 16));
  const json& arr = f.get_array("instances");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "$.instances[" + std::to_string(i) + "]";
    Fields g(arr[i], path);
    PatientInstance inst;
    inst.instance_id = g.get_string("instance_id");
    if (!ids.insert(inst.instance_id).second) {
      format_error(g.child("instance_id"), "duplicate instance_id '" + inst.instance_id + "'");
    }
    inst.case_id = g.get_string("case_id");
    inst.demographics = parse_demographics(g.at("demographics"), g.child("demographics"));
    inst.pose = pose_from_json(g.at("pose"), g.child("pose"));
    const auto posture = g.get_string("posture");
    if (posture == "standing") {
      inst.posture = Posture::Standing;
    } else if (posture == "lying") {
      inst.posture = Posture::Lying;
    } else {
      format_error(g.child("posture"), "expected 'standing' or 'lying'");
    }
    inst.visible = g.get_bool("visible");
    if (g.contains("script")) inst.script = parse_instance_script(g.at("script"), g.child("script"));
    g.finish();
    s.instances.push_back(std::move(inst));
  }
  f.finish();
  return s;
}

LoadedScenario parse_scenario(std::string_view text, const MasterCaseList* bound) {
  LoadedScenario out;
  out.scenario = scenario_from_json(detail::parse_json_document(text, "scenario"));
  if (bound) {
    if (out.scenario.case_list_version != bound->version) {
      out.warnings.push_back("scenario was generated from case list version '" +
                             out.scenario.case_list_version + "', bound list is '" +
                             bound->version + "'");
    }
    for (std::size_t i = 0; i < out.scenario.instances.size(); ++i) {
      const auto& inst = out.scenario.instances[i];
      if (!bound->find(inst.case_id)) {
        throw Error(ErrorCode::Integrity, "$.instances[" + std::to_string(i) +
                                              "].case_id: unknown case '" + inst.case_id + "'");
      }
    }
  }
  return out;
}

LoadedScenario load_scenario(const std::filesystem::path& path, const MasterCaseList* bound) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Input, "cannot open scenario '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), bound);
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Input, "cannot write scenario '" + path.string() + "'");
  out << serialize_scenario(s);
  if (!out) throw Error(ErrorCode::Input, "failed writing scenario '" + path.string() + "'");
}

std::string scenario_sha256(const Scenario& s) { return sha256_hex(serialize_scenario(s)); }

std::vector<Pose> parse_layout(std::string_view text) {
  const json doc = detail::parse_json_document(text, "layout");
  const json* arr = &doc;
  if (doc.is_object()) {
    Fields f(doc, "$");
    arr = &f.get_array("poses");
    f.finish();
  }
  if (!arr->is_array()) format_error("$", "expected array of poses");
  std::vector<Pose> poses;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    poses.push_back(pose_from_json((*arr)[i], "$[" + std::to_string(i) + "]"));
  }
  return poses;
}

std::string actor_briefs(const Scenario& scenario, const MasterCaseList& list) {
  std::ostringstream out;
  for (const auto& inst : scenario.instances) {
    const PatientCase* c = list.find(inst.case_id);
    if (!c) {
      throw Error(ErrorCode::Integrity, "instance " + inst.instance_id +
                                            " references unknown case " + inst.case_id);
    }
    const Script& script = inst.script ? *inst.script : c->script;
    out << "=== Actor brief: " << inst.instance_id << " (" << c->case_id << ") ===\n";
    out << "Position: x=" << fixed3(inst.pose.x) << " y=" << fixed3(inst.pose.y)
        << " yaw=" << fixed3(inst.pose.yaw_deg) << " (" << to_string(inst.posture) << ")\n";
    out << "Injuries: " << c->injuries_text << (c->moulage ? " [moulage]" : "") << "\n";
    out << "Vitals to call out: HR " << c->vitals.hr_bpm << " bpm, RR " << c->vitals.rr_bpm
        << " /min, BP " << c->vitals.bp_sys_mmhg << "/" << c->vitals.bp_dia_mmhg << " mmHg\n";
    out << "Mobility: " << (c->sort_obs.can_walk ? "can walk" : "cannot walk") << ", "
        << (c->sort_obs.responds_to_commands ? "responds to commands"
                                             : "does not respond to commands")
        << "\n";
    out << "Movement: " << to_string(script.movement_loop) << "\n";
    out << "Voice lines:";
    if (script.voice_lines.empty()) out << " (none)";
    out << "\n";
    for (const auto& line : script.voice_lines) out << "  - \"" << line << "\"\n";
    out << "When asked 'can you wave': " << (script.gesture_on_wave_query ? "wave" : "no response")
        << "\n";
    out << "When asked 'show me where it hurts': "
        << (script.gesture_on_hurt_query ? "point to injury" : "no response") << "\n\n";
  }
  return out.str();
}

}  // namespace mcisim
