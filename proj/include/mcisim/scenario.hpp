#pragma once
// Scenario generation for the 5-patient virtual task and the 20-patient
// actor task, author-mode edits, and canonical scenario.json persistence.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mcisim/types.hpp"

namespace mcisim {

inline constexpr int kTimeLimitS = 600;
inline constexpr std::size_t kVirtualPatientCount = 5;
inline constexpr double kMinSeparationM = 1.5;
inline constexpr int kLayoutRetryBound = 10000;

// World frame: x/y span the floor, z is height (>= 0), yaw rotates about z.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw_deg = 0.0;

  bool operator==(const Pose&) const = default;

  // Snapped to the 1 mm / 0.001 degree grid used by scenario.json.
  Pose quantized() const;
};

double distance(const Pose& a, const Pose& b);

struct Area {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 10.0;
  double depth = 10.0;
};

inline constexpr Area kDefaultVirtualArea{0.0, 0.0, 10.0, 10.0};
inline constexpr Area kDefaultActorArea{0.0, 0.0, 30.0, 30.0};

enum class Posture { Standing, Lying };
enum class ScenarioMode { Virtual, Actor };

std::string_view to_string(Posture p);
std::string_view to_string(ScenarioMode m);

struct PatientInstance {
  std::string instance_id;
  std::string case_id;
  Demographics demographics;
  Pose pose;
  Posture posture = Posture::Standing;
  bool visible = true;
  std::optional<Script> script;  // carried in actor mode for briefs

  bool operator==(const PatientInstance&) const = default;
};

struct Scenario {
  std::string scenario_id;
  ScenarioMode mode = ScenarioMode::Virtual;
  std::uint64_t seed = 0;
  std::string case_list_version;
  std::vector<PatientInstance> instances;
  int time_limit_s = kTimeLimitS;
  int required_responders = 1;

  const PatientInstance* find(std::string_view instance_id) const;

  bool operator==(const Scenario&) const = default;
};

// Throws Error{Generation} when a category has no cases, Error{Layout} when
// placement cannot satisfy the separation within the retry bound, and
// Error{Input} for a degenerate area.
Scenario generate_virtual_scenario(const MasterCaseList& list, std::uint64_t seed,
                                   const Area& area = kDefaultVirtualArea);

// layout, when given, must hold exactly one pose per case (Error{Input}).
Scenario generate_actor_scenario(const MasterCaseList& list, std::uint64_t seed,
                                 const std::optional<std::vector<Pose>>& layout = std::nullopt);

// Pure updates; Error{NotFound} for an unknown instance.
Scenario place_patient(const Scenario& scenario, std::string_view instance_id, const Pose& pose);
Scenario set_visibility(const Scenario& scenario, std::string_view instance_id, bool visible);

// Mode invariants (counts, categories, quotas, visibility, time limit).
// Empty means the scenario is runnable.
std::vector<std::string> check_scenario(const Scenario& scenario, const MasterCaseList& list);

bool satisfies_demographic_quota(const Scenario& scenario);

nlohmann::ordered_json pose_to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::ordered_json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
std::string serialize_scenario(const Scenario& s);

struct LoadedScenario {
  Scenario scenario;
  std::vector<std::string> warnings;
};

// With a bound case list, unknown case_ids are Error{Integrity} and a version
// mismatch is reported as a warning.
LoadedScenario parse_scenario(std::string_view text, const MasterCaseList* bound = nullptr);
LoadedScenario load_scenario(const std::filesystem::path& path,
                             const MasterCaseList* bound = nullptr);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

// Lowercase hex SHA-256 of serialize_scenario(s).
std::string scenario_sha256(const Scenario& s);

// Layout file: a JSON array of poses (or {"poses": [...]}).
std::vector<Pose> parse_layout(std::string_view text);

// One printable brief per actor: vitals to call out, movement, voice lines.
std::string actor_briefs(const Scenario& scenario, const MasterCaseList& list);

}  // namespace mcisim
