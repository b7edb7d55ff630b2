#pragma once
// Domain types for master-case-list entries: triage categories, vitals,
// observations, assessment flags, and actor scripts.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcisim {

enum class TriageCategory { Black, Grey, Red, Yellow, Green };

inline constexpr std::array<TriageCategory, 5> kAllCategories = {
    TriageCategory::Black, TriageCategory::Grey, TriageCategory::Red,
    TriageCategory::Yellow, TriageCategory::Green};

inline constexpr std::size_t index_of(TriageCategory c) {
  return static_cast<std::size_t>(c);
}

std::string_view to_string(TriageCategory c);
std::optional<TriageCategory> parse_category(std::string_view s);

enum class Race { White, Black, Asian, Hispanic, Other };
enum class Gender { Woman, Man };

inline constexpr std::array<Race, 5> kAllRaces = {Race::White, Race::Black, Race::Asian,
                                                  Race::Hispanic, Race::Other};
inline constexpr std::array<Gender, 2> kAllGenders = {Gender::Woman, Gender::Man};

std::string_view to_string(Race r);
std::string_view to_string(Gender g);
std::optional<Race> parse_race(std::string_view s);
std::optional<Gender> parse_gender(std::string_view s);

struct Demographics {
  Race race = Race::White;
  Gender gender = Gender::Woman;

  auto operator<=>(const Demographics&) const = default;
};

// The four combinations every virtual scenario must contain.
inline constexpr std::array<Demographics, 4> kQuotaDemographics = {
    Demographics{Race::White, Gender::Woman}, Demographics{Race::Black, Gender::Woman},
    Demographics{Race::Black, Gender::Man}, Demographics{Race::White, Gender::Man}};

struct Vitals {
  int hr_bpm = 0;       // 0..250
  int rr_bpm = 0;       // 0..60
  int bp_sys_mmhg = 0;  // 0..260
  int bp_dia_mmhg = 0;  // 0..160

  bool operator==(const Vitals&) const = default;
};

struct SortObservation {
  bool can_walk = false;
  bool responds_to_commands = false;

  bool operator==(const SortObservation&) const = default;
};

struct AssessmentFlags {
  bool breathing_after_airway = false;
  bool obeys_commands_or_purposeful = false;
  bool has_peripheral_pulse = false;
  bool in_respiratory_distress = false;
  bool major_hemorrhage_uncontrolled = false;
  bool likely_survivable_given_resources = false;
  bool minor_injuries_only = false;

  bool operator==(const AssessmentFlags&) const = default;
};

// Flags computable from measured numbers; everything else stays unknown.
struct PartialFlags {
  std::optional<bool> breathing_after_airway;
  std::optional<bool> obeys_commands_or_purposeful;
  std::optional<bool> has_peripheral_pulse;
  std::optional<bool> in_respiratory_distress;
  std::optional<bool> major_hemorrhage_uncontrolled;
  std::optional<bool> likely_survivable_given_resources;
  std::optional<bool> minor_injuries_only;
};

enum class MovementLoop { Still, HoldingArm, Rocking, Waving, Writhing };

std::string_view to_string(MovementLoop m);
std::optional<MovementLoop> parse_movement(std::string_view s);

struct Script {
  MovementLoop movement_loop = MovementLoop::Still;
  std::vector<std::string> voice_lines;
  bool gesture_on_wave_query = false;
  bool gesture_on_hurt_query = false;

  bool operator==(const Script&) const = default;
};

struct PatientCase {
  std::string case_id;
  Vitals vitals;
  SortObservation sort_obs;
  AssessmentFlags flags;
  TriageCategory ground_truth = TriageCategory::Black;
  std::string injuries_text;
  bool moulage = false;
  Script script;

  bool operator==(const PatientCase&) const = default;
};

struct MasterCaseList {
  std::vector<PatientCase> cases;
  std::string version;

  const PatientCase* find(std::string_view case_id) const;

  bool operator==(const MasterCaseList&) const = default;
};

}  // namespace mcisim
