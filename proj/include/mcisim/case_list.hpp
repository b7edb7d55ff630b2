#pragma once
// Master case list: file format, consistency validation, and the shipped
// default roster of twenty cases.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mcisim/types.hpp"

namespace mcisim {

inline constexpr std::size_t kCaseListLength = 20;

// Required roster histogram, indexed by TriageCategory.
inline constexpr std::array<int, 5> kCaseListHistogram = {3, 4, 5, 5, 3};

// Systolic pressure at or above which a peripheral (radial) pulse is present.
inline constexpr int kPeripheralPulseSysMmhg = 80;

struct Violation {
  std::string rule;
  std::string case_id;  // empty for list-level rules
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  bool has(std::string_view rule) const;
  bool has(std::string_view rule, std::string_view case_id) const;

  bool operator==(const ValidationReport&) const = default;
};

// Rule names reported by validate_case_list.
namespace rules {
inline constexpr std::string_view kLength = "length";
inline constexpr std::string_view kHistogram = "histogram";
inline constexpr std::string_view kUniqueCaseId = "unique_case_id";
inline constexpr std::string_view kBreathingVsRr = "breathing_vs_rr";
inline constexpr std::string_view kBpOrder = "bp_order";
inline constexpr std::string_view kGroundTruth = "ground_truth";
inline constexpr std::string_view kMinorInjuries = "minor_injuries";
inline constexpr std::string_view kPulseVsBp = "pulse_vs_bp";
inline constexpr std::string_view kObeysVsResponds = "obeys_vs_responds";
inline constexpr std::string_view kScriptWave = "script_wave";
}  // namespace rules

ValidationReport validate_case_list(const MasterCaseList& list);

PartialFlags derive_flags_from_vitals(const Vitals& vitals, const SortObservation& cognition);

// Throws Error{Format} with line or field-path context.
MasterCaseList parse_case_list(std::string_view text);
MasterCaseList load_case_list(const std::filesystem::path& path);

nlohmann::ordered_json case_list_to_json(const MasterCaseList& list);
nlohmann::ordered_json script_to_json(const Script& script);
std::string serialize_case_list(const MasterCaseList& list);

const MasterCaseList& default_case_list();
std::string_view default_case_list_json();

}  // namespace mcisim
