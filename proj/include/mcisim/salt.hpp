#pragma once
// SALT two-wave triage: global sort (wave one), individual classification
// (wave two), and treatment priority.

#include <string>
#include <utility>
#include <vector>

#include "mcisim/types.hpp"

namespace mcisim::salt {

// Assessment order for wave one; Still patients are assessed first.
enum class SortGroup { Still, WaveOnly, Walker };

std::string_view to_string(SortGroup g);

struct SortEntry {
  std::string instance_id;
  SortGroup group;

  bool operator==(const SortEntry&) const = default;
};

SortGroup sort_group(const SortObservation& obs);

// Orders patients Still, WaveOnly, Walker; ties broken by instance_id.
// Throws Error{Input} on duplicate ids.
std::vector<SortEntry> sort_wave(
    const std::vector<std::pair<std::string, SortObservation>>& patients);

// Wave-two decision tree. Lifesaving interventions are assumed already
// applied, so breathing is judged after the airway has been opened.
TriageCategory classify(const AssessmentFlags& flags);

// 1 = treated/evacuated first: Red, Yellow, Grey, Green, Black.
struct PriorityRank {
  int rank = 0;

  auto operator<=>(const PriorityRank&) const = default;
};

PriorityRank treatment_priority(TriageCategory c);

}  // namespace mcisim::salt
