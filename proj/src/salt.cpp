#include "mcisim/salt.hpp"

#include <algorithm>
#include <set>

#include "mcisim/error.hpp"

namespace mcisim::salt {

std::string_view to_string(SortGroup g) {
  switch (g) {
    case SortGroup::Still: return "still";
    case SortGroup::WaveOnly: return "wave_only";
    case SortGroup::Walker: return "walker";
  }
  return "still";
}

SortGroup sort_group(const SortObservation& obs) {
  // A walker who cannot follow commands is assessed with the Still group.
  if (!obs.responds_to_commands) return SortGroup::Still;
  return obs.can_walk ? SortGroup::Walker : SortGroup::WaveOnly;
}

std::vector<SortEntry> sort_wave(
    const std::vector<std::pair<std::string, SortObservation>>& patients) {
  std::set<std::string_view> seen;
  std::vector<SortEntry> out;
  out.reserve(patients.size());
  for (const auto& [id, obs] : patients) {
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::Input, "duplicate instance_id '" + id + "'");
    }
    out.push_back({id, sort_group(obs)});
  }
  std::sort(out.begin(), out.end(), [](const SortEntry& a, const SortEntry& b) {
    if (a.group != b.group) return a.group < b.group;
    return a.instance_id < b.instance_id;
  });
  return out;
}

TriageCategory classify(const AssessmentFlags& f) {
  if (!f.breathing_after_airway) return TriageCategory::Black;
  const bool life_threat = !f.obeys_commands_or_purposeful || !f.has_peripheral_pulse ||
                           f.in_respiratory_distress || f.major_hemorrhage_uncontrolled;
  if (life_threat) {
    return f.likely_survivable_given_resources ? TriageCategory::Red : TriageCategory::Grey;
  }
  return f.minor_injuries_only ? TriageCategory::Green : TriageCategory::Yellow;
}

PriorityRank treatment_priority(TriageCategory c) {
  switch (c) {
    case TriageCategory::Red: return {1};
    case TriageCategory::Yellow: return {2};
    case TriageCategory::Grey: return {3};
    case TriageCategory::Green: return {4};
    case TriageCategory::Black: return {5};
  }
  return {5};
}

}  // namespace mcisim::salt
