#include "mcisim/types.hpp"

namespace mcisim {
namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view s, const std::array<Enum, N>& values,
                               std::string_view (*name)(Enum)) {
  for (Enum v : values) {
    if (name(v) == s) return v;
  }
  return std::nullopt;
}

constexpr std::array<MovementLoop, 5> kAllMovements = {
    MovementLoop::Still, MovementLoop::HoldingArm, MovementLoop::Rocking, MovementLoop::Waving,
    MovementLoop::Writhing};

}  // namespace

std::string_view to_string(TriageCategory c) {
  switch (c) {
    case TriageCategory::Black: return "black";
    case TriageCategory::Grey: return "grey";
    case TriageCategory::Red: return "red";
    case TriageCategory::Yellow: return "yellow";
    case TriageCategory::Green: return "green";
  }
  return "black";
}

std::optional<TriageCategory> parse_category(std::string_view s) {
  return parse_enum<TriageCategory>(s, kAllCategories, &to_string);
}

std::string_view to_string(Race r) {
  switch (r) {
    case Race::White: return "white";
    case Race::Black: return "black";
    case Race::Asian: return "asian";
    case Race::Hispanic: return "hispanic";
    case Race::Other: return "other";
  }
  return "other";
}

std::string_view to_string(Gender g) { return g == Gender::Woman ? "woman" : "man"; }

std::optional<Race> parse_race(std::string_view s) {
  return parse_enum<Race>(s, kAllRaces, &to_string);
}

std::optional<Gender> parse_gender(std::string_view s) {
  return parse_enum<Gender>(s, kAllGenders, &to_string);
}

std::string_view to_string(MovementLoop m) {
  switch (m) {
    case MovementLoop::Still: return "still";
    case MovementLoop::HoldingArm: return "holding_arm";
    case MovementLoop::Rocking: return "rocking";
    case MovementLoop::Waving: return "waving";
    case MovementLoop::Writhing: return "writhing";
  }
  return "still";
}

std::optional<MovementLoop> parse_movement(std::string_view s) {
  return parse_enum<MovementLoop>(s, kAllMovements, &to_string);
}

const PatientCase* MasterCaseList::find(std::string_view case_id) const {
  for (const auto& c : cases) {
    if (c.case_id == case_id) return &c;
  }
  return nullptr;
}

}  // namespace mcisim
