#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dip {

enum class Action { kLocomotion = 0, kSit = 1, kLie = 2 };

inline constexpr int kActionCount = 3;

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::kLocomotion: return "locomotion";
    case Action::kSit: return "sit";
    case Action::kLie: return "lie";
  }
  return "locomotion";
}

inline Action action_from_string(std::string_view s) {
  if (s == "locomotion" || s == "walk") return Action::kLocomotion;
  if (s == "sit") return Action::kSit;
  if (s == "lie") return Action::kLie;
  throw std::invalid_argument("unknown action '" + std::string(s) + "'");
}

}  // namespace dip
