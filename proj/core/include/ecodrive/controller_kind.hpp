#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ecodrive {

// Longitudinal controller driving a vehicle. Fixed for the vehicle's lifetime.
enum class ControllerKind {
  kVanillaIdm,  // V-IDM
  kNoisyIdm,    // N-IDM
  kMixedIdm,    // M-IDM
  kEcoGlide,
  kPolicy,
};

constexpr bool is_human(ControllerKind k) {
  return k == ControllerKind::kVanillaIdm || k == ControllerKind::kNoisyIdm ||
         k == ControllerKind::kMixedIdm;
}

constexpr bool is_cav(ControllerKind k) { return !is_human(k); }

std::string_view to_string(ControllerKind k);

// Accepts the display names ("V-IDM", "N-IDM", "M-IDM", "EcoGlide", "Policy")
// case-insensitively; returns nullopt for anything else.
std::optional<ControllerKind> parse_controller_kind(std::string_view name);

}  // namespace ecodrive
