#include "ecodrive/controller_kind.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <string>

namespace ecodrive {

std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kVanillaIdm: return "V-IDM";
    case ControllerKind::kNoisyIdm: return "N-IDM";
    case ControllerKind::kMixedIdm: return "M-IDM";
    case ControllerKind::kEcoGlide: return "EcoGlide";
    case ControllerKind::kPolicy: return "Policy";
  }
  return "?";
}

std::optional<ControllerKind> parse_controller_kind(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.erase(std::remove(out.begin(), out.end(), '-'), out.end());
    out.erase(std::remove(out.begin(), out.end(), '_'), out.end());
    return out;
  };
  const std::string key = lower(name);
  constexpr std::array kinds{ControllerKind::kVanillaIdm, ControllerKind::kNoisyIdm,
                             ControllerKind::kMixedIdm, ControllerKind::kEcoGlide,
                             ControllerKind::kPolicy};
  for (auto k : kinds) {
    if (lower(to_string(k)) == key) return k;
  }
  if (key == "drl" || key == "rl") return ControllerKind::kPolicy;
  return std::nullopt;
}

}  // namespace ecodrive
