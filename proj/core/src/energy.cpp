#include "ecodrive/energy.hpp"

#include <algorithm>
#include <cmath>

#include "ecodrive/errors.hpp"

namespace ecodrive {

namespace {
constexpr double kGravity = 9.8066;
}

void validate(const EnergyParams& p) {
  if (!(p.alpha0 > 0.0)) throw ConfigError("energy.alpha0", "must be > 0");
  if (!(p.mass_kg > 0.0)) throw ConfigError("energy.mass_kg", "must be > 0");
  if (!(p.eta > 0.0)) throw ConfigError("energy.eta", "must be > 0");
  if (!(p.rho > 0.0)) throw ConfigError("energy.rho", "must be > 0");
  if (!(p.Af > 0.0)) throw ConfigError("energy.Af", "must be > 0");
}

double resistance(double v, const EnergyParams& p) {
  const double rolling = kGravity * p.mass_kg * (p.c0 / 1000.0);
  return (p.rho / 25.92) * p.Cd * p.Ca * p.Af * v * v + rolling * p.c1 * v + rolling * p.c2 +
         kGravity * p.mass_kg * p.grade;
}

double power(double v, double a, const EnergyParams& p) {
  return ((resistance(v, p) + 1.04 * p.mass_kg * a) / (3600.0 * p.eta)) * v;
}

double fuel_rate(double v, double a, const EnergyParams& p) {
  const double P = power(v, a, p);
  if (P < 0.0) return p.alpha0;
  return p.alpha0 + p.alpha1 * P + p.alpha2 * P * P;
}

double co2_rate(double v, double a, const Co2Coeffs& c) {
  const auto& k = c.surrogate;
  if (a + k[0] + k[1] * v + k[2] * v * v < 0.0) return 0.0;
  const auto& e = c.poly;
  const double rate =
      e[0] + e[1] * v * a + e[2] * v * a * a + e[3] * v + e[4] * v * v + e[5] * v * v * v;
  return std::max(0.0, rate);
}

VehicleState accumulate(const VehicleState& state, double dt, const EnergyModel& model) {
  VehicleState next = state;
  if (dt == 0.0) return next;
  next.cumulative_fuel += fuel_rate(state.vel, state.accel, model.fuel) * dt;
  next.cumulative_co2 += co2_rate(state.vel, state.accel, model.co2) * dt / 1e6;
  return next;
}

}  // namespace ecodrive
