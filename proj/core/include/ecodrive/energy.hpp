#pragma once

#include <array>

#include "ecodrive/dynamics.hpp"

namespace ecodrive {

// VT-CPFM constants for a gasoline passenger car. Power is in kW and the
// fuel rate in L/s.
struct EnergyParams {
  double alpha0 = 0.00078;
  double alpha1 = 0.000006;
  double alpha2 = 1.9556e-05;
  double mass_kg = 3152.0;
  double eta = 0.92;  // driveline efficiency
  double rho = 1.23;  // air density, kg/m^3
  double c0 = 1.75;   // rolling resistance constants
  double c1 = 0.033;
  double c2 = 4.575;
  double Ca = 0.98;  // altitude correction
  double Cd = 0.6;   // drag coefficient
  double Af = 3.28;  // frontal area, m^2
  double grade = 0.0;
};

void validate(const EnergyParams& p);

// CO2 emission rate in mg/s:
//   e0 + e1 v a + e2 v a^2 + e3 v + e4 v^2 + e5 v^3
// with v in m/s and a in m/s^2. The rate is zero whenever the traction
// surrogate a + k0 + k1 v + k2 v^2 is negative (coasting or braking) and is
// clamped at zero otherwise.
struct Co2Coeffs {
  std::array<double, 6> poly{1801.8, 100.398, 501.970, -203.019, 17.5216, 0.0669679};
  std::array<double, 3> surrogate{0.0754943, 5.44549e-4, 2.79191e-5};
};

// Vehicle resistance in N.
double resistance(double v, const EnergyParams& p);
// Tractive power in kW.
double power(double v, double a, const EnergyParams& p);
// Fuel rate in L/s; alpha0 whenever power is negative.
double fuel_rate(double v, double a, const EnergyParams& p);
// CO2 rate in mg/s.
double co2_rate(double v, double a, const Co2Coeffs& coeffs);

struct EnergyModel {
  EnergyParams fuel;
  Co2Coeffs co2;
};

// Rectangle-rule accumulation over one step at the state's current speed and
// last applied acceleration.
VehicleState accumulate(const VehicleState& state, double dt, const EnergyModel& model);

}  // namespace ecodrive
