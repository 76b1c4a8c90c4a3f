// ISA troposphere (0 to 11 km).

#pragma once

#include <cmath>
#include <stdexcept>

namespace sfrj {

struct AtmoState {
  double h = 0.0;    // m
  double T = 0.0;    // K
  double p = 0.0;    // Pa
  double rho = 0.0;  // kg/m^3
};

namespace isa_constants {
inline constexpr double T0 = 288.15;
inline constexpr double p0 = 101325.0;
inline constexpr double lapse = 0.0065;
inline constexpr double g0 = 9.80665;
inline constexpr double R = 287.05287;  // ISA value, not the engine gas
inline constexpr double h_max = 11000.0;
}  // namespace isa_constants

inline AtmoState isa(double h) {
  using namespace isa_constants;
  if (!(h >= 0.0 && h <= h_max))
    throw std::domain_error("isa: altitude outside the modeled troposphere [0, 11000] m");
  AtmoState s;
  s.h = h;
  s.T = T0 - lapse * h;
  s.p = p0 * std::pow(s.T / T0, g0 / (R * lapse));
  s.rho = s.p / (R * s.T);
  return s;
}

}  // namespace sfrj
