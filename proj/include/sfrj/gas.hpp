// Perfect-gas closure and closed-form compressible-flow relations.
//
// Everything here is a pure function of its arguments so the relations can
// double as independent oracles for the finite-volume solver.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace sfrj {

/// Calorically perfect gas. Defaults to standard air.
struct GasModel {
  double gamma = 1.4;
  double R = 287.0;

  GasModel() = default;
  GasModel(double gamma_, double R_) : gamma(gamma_), R(R_) { validate(); }

  double cp() const { return gamma * R / (gamma - 1.0); }
  double cv() const { return R / (gamma - 1.0); }
  double sound_speed(double T) const { return std::sqrt(gamma * R * T); }

  void validate() const {
    if (!(gamma > 1.0)) throw std::invalid_argument("GasModel: gamma must exceed 1");
    if (!(R > 0.0)) throw std::invalid_argument("GasModel: R must be positive");
  }
};

/// Primitive description of one station. Build through `from_rho_u_p` or
/// `from_u_p_T` so that T and M stay consistent with the gas model.
struct FlowState {
  double rho = 0.0;
  double u = 0.0;
  double p = 0.0;
  double T = 0.0;
  double M = 0.0;

  static FlowState from_rho_u_p(double rho, double u, double p, const GasModel& gas) {
    if (!(rho > 0.0) || !(p > 0.0))
      throw std::domain_error("FlowState: density and pressure must be positive");
    FlowState s;
    s.rho = rho;
    s.u = u;
    s.p = p;
    s.T = p / (rho * gas.R);
    s.M = u / gas.sound_speed(s.T);
    return s;
  }

  static FlowState from_u_p_T(double u, double p, double T, const GasModel& gas) {
    if (!(T > 0.0) || !(p > 0.0))
      throw std::domain_error("FlowState: temperature and pressure must be positive");
    return from_rho_u_p(p / (gas.R * T), u, p, gas);
  }

  double total_temperature(const GasModel& gas) const {
    return T * (1.0 + 0.5 * (gas.gamma - 1.0) * M * M);
  }
  double total_pressure(const GasModel& gas) const {
    const double g = gas.gamma;
    return p * std::pow(1.0 + 0.5 * (g - 1.0) * M * M, g / (g - 1.0));
  }
  double mass_flux() const { return rho * u; }
};

struct IsentropicRatios {
  double p_over_pt = 1.0;
  double T_over_Tt = 1.0;
  double A_over_Astar = 1.0;
};

enum class MachBranch { subsonic, supersonic };

/// Root finder failure; carries the bracket state at exit.
class RootFindError : public std::runtime_error {
 public:
  RootFindError(const std::string& what, double lo, double hi, double residual)
      : std::runtime_error(what), lo_(lo), hi_(hi), residual_(residual) {}
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double residual() const { return residual_; }

 private:
  double lo_, hi_, residual_;
};

/// p = (gamma - 1) rho (E - u^2 / 2). A non-positive result marks an
/// unphysical state; callers decide whether to reject.
inline double close_pressure(double rho, double E, double u, const GasModel& gas) {
  if (!(rho > 0.0)) throw std::domain_error("close_pressure: density must be positive");
  return (gas.gamma - 1.0) * rho * (E - 0.5 * u * u);
}

/// Total energy per unit mass for a given (rho, u, p).
inline double total_energy(double rho, double u, double p, const GasModel& gas) {
  return p / ((gas.gamma - 1.0) * rho) + 0.5 * u * u;
}

inline double area_mach_ratio(double M, const GasModel& gas) {
  const double g = gas.gamma;
  const double base = (2.0 / (g + 1.0)) * (1.0 + 0.5 * (g - 1.0) * M * M);
  return std::pow(base, 0.5 * (g + 1.0) / (g - 1.0)) / M;
}

inline IsentropicRatios isentropic_ratios(double M, const GasModel& gas) {
  if (!(M > 0.0)) throw std::domain_error("isentropic_ratios: Mach must be positive");
  const double g = gas.gamma;
  const double t = 1.0 + 0.5 * (g - 1.0) * M * M;
  IsentropicRatios r;
  r.T_over_Tt = 1.0 / t;
  r.p_over_pt = std::pow(t, -g / (g - 1.0));
  r.A_over_Astar = area_mach_ratio(M, gas);
  return r;
}

/// Inverse of the area-Mach relation on the requested branch by bracketed
/// bisection: subsonic in (0, 1], supersonic in [1, 50].
inline double mach_from_area_ratio(double A_over_Astar, MachBranch branch,
                                   const GasModel& gas) {
  if (!(A_over_Astar >= 1.0))
    throw std::domain_error("mach_from_area_ratio: A/A* must be >= 1");
  if (A_over_Astar == 1.0) return 1.0;

  // f(M) = A/A*(M) - target is decreasing on the subsonic branch and
  // increasing on the supersonic one.
  const bool sub = branch == MachBranch::subsonic;
  double lo = sub ? 1e-12 : 1.0;
  double hi = sub ? 1.0 : 50.0;
  auto f = [&](double M) { return area_mach_ratio(M, gas) - A_over_Astar; };
  const double f_far = sub ? f(lo) : f(hi);
  if (!(f_far >= 0.0))
    throw RootFindError("mach_from_area_ratio: target outside branch bracket", lo, hi, f_far);

  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    // Move the end that keeps the root bracketed.
    if ((fm > 0.0) == sub)
      lo = mid;
    else
      hi = mid;
  }
  const double M = 0.5 * (lo + hi);
  const double residual = std::abs(f(M)) / A_over_Astar;
  if (residual > 1e-10)
    throw RootFindError("mach_from_area_ratio: bisection did not converge", lo, hi, residual);
  return M;
}

/// Rayleigh-flow Tt/Tt*: unity at M = 1, below unity elsewhere.
inline double rayleigh_total_temperature_ratio(double M, const GasModel& gas) {
  if (!(M > 0.0))
    throw std::domain_error("rayleigh_total_temperature_ratio: Mach must be positive");
  const double g = gas.gamma;
  const double m2 = M * M;
  const double d = 1.0 + g * m2;
  return (g + 1.0) * m2 * (2.0 + (g - 1.0) * m2) / (d * d);
}

/// Rayleigh-flow p/p* for the same reference state.
inline double rayleigh_pressure_ratio(double M, const GasModel& gas) {
  return (1.0 + gas.gamma) / (1.0 + gas.gamma * M * M);
}

/// Inverse of the Rayleigh Tt/Tt* relation on the requested branch.
inline double mach_from_rayleigh_ratio(double Tt_over_Ttstar, MachBranch branch,
                                       const GasModel& gas) {
  if (!(Tt_over_Ttstar > 0.0) || Tt_over_Ttstar > 1.0)
    throw std::domain_error("mach_from_rayleigh_ratio: ratio must lie in (0, 1]");
  if (Tt_over_Ttstar == 1.0) return 1.0;
  const bool sub = branch == MachBranch::subsonic;
  double lo = sub ? 1e-12 : 1.0;
  double hi = sub ? 1.0 : 50.0;
  // Increasing on the subsonic branch, decreasing on the supersonic one.
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = rayleigh_total_temperature_ratio(mid, gas) - Tt_over_Ttstar;
    if ((fm < 0.0) == sub)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Heat per unit mass that drives a constant-area frictionless flow from the
/// given state to M = 1: q* = cp Tt (1 / (Tt/Tt*) - 1).
inline double heat_to_choke(const FlowState& state, const GasModel& gas) {
  const double M = std::abs(state.M);
  if (M == 0.0) throw std::domain_error("heat_to_choke: stagnant state");
  const double Tt = state.total_temperature(gas);
  return gas.cp() * Tt * (1.0 / rayleigh_total_temperature_ratio(M, gas) - 1.0);
}

/// Choking heat expressed per unit cross-section: q* times mass flux (W/m^2).
inline double heat_to_choke(const FlowState& state, double mdot_per_area, const GasModel& gas) {
  return heat_to_choke(state, gas) * mdot_per_area;
}

/// Normal-shock downstream Mach and total-pressure ratio for M1 > 1.
struct NormalShock {
  double M2 = 1.0;
  double pt2_over_pt1 = 1.0;
  double p2_over_p1 = 1.0;
};

inline NormalShock normal_shock(double M1, const GasModel& gas) {
  if (!(M1 >= 1.0)) throw std::domain_error("normal_shock: upstream Mach must be >= 1");
  const double g = gas.gamma;
  const double m2 = M1 * M1;
  NormalShock s;
  s.M2 = std::sqrt((1.0 + 0.5 * (g - 1.0) * m2) / (g * m2 - 0.5 * (g - 1.0)));
  s.p2_over_p1 = 1.0 + 2.0 * g / (g + 1.0) * (m2 - 1.0);
  const double a = std::pow((g + 1.0) * m2 / ((g - 1.0) * m2 + 2.0), g / (g - 1.0));
  const double b = std::pow((g + 1.0) / (2.0 * g * m2 - (g - 1.0)), 1.0 / (g - 1.0));
  s.pt2_over_pt1 = a * b;
  return s;
}

}  // namespace sfrj
