// Quasi-one-dimensional finite-volume Euler solver with a wall heat source.
//
// Conserved variables per unit length: (rho A, rho u A, rho E A). Interface
// fluxes use the local Lax-Friedrichs (Rusanov) flux, optionally with MUSCL
// reconstruction of primitive variables and minmod limiting. Area variation
// enters the momentum equation as p dA/dx; heat enters the energy equation as
// q_wall times the heated perimeter.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfrj/gas.hpp"
#include "sfrj/geometry.hpp"

namespace sfrj {

using Conserved = std::array<double, 3>;

/// Per-cell conserved variables (rho A, rho u A, rho E A).
struct ConservativeState {
  std::vector<Conserved> cells;
  std::size_t size() const { return cells.size(); }
  bool operator==(const ConservativeState&) const = default;
};

enum class InletTreatment {
  // Ghost state is the prescribed state, whatever the interior does.
  fixed_state,
  // Prescribed state while the inlet channel is supersonic. Once a terminal
  // shock enters the channel (any channel cell subsonic) the intake is treated
  // as unstarted: the ghost carries the freestream total temperature and the
  // total pressure behind a normal shock at the freestream Mach number, with
  // static pressure taken from the first cell (clamped to subsonic values).
  supersonic_with_pitot_fallback,
  // Subsonic inflow: mass flux and total temperature of the prescribed state,
  // static pressure from the first cell.
  subsonic_mass_flow,
};

enum class OutletTreatment {
  // Zero-gradient while the exit is supersonic; prescribed back-pressure
  // once the exit Mach drops below one.
  supersonic_with_back_pressure,
  extrapolate,
  back_pressure,
};

struct BoundaryCondition {
  double inlet_velocity = 695.0;
  double inlet_pressure = 100000.0;
  double inlet_temperature = 300.0;
  InletTreatment inlet = InletTreatment::supersonic_with_pitot_fallback;
  OutletTreatment outlet = OutletTreatment::supersonic_with_back_pressure;
  // Defaults to the inlet static pressure.
  std::optional<double> back_pressure;
  // Recorded at construction by `make`.
  double inlet_mach = 0.0;

  static BoundaryCondition make(double u, double p, double T, const GasModel& gas = {}) {
    BoundaryCondition bc;
    bc.inlet_velocity = u;
    bc.inlet_pressure = p;
    bc.inlet_temperature = T;
    bc.validate(gas);
    return bc;
  }

  void validate(const GasModel& gas = {}) {
    if (!(inlet_velocity > 0.0) || !(inlet_pressure > 0.0) || !(inlet_temperature > 0.0))
      throw std::invalid_argument("BoundaryCondition: inlet values must be positive");
    if (back_pressure && !(*back_pressure > 0.0))
      throw std::invalid_argument("BoundaryCondition: back-pressure must be positive");
    inlet_mach = inlet_velocity / gas.sound_speed(inlet_temperature);
  }

  FlowState inlet_state(const GasModel& gas) const {
    return FlowState::from_u_p_T(inlet_velocity, inlet_pressure, inlet_temperature, gas);
  }
  double outlet_back_pressure() const { return back_pressure.value_or(inlet_pressure); }
};

struct SolverOptions {
  double cfl = 0.5;
  bool muscl = false;
};

/// Thrown when an update leaves a cell with non-positive density or pressure.
class StepRejected : public std::runtime_error {
 public:
  StepRejected(int cell, const std::string& what) : std::runtime_error(what), cell_(cell) {}
  int cell() const { return cell_; }

 private:
  int cell_;
};

struct ResidualSample {
  long iteration = 0;
  double rms_mass = 0.0;
  double rms_energy = 0.0;
  double mass_imbalance = 0.0;
};

/// Iteration budget diverged; carries everything recorded up to the failure.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<ResidualSample> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<ResidualSample>& history() const { return history_; }

 private:
  std::vector<ResidualSample> history_;
};

/// tau = mdot (v_out - v_in) + (p_out - p_in) A_out.
inline double compute_thrust(double mdot_out, double v_out, double v_in, double p_out,
                             double p_in, double area_out) {
  return mdot_out * (v_out - v_in) + (p_out - p_in) * area_out;
}

class QuasiOneDSolver {
 public:
  QuasiOneDSolver(Grid grid, GasModel gas, BoundaryCondition bc, SolverOptions opt = {})
      : grid_(std::move(grid)), gas_(gas), bc_(bc), opt_(opt) {
    gas_.validate();
    bc_.validate(gas_);
    const int n = grid_.n_cells;
    u_.cells.resize(n);
    prim_.resize(n);
    res_.resize(n);
    flux_.resize(n + 1);
    initialize_uniform(bc_.inlet_state(gas_));
  }

  const Grid& grid() const { return grid_; }
  const GasModel& gas() const { return gas_; }
  const BoundaryCondition& boundary() const { return bc_; }
  const SolverOptions& options() const { return opt_; }
  const ConservativeState& state() const { return u_; }
  long iterations() const { return iterations_; }

  void set_boundary(const BoundaryCondition& bc) {
    bc_ = bc;
    bc_.validate(gas_);
  }

  void set_state(const ConservativeState& s) {
    if (s.size() != u_.size()) throw std::invalid_argument("set_state: size mismatch");
    u_ = s;
    decode_all();
  }

  void initialize_uniform(const FlowState& s) {
    const double E = total_energy(s.rho, s.u, s.p, gas_);
    for (int i = 0; i < grid_.n_cells; ++i) {
      const double A = grid_.area_center[i];
      u_.cells[i] = {s.rho * A, s.rho * s.u * A, s.rho * E * A};
    }
    decode_all();
  }

  /// One explicit step with a global time step.
  void advance(double q_wall, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("advance: dt must be positive");
    compute_residual(q_wall);
    const double k = dt / grid_.dx;
    for (int i = 0; i < grid_.n_cells; ++i)
      for (int c = 0; c < 3; ++c) u_.cells[i][c] += k * res_[i][c];
    decode_all();
    ++iterations_;
  }

  /// Largest global time step allowed by the CFL number.
  double stable_time_step() const {
    double dt = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_.n_cells; ++i) {
      const auto& w = prim_[i];
      dt = std::min(dt, opt_.cfl * grid_.dx / (std::abs(w.u) + std::sqrt(gas_.gamma * w.p / w.rho)));
    }
    return dt;
  }

  /// One pseudo-time iteration with local time stepping. Returns the
  /// residual norms evaluated before the update.
  ResidualSample iterate(double q_wall) {
    compute_residual(q_wall);
    const double g = gas_.gamma;
    double sm = 0.0, se = 0.0;
    for (int i = 0; i < grid_.n_cells; ++i) {
      const auto& w = prim_[i];
      const double vol = grid_.volume(i);
      sm += (res_[i][0] / vol) * (res_[i][0] / vol);
      se += (res_[i][2] / vol) * (res_[i][2] / vol);
      const double dt = opt_.cfl * grid_.dx / (std::abs(w.u) + std::sqrt(g * w.p / w.rho));
      const double k = dt / grid_.dx;
      for (int c = 0; c < 3; ++c) u_.cells[i][c] += k * res_[i][c];
    }
    decode_all();
    ResidualSample r;
    r.iteration = iterations_++;
    r.rms_mass = std::sqrt(sm / grid_.n_cells);
    r.rms_energy = std::sqrt(se / grid_.n_cells);
    r.mass_imbalance = mass_imbalance();
    return r;
  }

  /// Face mass flows from the last residual evaluation.
  double inlet_mass_flow() const { return flux_.front()[0]; }
  double outlet_mass_flow() const { return flux_.back()[0]; }
  double mass_imbalance() const {
    const double in = inlet_mass_flow();
    return in != 0.0 ? std::abs(outlet_mass_flow() - in) / std::abs(in) : 0.0;
  }

  FlowState cell_state(int i) const {
    const auto& w = prim_[i];
    return FlowState::from_rho_u_p(w.rho, w.u, w.p, gas_);
  }

  std::vector<FlowState> field() const {
    std::vector<FlowState> f;
    f.reserve(grid_.n_cells);
    for (int i = 0; i < grid_.n_cells; ++i) f.push_back(cell_state(i));
    return f;
  }

  /// Thrust from the inlet and outlet planes, taken as the boundary cells.
  double thrust() const {
    const auto& in = prim_.front();
    const auto& out = prim_.back();
    const double a_out = grid_.area_face.back();
    return compute_thrust(out.rho * out.u * a_out, out.u, in.u, out.p, in.p, a_out);
  }

  /// Sum of rho E A dx over the cells.
  double total_energy_integral() const {
    double s = 0.0;
    for (const auto& c : u_.cells) s += c[2] * grid_.dx;
    return s;
  }
  double total_mass_integral() const {
    double s = 0.0;
    for (const auto& c : u_.cells) s += c[0] * grid_.dx;
    return s;
  }
  /// Flux entering minus flux leaving, per component, from the last residual.
  Conserved boundary_flux_balance() const {
    Conserved b{};
    for (int c = 0; c < 3; ++c) b[c] = flux_.front()[c] - flux_.back()[c];
    return b;
  }
  bool inlet_fallback_active() const { return inlet_fallback_; }
  bool outlet_fallback_active() const { return outlet_fallback_; }

 private:
  struct Prim {
    double rho, u, p;
  };

  Grid grid_;
  GasModel gas_;
  BoundaryCondition bc_;
  SolverOptions opt_;
  ConservativeState u_;
  std::vector<Prim> prim_;
  std::vector<Conserved> res_;
  std::vector<Conserved> flux_;
  long iterations_ = 0;
  bool inlet_fallback_ = false;
  bool outlet_fallback_ = false;

  void decode_all() {
    const double gm1 = gas_.gamma - 1.0;
    for (int i = 0; i < grid_.n_cells; ++i) {
      const double A = grid_.area_center[i];
      const auto& c = u_.cells[i];
      const double rho = c[0] / A;
      const double u = c[1] / c[0];
      const double p = gm1 * (c[2] / A - 0.5 * rho * u * u);
      if (!(rho > 0.0) || !(p > 0.0) || !std::isfinite(u))
        throw StepRejected(i, "non-positive density or pressure in cell " + std::to_string(i));
      prim_[i] = {rho, u, p};
    }
  }

  Prim inlet_ghost() {
    const auto fs = bc_.inlet_state(gas_);
    const Prim fixed{fs.rho, fs.u, fs.p};
    const double g = gas_.gamma;
    if (bc_.inlet == InletTreatment::fixed_state) {
      inlet_fallback_ = false;
      return fixed;
    }
    if (bc_.inlet == InletTreatment::subsonic_mass_flow) {
      inlet_fallback_ = false;
      // G R (Tt - u^2 / 2cp) = p u, positive root.
      const double G = fs.rho * fs.u, p = prim_.front().p;
      const double a = G * gas_.R / (2.0 * gas_.cp());
      const double c = G * gas_.R * fs.total_temperature(gas_);
      const double u = 2.0 * c / (p + std::sqrt(p * p + 4.0 * a * c));
      return {G / u, u, p};
    }
    const int n_check = std::max(1, grid_.inlet_cells);
    bool subsonic = false;
    for (int i = 0; i < n_check && !subsonic; ++i) {
      const auto& c = prim_[i];
      subsonic = c.u * c.u < g * c.p / c.rho;
    }
    inlet_fallback_ = subsonic;
    if (!subsonic) return fixed;

    double pt = fs.total_pressure(gas_);
    if (fs.M > 1.0) pt *= normal_shock(fs.M, gas_).pt2_over_pt1;
    const double p_crit = pt * std::pow(2.0 / (g + 1.0), g / (g - 1.0));
    const double Tt = fs.total_temperature(gas_);
    const double p = std::clamp(prim_.front().p, p_crit, pt * (1.0 - 1e-9));
    const double m2 = 2.0 / (g - 1.0) * (std::pow(pt / p, (g - 1.0) / g) - 1.0);
    const double T = Tt / (1.0 + 0.5 * (g - 1.0) * m2);
    return {p / (gas_.R * T), std::sqrt(m2 * g * gas_.R * T), p};
  }

  Prim outlet_ghost() {
    const auto& w = prim_.back();
    outlet_fallback_ = false;
    switch (bc_.outlet) {
      case OutletTreatment::extrapolate:
        return w;
      case OutletTreatment::back_pressure:
        return {w.rho, w.u, bc_.outlet_back_pressure()};
      case OutletTreatment::supersonic_with_back_pressure: {
        const double m = w.u / std::sqrt(gas_.gamma * w.p / w.rho);
        if (m >= 1.0) return w;
        outlet_fallback_ = true;
        return {w.rho, w.u, bc_.outlet_back_pressure()};
      }
    }
    return w;
  }

  Conserved rusanov(const Prim& l, const Prim& r) const {
    const double g = gas_.gamma;
    const double El = l.p / (g - 1.0) + 0.5 * l.rho * l.u * l.u;
    const double Er = r.p / (g - 1.0) + 0.5 * r.rho * r.u * r.u;
    const double cl = std::sqrt(g * l.p / l.rho);
    const double cr = std::sqrt(g * r.p / r.rho);
    const double s = std::max(std::abs(l.u) + cl, std::abs(r.u) + cr);
    const Conserved fl{l.rho * l.u, l.rho * l.u * l.u + l.p, (El + l.p) * l.u};
    const Conserved fr{r.rho * r.u, r.rho * r.u * r.u + r.p, (Er + r.p) * r.u};
    return {0.5 * (fl[0] + fr[0]) - 0.5 * s * (r.rho - l.rho),
            0.5 * (fl[1] + fr[1]) - 0.5 * s * (r.rho * r.u - l.rho * l.u),
            0.5 * (fl[2] + fr[2]) - 0.5 * s * (Er - El)};
  }

  static double minmod(double a, double b) {
    if (a * b <= 0.0) return 0.0;
    return a > 0.0 ? std::min(a, b) : std::max(a, b);
  }

  void compute_residual(double q_wall) {
    const int n = grid_.n_cells;
    const Prim gl = inlet_ghost();
    const Prim gr = outlet_ghost();

    if (!opt_.muscl) {
      flux_[0] = rusanov(gl, prim_[0]);
      for (int f = 1; f < n; ++f) flux_[f] = rusanov(prim_[f - 1], prim_[f]);
      flux_[n] = rusanov(prim_[n - 1], gr);
    } else {
      auto at = [&](int i) -> const Prim& { return i < 0 ? gl : (i >= n ? gr : prim_[i]); };
      auto slope = [&](int i) {
        const Prim& a = at(i - 1);
        const Prim& b = at(i);
        const Prim& c = at(i + 1);
        return Prim{minmod(b.rho - a.rho, c.rho - b.rho), minmod(b.u - a.u, c.u - b.u),
                    minmod(b.p - a.p, c.p - b.p)};
      };
      auto face_state = [&](int i, double side, const Prim& d) {
        const Prim& w = prim_[i];
        Prim s{w.rho + side * 0.5 * d.rho, w.u + side * 0.5 * d.u, w.p + side * 0.5 * d.p};
        if (!(s.rho > 0.0) || !(s.p > 0.0)) s = w;
        return s;
      };
      Prim d_prev = slope(0);
      flux_[0] = rusanov(gl, face_state(0, -1.0, d_prev));
      for (int f = 1; f < n; ++f) {
        const Prim d_next = slope(f);
        flux_[f] = rusanov(face_state(f - 1, 1.0, d_prev), face_state(f, -1.0, d_next));
        d_prev = d_next;
      }
      flux_[n] = rusanov(face_state(n - 1, 1.0, d_prev), gr);
    }

    for (int f = 0; f <= n; ++f)
      for (int c = 0; c < 3; ++c) flux_[f][c] *= grid_.area_face[f];

    for (int i = 0; i < n; ++i) {
      const double dA = grid_.area_face[i + 1] - grid_.area_face[i];
      res_[i][0] = flux_[i][0] - flux_[i + 1][0];
      res_[i][1] = flux_[i][1] - flux_[i + 1][1] + prim_[i].p * dA;
      res_[i][2] = flux_[i][2] - flux_[i + 1][2] + q_wall * grid_.heat_weight[i];
    }
  }
};

/// Free-function form of one explicit step.
inline ConservativeState advance(const Grid& grid, const GasModel& gas, const ConservativeState& U,
                                 const BoundaryCondition& bc, double q_wall, double dt,
                                 SolverOptions opt = {}) {
  QuasiOneDSolver s(grid, gas, bc, opt);
  s.set_state(U);
  s.advance(q_wall, dt);
  return s.state();
}

}  // namespace sfrj
