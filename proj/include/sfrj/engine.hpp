// Steady-state driver, unstart detection and post-processing on top of the
// quasi-1D solver.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sfrj/gas.hpp"
#include "sfrj/geometry.hpp"
#include "sfrj/io.hpp"
#include "sfrj/parallel.hpp"
#include "sfrj/solver.hpp"

namespace sfrj {

struct SteadyOptions {
  long max_iterations = 200000;
  // Both RMS residuals must fall this far below their running maximum.
  double residual_drop = 1e-6;
  double imbalance_tolerance = 1e-6;
  long min_iterations = 100;
  // Residual growth past this factor of the first sample counts as divergence.
  double divergence_factor = 1e10;
  SolverOptions solver;
};

struct UnstartReport {
  bool unstarted = false;
  bool inlet_subsonic = false;      // some inlet-channel cell has M < 1
  bool inlet_overpressure = false;  // inlet-plane pressure > 1.05 x prescribed
  double min_inlet_mach = std::numeric_limits<double>::quiet_NaN();
  double max_combustor_mach = std::numeric_limits<double>::quiet_NaN();
  double inlet_pressure_ratio = 1.0;
};

inline constexpr double unstart_pressure_margin = 0.05;

/// Cells whose centres lie in the inlet channel are checked for subsonic flow;
/// heated cells form the combustor for diagnostics.
inline UnstartReport detect_unstart(const std::vector<FlowState>& field, const Grid& grid,
                                    const BoundaryCondition& bc) {
  if (field.size() != static_cast<std::size_t>(grid.n_cells))
    throw std::invalid_argument("detect_unstart: field does not match grid");
  UnstartReport r;
  double min_in = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.inlet_cells; ++i) min_in = std::min(min_in, field[i].M);
  if (grid.inlet_cells > 0) r.min_inlet_mach = min_in;
  double max_c = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.n_cells; ++i)
    if (grid.heat_weight[i] > 0.0) max_c = std::max(max_c, field[i].M);
  if (std::isfinite(max_c)) r.max_combustor_mach = max_c;

  r.inlet_pressure_ratio = field.front().p / bc.inlet_pressure;
  r.inlet_subsonic = grid.inlet_cells > 0 && min_in < 1.0;
  r.inlet_overpressure = r.inlet_pressure_ratio > 1.0 + unstart_pressure_margin;
  r.unstarted = r.inlet_subsonic || r.inlet_overpressure;
  return r;
}

struct SteadyResult {
  double q_wall = 0.0;
  std::vector<FlowState> field;
  ConservativeState state;
  double thrust = 0.0;
  bool converged = false;
  std::vector<ResidualSample> history;
  double mass_imbalance = 0.0;
  bool unstarted = false;
  UnstartReport unstart;
  bool inlet_fallback = false;
  bool outlet_fallback = false;
  long iterations = 0;
};

/// Iterates to steady state with local time stepping. Starts from the inlet
/// state everywhere unless `initial` is given.
inline SteadyResult run_to_steady(const Grid& grid, const BoundaryCondition& bc, double q_wall,
                                  const SteadyOptions& opt = {}, const GasModel& gas = {},
                                  const ConservativeState* initial = nullptr) {
  if (!(q_wall >= 0.0)) throw std::invalid_argument("run_to_steady: heat flux must be non-negative");
  if (opt.max_iterations < 1) throw std::invalid_argument("run_to_steady: iteration cap must be positive");
  QuasiOneDSolver s(grid, gas, bc, opt.solver);
  if (initial) s.set_state(*initial);

  SteadyResult out;
  out.q_wall = q_wall;
  double max_m = 0.0, max_e = 0.0, first = 0.0;
  for (long it = 0; it < opt.max_iterations; ++it) {
    ResidualSample r;
    try {
      r = s.iterate(q_wall);
    } catch (const StepRejected& e) {
      throw DivergenceError(std::string("run_to_steady: ") + e.what(), std::move(out.history));
    }
    out.history.push_back(r);
    if (it == 0) first = std::max(r.rms_mass, r.rms_energy);
    if (!std::isfinite(r.rms_mass) || !std::isfinite(r.rms_energy) ||
        (first > 0.0 && std::max(r.rms_mass, r.rms_energy) > opt.divergence_factor * first))
      throw DivergenceError("run_to_steady: residual diverged at iteration " + std::to_string(it),
                            std::move(out.history));
    max_m = std::max(max_m, r.rms_mass);
    max_e = std::max(max_e, r.rms_energy);
    if (it + 1 >= opt.min_iterations && r.rms_mass <= opt.residual_drop * max_m &&
        r.rms_energy <= opt.residual_drop * max_e && r.mass_imbalance < opt.imbalance_tolerance) {
      out.converged = true;
      break;
    }
  }
  out.iterations = static_cast<long>(out.history.size());
  out.field = s.field();
  out.state = s.state();
  out.thrust = s.thrust();
  out.mass_imbalance = s.mass_imbalance();
  out.unstart = detect_unstart(out.field, grid, bc);
  out.unstarted = out.unstart.unstarted;
  out.inlet_fallback = s.inlet_fallback_active();
  out.outlet_fallback = s.outlet_fallback_active();
  return out;
}

struct Station {
  std::string name;
  int cell = 0;
  double x = 0.0;
  double area = 0.0;
  FlowState state;
  IsentropicRatios ratios;
  bool supersonic = false;
};

/// Isentropic flow-function state at the inlet-channel midpoint, the
/// combustor midpoint, the fastest combustor cell and the exit cell.
inline std::vector<Station> isentropic_state_analysis(const std::vector<FlowState>& field,
                                                      const Grid& grid, const GasModel& gas = {}) {
  if (field.size() != static_cast<std::size_t>(grid.n_cells))
    throw std::invalid_argument("isentropic_state_analysis: field does not match grid");
  auto nearest = [&](double x) {
    int best = 0;
    for (int i = 1; i < grid.n_cells; ++i)
      if (std::abs(grid.x_center[i] - x) < std::abs(grid.x_center[best] - x)) best = i;
    return best;
  };
  auto make = [&](const std::string& name, int i) {
    Station s;
    s.name = name;
    s.cell = i;
    s.x = grid.x_center[i];
    s.area = grid.area_center[i];
    s.state = field[i];
    const double M = std::max(std::abs(field[i].M), 1e-12);
    s.ratios = isentropic_ratios(M, gas);
    s.supersonic = M > 1.0;
    return s;
  };

  std::vector<Station> out;
  if (grid.inlet_cells > 0) out.push_back(make("inlet", nearest(0.5 * grid.x_face[grid.inlet_cells])));
  int h0 = -1, h1 = -1, peak = -1;
  for (int i = 0; i < grid.n_cells; ++i) {
    if (grid.heat_weight[i] <= 0.0) continue;
    if (h0 < 0) h0 = i;
    h1 = i;
    if (peak < 0 || field[i].M > field[peak].M) peak = i;
  }
  if (h0 >= 0) {
    out.push_back(make("combustor", nearest(0.5 * (grid.x_face[h0] + grid.x_face[h1 + 1]))));
    out.push_back(make("combustor_peak", peak));
  }
  out.push_back(make("exit", grid.n_cells - 1));
  return out;
}

inline const Station& find_station(const std::vector<Station>& st, const std::string& name) {
  for (const auto& s : st)
    if (s.name == name) return s;
  throw std::out_of_range("no station named '" + name + "'");
}

struct GridStudy {
  std::vector<int> counts;
  std::vector<double> fluxes;
  std::vector<std::vector<double>> thrust;     // [count][flux]
  std::vector<std::vector<bool>> unstarted;    // [count][flux]
  std::vector<std::vector<bool>> converged;    // [count][flux]
  // Between counts[c] and counts[c + 1], per flux: |t1 - t0| / scale where
  // scale is the largest pre-unstart |thrust| on the finer grid. NaN where
  // either grid is unstarted.
  std::vector<std::vector<double>> relative_change;
  std::vector<double> max_relative_change;  // per successive pair
  std::optional<int> converged_count;
  double threshold = 0.01;
};

/// Steady thrust on each (cell count, flux) pair and the relative change
/// between successive refinements in the pre-unstart regime.
inline GridStudy grid_convergence_study(const EngineGeometry& geo, const BoundaryCondition& bc,
                                        const std::vector<int>& counts, const std::vector<double>& fluxes,
                                        const SteadyOptions& opt = {}, const GasModel& gas = {},
                                        unsigned threads = 0, double threshold = 0.01) {
  if (counts.size() < 3) throw std::invalid_argument("grid_convergence_study: need at least three cell counts");
  if (fluxes.empty()) throw std::invalid_argument("grid_convergence_study: empty flux list");
  GridStudy g;
  g.counts = counts;
  g.fluxes = fluxes;
  g.threshold = threshold;
  const std::size_t nc = counts.size(), nf = fluxes.size();
  std::vector<Grid> grids;
  for (int n : counts) grids.push_back(build_grid(geo, n));
  auto results = parallel_map(
      nc * nf, [&](std::size_t k) { return run_to_steady(grids[k / nf], bc, fluxes[k % nf], opt, gas); },
      threads);

  g.thrust.assign(nc, std::vector<double>(nf));
  g.unstarted.assign(nc, std::vector<bool>(nf));
  g.converged.assign(nc, std::vector<bool>(nf));
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t f = 0; f < nf; ++f) {
      const SteadyResult& r = results[c * nf + f];
      g.thrust[c][f] = r.thrust;
      g.unstarted[c][f] = r.unstarted;
      g.converged[c][f] = r.converged;
    }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c + 1 < nc; ++c) {
    double scale = 0.0;
    for (std::size_t f = 0; f < nf; ++f)
      if (!g.unstarted[c][f] && !g.unstarted[c + 1][f]) scale = std::max(scale, std::abs(g.thrust[c + 1][f]));
    std::vector<double> rel(nf, nan);
    double mx = 0.0;
    for (std::size_t f = 0; f < nf; ++f) {
      if (g.unstarted[c][f] || g.unstarted[c + 1][f]) continue;
      const double d = std::abs(g.thrust[c + 1][f] - g.thrust[c][f]);
      rel[f] = scale > 0.0 ? d / scale : (d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
      mx = std::max(mx, rel[f]);
    }
    g.relative_change.push_back(rel);
    g.max_relative_change.push_back(mx);
  }
  for (std::size_t c = 0; c + 1 < nc; ++c)
    if (g.max_relative_change[c] < threshold) {
      g.converged_count = counts[c];
      break;
    }
  return g;
}

inline std::string grid_study_csv(const GridStudy& g) {
  CsvWriter w({"cells", "q_wall", "thrust", "unstarted", "converged", "relative_change"});
  for (std::size_t c = 0; c < g.counts.size(); ++c)
    for (std::size_t f = 0; f < g.fluxes.size(); ++f)
      w.row({static_cast<double>(g.counts[c]), g.fluxes[f], g.thrust[c][f], g.unstarted[c][f] ? 1.0 : 0.0,
             g.converged[c][f] ? 1.0 : 0.0,
             c + 1 < g.counts.size() ? g.relative_change[c][f] : std::numeric_limits<double>::quiet_NaN()});
  return w.str();
}

namespace defaults {
inline constexpr int production_cells = 500;
inline const std::vector<int> study_counts{250, 500, 1000, 2000};
inline const std::vector<double> sweep_fluxes{2e6, 4e6, 6e6, 8e6, 10e6, 12e6, 14e6, 16e6};
}  // namespace defaults

// ---- CSV export ------------------------------------------------------------

inline std::string field_csv(const Grid& grid, const std::vector<FlowState>& field) {
  CsvWriter w({"x", "A", "rho", "u", "p", "T", "M"});
  for (int i = 0; i < grid.n_cells; ++i) {
    const auto& f = field[i];
    w.row({grid.x_center[i], grid.area_center[i], f.rho, f.u, f.p, f.T, f.M});
  }
  return w.str();
}

inline std::string residual_csv(const std::vector<ResidualSample>& history) {
  CsvWriter w({"iteration", "rms_mass", "rms_energy", "mass_imbalance"});
  for (const auto& r : history)
    w.row({static_cast<double>(r.iteration), r.rms_mass, r.rms_energy, r.mass_imbalance});
  return w.str();
}

}  // namespace sfrj
