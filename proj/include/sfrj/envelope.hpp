// Open-loop characterisation: heat-flux sweeps, the altitude/velocity
// envelope table used for feasibility checks, and a Mach-similarity
// performance map used as a fast engine surrogate.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include "json.hpp"
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfrj/atmosphere.hpp"
#include "sfrj/engine.hpp"
#include "sfrj/io.hpp"
#include "sfrj/parallel.hpp"

namespace sfrj {

using nlohmann::json;

struct SweepPoint {
  double q_wall = 0.0;
  double thrust = std::numeric_limits<double>::quiet_NaN();
  bool unstarted = false;
  bool converged = false;
  bool failed = false;
  std::string error;
  long iterations = 0;
  double min_inlet_mach = std::numeric_limits<double>::quiet_NaN();
  double max_combustor_mach = std::numeric_limits<double>::quiet_NaN();
  double inlet_pressure_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct SweepTable {
  std::vector<SweepPoint> points;  // ascending in q_wall

  std::optional<std::size_t> first_unstart() const {
    for (std::size_t i = 0; i < points.size(); ++i)
      if (!points[i].failed && points[i].unstarted) return i;
    return std::nullopt;
  }
  /// Largest converged thrust before the first unstart with q_wall <= cap.
  std::optional<double> max_started_thrust(double cap = std::numeric_limits<double>::infinity()) const {
    const std::size_t end = first_unstart().value_or(points.size());
    std::optional<double> best;
    for (std::size_t i = 0; i < end; ++i) {
      const auto& p = points[i];
      if (p.failed || p.q_wall > cap) continue;
      if (!best || p.thrust > *best) best = p.thrust;
    }
    return best;
  }
};

inline SweepPoint solve_point(const Grid& grid, const BoundaryCondition& bc, double q,
                              const SteadyOptions& opt, const GasModel& gas) {
  SweepPoint p;
  p.q_wall = q;
  try {
    const SteadyResult r = run_to_steady(grid, bc, q, opt, gas);
    p.thrust = r.thrust;
    p.unstarted = r.unstarted;
    p.converged = r.converged;
    p.iterations = r.iterations;
    p.min_inlet_mach = r.unstart.min_inlet_mach;
    p.max_combustor_mach = r.unstart.max_combustor_mach;
    p.inlet_pressure_ratio = r.unstart.inlet_pressure_ratio;
  } catch (const std::exception& e) {
    p.failed = true;
    p.error = e.what();
  }
  return p;
}

inline void check_sorted_fluxes(const std::vector<double>& fluxes, const char* who) {
  for (std::size_t i = 0; i < fluxes.size(); ++i) {
    if (!(fluxes[i] >= 0.0)) throw std::invalid_argument(std::string(who) + ": heat fluxes must be non-negative");
    if (i > 0 && !(fluxes[i] > fluxes[i - 1]))
      throw std::invalid_argument(std::string(who) + ": heat fluxes must be strictly increasing");
  }
}

/// Steady thrust at each flux. Failed points are marked and the sweep goes on.
inline SweepTable heat_flux_sweep(const Grid& grid, const BoundaryCondition& bc, const std::vector<double>& fluxes,
                                  const SteadyOptions& opt = {}, const GasModel& gas = {}, unsigned threads = 0) {
  check_sorted_fluxes(fluxes, "heat_flux_sweep");
  SweepTable t;
  t.points = parallel_map(fluxes.size(), [&](std::size_t i) { return solve_point(grid, bc, fluxes[i], opt, gas); },
                          threads);
  return t;
}

/// Base fluxes, extended upward until the first unstart if none occurs, then
/// refined between the last started point and the first unstarted one.
struct SweepPlan {
  std::vector<double> base = defaults::sweep_fluxes;
  bool extend = true;
  double extend_step = 2e6;
  double extend_limit = 40e6;
  double refine_step = 0.5e6;
};

inline SweepTable adaptive_heat_flux_sweep(const Grid& grid, const BoundaryCondition& bc, const SweepPlan& plan,
                                           const SteadyOptions& opt = {}, const GasModel& gas = {},
                                           unsigned threads = 0) {
  SweepTable t = heat_flux_sweep(grid, bc, plan.base, opt, gas, threads);
  if (plan.extend && !t.first_unstart()) {
    if (!(plan.extend_step > 0.0)) throw std::invalid_argument("adaptive_heat_flux_sweep: extend_step must be positive");
    double q = t.points.empty() ? plan.extend_step : t.points.back().q_wall + plan.extend_step;
    for (; q <= plan.extend_limit + 1e-9; q += plan.extend_step) {
      t.points.push_back(solve_point(grid, bc, q, opt, gas));
      if (!t.points.back().failed && t.points.back().unstarted) break;
    }
  }
  const auto fu = t.first_unstart();
  if (fu && *fu > 0 && plan.refine_step > 0.0) {
    const double lo = t.points[*fu - 1].q_wall, hi = t.points[*fu].q_wall;
    std::vector<double> extra;
    for (double q = lo + plan.refine_step; q < hi - 1e-6 * plan.refine_step; q += plan.refine_step)
      extra.push_back(q);
    auto more = parallel_map(extra.size(), [&](std::size_t i) { return solve_point(grid, bc, extra[i], opt, gas); },
                             threads);
    t.points.insert(t.points.begin() + static_cast<std::ptrdiff_t>(*fu), more.begin(), more.end());
  }
  return t;
}

inline std::string sweep_csv(const SweepTable& t) {
  CsvWriter w({"q_wall", "thrust", "unstarted", "converged", "failed", "iterations", "min_inlet_mach",
               "max_combustor_mach", "inlet_pressure_ratio"});
  for (const auto& p : t.points)
    w.row({p.q_wall, p.thrust, p.unstarted ? 1.0 : 0.0, p.converged ? 1.0 : 0.0, p.failed ? 1.0 : 0.0,
           static_cast<double>(p.iterations), p.min_inlet_mach, p.max_combustor_mach, p.inlet_pressure_ratio});
  return w.str();
}

inline json to_json(const SweepPoint& p) {
  json j{{"q_wall", p.q_wall}, {"unstarted", p.unstarted}, {"converged", p.converged}, {"failed", p.failed},
         {"iterations", p.iterations}};
  j["thrust"] = p.failed ? json(nullptr) : json(p.thrust);
  if (p.failed) j["error"] = p.error;
  return j;
}

inline SweepPoint sweep_point_from_json(const json& j) {
  SweepPoint p;
  p.q_wall = j.at("q_wall").get<double>();
  p.unstarted = j.at("unstarted").get<bool>();
  p.converged = j.at("converged").get<bool>();
  p.failed = j.at("failed").get<bool>();
  p.iterations = j.value("iterations", 0L);
  if (!p.failed) p.thrust = j.at("thrust").get<double>();
  if (p.failed) p.error = j.value("error", std::string());
  return p;
}

// ---- Envelope table ---------------------------------------------------------

/// Inlet state for flight at altitude h and speed v: ISA static conditions.
inline BoundaryCondition flight_condition(double altitude, double velocity, const GasModel& gas = {}) {
  const AtmoState a = isa(altitude);
  return BoundaryCondition::make(velocity, a.p, a.T, gas);
}

struct EnvelopeTable {
  std::vector<double> altitudes;   // m, ascending
  std::vector<double> velocities;  // m/s, ascending
  std::vector<double> fluxes;      // base flux axis, W/m^2
  // cells[ia * velocities.size() + iv] holds that condition's sweep.
  std::vector<SweepTable> cells;
  // Heat-flux authority used when deriving max feasible thrust.
  double flux_cap = 16e6;
  json metadata = json::object();

  const SweepTable& at(std::size_t ia, std::size_t iv) const { return cells.at(ia * velocities.size() + iv); }

  /// Max pre-unstart thrust at a grid node; NaN when nothing started.
  double max_thrust(std::size_t ia, std::size_t iv) const {
    return at(ia, iv).max_started_thrust(flux_cap).value_or(std::numeric_limits<double>::quiet_NaN());
  }
  double global_max_thrust() const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < altitudes.size(); ++a)
      for (std::size_t v = 0; v < velocities.size(); ++v) m = std::max(m, max_thrust(a, v));
    return m;
  }
};

struct EnvelopeSpec {
  std::vector<double> altitudes{5000.0, 6250.0, 7500.0, 8750.0, 10000.0};
  std::vector<double> velocities{800.0, 900.0, 1000.0};
  SweepPlan plan;
  int cells = defaults::production_cells;
  double flux_cap = 16e6;
};

inline EnvelopeTable build_envelope(const EnvelopeSpec& spec, const EngineGeometry& geo = build_geometry(),
                                    const SteadyOptions& opt = {}, const GasModel& gas = {}, unsigned threads = 0) {
  if (spec.altitudes.empty() || spec.velocities.empty() || spec.plan.base.empty())
    throw std::invalid_argument("build_envelope: grids must be non-empty");
  check_sorted_fluxes(spec.altitudes, "build_envelope(altitudes)");
  check_sorted_fluxes(spec.velocities, "build_envelope(velocities)");
  const Grid grid = build_grid(geo, spec.cells);
  EnvelopeTable t;
  t.altitudes = spec.altitudes;
  t.velocities = spec.velocities;
  t.fluxes = spec.plan.base;
  t.flux_cap = spec.flux_cap;
  const std::size_t nv = spec.velocities.size();
  // Parallel over flight conditions; each sweep runs serially inside.
  t.cells = parallel_map(
      spec.altitudes.size() * nv,
      [&](std::size_t k) {
        const auto bc = flight_condition(spec.altitudes[k / nv], spec.velocities[k % nv], gas);
        return adaptive_heat_flux_sweep(grid, bc, spec.plan, opt, gas, 1);
      },
      threads);

  std::string geo_text;
  for (const auto& s : geo.segments)
    geo_text += s.name + ":" + fmt(s.x0) + ":" + fmt(s.x1) + ":" + fmt(s.d0) + ":" + fmt(s.d1) + ":" +
                fmt(s.d_throat) + ";";
  t.metadata = {{"geometry_hash", hex64(fnv1a(geo_text))},
                {"cells", spec.cells},
                {"smear_cells", 3},
                {"max_iterations", opt.max_iterations},
                {"residual_drop", opt.residual_drop},
                {"imbalance_tolerance", opt.imbalance_tolerance},
                {"refine_step", spec.plan.refine_step},
                {"extend", spec.plan.extend},
                {"axis_pairing", "one sweep per (altitude, velocity); ISA static inlet state"},
                {"flux_cap", spec.flux_cap}};
  return t;
}

inline json to_json(const EnvelopeTable& t) {
  json cells = json::array();
  for (std::size_t a = 0; a < t.altitudes.size(); ++a)
    for (std::size_t v = 0; v < t.velocities.size(); ++v) {
      json pts = json::array();
      for (const auto& p : t.at(a, v).points) pts.push_back(to_json(p));
      const double mx = t.max_thrust(a, v);
      cells.push_back({{"altitude", t.altitudes[a]},
                       {"velocity", t.velocities[v]},
                       {"max_thrust", std::isnan(mx) ? json(nullptr) : json(mx)},
                       {"points", pts}});
    }
  return {{"kind", "envelope_table"},
          {"altitudes", t.altitudes},
          {"velocities", t.velocities},
          {"fluxes", t.fluxes},
          {"flux_cap", t.flux_cap},
          {"metadata", t.metadata},
          {"cells", cells}};
}

inline EnvelopeTable envelope_from_json(const json& j) {
  if (j.value("kind", std::string()) != "envelope_table")
    throw std::invalid_argument("envelope_from_json: not an envelope table");
  EnvelopeTable t;
  t.altitudes = j.at("altitudes").get<std::vector<double>>();
  t.velocities = j.at("velocities").get<std::vector<double>>();
  t.fluxes = j.at("fluxes").get<std::vector<double>>();
  t.flux_cap = j.at("flux_cap").get<double>();
  t.metadata = j.value("metadata", json::object());
  const auto& cells = j.at("cells");
  if (cells.size() != t.altitudes.size() * t.velocities.size())
    throw std::invalid_argument("envelope_from_json: cell count does not match axes");
  for (const auto& c : cells) {
    SweepTable s;
    for (const auto& p : c.at("points")) s.points.push_back(sweep_point_from_json(p));
    t.cells.push_back(std::move(s));
  }
  return t;
}

inline std::string envelope_csv(const EnvelopeTable& t) {
  CsvWriter w({"altitude", "velocity", "q_wall", "thrust", "unstarted", "converged", "failed"});
  for (std::size_t a = 0; a < t.altitudes.size(); ++a)
    for (std::size_t v = 0; v < t.velocities.size(); ++v)
      for (const auto& p : t.at(a, v).points)
        w.row({t.altitudes[a], t.velocities[v], p.q_wall, p.thrust, p.unstarted ? 1.0 : 0.0, p.converged ? 1.0 : 0.0,
               p.failed ? 1.0 : 0.0});
  return w.str();
}

// Bracketing index i with axis[i] <= x <= axis[i + 1] and the weight of axis[i + 1].
inline std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double x, const char* name) {
  if (axis.empty()) throw std::invalid_argument(std::string("empty axis: ") + name);
  if (!(x >= axis.front() && x <= axis.back()))
    throw std::out_of_range(std::string(name) + " " + fmt(x) + " outside table range [" + fmt(axis.front()) + ", " +
                            fmt(axis.back()) + "]");
  if (axis.size() == 1) return {0, 0.0};
  std::size_t i = std::upper_bound(axis.begin(), axis.end(), x) - axis.begin();
  i = std::clamp<std::size_t>(i, 1, axis.size() - 1) - 1;
  const double t = (x - axis[i]) / (axis[i + 1] - axis[i]);
  return {i, t};
}

struct Feasibility {
  bool feasible = false;
  double max_thrust = 0.0;
};

/// Bilinear interpolation of the max pre-unstart thrust; thrust at or below
/// it is feasible. Queries outside the axes throw std::out_of_range.
inline Feasibility query_feasible(const EnvelopeTable& t, double altitude, double velocity, double thrust) {
  const auto [ia, ta] = bracket(t.altitudes, altitude, "altitude");
  const auto [iv, tv] = bracket(t.velocities, velocity, "velocity");
  auto node = [&](std::size_t a, std::size_t v) {
    a = std::min(a, t.altitudes.size() - 1);
    v = std::min(v, t.velocities.size() - 1);
    return t.max_thrust(a, v);
  };
  // Exact weights of zero must not drag in NaN neighbours.
  auto lerp = [](double a, double b, double w) { return w == 0.0 ? a : (w == 1.0 ? b : a + (b - a) * w); };
  const double m0 = lerp(node(ia, iv), node(ia, iv + 1), tv);
  const double m1 = lerp(node(ia + 1, iv), node(ia + 1, iv + 1), tv);
  Feasibility f;
  f.max_thrust = lerp(m0, m1, ta);
  f.feasible = !std::isnan(f.max_thrust) && thrust <= f.max_thrust;
  return f;
}

// ---- Mach-similarity performance map ---------------------------------------
//
// For this inviscid perfect-gas model with fixed geometry shape, the steady
// solution depends only on the freestream Mach number and the heat flux
// normalised by p a; thrust scales as p times area. One table over
// (M, q / (p a)) therefore serves every inlet state and every geometry scale.

struct PerformanceRow {
  double mach = 0.0;
  std::vector<double> qhat;        // ascending
  std::vector<double> coefficient; // thrust / (p A_inlet)
  std::vector<bool> unstarted;

  std::optional<std::size_t> first_unstart() const {
    for (std::size_t i = 0; i < unstarted.size(); ++i)
      if (unstarted[i]) return i;
    return std::nullopt;
  }
  double value(double qh) const {
    // Past the scanned range of an unstarted row the coefficient stays flat.
    if (qh > qhat.back() && first_unstart()) return coefficient.back();
    if (!(qh >= qhat.front() && qh <= qhat.back()))
      throw std::out_of_range("performance map: normalised heat flux " + fmt(qh) + " outside [" + fmt(qhat.front()) +
                              ", " + fmt(qhat.back()) + "]");
    const auto [i, t] = bracket(qhat, qh, "normalised heat flux");
    if (t == 0.0) return coefficient[i];
    return coefficient[i] + (coefficient[i + 1] - coefficient[i]) * t;
  }
  /// Highest started normalised flux, and the coefficient reached at
  /// min(cap, that flux). Coefficients rise with flux before unstart.
  double max_started_coefficient(double qhat_cap) const {
    const std::size_t end = first_unstart().value_or(qhat.size());
    if (end == 0) return std::numeric_limits<double>::quiet_NaN();
    const double q_last = qhat[end - 1];
    if (qhat_cap >= q_last) {
      double m = coefficient[0];
      for (std::size_t i = 1; i < end; ++i) m = std::max(m, coefficient[i]);
      return m;
    }
    double m = coefficient[0];
    for (std::size_t i = 1; i < end && qhat[i] <= qhat_cap; ++i) m = std::max(m, coefficient[i]);
    return std::max(m, value(std::max(qhat_cap, qhat.front())));
  }
  bool unstarted_at(double qh) const {
    const auto fu = first_unstart();
    if (!fu) return false;
    // Between the last started and first unstarted node the nearer wins.
    if (*fu == 0) return true;
    return qh >= 0.5 * (qhat[*fu - 1] + qhat[*fu]);
  }
};

struct PerformanceMap {
  std::vector<PerformanceRow> rows;  // ascending Mach
  double inlet_area = 0.0;           // of the geometry the map was built on
  GasModel gas;
  json metadata = json::object();

  std::vector<double> machs() const {
    std::vector<double> m;
    for (const auto& r : rows) m.push_back(r.mach);
    return m;
  }

  struct Eval {
    double thrust = 0.0;
    bool unstarted = false;
  };

  /// Thrust of an engine geometrically scaled by `scale` at inlet state
  /// (u, p, T) and wall heat flux w.
  Eval evaluate(double u, double p, double T, double w, double scale = 1.0) const {
    const double a = gas.sound_speed(T);
    const auto [i, t] = bracket(machs(), u / a, "Mach");
    const double qh = w / (p * a);
    const double c0 = rows[i].value(qh);
    const double c = t == 0.0 ? c0 : c0 + (rows[i + 1].value(qh) - c0) * t;
    Eval e;
    e.thrust = c * p * inlet_area * scale * scale;
    const bool u0 = rows[i].unstarted_at(qh);
    e.unstarted = t == 0.0 ? u0 : (t < 0.5 ? u0 : rows[i + 1].unstarted_at(qh));
    return e;
  }

  /// Max pre-unstart thrust with heat flux limited to w_cap.
  double max_thrust(double u, double p, double T, double w_cap, double scale = 1.0) const {
    const double a = gas.sound_speed(T);
    const auto [i, t] = bracket(machs(), u / a, "Mach");
    const double qcap = w_cap / (p * a);
    const double c0 = rows[i].max_started_coefficient(qcap);
    const double c = t == 0.0 ? c0 : c0 + (rows[i + 1].max_started_coefficient(qcap) - c0) * t;
    return c * p * inlet_area * scale * scale;
  }
};

struct PerformanceMapSpec {
  std::vector<double> machs{2.0, 2.25, 2.5, 2.75, 3.0, 3.25, 3.5};
  double qhat_step = 0.1;
  double qhat_limit = 2.6;
  double refine_step = 0.0125;
  // Reference static state; any other gives the same coefficients.
  double p_ref = 1e5;
  double T_ref = 300.0;
  int cells = defaults::production_cells;
};

inline PerformanceMap build_performance_map(const PerformanceMapSpec& spec, const EngineGeometry& geo = build_geometry(),
                                            const SteadyOptions& opt = {}, const GasModel& gas = {},
                                            unsigned threads = 0) {
  if (spec.machs.empty()) throw std::invalid_argument("build_performance_map: empty Mach axis");
  if (!(spec.qhat_step > 0.0) || !(spec.qhat_limit >= 0.0) || spec.refine_step < 0.0)
    throw std::invalid_argument("build_performance_map: flux steps must be positive");
  check_sorted_fluxes(spec.machs, "build_performance_map(machs)");
  const Grid grid = build_grid(geo, spec.cells);
  PerformanceMap m;
  m.gas = gas;
  m.inlet_area = geo.area(geo.x_begin());
  const double a = gas.sound_speed(spec.T_ref);
  const double pa = spec.p_ref * a;
  m.rows = parallel_map(
      spec.machs.size(),
      [&](std::size_t k) {
        const auto bc = BoundaryCondition::make(spec.machs[k] * a, spec.p_ref, spec.T_ref, gas);
        SweepPlan plan;
        plan.base.clear();
        for (double q = 0.0; q <= spec.qhat_limit * pa * (1 + 1e-12); q += spec.qhat_step * pa) {
          plan.base.push_back(q);
        }
        plan.extend = false;
        plan.refine_step = spec.refine_step * pa;
        // Coarse pass stops two points after the first unstart.
        SweepTable coarse;
        for (double q : plan.base) {
          coarse.points.push_back(solve_point(grid, bc, q, opt, gas));
          const auto fu = coarse.first_unstart();
          if (fu && coarse.points.size() >= *fu + 2) break;
        }
        const auto fu = coarse.first_unstart();
        if (fu && *fu > 0 && plan.refine_step > 0.0) {
          const double lo = coarse.points[*fu - 1].q_wall, hi = coarse.points[*fu].q_wall;
          std::vector<SweepPoint> extra;
          for (double q = lo + plan.refine_step; q < hi - 1e-6 * plan.refine_step; q += plan.refine_step)
            extra.push_back(solve_point(grid, bc, q, opt, gas));
          coarse.points.insert(coarse.points.begin() + static_cast<std::ptrdiff_t>(*fu), extra.begin(), extra.end());
        }
        PerformanceRow row;
        row.mach = spec.machs[k];
        for (const auto& p : coarse.points) {
          if (p.failed) throw std::runtime_error("build_performance_map: solver failure at M=" + fmt(row.mach) +
                                                 ", q=" + fmt(p.q_wall) + ": " + p.error);
          row.qhat.push_back(p.q_wall / pa);
          row.coefficient.push_back(p.thrust / (spec.p_ref * m.inlet_area));
          row.unstarted.push_back(p.unstarted);
        }
        return row;
      },
      threads);
  m.metadata = {{"cells", spec.cells}, {"p_ref", spec.p_ref}, {"T_ref", spec.T_ref},
                {"qhat_step", spec.qhat_step}, {"refine_step", spec.refine_step}};
  return m;
}

inline json to_json(const PerformanceMap& m) {
  json rows = json::array();
  for (const auto& r : m.rows)
    rows.push_back({{"mach", r.mach}, {"qhat", r.qhat}, {"coefficient", r.coefficient}, {"unstarted", r.unstarted}});
  return {{"kind", "performance_map"},
          {"inlet_area", m.inlet_area},
          {"gamma", m.gas.gamma},
          {"R", m.gas.R},
          {"metadata", m.metadata},
          {"rows", rows}};
}

inline PerformanceMap performance_map_from_json(const json& j) {
  if (j.value("kind", std::string()) != "performance_map")
    throw std::invalid_argument("performance_map_from_json: not a performance map");
  PerformanceMap m;
  m.inlet_area = j.at("inlet_area").get<double>();
  m.gas = GasModel(j.at("gamma").get<double>(), j.at("R").get<double>());
  m.metadata = j.value("metadata", json::object());
  for (const auto& r : j.at("rows")) {
    PerformanceRow row;
    row.mach = r.at("mach").get<double>();
    row.qhat = r.at("qhat").get<std::vector<double>>();
    row.coefficient = r.at("coefficient").get<std::vector<double>>();
    row.unstarted = r.at("unstarted").get<std::vector<bool>>();
    m.rows.push_back(std::move(row));
  }
  return m;
}

}  // namespace sfrj
