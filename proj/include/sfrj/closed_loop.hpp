// Closed-loop thrust regulation: engine plants, command profiles, the
// regulate() loop and the static-condition experiments built on it.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfrj/engine.hpp"
#include "sfrj/envelope.hpp"
#include "sfrj/io.hpp"
#include "sfrj/parallel.hpp"
#include "sfrj/random.hpp"
#include "sfrj/rcac.hpp"

namespace sfrj {

// ---- Plants -----------------------------------------------------------------

class Plant {
 public:
  virtual ~Plant() = default;
  /// Current thrust measurement.
  virtual double thrust() const = 0;
  virtual bool unstarted() const = 0;
  /// Holds heat flux w for one control step.
  virtual void apply(double w) = 0;
  virtual double rms_mass() const { return 0.0; }
  virtual double rms_energy() const { return 0.0; }
  /// New freestream state, taking effect at the next apply().
  virtual void set_inlet(const BoundaryCondition&) { throw std::logic_error("plant has a fixed inlet state"); }
};

/// The quasi-1D engine advanced a fixed number of local-time-step
/// iterations per control step.
class SolverPlant : public Plant {
 public:
  SolverPlant(const Grid& grid, const BoundaryCondition& bc, double w_init, int inner_iterations,
              const SteadyOptions& warmup = {}, const GasModel& gas = {})
      : solver_(grid, gas, bc, warmup.solver), inner_(inner_iterations) {
    if (inner_iterations < 1) throw std::invalid_argument("SolverPlant: inner_iterations must be >= 1");
    const SteadyResult s = run_to_steady(grid, bc, w_init, warmup, gas);
    solver_.set_state(s.state);
    unstarted_ = s.unstarted;
    thrust_ = s.thrust;
  }

  double thrust() const override { return thrust_; }
  bool unstarted() const override { return unstarted_; }
  double rms_mass() const override { return last_.rms_mass; }
  double rms_energy() const override { return last_.rms_energy; }

  void apply(double w) override {
    try {
      for (int i = 0; i < inner_; ++i) last_ = solver_.iterate(w);
    } catch (const StepRejected& e) {
      throw DivergenceError(std::string("engine: ") + e.what(), {});
    }
    if (!std::isfinite(last_.rms_mass)) throw DivergenceError("engine: non-finite residual", {});
    thrust_ = solver_.thrust();
    unstarted_ = detect_unstart(solver_.field(), solver_.grid(), solver_.boundary()).unstarted;
  }

  void set_inlet(const BoundaryCondition& bc) override { solver_.set_boundary(bc); }

  const QuasiOneDSolver& solver() const { return solver_; }

 private:
  QuasiOneDSolver solver_;
  int inner_;
  double thrust_ = 0.0;
  bool unstarted_ = false;
  ResidualSample last_;
};

/// y_{k+1} = y_k + alpha (F(w_k) - y_k): a static thrust map behind a
/// first-order lag. alpha = 1 makes the plant static with one step of delay.
class LagPlant : public Plant {
 public:
  struct Output {
    double thrust;
    bool unstarted;
  };
  using Map = std::function<Output(double)>;

  LagPlant(Map map, double alpha, double w_init) : map_(std::move(map)), alpha_(alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("LagPlant: alpha must lie in (0, 1]");
    const Output o = map_(w_init);
    y_ = o.thrust;
    unstarted_ = o.unstarted;
  }
  double thrust() const override { return y_; }
  bool unstarted() const override { return unstarted_; }
  void apply(double w) override {
    const Output o = map_(w);
    y_ += alpha_ * (o.thrust - y_);
    unstarted_ = o.unstarted;
  }

 private:
  Map map_;
  double alpha_;
  double y_ = 0.0;
  bool unstarted_ = false;
};

/// Performance-map engine of geometric scale `scale` behind the same lag.
class MapPlant : public Plant {
 public:
  MapPlant(std::shared_ptr<const PerformanceMap> map, const BoundaryCondition& bc, double w_init, double alpha = 1.0,
           double scale = 1.0)
      : map_(std::move(map)), bc_(bc), alpha_(alpha), scale_(scale) {
    if (!map_) throw std::invalid_argument("MapPlant: null map");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("MapPlant: alpha must lie in (0, 1]");
    const auto e = eval(w_init);
    y_ = e.thrust;
    unstarted_ = e.unstarted;
  }
  double thrust() const override { return y_; }
  bool unstarted() const override { return unstarted_; }
  void set_inlet(const BoundaryCondition& bc) override { bc_ = bc; }
  void apply(double w) override {
    const auto e = eval(w);
    y_ += alpha_ * (e.thrust - y_);
    unstarted_ = e.unstarted;
  }

 private:
  PerformanceMap::Eval eval(double w) const {
    return map_->evaluate(bc_.inlet_velocity, bc_.inlet_pressure, bc_.inlet_temperature, w, scale_);
  }
  std::shared_ptr<const PerformanceMap> map_;
  BoundaryCondition bc_;
  double alpha_;
  double scale_;
  double y_ = 0.0;
  bool unstarted_ = false;
};

/// Linear surrogate fitted around an operating point: F(w) = y0 + slope (w - w0).
struct LtiModel {
  double w0 = 10e6;
  double y0 = 0.0;
  double slope = 0.0;  // N per W/m^2
  double alpha = 1.0;

  std::unique_ptr<Plant> make(double w_init) const {
    const LtiModel m = *this;
    return std::make_unique<LagPlant>(
        [m](double w) { return LagPlant::Output{m.y0 + m.slope * (w - m.w0), false}; }, alpha, w_init);
  }
};

/// Fits the surrogate from the quasi-1D engine: slope by central difference
/// of steady thrust at w0 +- dw, lag from the first control step of a step
/// from w0 to w0 + dw.
inline LtiModel fit_lti(const Grid& grid, const BoundaryCondition& bc, double w0, int inner_iterations,
                        double dw = 1e6, const SteadyOptions& opt = {}, const GasModel& gas = {}) {
  const SteadyResult lo = run_to_steady(grid, bc, w0 - dw, opt, gas);
  const SteadyResult mid = run_to_steady(grid, bc, w0, opt, gas);
  const SteadyResult hi = run_to_steady(grid, bc, w0 + dw, opt, gas);
  if (lo.unstarted || mid.unstarted || hi.unstarted)
    throw std::runtime_error("fit_lti: operating point is not pre-unstart");
  LtiModel m;
  m.w0 = w0;
  m.y0 = mid.thrust;
  m.slope = (hi.thrust - lo.thrust) / (2.0 * dw);
  SolverPlant p(grid, bc, w0, inner_iterations, opt, gas);
  p.apply(w0 + dw);
  const double frac = (p.thrust() - mid.thrust) / (hi.thrust - mid.thrust);
  m.alpha = std::clamp(frac, 1e-3, 1.0);
  return m;
}

// ---- Commands ---------------------------------------------------------------

struct CommandProfile {
  enum class Kind { constant, random_steps, sequence };
  Kind kind = Kind::constant;
  double value = 600.0;
  double lo = 300.0, hi = 900.0;
  int hold = 40;
  std::uint64_t seed = 0;
  std::vector<double> sequence;

  static CommandProfile constant(double r) {
    CommandProfile p;
    p.value = r;
    return p;
  }
  static CommandProfile random_steps(double lo, double hi, int hold, std::uint64_t seed) {
    CommandProfile p;
    p.kind = Kind::random_steps;
    p.lo = lo;
    p.hi = hi;
    p.hold = hold;
    p.seed = seed;
    return p;
  }
  static CommandProfile of_sequence(std::vector<double> values, int hold) {
    CommandProfile p;
    p.kind = Kind::sequence;
    p.sequence = std::move(values);
    p.hold = hold;
    return p;
  }

  void validate() const {
    if (hold < 1) throw std::invalid_argument("CommandProfile: hold must be >= 1");
    if (kind == Kind::random_steps && !(hi >= lo)) throw std::invalid_argument("CommandProfile: empty range");
    if (kind == Kind::sequence && sequence.empty()) throw std::invalid_argument("CommandProfile: empty sequence");
  }

  std::vector<double> commands(long n) const {
    validate();
    std::vector<double> r(static_cast<std::size_t>(n));
    RandomStream rng(seed, 0x636d64);
    double cur = 0.0;
    for (long k = 0; k < n; ++k) {
      switch (kind) {
        case Kind::constant:
          cur = value;
          break;
        case Kind::random_steps:
          if (k % hold == 0) cur = rng.uniform(lo, hi);
          break;
        case Kind::sequence:
          cur = sequence[std::min<std::size_t>(k / hold, sequence.size() - 1)];
          break;
      }
      r[k] = cur;
    }
    return r;
  }

  /// Same profile with every level passed through f.
  template <class F>
  CommandProfile mapped(F&& f) const {
    CommandProfile p = *this;
    p.value = f(value);
    p.lo = f(lo);
    p.hi = f(hi);
    for (double& v : p.sequence) v = f(v);
    return p;
  }
};

inline const char* kind_name(CommandProfile::Kind k) {
  switch (k) {
    case CommandProfile::Kind::constant:
      return "constant";
    case CommandProfile::Kind::random_steps:
      return "random_steps";
    case CommandProfile::Kind::sequence:
      return "sequence";
  }
  return "?";
}

inline json to_json(const CommandProfile& p) {
  return {{"kind", kind_name(p.kind)}, {"value", p.value}, {"lo", p.lo},        {"hi", p.hi},
          {"hold", p.hold},            {"seed", p.seed},   {"sequence", p.sequence}};
}

// ---- Calibration ------------------------------------------------------------

/// Maps the reference experiments' newton levels onto this engine's own
/// pre-unstart thrust span at nominal conditions: reference_span newtons
/// correspond to the whole span, so 300/600/900 N land on 25/50/75 %.
struct Calibration {
  std::string mode = "calibrated";  // or "raw"
  double span_lo = 0.0;
  double span_hi = 0.0;
  double reference_span = 1200.0;

  double fraction(double f) const { return span_lo + f * (span_hi - span_lo); }
  double to_newtons(double reference_newtons) const {
    if (mode == "raw") return reference_newtons;
    return fraction(reference_newtons / reference_span);
  }
};

inline json to_json(const Calibration& c) {
  return {{"mode", c.mode}, {"span_lo", c.span_lo}, {"span_hi", c.span_hi}, {"reference_span", c.reference_span}};
}

/// Span [0, max pre-unstart thrust with w <= w_max] at the given inlet.
inline Calibration calibrate(const Grid& grid, const BoundaryCondition& bc, const MapConfig& map,
                             const SteadyOptions& opt = {}, const GasModel& gas = {}, unsigned threads = 0,
                             double step = 2e6) {
  std::vector<double> fluxes;
  for (double q = step; q <= map.w_max + 1e-9; q += step) fluxes.push_back(q);
  if (fluxes.empty() || fluxes.back() < map.w_max) fluxes.push_back(map.w_max);
  const SweepTable t = heat_flux_sweep(grid, bc, fluxes, opt, gas, threads);
  const auto mx = t.max_started_thrust(map.w_max);
  if (!mx || !(*mx > 0.0)) throw std::runtime_error("calibrate: no positive pre-unstart thrust within authority");
  Calibration c;
  c.span_lo = 0.0;
  c.span_hi = *mx;
  return c;
}

// ---- Logs -------------------------------------------------------------------

struct LogRow {
  long k = 0;
  double r = 0, y = 0, z = 0, u = 0, w = 0, K_P = 0, K_I = 0, gamma = 0;
  bool clamped = false;
  bool unstarted = false;
  double rms_mass = 0, rms_energy = 0;
};

struct ExperimentLog {
  std::vector<LogRow> rows;
  json config = json::object();
  std::string status = "completed";  // or "aborted"
  std::string error;
  double wall_seconds = 0.0;

  bool aborted() const { return status != "completed"; }
};

inline std::string log_csv(const ExperimentLog& log) {
  CsvWriter w({"k", "r", "y", "z", "u", "w", "K_P", "K_I", "gamma", "clamped", "unstart", "rms_mass", "rms_energy"});
  for (const auto& r : log.rows)
    w.row({static_cast<double>(r.k), r.r, r.y, r.z, r.u, r.w, r.K_P, r.K_I, r.gamma, r.clamped ? 1.0 : 0.0,
           r.unstarted ? 1.0 : 0.0, r.rms_mass, r.rms_energy});
  return w.str();
}

/// First k from which |z|/|r| < band holds for `hold` consecutive steps,
/// searched in [from, to).
inline std::optional<long> settling_step(const ExperimentLog& log, double band = 0.02, int hold = 10, long from = 0,
                                         long to = -1) {
  const long n = static_cast<long>(log.rows.size());
  if (to < 0 || to > n) to = n;
  long run = 0;
  for (long k = from; k < to; ++k) {
    const auto& r = log.rows[k];
    if (std::abs(r.z) < band * std::abs(r.r))
      ++run;
    else
      run = 0;
    if (run >= hold) return k - hold + 1;
  }
  return std::nullopt;
}

/// First k after which |z|/|r| < band for every remaining step.
inline std::optional<long> final_entry_step(const ExperimentLog& log, double band) {
  long k = static_cast<long>(log.rows.size());
  while (k > 0 && std::abs(log.rows[k - 1].z) < band * std::abs(log.rows[k - 1].r)) --k;
  if (k == static_cast<long>(log.rows.size())) return std::nullopt;
  return k;
}

/// Peak excursion past the command in the direction of travel, relative to
/// |r|, over [from, to). Direction is set by the first sample of the window.
inline double peak_overshoot(const ExperimentLog& log, long from = 0, long to = -1) {
  const long n = static_cast<long>(log.rows.size());
  if (to < 0 || to > n) to = n;
  if (from >= to) return 0.0;
  const double r = log.rows[from].r;
  const double dir = r >= log.rows[from].y ? 1.0 : -1.0;
  double peak = 0.0;
  for (long k = from; k < to; ++k) peak = std::max(peak, dir * (log.rows[k].y - r));
  return peak / std::abs(r);
}

// ---- Loop -------------------------------------------------------------------

struct LoopConfig {
  int inner_iterations = 500;
  int control_steps = 275;
  RcacConfig rcac;
  MapConfig map;
  BoundaryCondition bc;

  void validate() const {
    if (inner_iterations < 1) throw std::invalid_argument("LoopConfig: inner_iterations must be >= 1");
    if (control_steps < 1) throw std::invalid_argument("LoopConfig: control_steps must be >= 1");
    rcac.validate();
    map.validate();
  }
};

inline json to_json(const LoopConfig& c) {
  return {{"inner_iterations", c.inner_iterations},
          {"control_steps", c.control_steps},
          {"rcac",
           {{"P0_scale", c.rcac.P0_scale},
            {"N1", c.rcac.N1},
            {"lambda", c.rcac.lambda},
            {"theta0", {c.rcac.theta0(0), c.rcac.theta0(1)}},
            {"u_max", c.rcac.u_max},
            {"error_scale", c.rcac.error_scale}}},
          {"map", {{"w_bar", c.map.w_bar}, {"K_w", c.map.K_w}, {"w_max", c.map.w_max}}},
          {"inlet",
           {{"velocity", c.bc.inlet_velocity},
            {"pressure", c.bc.inlet_pressure},
            {"temperature", c.bc.inlet_temperature},
            {"mach", c.bc.inlet_mach}}}};
}

/// Runs the loop on `plant`, which must already sit at the nominal heat flux.
/// Engine divergence ends the run with status "aborted" and a partial log.
inline ExperimentLog regulate(const CommandProfile& profile, const LoopConfig& cfg, Plant& plant) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentLog log;
  log.config = {{"loop", to_json(cfg)}, {"command", to_json(profile)}};
  const auto r = profile.commands(cfg.control_steps);
  RcacPi ctrl(cfg.rcac, cfg.map);
  for (long k = 0; k < cfg.control_steps; ++k) {
    LogRow row;
    row.k = k;
    row.unstarted = plant.unstarted();
    row.rms_mass = plant.rms_mass();
    row.rms_energy = plant.rms_energy();
    const ControlStep c = ctrl.step(r[k], plant.thrust());
    row.r = c.r;
    row.y = c.y;
    row.z = c.z;
    row.u = c.u;
    row.w = c.w;
    row.K_P = c.theta(0);
    row.K_I = c.theta(1);
    row.gamma = c.gamma;
    row.clamped = c.clamped;
    log.rows.push_back(row);
    try {
      plant.apply(c.w);
    } catch (const std::exception& e) {
      log.status = "aborted";
      log.error = e.what();
      break;
    }
  }
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

using PlantFactory = std::function<std::unique_ptr<Plant>(const LoopConfig&)>;

/// Quasi-1D engine backend, warmed up to steady state at w_bar.
inline PlantFactory solver_backend(int cells = defaults::production_cells, SteadyOptions warmup = {},
                                   GasModel gas = {}) {
  auto grid = std::make_shared<const Grid>(build_grid(build_geometry(), cells));
  return [grid, warmup, gas](const LoopConfig& c) -> std::unique_ptr<Plant> {
    return std::make_unique<SolverPlant>(*grid, c.bc, c.map.w_bar, c.inner_iterations, warmup, gas);
  };
}

/// Performance-map backend: static map at the loop's inlet state behind a lag.
inline PlantFactory map_backend(std::shared_ptr<const PerformanceMap> map, double alpha = 1.0, double scale = 1.0) {
  return [map, alpha, scale](const LoopConfig& c) -> std::unique_ptr<Plant> {
    return std::make_unique<MapPlant>(map, c.bc, c.map.w_bar, alpha, scale);
  };
}

inline PlantFactory lti_backend(LtiModel m) {
  return [m](const LoopConfig& c) { return m.make(c.map.w_bar); };
}

inline ExperimentLog run_experiment(const CommandProfile& profile, const LoopConfig& cfg, const PlantFactory& make) {
  std::unique_ptr<Plant> plant;
  try {
    plant = make(cfg);
  } catch (const std::exception& e) {
    ExperimentLog log;
    log.config = {{"loop", to_json(cfg)}, {"command", to_json(profile)}};
    log.status = "aborted";
    log.error = std::string("engine start-up failed: ") + e.what();
    return log;
  }
  return regulate(profile, cfg, *plant);
}

// ---- Hyperparameter sweep ---------------------------------------------------

struct SweepCell {
  double N1 = 0.0;
  double p = 0.0;
  ExperimentLog log;
  std::optional<long> settling;  // first entry into the sustained 2 % band
  double overshoot = 0.0;
};

inline std::vector<SweepCell> hyperparameter_sweep(const std::vector<double>& n_values,
                                                   const std::vector<double>& p_values, const CommandProfile& profile,
                                                   const LoopConfig& base, const PlantFactory& make,
                                                   unsigned threads = 0) {
  if (n_values.empty() || p_values.empty()) throw std::invalid_argument("hyperparameter_sweep: empty grid");
  const std::size_t np = p_values.size();
  return parallel_map(
      n_values.size() * np,
      [&](std::size_t i) {
        SweepCell c;
        c.N1 = n_values[i / np];
        c.p = p_values[i % np];
        LoopConfig cfg = base;
        cfg.rcac.N1 = c.N1;
        cfg.rcac.P0_scale = c.p;
        try {
          c.log = run_experiment(profile, cfg, make);
        } catch (const std::exception& e) {
          c.log.status = "aborted";
          c.log.error = e.what();
        }
        c.settling = settling_step(c.log);
        c.overshoot = peak_overshoot(c.log);
        return c;
      },
      threads);
}

struct OrderingReport {
  bool settling_ok = true;
  bool overshoot_ok = true;
  std::vector<std::string> violations;
};

/// At each N1, settling must not increase and overshoot must not decrease as
/// p grows. A run that never settles counts as settling at infinity.
inline OrderingReport check_orderings(const std::vector<SweepCell>& cells, double overshoot_tol = 1e-9) {
  const auto label = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  OrderingReport rep;
  std::vector<double> ns;
  for (const auto& c : cells)
    if (std::find(ns.begin(), ns.end(), c.N1) == ns.end()) ns.push_back(c.N1);
  for (double n : ns) {
    std::vector<const SweepCell*> row;
    for (const auto& c : cells)
      if (c.N1 == n) row.push_back(&c);
    std::sort(row.begin(), row.end(), [](auto* a, auto* b) { return a->p < b->p; });
    for (std::size_t i = 1; i < row.size(); ++i) {
      const double s0 = row[i - 1]->settling ? double(*row[i - 1]->settling) : INFINITY;
      const double s1 = row[i]->settling ? double(*row[i]->settling) : INFINITY;
      if (s1 > s0) {
        rep.settling_ok = false;
        rep.violations.push_back("N1=" + label(n) + ": settling rises from " + label(s0) + " steps at p=" +
                                 label(row[i - 1]->p) + " to " + label(s1) + " at p=" + label(row[i]->p));
      }
      if (row[i]->overshoot < row[i - 1]->overshoot - overshoot_tol) {
        rep.overshoot_ok = false;
        rep.violations.push_back("N1=" + label(n) + ": overshoot falls from p=" + label(row[i - 1]->p) + " to p=" +
                                 label(row[i]->p));
      }
    }
  }
  return rep;
}

// ---- Monte Carlo ------------------------------------------------------------

struct InletRanges {
  double v_lo = 800.0, v_hi = 1000.0;
  double T_lo = 220.0, T_hi = 260.0;
  double p_lo = 26e3, p_hi = 54e3;

  void validate() const {
    if (!(v_lo > 0.0 && T_lo > 0.0 && p_lo > 0.0) || v_hi < v_lo || T_hi < T_lo || p_hi < p_lo)
      throw std::invalid_argument("InletRanges: ranges must be positive and ordered");
  }
};

/// Why a candidate operating point was turned down.
struct Verdict {
  bool feasible = true;
  std::string reason;  // "command_above_max" or "unstarted_at_nominal"
  double max_thrust = 0.0;
};

using FeasibilityOracle = std::function<Verdict(const BoundaryCondition&, double command)>;

/// Feasibility from the persisted performance map: the command must not
/// exceed the max pre-unstart thrust within heat-flux authority, and the
/// engine must be started at the nominal heat flux the controller begins at.
inline FeasibilityOracle map_feasibility(std::shared_ptr<const PerformanceMap> map, MapConfig mc, double scale = 1.0) {
  return [map, mc, scale](const BoundaryCondition& bc, double command) {
    Verdict v;
    v.max_thrust = map->max_thrust(bc.inlet_velocity, bc.inlet_pressure, bc.inlet_temperature, mc.w_max, scale);
    if (map->evaluate(bc.inlet_velocity, bc.inlet_pressure, bc.inlet_temperature, mc.w_bar, scale).unstarted) {
      v.feasible = false;
      v.reason = "unstarted_at_nominal";
    } else if (!(command <= v.max_thrust)) {
      v.feasible = false;
      v.reason = "command_above_max";
    }
    return v;
  };
}

struct MonteCarloSample {
  std::size_t index = 0;
  double altitude = std::numeric_limits<double>::quiet_NaN();
  double velocity = 0.0, temperature = 0.0, pressure = 0.0;
  double command = 0.0;
  double max_thrust = 0.0;
  int rejections = 0;
  int rejected_command = 0;
  int rejected_start = 0;
  ExperimentLog log;
  double final_relative_error = 0.0;
  double K_P = 0.0, K_I = 0.0;
  std::optional<long> settling;
};

inline void summarise(MonteCarloSample& s) {
  if (s.log.rows.empty()) return;
  const auto& last = s.log.rows.back();
  s.final_relative_error = std::abs(last.z) / std::abs(last.r);
  s.K_P = last.K_P;
  s.K_I = last.K_I;
  s.settling = settling_step(s.log);
}

inline constexpr int max_feasibility_attempts = 1000;

inline std::vector<MonteCarloSample> monte_carlo_inlet(std::size_t n_samples, const InletRanges& ranges, double command,
                                                       std::uint64_t seed, const LoopConfig& base,
                                                       const PlantFactory& make, const FeasibilityOracle& feasible,
                                                       unsigned threads = 0) {
  ranges.validate();
  return parallel_map(
      n_samples,
      [&](std::size_t i) {
        MonteCarloSample s;
        s.index = i;
        s.command = command;
        RandomStream rng(seed, i);
        LoopConfig cfg = base;
        for (int attempt = 0;; ++attempt) {
          if (attempt >= max_feasibility_attempts)
            throw std::runtime_error("monte_carlo_inlet: sample " + std::to_string(i) + " found no feasible inlet in " +
                                     std::to_string(max_feasibility_attempts) + " attempts");
          s.velocity = rng.uniform(ranges.v_lo, ranges.v_hi);
          s.temperature = rng.uniform(ranges.T_lo, ranges.T_hi);
          s.pressure = rng.uniform(ranges.p_lo, ranges.p_hi);
          cfg.bc = BoundaryCondition::make(s.velocity, s.pressure, s.temperature);
          if (!feasible) break;
          const Verdict v = feasible(cfg.bc, command);
          s.max_thrust = v.max_thrust;
          if (v.feasible) break;
          ++s.rejections;
          if (v.reason == "unstarted_at_nominal")
            ++s.rejected_start;
          else
            ++s.rejected_command;
        }
        s.log = run_experiment(CommandProfile::constant(command), cfg, make);
        summarise(s);
        return s;
      },
      threads);
}

struct EnvelopeRanges {
  double h_lo = 5000.0, h_hi = 10000.0;
  double v_lo = 800.0, v_hi = 1000.0;
  double thrust_lo = 300.0, thrust_hi = 900.0;
};

/// True when every table node around (h, v) is started at heat flux w.
inline bool started_at(const EnvelopeTable& t, double h, double v, double w) {
  const auto [ia, ta] = bracket(t.altitudes, h, "altitude");
  const auto [iv, tv] = bracket(t.velocities, v, "velocity");
  for (std::size_t a = ia; a <= std::min(ia + 1, t.altitudes.size() - 1); ++a) {
    if (a > ia && ta == 0.0) continue;
    for (std::size_t b = iv; b <= std::min(iv + 1, t.velocities.size() - 1); ++b) {
      if (b > iv && tv == 0.0) continue;
      const auto& cell = t.at(a, b);
      const auto fu = cell.first_unstart();
      if (fu && cell.points[*fu].q_wall <= w) return false;
    }
  }
  return true;
}

/// Samples (altitude, velocity, command). A command above the table's max
/// thrust is redrawn at the same flight condition; a flight condition whose
/// engine is unstarted at w_bar is redrawn entirely.
inline std::vector<MonteCarloSample> monte_carlo_envelope(std::size_t n_samples, const EnvelopeRanges& ranges,
                                                          std::uint64_t seed, const EnvelopeTable& table,
                                                          const LoopConfig& base, const PlantFactory& make,
                                                          unsigned threads = 0) {
  return parallel_map(
      n_samples,
      [&](std::size_t i) {
        MonteCarloSample s;
        s.index = i;
        RandomStream rng(seed, i);
        int attempts = 0;
        auto draw_condition = [&] {
          s.altitude = rng.uniform(ranges.h_lo, ranges.h_hi);
          s.velocity = rng.uniform(ranges.v_lo, ranges.v_hi);
        };
        draw_condition();
        for (;;) {
          if (++attempts > max_feasibility_attempts)
            throw std::runtime_error("monte_carlo_envelope: sample " + std::to_string(i) +
                                     " found no feasible command in " + std::to_string(max_feasibility_attempts) +
                                     " attempts");
          if (!started_at(table, s.altitude, s.velocity, base.map.w_bar)) {
            ++s.rejections;
            ++s.rejected_start;
            draw_condition();
            continue;
          }
          s.command = rng.uniform(ranges.thrust_lo, ranges.thrust_hi);
          const Feasibility f = query_feasible(table, s.altitude, s.velocity, s.command);
          s.max_thrust = f.max_thrust;
          if (f.feasible) break;
          ++s.rejections;
          ++s.rejected_command;
        }
        LoopConfig cfg = base;
        cfg.bc = flight_condition(s.altitude, s.velocity);
        s.temperature = cfg.bc.inlet_temperature;
        s.pressure = cfg.bc.inlet_pressure;
        s.log = run_experiment(CommandProfile::constant(s.command), cfg, make);
        summarise(s);
        return s;
      },
      threads);
}

inline std::string monte_carlo_csv(const std::vector<MonteCarloSample>& v) {
  CsvWriter w({"index", "altitude", "velocity", "temperature", "pressure", "command", "max_thrust", "rejections",
               "rejected_command", "rejected_start", "final_relative_error", "K_P", "K_I", "settling_step"});
  for (const auto& s : v)
    w.row({static_cast<double>(s.index), s.altitude, s.velocity, s.temperature, s.pressure, s.command, s.max_thrust,
           static_cast<double>(s.rejections), static_cast<double>(s.rejected_command),
           static_cast<double>(s.rejected_start), s.final_relative_error, s.K_P, s.K_I,
           s.settling ? static_cast<double>(*s.settling) : -1.0});
  return w.str();
}

}  // namespace sfrj
