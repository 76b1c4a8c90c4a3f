// sfrj: command-line runner for the ramjet engine model, the thrust
// regulation experiments and the engagement scenario.
//
// Exit codes: 0 success, 1 bad command line, 2 bad or missing input,
// 3 solver failure, 4 acceptance gate missed.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sfrj/closed_loop.hpp"
#include "sfrj/engagement.hpp"
#include "sfrj/engine.hpp"
#include "sfrj/envelope.hpp"
#include "sfrj/io.hpp"

#ifndef SFRJ_VERSION
#define SFRJ_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace sfrj;

namespace {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_input = 2, exit_solver = 3, exit_gate = 4 };

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

// Options registered on a subcommand. Values left unset on the command line
// are taken from the config file when it has the key.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    CLI::Option* o = app_->add_option("--" + name, var, desc)->capture_default_str();
    if constexpr (is_vector<T>::value) o->delimiter(',');
    hook(name, o, var);
    return o;
  }
  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    CLI::Option* o = app_->add_flag("--" + name, var, desc);
    hook(name, o, var);
    return o;
  }

  void apply(const json& file) const {
    for (const auto& f : fill_) f(file);
  }
  json resolved() const {
    json j = json::object();
    for (const auto& f : dump_) f(j);
    return j;
  }

 private:
  template <class T>
  void hook(const std::string& name, CLI::Option* o, T& var) {
    std::string key = name;
    std::replace(key.begin(), key.end(), '-', '_');
    fill_.push_back([o, &var, key](const json& j) {
      if (o->count() > 0 || !j.contains(key)) return;
      try {
        var = j.at(key).get<T>();
      } catch (const json::exception& e) {
        throw InputError("config key '" + key + "': " + e.what());
      }
    });
    dump_.push_back([&var, key](json& j) { j[key] = var; });
  }

  CLI::App* app_;
  std::vector<std::function<void(const json&)>> fill_;
  std::vector<std::function<void(json&)>> dump_;
};

struct Common {
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out;
  std::string config;
};

std::string default_out_dir() {
  const char* env = std::getenv("SFRJ_OUT_DIR");
  return env && *env ? env : "sfrj-out";
}

void add_common(Options& o, Common& c) {
  c.out = default_out_dir();
  o.add("seed", c.seed, "RNG seed");
  o.add("threads", c.threads, "worker threads (0 = hardware threads)");
  o.add("out", c.out, "output directory (default from SFRJ_OUT_DIR)");
}

json load_config(const std::string& path, const std::string& sub) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw InputError("config file '" + path + "' not found");
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError("config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw InputError("config file '" + path + "': top level must be an object");
  // A section named after the subcommand overrides top-level keys.
  if (j.contains(sub) && j[sub].is_object()) {
    json merged = j;
    merged.erase(sub);
    for (auto& [k, v] : j[sub].items()) merged[k] = v;
    return merged;
  }
  return j;
}

// ---- shared settings --------------------------------------------------------

struct InletOptions {
  double velocity = 695.0;
  double pressure = 1e5;
  double temperature = 300.0;
  int cells = defaults::production_cells;
  std::string geometry;
  bool muscl = false;
  long max_iterations = 200000;

  void add(Options& o) {
    o.add("velocity", velocity, "inlet velocity, m/s");
    o.add("pressure", pressure, "inlet static pressure, Pa");
    o.add("temperature", temperature, "inlet static temperature, K");
    o.add("cells", cells, "finite-volume cells");
    o.add("geometry", geometry, "JSON file of geometry overrides");
    o.flag("muscl", muscl, "second-order MUSCL reconstruction");
    o.add("max-iterations", max_iterations, "steady-state iteration cap");
  }
  BoundaryCondition bc() const {
    try {
      return BoundaryCondition::make(velocity, pressure, temperature);
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  }
  SteadyOptions steady() const {
    SteadyOptions s;
    s.max_iterations = max_iterations;
    s.solver.muscl = muscl;
    return s;
  }
  EngineGeometry geo() const {
    GeometryOverrides o;
    if (!geometry.empty()) {
      if (!fs::exists(geometry)) throw InputError("geometry override file '" + geometry + "' not found");
      json j;
      try {
        j = json::parse(read_text(geometry));
      } catch (const json::parse_error& e) {
        throw InputError("geometry file '" + geometry + "': " + e.what());
      }
      auto opt = [&](const char* k, std::optional<double>& v) {
        if (j.contains(k)) v = j.at(k).get<double>();
      };
      opt("inlet_diameter", o.inlet_diameter);
      opt("inlet_length", o.inlet_length);
      opt("combustor_diameter", o.combustor_diameter);
      opt("combustor_length", o.combustor_length);
      opt("nozzle_length", o.nozzle_length);
      opt("throat_diameter", o.throat_diameter);
      opt("exit_diameter", o.exit_diameter);
      if (j.contains("scale")) o.scale = j.at("scale").get<double>();
    }
    try {
      return build_geometry(o);
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  }
};

struct LoopOptions {
  std::string command = "step";  // step | random | sequence
  std::string target = "calibrated-50pct";
  std::vector<double> levels;
  double lo = 300.0, hi = 900.0;
  int hold = 40;
  int steps = 275;
  int inner = 500;
  double p0 = 1e-6;
  double n1 = 1.0;
  double lambda = 1.0;
  double error_scale = 1.0;
  double u_max = 10.0;
  double w_bar = 10e6, k_w = 1e6, w_max = 16e6;
  std::string calibration = "calibrated";
  std::string backend = "solver";  // solver | lti | surrogate
  std::string map;
  double lag = 1.0;

  void add(Options& o, bool with_command = true) {
    if (with_command) {
      o.add("command", command, "step | random | sequence");
      o.add("target", target, "calibrated-<pct>pct or reference newtons");
      o.add("levels", levels, "reference newtons for --command sequence");
      o.add("lo", lo, "random command lower bound, reference N");
      o.add("hi", hi, "random command upper bound, reference N");
      o.add("hold", hold, "control steps per command level");
    }
    o.add("steps", steps, "control steps");
    o.add("inner", inner, "solver iterations per control step");
    o.add("p0", p0, "initial covariance scale");
    o.add("n1", n1, "target-model coefficient");
    o.add("lambda", lambda, "forgetting factor");
    o.add("error-scale", error_scale, "factor applied to z before the controller");
    o.add("u-max", u_max, "control limit");
    o.add("w-bar", w_bar, "nominal heat flux, W/m^2");
    o.add("k-w", k_w, "heat flux per unit control");
    o.add("w-max", w_max, "heat flux limit, W/m^2");
    o.add("calibration", calibration, "calibrated | raw");
    o.add("backend", backend, "solver | lti | surrogate");
    o.add("map", map, "performance map for the surrogate backend");
    o.add("lag", lag, "surrogate first-order lag coefficient in (0, 1]");
  }

  LoopConfig loop(const BoundaryCondition& bc) const {
    LoopConfig c;
    c.inner_iterations = inner;
    c.control_steps = steps;
    c.rcac.P0_scale = p0;
    c.rcac.N1 = n1;
    c.rcac.lambda = lambda;
    c.rcac.error_scale = error_scale;
    c.rcac.u_max = u_max;
    c.map.w_bar = w_bar;
    c.map.K_w = k_w;
    c.map.w_max = w_max;
    c.bc = bc;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
    if (calibration != "calibrated" && calibration != "raw")
      throw InputError("--calibration must be 'calibrated' or 'raw'");
    return c;
  }
};

std::shared_ptr<const PerformanceMap> load_map(const std::string& path) {
  if (!fs::exists(path))
    throw InputError("performance map '" + path + "' not found; run `sfrj envelope --performance-map` first");
  try {
    return std::make_shared<const PerformanceMap>(performance_map_from_json(json::parse(read_text(path))));
  } catch (const json::exception& e) {
    throw InputError("performance map '" + path + "': " + e.what());
  }
}

EnvelopeTable load_envelope(const std::string& path) {
  if (!fs::exists(path)) throw InputError("envelope table '" + path + "' not found; run `sfrj envelope` first");
  try {
    return envelope_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw InputError("envelope table '" + path + "': " + e.what());
  }
}

Calibration make_calibration(const LoopOptions& lo, const InletOptions& in, const LoopConfig& cfg, unsigned threads) {
  Calibration c;
  if (lo.calibration == "raw") {
    c.mode = "raw";
    return c;
  }
  try {
    return calibrate(build_grid(in.geo(), in.cells), cfg.bc, cfg.map, in.steady(), {}, threads);
  } catch (const DivergenceError& e) {
    throw SolverFailure(std::string("calibration: ") + e.what());
  }
}

/// Command level in newtons from a --target string.
double resolve_target(const std::string& target, const Calibration& cal) {
  const std::string pre = "calibrated-", post = "pct";
  if (target.rfind(pre, 0) == 0 && target.size() > pre.size() + post.size() &&
      target.compare(target.size() - post.size(), post.size(), post) == 0) {
    if (cal.mode == "raw") throw InputError("--target " + target + " needs --calibration calibrated");
    const std::string num = target.substr(pre.size(), target.size() - pre.size() - post.size());
    try {
      return cal.fraction(std::stod(num) / 100.0);
    } catch (const std::logic_error&) {
      throw InputError("bad --target '" + target + "'");
    }
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(target, &used);
    if (used != target.size()) throw std::invalid_argument(target);
    return cal.to_newtons(v);
  } catch (const std::logic_error&) {
    throw InputError("bad --target '" + target + "': expected calibrated-<pct>pct or a number");
  }
}

CommandProfile make_profile(const LoopOptions& lo, const Calibration& cal, std::uint64_t seed) {
  auto N = [&](double ref) { return cal.to_newtons(ref); };
  CommandProfile p;
  if (lo.command == "step") {
    p = CommandProfile::constant(resolve_target(lo.target, cal));
  } else if (lo.command == "random") {
    p = CommandProfile::random_steps(N(lo.lo), N(lo.hi), lo.hold, seed);
  } else if (lo.command == "sequence") {
    if (lo.levels.empty()) throw InputError("--command sequence needs --levels");
    std::vector<double> v;
    for (double x : lo.levels) v.push_back(N(x));
    p = CommandProfile::of_sequence(v, lo.hold);
  } else {
    throw InputError("--command must be step, random or sequence");
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return p;
}

PlantFactory make_factory(const LoopOptions& lo, const InletOptions& in, const LoopConfig& cfg, const fs::path& out) {
  if (lo.backend == "solver") return solver_backend(in.cells, in.steady());
  if (lo.backend == "lti") {
    try {
      return lti_backend(fit_lti(build_grid(in.geo(), in.cells), cfg.bc, cfg.map.w_bar, cfg.inner_iterations, 1e6,
                                 in.steady()));
    } catch (const std::runtime_error& e) {
      throw SolverFailure(std::string("lti fit: ") + e.what());
    }
  }
  if (lo.backend == "surrogate")
    return map_backend(load_map(lo.map.empty() ? (out / "performance_map.json").string() : lo.map), lo.lag);
  throw InputError("--backend must be solver, lti or surrogate");
}

bool segments_settled(const ExperimentLog& log, int hold) {
  const long n = static_cast<long>(log.rows.size());
  for (long s = 0; s < n; s += hold)
    if (!settling_step(log, 0.02, 10, s, std::min(n, s + hold))) return false;
  return true;
}

json loop_summary(const ExperimentLog& log) {
  json j = {{"status", log.status}, {"error", log.error}, {"steps", log.rows.size()}};
  if (!log.rows.empty()) {
    const auto& r = log.rows.back();
    j["final_relative_error"] = std::abs(r.z) / std::abs(r.r);
    j["K_P"] = r.K_P;
    j["K_I"] = r.K_I;
  }
  const auto s = settling_step(log);
  j["settling_step_2pct"] = s ? json(*s) : json(nullptr);
  const auto f = final_entry_step(log, 0.01);
  j["final_entry_step_1pct"] = f ? json(*f) : json(nullptr);
  j["peak_overshoot"] = peak_overshoot(log);
  return j;
}

class Run {
 public:
  Run(std::string name, const Common& c, const Options& o)
      : name_(std::move(name)), out_(c.out), t0_(std::chrono::steady_clock::now()) {
    manifest_ = {{"command", name_}, {"version", SFRJ_VERSION}, {"seed", c.seed},
                 {"threads", c.threads},  {"config", o.resolved()}};
  }
  const fs::path& out() const { return out_; }
  json& manifest() { return manifest_; }
  void write(const std::string& file, const std::string& text) {
    write_text(out_ / file, text);
    artifacts_.push_back(file);
  }
  int finish(int code) {
    manifest_["artifacts"] = artifacts_;
    manifest_["exit_code"] = code;
    manifest_["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    write_text(out_ / (name_ + "_manifest.json"), manifest_.dump(2) + "\n");
    return code;
  }

 private:
  std::string name_;
  fs::path out_;
  std::chrono::steady_clock::time_point t0_;
  json manifest_;
  std::vector<std::string> artifacts_;
};

std::string tag(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.6g", v);
  return b;
}

// ---- subcommands ------------------------------------------------------------

int cmd_open_loop(Run& run, const InletOptions& in, const Common& c, const std::string& sweep,
                  const std::vector<double>& flux_list, CLI::Option* flux_opt, double flux) {
  const EngineGeometry geo = in.geo();
  const BoundaryCondition bc = in.bc();
  const Grid grid = build_grid(geo, in.cells);
  const SteadyOptions opt = in.steady();

  if (sweep == "extended") {
    const SweepTable t = adaptive_heat_flux_sweep(grid, bc, SweepPlan{}, opt, {}, c.threads);
    run.write("thrust_table.csv", sweep_csv(t));
    json pts = json::array();
    for (const auto& p : t.points) pts.push_back(to_json(p));
    run.manifest()["points"] = pts;
    bool failed = false;
    for (const auto& p : t.points) {
      std::printf("q=%-12s thrust=%-12.6g %s%s\n", tag(p.q_wall).c_str(), p.thrust, p.unstarted ? "UNSTART" : "started",
                  p.failed ? " FAILED" : "");
      failed |= p.failed;
    }
    return run.finish(failed ? exit_solver : exit_ok);
  }

  std::vector<double> fluxes;
  if (sweep == "default")
    fluxes = defaults::sweep_fluxes;
  else if (!sweep.empty())
    throw InputError("--sweep must be 'default' or 'extended'");
  else if (!flux_list.empty())
    fluxes = flux_list;
  else if (flux_opt->count() > 0 || flux >= 0.0)
    fluxes = {flux};
  else
    throw InputError("choose --flux, --fluxes or --sweep");
  for (double q : fluxes)
    if (!(q >= 0.0)) throw InputError("heat flux must be non-negative");

  struct Outcome {
    std::optional<SteadyResult> result;
    std::string error;
  };
  auto outcomes = parallel_map(
      fluxes.size(),
      [&](std::size_t i) {
        Outcome o;
        try {
          o.result = run_to_steady(grid, bc, fluxes[i], opt);
        } catch (const DivergenceError& e) {
          o.error = e.what();
        }
        return o;
      },
      c.threads);

  CsvWriter table({"q_wall", "thrust", "unstarted", "converged", "iterations", "mass_imbalance"});
  json points = json::array();
  bool failed = false;
  for (std::size_t i = 0; i < fluxes.size(); ++i) {
    const auto& o = outcomes[i];
    const std::string t = tag(fluxes[i]);
    if (!o.result) {
      failed = true;
      points.push_back({{"q_wall", fluxes[i]}, {"error", o.error}});
      std::printf("q=%-12s FAILED: %s\n", t.c_str(), o.error.c_str());
      continue;
    }
    const SteadyResult& r = *o.result;
    run.write("field_q" + t + ".csv", field_csv(grid, r.field));
    run.write("residuals_q" + t + ".csv", residual_csv(r.history));
    json st = json::array();
    for (const auto& s : isentropic_state_analysis(r.field, grid))
      st.push_back({{"name", s.name},
                    {"x", s.x},
                    {"mach", s.state.M},
                    {"area_ratio", s.ratios.A_over_Astar},
                    {"p_over_pt", s.ratios.p_over_pt},
                    {"supersonic", s.supersonic}});
    points.push_back({{"q_wall", fluxes[i]},
                      {"thrust", r.thrust},
                      {"unstarted", r.unstarted},
                      {"converged", r.converged},
                      {"iterations", r.iterations},
                      {"mass_imbalance", r.mass_imbalance},
                      {"inlet_pressure_ratio", r.unstart.inlet_pressure_ratio},
                      {"stations", st}});
    table.row({fluxes[i], r.thrust, r.unstarted ? 1.0 : 0.0, r.converged ? 1.0 : 0.0, static_cast<double>(r.iterations),
               r.mass_imbalance});
    if (!r.converged) failed = true;
    std::printf("q=%-12s thrust=%-12.6g %s %s iterations=%ld\n", t.c_str(), r.thrust,
                r.unstarted ? "UNSTART" : "started", r.converged ? "converged" : "NOT-CONVERGED", r.iterations);
  }
  run.write("thrust_table.csv", table.str());
  run.manifest()["points"] = points;
  return run.finish(failed ? exit_solver : exit_ok);
}

int cmd_convergence(Run& run, const InletOptions& in, const Common& c, const std::vector<int>& counts,
                    const std::vector<double>& fluxes, double threshold) {
  GridStudy g;
  try {
    g = grid_convergence_study(in.geo(), in.bc(), counts, fluxes, in.steady(), {}, c.threads, threshold);
  } catch (const DivergenceError& e) {
    throw SolverFailure(e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  run.write("grid_study.csv", grid_study_csv(g));
  for (std::size_t i = 0; i < g.max_relative_change.size(); ++i)
    std::printf("%d -> %d cells: max relative thrust change %.4g\n", g.counts[i], g.counts[i + 1],
                g.max_relative_change[i]);
  run.manifest()["max_relative_change"] = g.max_relative_change;
  run.manifest()["converged_count"] = g.converged_count ? json(*g.converged_count) : json(nullptr);
  if (!g.converged_count) {
    std::printf("no successive pair within %.3g\n", threshold);
    return run.finish(exit_gate);
  }
  std::printf("grid-converged at %d cells\n", *g.converged_count);
  return run.finish(exit_ok);
}

int cmd_envelope(Run& run, const InletOptions& in, const Common& c, const std::vector<double>& alts,
                 const std::vector<double>& vels, double flux_cap, bool with_map) {
  EnvelopeSpec spec;
  spec.altitudes = alts;
  spec.velocities = vels;
  spec.cells = in.cells;
  spec.flux_cap = flux_cap;
  EnvelopeTable t;
  try {
    t = build_envelope(spec, in.geo(), in.steady(), {}, c.threads);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  } catch (const std::out_of_range& e) {
    throw InputError(e.what());
  }
  run.write("envelope.json", to_json(t).dump(1) + "\n");
  run.write("envelope.csv", envelope_csv(t));
  std::printf("max pre-unstart thrust [N], heat flux <= %s W/m^2\n%10s", tag(flux_cap).c_str(), "h \\ v");
  for (double v : t.velocities) std::printf(" %10.0f", v);
  std::printf("\n");
  bool failed = false;
  for (std::size_t a = 0; a < t.altitudes.size(); ++a) {
    std::printf("%10.0f", t.altitudes[a]);
    for (std::size_t v = 0; v < t.velocities.size(); ++v) {
      std::printf(" %10.1f", t.max_thrust(a, v));
      for (const auto& p : t.at(a, v).points) failed |= p.failed;
    }
    std::printf("\n");
  }
  if (with_map) {
    const PerformanceMap m = build_performance_map(PerformanceMapSpec{}, in.geo(), in.steady(), {}, c.threads);
    run.write("performance_map.json", to_json(m).dump(1) + "\n");
  }
  return run.finish(failed ? exit_solver : exit_ok);
}

int cmd_regulate(Run& run, const InletOptions& in, const LoopOptions& lo, const Common& c) {
  const LoopConfig cfg = lo.loop(in.bc());
  const Calibration cal = make_calibration(lo, in, cfg, c.threads);
  const CommandProfile profile = make_profile(lo, cal, c.seed);
  const ExperimentLog log = run_experiment(profile, cfg, make_factory(lo, in, cfg, run.out()));
  run.write("regulate.csv", log_csv(log));
  run.manifest()["calibration"] = to_json(cal);
  run.manifest()["profile"] = to_json(profile);
  run.manifest()["summary"] = loop_summary(log);
  const auto s = settling_step(log);
  std::printf("status=%s steps=%zu settling(2%%)=%s\n", log.status.c_str(), log.rows.size(),
              s ? std::to_string(*s).c_str() : "none");
  if (log.aborted()) {
    std::printf("aborted: %s\n", log.error.c_str());
    return run.finish(exit_solver);
  }
  const bool ok = profile.kind == CommandProfile::Kind::constant ? final_entry_step(log, 0.01).has_value()
                                                                 : segments_settled(log, profile.hold);
  return run.finish(ok ? exit_ok : exit_gate);
}

int cmd_sweep(Run& run, const InletOptions& in, const LoopOptions& lo, const Common& c, const std::vector<double>& ns,
              const std::vector<double>& ps) {
  const LoopConfig cfg = lo.loop(in.bc());
  const Calibration cal = make_calibration(lo, in, cfg, c.threads);
  const CommandProfile profile = make_profile(lo, cal, c.seed);
  if (ns.empty() || ps.empty()) throw InputError("--n and --p must be non-empty");
  const auto cells = hyperparameter_sweep(ns, ps, profile, cfg, make_factory(lo, in, cfg, run.out()), c.threads);
  CsvWriter summary({"N1", "p", "settling_step", "peak_overshoot", "aborted"});
  for (const auto& cell : cells) {
    run.write("sweep_N1_" + tag(cell.N1) + "_p_" + tag(cell.p) + ".csv", log_csv(cell.log));
    summary.row({cell.N1, cell.p, cell.settling ? static_cast<double>(*cell.settling) : -1.0, cell.overshoot,
                 cell.log.aborted() ? 1.0 : 0.0});
    std::printf("N1=%-6s p=%-8s settling=%-5s overshoot=%.4f%s\n", tag(cell.N1).c_str(), tag(cell.p).c_str(),
                cell.settling ? std::to_string(*cell.settling).c_str() : "none", cell.overshoot,
                cell.log.aborted() ? " ABORTED" : "");
  }
  run.write("sweep_summary.csv", summary.str());
  const OrderingReport rep = check_orderings(cells);
  for (const auto& v : rep.violations) std::printf("ordering: %s\n", v.c_str());
  run.manifest()["calibration"] = to_json(cal);
  run.manifest()["profile"] = to_json(profile);
  run.manifest()["ordering"] = {
      {"settling_ok", rep.settling_ok}, {"overshoot_ok", rep.overshoot_ok}, {"violations", rep.violations}};
  run.write("ordering_report.json", run.manifest()["ordering"].dump(2) + "\n");
  return run.finish(rep.settling_ok && rep.overshoot_ok ? exit_ok : exit_gate);
}

struct McOptions {
  std::string mode = "inlet";
  std::size_t samples = 15;
  bool no_feasibility = false;
  std::string table;
  InletRanges inlet;
  EnvelopeRanges envelope;
};

int cmd_montecarlo(Run& run, const InletOptions& in, const LoopOptions& lo, const Common& c, const McOptions& mc) {
  LoopConfig cfg = lo.loop(in.bc());
  std::vector<MonteCarloSample> res;
  Calibration cal;
  if (mc.mode == "inlet") {
    std::shared_ptr<const PerformanceMap> map;
    if (!mc.no_feasibility) map = load_map(mc.table.empty() ? (run.out() / "performance_map.json").string() : mc.table);
    try {
      mc.inlet.validate();
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
    cal = make_calibration(lo, in, cfg, c.threads);
    const double command = resolve_target(lo.target, cal);
    res = monte_carlo_inlet(mc.samples, mc.inlet, command, c.seed, cfg, make_factory(lo, in, cfg, run.out()),
                            map ? map_feasibility(map, cfg.map) : FeasibilityOracle{}, c.threads);
  } else if (mc.mode == "envelope") {
    if (mc.no_feasibility) throw InputError("--mode envelope always checks feasibility");
    const EnvelopeTable table = load_envelope(mc.table.empty() ? (run.out() / "envelope.json").string() : mc.table);
    cal = make_calibration(lo, in, cfg, c.threads);
    EnvelopeRanges r = mc.envelope;
    r.thrust_lo = cal.to_newtons(r.thrust_lo);
    r.thrust_hi = cal.to_newtons(r.thrust_hi);
    res = monte_carlo_envelope(mc.samples, r, c.seed, table, cfg, make_factory(lo, in, cfg, run.out()), c.threads);
  } else {
    throw InputError("--mode must be 'inlet' or 'envelope'");
  }
  bool all = true;
  long rejections = 0;
  for (const auto& s : res) {
    run.write("mc_" + std::to_string(s.index) + ".csv", log_csv(s.log));
    const bool ok = !s.log.aborted() && s.final_relative_error < 0.02 && s.settling.has_value();
    all &= ok;
    rejections += s.rejections;
    std::printf("sample %2zu v=%7.1f T=%6.1f p=%8.0f r=%8.2f rejected=%d |z|/r=%.2e K_P=%.4g K_I=%.4g %s\n", s.index,
                s.velocity, s.temperature, s.pressure, s.command, s.rejections, s.final_relative_error, s.K_P, s.K_I,
                ok ? "settled" : "NOT-SETTLED");
  }
  run.write("montecarlo.csv", monte_carlo_csv(res));
  run.manifest()["calibration"] = to_json(cal);
  run.manifest()["total_rejections"] = rejections;
  return run.finish(all ? exit_ok : exit_gate);
}

int cmd_engage(Run& run, const LoopOptions& lo, const std::string& preset, const std::string& map_path, double t_max,
               double transient) {
  if (preset != "baseline") throw InputError("--preset must be 'baseline'");
  EngagementConfig cfg = EngagementConfig::baseline();
  cfg.rcac.P0_scale = lo.p0;
  cfg.rcac.N1 = lo.n1;
  cfg.rcac.lambda = lo.lambda;
  cfg.rcac.error_scale = lo.error_scale;
  cfg.rcac.u_max = lo.u_max;
  cfg.inner_iterations = lo.inner;
  cfg.surrogate_lag = lo.lag;
  cfg.t_max = t_max;
  if (lo.backend == "surrogate")
    cfg.backend = EngineBackend::surrogate;
  else if (lo.backend == "solver")
    cfg.backend = EngineBackend::solver;
  else
    throw InputError("engage --backend must be surrogate or solver");
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  const auto map = load_map(map_path.empty() ? (run.out() / "performance_map.json").string() : map_path);
  const EngagementLog log = run_engagement(cfg, map);
  run.write("engagement.csv", engagement_csv(log));
  const double dev = thrust_deviation_after(log, transient);
  run.manifest()["engagement"] = engagement_manifest(log);
  run.manifest()["thrust_deviation_after_transient"] = dev;
  std::printf("status=%s miss=%.3f m t=%.3f s thrust deviation after %.2f s: %.2f%%\n", log.status.c_str(),
              log.miss_distance, log.intercept_time, transient, 100.0 * dev);
  if (log.status == "aborted") {
    std::printf("aborted: %s\n", log.error.c_str());
    return run.finish(exit_solver);
  }
  return run.finish(log.intercepted() ? exit_ok : exit_gate);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Solid-fuel ramjet thrust regulation experiments"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    std::unique_ptr<Options> opts;
    Common common;
    InletOptions inlet;
    LoopOptions loop;
  };
  auto make = [&](const char* name, const char* desc) {
    auto s = std::make_unique<Sub>();
    s->app = app.add_subcommand(name, desc);
    s->opts = std::make_unique<Options>(s->app);
    s->app->add_option("--config", s->common.config, "JSON config file; flags take precedence");
    add_common(*s->opts, s->common);
    s->inlet.add(*s->opts);
    return s;
  };

  auto ol = make("open-loop", "steady solves and heat-flux sweeps");
  double flux = -1.0;
  std::vector<double> fluxes;
  std::string sweep;
  CLI::Option* flux_opt = ol->opts->add("flux", flux, "single wall heat flux, W/m^2");
  ol->opts->add("fluxes", fluxes, "list of heat fluxes, W/m^2");
  ol->opts->add("sweep", sweep, "default (the 8-point set) or extended (adds the search for unstart)");

  auto cv = make("convergence", "grid-convergence study");
  std::vector<int> counts = defaults::study_counts;
  std::vector<double> cv_fluxes = defaults::sweep_fluxes;
  double threshold = 0.01;
  cv->opts->add("counts", counts, "cell counts");
  cv->opts->add("fluxes", cv_fluxes, "heat fluxes, W/m^2");
  cv->opts->add("threshold", threshold, "relative thrust change accepted between refinements");

  auto ev = make("envelope", "thrust/unstart lookup table over altitude and velocity");
  EnvelopeSpec es;
  std::vector<double> alts = es.altitudes, vels = es.velocities;
  double flux_cap = es.flux_cap;
  bool with_map = false;
  ev->opts->add("altitudes", alts, "altitudes, m");
  ev->opts->add("velocities", vels, "velocities, m/s");
  ev->opts->add("flux-cap", flux_cap, "heat-flux authority for max thrust, W/m^2");
  ev->opts->flag("performance-map", with_map, "also build the normalised performance map");

  auto rg = make("regulate", "closed-loop thrust regulation");
  rg->loop.add(*rg->opts);

  auto sw = make("sweep", "hyperparameter grid");
  sw->loop.add(*sw->opts);
  std::vector<double> ns{0.1, 1.0, 10.0}, ps{1e-5, 1e-6, 1e-7, 1e-8};
  sw->opts->add("n", ns, "N1 values");
  sw->opts->add("p", ps, "P0 scales");

  auto mcs = make("montecarlo", "randomised inlet or flight conditions");
  mcs->loop.add(*mcs->opts);
  McOptions mc;
  mcs->opts->add("mode", mc.mode, "inlet | envelope");
  mcs->opts->add("samples", mc.samples, "number of samples");
  mcs->opts->flag("no-feasibility", mc.no_feasibility, "skip the feasibility check (inlet mode)");
  mcs->opts->add("table", mc.table, "performance map (inlet) or envelope table (envelope)");
  mcs->opts->add("v-lo", mc.inlet.v_lo, "velocity lower bound, m/s");
  mcs->opts->add("v-hi", mc.inlet.v_hi, "velocity upper bound, m/s");
  mcs->opts->add("t-lo", mc.inlet.T_lo, "temperature lower bound, K");
  mcs->opts->add("t-hi", mc.inlet.T_hi, "temperature upper bound, K");
  mcs->opts->add("p-lo", mc.inlet.p_lo, "pressure lower bound, Pa");
  mcs->opts->add("p-hi", mc.inlet.p_hi, "pressure upper bound, Pa");
  mcs->opts->add("h-lo", mc.envelope.h_lo, "altitude lower bound, m");
  mcs->opts->add("h-hi", mc.envelope.h_hi, "altitude upper bound, m");
  mcs->opts->add("thrust-lo", mc.envelope.thrust_lo, "command lower bound, reference N");
  mcs->opts->add("thrust-hi", mc.envelope.thrust_hi, "command upper bound, reference N");

  auto en = make("engage", "pursuit engagement with the regulated engine");
  en->loop.backend = "surrogate";
  en->loop.add(*en->opts, false);
  std::string preset = "baseline";
  double t_max = 30.0, transient = 0.5;
  en->opts->add("preset", preset, "initial conditions preset");
  en->opts->add("t-max", t_max, "time limit, s");
  en->opts->add("transient", transient, "time excluded from the thrust-hold check, s");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? exit_ok : exit_usage;
  }

  std::vector<Sub*> subs{ol.get(), cv.get(), ev.get(), rg.get(), sw.get(), mcs.get(), en.get()};
  Sub* s = nullptr;
  for (Sub* x : subs)
    if (x->app->parsed()) s = x;
  const std::string name = s->app->get_name();
  try {
    s->opts->apply(load_config(s->common.config, name));
    Run run(name, s->common, *s->opts);
    // Inputs are validated before anything is written.
    s->inlet.geo();
    s->inlet.bc();
    fs::create_directories(run.out());
    if (name == "open-loop") return cmd_open_loop(run, s->inlet, s->common, sweep, fluxes, flux_opt, flux);
    if (name == "convergence") return cmd_convergence(run, s->inlet, s->common, counts, cv_fluxes, threshold);
    if (name == "envelope") return cmd_envelope(run, s->inlet, s->common, alts, vels, flux_cap, with_map);
    if (name == "regulate") return cmd_regulate(run, s->inlet, s->loop, s->common);
    if (name == "sweep") return cmd_sweep(run, s->inlet, s->loop, s->common, ns, ps);
    if (name == "montecarlo") return cmd_montecarlo(run, s->inlet, s->loop, s->common, mc);
    if (name == "engage") return cmd_engage(run, s->loop, preset, s->loop.map, t_max, transient);
  } catch (const InputError& e) {
    std::fprintf(stderr, "sfrj %s: %s\n", name.c_str(), e.what());
    return exit_input;
  } catch (const SolverFailure& e) {
    std::fprintf(stderr, "sfrj %s: solver failure: %s\n", name.c_str(), e.what());
    return exit_solver;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "sfrj %s: solver failure: %s\n", name.c_str(), e.what());
    return exit_solver;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sfrj %s: %s\n", name.c_str(), e.what());
    return exit_solver;
  }
  return exit_usage;
}
