// Planar pursuit of a constant-thrust evader by a ramjet missile: PN
// guidance, three-loop pitch autopilot, point-mass plus short-period
// airframe, and an RCAC-regulated engine fed the missile's flight condition.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfrj/atmosphere.hpp"
#include "sfrj/closed_loop.hpp"
#include "sfrj/envelope.hpp"
#include "sfrj/io.hpp"
#include "sfrj/rcac.hpp"

namespace sfrj {

inline constexpr double standard_gravity = 9.80665;
inline constexpr double deg = 3.14159265358979323846 / 180.0;

// ---- Airframe ---------------------------------------------------------------

struct AeroModel {
  double d_ref = 0.3;  // m; reference area is the disc of this diameter
  double CL_alpha = 10.0;
  double CD0 = 0.94;
  double k_induced = 0.1;
  double Cm_alpha = -4.0;
  double Cm_delta = 3.0;   // positive fin deflection pitches the nose up
  double Cm_q = -100.0;    // per unit q d / (2 V)
  double inertia = 153.0;  // kg m^2, pitch

  double S() const { return 0.25 * 3.14159265358979323846 * d_ref * d_ref; }
};

/// x horizontal, h up, gamma the flight-path angle, alpha the angle of
/// attack, q the pitch rate.
struct VehicleState {
  double x = 0.0, h = 0.0;
  double V = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
  double q = 0.0;
  double mass = 0.0;

  void validate() const {
    if (!(V > 0.0) || !std::isfinite(V)) throw std::domain_error("vehicle speed must be positive, got " + fmt(V));
    if (!(mass > 0.0)) throw std::domain_error("vehicle mass must be positive");
  }
};

struct AeroForces {
  double qbar = 0.0;
  double lift = 0.0;
  double drag = 0.0;
  double moment = 0.0;
};

inline AeroForces aero_forces(const VehicleState& s, double delta, const AeroModel& a) {
  AeroForces f;
  f.qbar = 0.5 * isa(s.h).rho * s.V * s.V;
  const double CL = a.CL_alpha * s.alpha;
  f.lift = f.qbar * a.S() * CL;
  f.drag = f.qbar * a.S() * (a.CD0 + a.k_induced * CL * CL);
  f.moment = f.qbar * a.S() * a.d_ref *
             (a.Cm_alpha * s.alpha + a.Cm_delta * delta + a.Cm_q * s.q * a.d_ref / (2.0 * s.V));
  return f;
}

/// Specific force normal to the velocity, what an accelerometer reads.
inline double normal_acceleration(const VehicleState& s, double thrust, const AeroModel& a) {
  return (aero_forces(s, 0.0, a).lift + thrust * std::sin(s.alpha)) / s.mass;
}

namespace detail {
struct Deriv {
  double x, h, V, gamma, alpha, q;
};

inline Deriv airframe_rates(const VehicleState& s, double delta, double thrust, const AeroModel& a) {
  s.validate();
  const AeroForces f = aero_forces(s, delta, a);
  const double g = standard_gravity;
  Deriv d;
  d.x = s.V * std::cos(s.gamma);
  d.h = s.V * std::sin(s.gamma);
  d.V = (thrust * std::cos(s.alpha) - f.drag) / s.mass - g * std::sin(s.gamma);
  d.gamma = (thrust * std::sin(s.alpha) + f.lift) / (s.mass * s.V) - g * std::cos(s.gamma) / s.V;
  d.alpha = s.q - d.gamma;
  d.q = a.inertia > 0.0 ? f.moment / a.inertia : 0.0;
  return d;
}

inline VehicleState offset(VehicleState s, const Deriv& d, double h) {
  s.x += h * d.x;
  s.h += h * d.h;
  s.V += h * d.V;
  s.gamma += h * d.gamma;
  s.alpha += h * d.alpha;
  s.q += h * d.q;
  return s;
}
}  // namespace detail

/// One RK4 step with fin deflection and thrust held.
inline VehicleState step_dynamics(const VehicleState& s, double delta, double thrust, double dt, const AeroModel& a) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_dynamics: dt must be positive");
  using detail::airframe_rates;
  using detail::offset;
  const auto k1 = airframe_rates(s, delta, thrust, a);
  const auto k2 = airframe_rates(offset(s, k1, 0.5 * dt), delta, thrust, a);
  const auto k3 = airframe_rates(offset(s, k2, 0.5 * dt), delta, thrust, a);
  const auto k4 = airframe_rates(offset(s, k3, dt), delta, thrust, a);
  detail::Deriv d;
  d.x = (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x) / 6.0;
  d.h = (k1.h + 2.0 * k2.h + 2.0 * k3.h + k4.h) / 6.0;
  d.V = (k1.V + 2.0 * k2.V + 2.0 * k3.V + k4.V) / 6.0;
  d.gamma = (k1.gamma + 2.0 * k2.gamma + 2.0 * k3.gamma + k4.gamma) / 6.0;
  d.alpha = (k1.alpha + 2.0 * k2.alpha + 2.0 * k3.alpha + k4.alpha) / 6.0;
  d.q = (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q) / 6.0;
  VehicleState n = offset(s, d, dt);
  if (!(n.V > 0.0) || !std::isfinite(n.V))
    throw std::runtime_error("step_dynamics: non-physical speed " + fmt(n.V));
  return n;
}

struct Trim {
  double alpha = 0.0;
  double delta = 0.0;
  double thrust = 0.0;  // equals drag
};

/// Level unaccelerated flight: lift plus thrust component carries the
/// weight, thrust balances drag, no pitching moment.
inline Trim trim_level(const AeroModel& a, double mass, double h, double V) {
  const double qS = 0.5 * isa(h).rho * V * V * a.S();
  Trim t;
  for (int i = 0; i < 100; ++i) {
    const double alpha = (mass * standard_gravity - t.thrust * std::sin(t.alpha)) / (qS * a.CL_alpha);
    const double CL = a.CL_alpha * alpha;
    t.thrust = qS * (a.CD0 + a.k_induced * CL * CL) / std::cos(alpha);
    t.alpha = alpha;
  }
  t.delta = -a.Cm_alpha * t.alpha / a.Cm_delta;
  return t;
}

/// Zero-lift drag coefficient at which `thrust` trims level flight at (h, V).
inline double trim_drag_coefficient(const AeroModel& a, double mass, double h, double V, double thrust) {
  const double qS = 0.5 * isa(h).rho * V * V * a.S();
  double alpha = 0.0;
  for (int i = 0; i < 100; ++i) alpha = (mass * standard_gravity - thrust * std::sin(alpha)) / (qS * a.CL_alpha);
  const double CL = a.CL_alpha * alpha;
  const double cd0 = thrust * std::cos(alpha) / qS - a.k_induced * CL * CL;
  if (!(cd0 > 0.0)) throw std::domain_error("trim_drag_coefficient: thrust too small to trim");
  return cd0;
}

// ---- Evader -----------------------------------------------------------------

struct EvaderState {
  double x = 0.0, h = 0.0;
  double V = 0.0;
  double gamma = 0.0;  // held
  double mass = 10000.0;
  double thrust = 76310.0;
  double drag_area = 3.0;  // S C_D, m^2
};

/// Constant-thrust straight flight; only the speed evolves.
inline EvaderState step_evader(const EvaderState& e, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_evader: dt must be positive");
  auto accel = [&](double h, double V) {
    return (e.thrust - 0.5 * isa(h).rho * V * V * e.drag_area) / e.mass - standard_gravity * std::sin(e.gamma);
  };
  const double c = std::cos(e.gamma), s = std::sin(e.gamma);
  const double v1 = e.V, a1 = accel(e.h, v1);
  const double v2 = e.V + 0.5 * dt * a1, a2 = accel(e.h + 0.5 * dt * v1 * s, v2);
  const double v3 = e.V + 0.5 * dt * a2, a3 = accel(e.h + 0.5 * dt * v2 * s, v3);
  const double v4 = e.V + dt * a3, a4 = accel(e.h + dt * v3 * s, v4);
  EvaderState n = e;
  const double vbar = (v1 + 2.0 * v2 + 2.0 * v3 + v4) / 6.0;
  n.x += dt * vbar * c;
  n.h += dt * vbar * s;
  n.V += dt * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0;
  if (!(n.V > 0.0)) throw std::runtime_error("step_evader: non-physical speed");
  return n;
}

// ---- Guidance ---------------------------------------------------------------

struct LineOfSight {
  double R = 0.0;
  double beta = 0.0;      // rad, from the horizontal
  double R_dot = 0.0;
  double beta_dot = 0.0;
};

inline LineOfSight line_of_sight(double xp, double hp, double vxp, double vhp, double xe, double he, double vxe,
                                 double vhe) {
  const double dx = xe - xp, dh = he - hp;
  const double dvx = vxe - vxp, dvh = vhe - vhp;
  LineOfSight l;
  l.R = std::hypot(dx, dh);
  l.beta = std::atan2(dh, dx);
  if (l.R > 0.0) {
    l.R_dot = (dx * dvx + dh * dvh) / l.R;
    l.beta_dot = (dx * dvh - dh * dvx) / (l.R * l.R);
  }
  return l;
}

inline LineOfSight line_of_sight(const VehicleState& p, const EvaderState& e) {
  return line_of_sight(p.x, p.h, p.V * std::cos(p.gamma), p.V * std::sin(p.gamma), e.x, e.h, e.V * std::cos(e.gamma),
                       e.V * std::sin(e.gamma));
}

struct PnConfig {
  double N = 4.0;
  double g_limit = 20.0;  // in units of standard gravity
};

/// a = N' V_c beta_dot with V_c = -R_dot, saturated at the g limit.
inline double guidance(const LineOfSight& l, const PnConfig& c = {}) {
  if (!(l.R > 0.0)) throw std::invalid_argument("guidance: range must be positive");
  const double a = c.N * (-l.R_dot) * l.beta_dot;
  const double lim = c.g_limit * standard_gravity;
  return std::clamp(a, -lim, lim);
}

// ---- Autopilot --------------------------------------------------------------

/// Short-period derivatives linearised about a flight condition.
struct ShortPeriod {
  double V = 0.0;
  double Z_alpha = 0.0;  // 1/s
  double M_alpha = 0.0;  // 1/s^2
  double M_q = 0.0;      // 1/s
  double M_delta = 0.0;  // 1/s^2
};

inline ShortPeriod linearize(const AeroModel& a, const VehicleState& s, double thrust) {
  const double qS = 0.5 * isa(s.h).rho * s.V * s.V * a.S();
  ShortPeriod sp;
  sp.V = s.V;
  sp.Z_alpha = (qS * a.CL_alpha + thrust) / (s.mass * s.V);
  sp.M_alpha = qS * a.d_ref * a.Cm_alpha / a.inertia;
  sp.M_q = qS * a.d_ref * a.Cm_q * a.d_ref / (2.0 * s.V) / a.inertia;
  sp.M_delta = qS * a.d_ref * a.Cm_delta / a.inertia;
  return sp;
}

struct AutopilotGains {
  double K_A = 0.0;  // rad/s per m/s^2
  double K_I = 0.0;  // rad/s^2 per m/s^2
  double K_R = 0.0;  // rad per rad/s
};

struct PolePlacement {
  double omega = 20.0;  // rad/s
  double zeta = 0.7;
  double real_pole = 10.0;  // rad/s
};

/// Gains putting the closed loop of
///   alpha' = q - Z_a alpha, q' = M_a alpha + M_q q + M_d delta, a_z = V Z_a alpha,
///   delta = K_R (K_A (a_c - a_z) + xi - q), xi' = K_I (a_c - a_z)
/// at (s + p)(s^2 + 2 zeta omega s + omega^2).
inline AutopilotGains place_poles(const ShortPeriod& sp, const PolePlacement& pp = {}) {
  const double w = pp.omega, z = pp.zeta, p = pp.real_pole;
  const double c2 = p + 2.0 * z * w, c1 = w * w + 2.0 * z * w * p, c0 = p * w * w;
  const double b = sp.M_delta * sp.V * sp.Z_alpha;
  if (sp.M_delta == 0.0 || b == 0.0) throw std::domain_error("place_poles: airframe has no control authority");
  const double g1 = (c2 - sp.Z_alpha + sp.M_q) / sp.M_delta;
  const double g2 = (c1 - sp.Z_alpha * (sp.M_delta * g1 - sp.M_q) + sp.M_alpha) / b;
  const double g3 = c0 / b;
  if (!(g1 > 0.0)) throw std::domain_error("place_poles: requested poles need a negative rate gain");
  return {g2 / g1, g3 / g1, g1};
}

/// Fin deflection from the three loops, saturated at +-limit.
inline double autopilot(double a_c, double a_z, double omega, double xi, const AutopilotGains& g,
                        double limit = 30.0 * deg) {
  return std::clamp(g.K_R * (g.K_A * (a_c - a_z) + xi - omega), -limit, limit);
}

class Autopilot {
 public:
  explicit Autopilot(AutopilotGains g, double limit = 30.0 * deg) : g_(g), limit_(limit) {}

  /// Starts the integrator so the output is delta at rate omega with zero error.
  void initialize(double delta, double omega) { xi_ = delta / g_.K_R + omega; }

  double step(double a_c, double a_z, double omega, double dt) {
    const double d = autopilot(a_c, a_z, omega, xi_, g_, limit_);
    // No integration while the fin is on its stop.
    if (std::abs(d) < limit_) xi_ += g_.K_I * (a_c - a_z) * dt;
    return d;
  }
  double integrator() const { return xi_; }
  const AutopilotGains& gains() const { return g_; }

 private:
  AutopilotGains g_;
  double limit_;
  double xi_ = 0.0;
};

// ---- Scaled engine ----------------------------------------------------------

/// Engine sized for the engagement command: geometric scale so the command
/// is `fraction` of the max pre-unstart thrust at the launch condition, and
/// a nominal heat flux that produces the command there.
struct ScaledEngine {
  double scale = 1.0;
  MapConfig map;
  double max_thrust = 0.0;
  double unstart_flux = std::numeric_limits<double>::infinity();
  double error_scale = 1.0;  // multiplies the loop's own error scale
};

inline json to_json(const ScaledEngine& e) {
  return {{"scale", e.scale},
          {"w_bar", e.map.w_bar},
          {"K_w", e.map.K_w},
          {"w_max", e.map.w_max},
          {"max_thrust", e.max_thrust},
          {"unstart_flux", std::isfinite(e.unstart_flux) ? json(e.unstart_flux) : json(nullptr)},
          {"error_scale", e.error_scale},
          {"note", "engine geometry scaled from the static-test engine so the command sits mid-envelope"}};
}

inline ScaledEngine size_engine(const PerformanceMap& m, const BoundaryCondition& bc, double command,
                                double fraction = 0.5, bool normalize_error = true) {
  if (!(command > 0.0)) throw std::invalid_argument("size_engine: command must be positive");
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("size_engine: fraction must lie in (0, 1)");
  const double u = bc.inlet_velocity, p = bc.inlet_pressure, T = bc.inlet_temperature;
  const double tau1 = m.max_thrust(u, p, T, std::numeric_limits<double>::infinity(), 1.0);
  if (!(tau1 > 0.0)) throw std::domain_error("size_engine: no positive thrust at the launch condition");
  ScaledEngine e;
  e.scale = std::sqrt(command / (fraction * tau1));
  e.max_thrust = tau1 * e.scale * e.scale;

  // Largest flux in the table at this Mach.
  const double a = m.gas.sound_speed(T);
  double q_top = std::numeric_limits<double>::infinity();
  for (const auto& r : m.rows) q_top = std::min(q_top, r.qhat.back());
  double hi = q_top * p * a;
  if (m.evaluate(u, p, T, hi, e.scale).unstarted) {
    double lo = 0.0;
    for (int i = 0; i < 200 && hi - lo > 1e-9 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (m.evaluate(u, p, T, mid, e.scale).unstarted ? hi : lo) = mid;
    }
    e.unstart_flux = hi;
  }
  const double w_top = std::isfinite(e.unstart_flux) ? e.unstart_flux : hi;
  double lo = 0.0, up = w_top;
  if (m.evaluate(u, p, T, lo, e.scale).thrust >= command)
    throw std::domain_error("size_engine: command reached without heat addition");
  for (int i = 0; i < 200 && up - lo > 1e-9 * up; ++i) {
    const double mid = 0.5 * (lo + up);
    const auto ev = m.evaluate(u, p, T, mid, e.scale);
    (!ev.unstarted && ev.thrust < command ? lo : up) = mid;
  }
  e.map.w_bar = 0.5 * (lo + up);
  // Same relative authority as the static experiments: K_w = w_bar / 10,
  // w_max = 1.6 w_bar, kept below the launch-condition unstart flux.
  e.map.K_w = 0.1 * e.map.w_bar;
  e.map.w_max = std::min(1.6 * e.map.w_bar, 0.95 * w_top);
  e.error_scale = normalize_error ? 1.0 / (e.scale * e.scale) : 1.0;
  return e;
}

// ---- Engagement -------------------------------------------------------------

enum class EngineBackend { surrogate, solver };

struct EngagementConfig {
  // Evader
  double evader_mass = 10000.0;
  double evader_thrust = 76310.0;
  double evader_mach = 0.75;
  double evader_altitude = 8000.0;
  double evader_offset = 2000.0;
  double evader_gamma = 0.0;  // rad
  double evader_drag_area = 3.0;
  // Pursuer
  double pursuer_mass = 204.0;
  double pursuer_mach = 2.5;
  double pursuer_gamma = 10.0 * deg;
  double pursuer_alpha = 1.0 * deg;
  double pursuer_altitude = 7000.0;
  AeroModel aero;
  // Engine loop
  double thrust_command = 12000.0;
  double envelope_fraction = 0.5;
  bool normalize_error = true;
  RcacConfig rcac;
  EngineBackend backend = EngineBackend::surrogate;
  double surrogate_lag = 1.0;  // alpha of the map plant
  int inner_iterations = 500;
  int cells = defaults::production_cells;
  // Guidance and control
  PnConfig pn;
  bool gravity_compensation = true;
  PolePlacement poles;
  std::optional<AutopilotGains> gains;  // placed at launch when absent
  double fin_limit = 30.0 * deg;
  // Timing
  double dt = 0.01;
  double engine_dt = 0.05;
  double capture_radius = 5.0;
  double t_max = 30.0;

  int engine_every() const { return static_cast<int>(std::lround(engine_dt / dt)); }

  void validate() const {
    if (!(evader_mass > 0.0 && pursuer_mass > 0.0)) throw std::invalid_argument("EngagementConfig: masses must be positive");
    if (!(evader_mach > 0.0 && pursuer_mach > 0.0)) throw std::invalid_argument("EngagementConfig: speeds must be positive");
    if (!(capture_radius > 0.0)) throw std::invalid_argument("EngagementConfig: capture radius must be positive");
    if (!(dt > 0.0 && engine_dt >= dt)) throw std::invalid_argument("EngagementConfig: need 0 < dt <= engine_dt");
    if (std::abs(engine_every() * dt - engine_dt) > 1e-9 * engine_dt)
      throw std::invalid_argument("EngagementConfig: engine_dt must be a multiple of dt");
    if (!(t_max > 0.0)) throw std::invalid_argument("EngagementConfig: t_max must be positive");
    if (!(thrust_command > 0.0)) throw std::invalid_argument("EngagementConfig: thrust command must be positive");
    rcac.validate();
  }

  /// The launch geometry with CD0 set so the command trims the pursuer
  /// level at its launch speed and altitude.
  static EngagementConfig baseline() {
    EngagementConfig c;
    const double V = c.pursuer_mach * GasModel{}.sound_speed(isa(c.pursuer_altitude).T);
    c.aero.CD0 = trim_drag_coefficient(c.aero, c.pursuer_mass, c.pursuer_altitude, V, c.thrust_command);
    return c;
  }
};

inline json to_json(const EngagementConfig& c) {
  json j = {{"evader",
             {{"mass", c.evader_mass},
              {"thrust", c.evader_thrust},
              {"mach", c.evader_mach},
              {"altitude", c.evader_altitude},
              {"offset", c.evader_offset},
              {"gamma", c.evader_gamma},
              {"drag_area", c.evader_drag_area}}},
            {"pursuer",
             {{"mass", c.pursuer_mass},
              {"mach", c.pursuer_mach},
              {"gamma", c.pursuer_gamma},
              {"alpha", c.pursuer_alpha},
              {"altitude", c.pursuer_altitude}}},
            {"aero",
             {{"d_ref", c.aero.d_ref},
              {"CL_alpha", c.aero.CL_alpha},
              {"CD0", c.aero.CD0},
              {"k_induced", c.aero.k_induced},
              {"Cm_alpha", c.aero.Cm_alpha},
              {"Cm_delta", c.aero.Cm_delta},
              {"Cm_q", c.aero.Cm_q},
              {"inertia", c.aero.inertia}}},
            {"thrust_command", c.thrust_command},
            {"envelope_fraction", c.envelope_fraction},
            {"normalize_error", c.normalize_error},
            {"rcac",
             {{"P0_scale", c.rcac.P0_scale},
              {"N1", c.rcac.N1},
              {"lambda", c.rcac.lambda},
              {"u_max", c.rcac.u_max},
              {"error_scale", c.rcac.error_scale}}},
            {"backend", c.backend == EngineBackend::surrogate ? "surrogate" : "solver"},
            {"surrogate_lag", c.surrogate_lag},
            {"inner_iterations", c.inner_iterations},
            {"cells", c.cells},
            {"pn", {{"N", c.pn.N}, {"g_limit", c.pn.g_limit}}},
            {"gravity_compensation", c.gravity_compensation},
            {"poles", {{"omega", c.poles.omega}, {"zeta", c.poles.zeta}, {"real_pole", c.poles.real_pole}}},
            {"fin_limit", c.fin_limit},
            {"dt", c.dt},
            {"engine_dt", c.engine_dt},
            {"capture_radius", c.capture_radius},
            {"t_max", c.t_max}};
  if (c.gains) j["gains"] = {{"K_A", c.gains->K_A}, {"K_I", c.gains->K_I}, {"K_R", c.gains->K_R}};
  return j;
}

struct EngagementRow {
  double t = 0.0;
  VehicleState pursuer;
  EvaderState evader;
  double R = 0.0, beta = 0.0;
  double a_c = 0.0, a_z = 0.0, omega = 0.0, delta = 0.0;
  double tau_c = 0.0, tau = 0.0;
  double u = 0.0, w = 0.0, K_P = 0.0, K_I = 0.0;
  double mach = 0.0;
  bool unstarted = false;
};

struct EngagementLog {
  std::vector<EngagementRow> rows;
  std::string status = "miss";  // "intercept", "miss" or "aborted"
  std::string error;
  double miss_distance = std::numeric_limits<double>::infinity();
  double intercept_time = std::numeric_limits<double>::quiet_NaN();
  AutopilotGains gains;
  ScaledEngine engine;
  json config = json::object();

  bool intercepted() const { return status == "intercept"; }
};

inline std::string engagement_csv(const EngagementLog& log) {
  CsvWriter w({"t",     "x_p",   "h_p", "V_p",   "gamma_p", "alpha_p", "q_p", "x_e", "h_e",  "V_e",
               "R",     "beta",  "a_c", "a_z",   "omega",   "delta",   "tau_c", "tau", "u",   "w",
               "K_P",   "K_I",   "mach", "unstart"});
  for (const auto& r : log.rows)
    w.row({r.t,     r.pursuer.x, r.pursuer.h, r.pursuer.V, r.pursuer.gamma, r.pursuer.alpha, r.pursuer.q,
           r.evader.x, r.evader.h, r.evader.V, r.R, r.beta, r.a_c, r.a_z, r.omega, r.delta, r.tau_c, r.tau, r.u, r.w,
           r.K_P, r.K_I, r.mach, r.unstarted ? 1.0 : 0.0});
  return w.str();
}

inline json engagement_manifest(const EngagementLog& log) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"status", log.status},
          {"error", log.error},
          {"miss_distance", num(log.miss_distance)},
          {"intercept_time", num(log.intercept_time)},
          {"steps", log.rows.size()},
          {"autopilot_gains", {{"K_A", log.gains.K_A}, {"K_I", log.gains.K_I}, {"K_R", log.gains.K_R}}},
          {"scaled_engine", to_json(log.engine)},
          {"config", log.config}};
}

/// Largest |tau - tau_c| / tau_c over rows with t >= t0.
inline double thrust_deviation_after(const EngagementLog& log, double t0) {
  double m = 0.0;
  for (const auto& r : log.rows)
    if (r.t >= t0) m = std::max(m, std::abs(r.tau - r.tau_c) / r.tau_c);
  return m;
}

/// Runs the engagement. The performance map sizes the engine for both
/// backends and is the engine itself for the surrogate backend.
inline EngagementLog run_engagement(const EngagementConfig& cfg, std::shared_ptr<const PerformanceMap> map) {
  cfg.validate();
  if (!map) throw std::invalid_argument("run_engagement: a performance map is required");
  const GasModel gas{};
  EngagementLog log;
  log.config = to_json(cfg);

  VehicleState p;
  p.x = 0.0;
  p.h = cfg.pursuer_altitude;
  p.V = cfg.pursuer_mach * gas.sound_speed(isa(p.h).T);
  p.gamma = cfg.pursuer_gamma;
  p.alpha = cfg.pursuer_alpha;
  p.q = 0.0;
  p.mass = cfg.pursuer_mass;

  EvaderState e;
  e.x = cfg.evader_offset;
  e.h = cfg.evader_altitude;
  e.V = cfg.evader_mach * gas.sound_speed(isa(e.h).T);
  e.gamma = cfg.evader_gamma;
  e.mass = cfg.evader_mass;
  e.thrust = cfg.evader_thrust;
  e.drag_area = cfg.evader_drag_area;

  const BoundaryCondition launch = flight_condition(p.h, p.V, gas);
  log.engine = size_engine(*map, launch, cfg.thrust_command, cfg.envelope_fraction, cfg.normalize_error);
  RcacConfig rc = cfg.rcac;
  rc.error_scale *= log.engine.error_scale;
  RcacPi ctrl(rc, log.engine.map);

  std::unique_ptr<Plant> engine;
  if (cfg.backend == EngineBackend::surrogate) {
    engine = std::make_unique<MapPlant>(map, launch, log.engine.map.w_bar, cfg.surrogate_lag, log.engine.scale);
  } else {
    GeometryOverrides o;
    o.scale = log.engine.scale;
    const Grid grid = build_grid(build_geometry(o), cfg.cells);
    engine = std::make_unique<SolverPlant>(grid, launch, log.engine.map.w_bar, cfg.inner_iterations);
  }

  log.gains = cfg.gains ? *cfg.gains : place_poles(linearize(cfg.aero, p, engine->thrust()), cfg.poles);
  Autopilot ap(log.gains, cfg.fin_limit);
  ap.initialize(-cfg.aero.Cm_alpha * p.alpha / cfg.aero.Cm_delta, p.q);

  const int every = cfg.engine_every();
  const long n_steps = static_cast<long>(std::ceil(cfg.t_max / cfg.dt - 1e-9));
  ControlStep last;
  last.w = log.engine.map.w_bar;
  last.r = cfg.thrust_command;
  try {
    for (long n = 0; n < n_steps; ++n) {
      const double t = n * cfg.dt;
      if (n % every == 0) {
        last = ctrl.step(cfg.thrust_command, engine->thrust());
        engine->set_inlet(flight_condition(p.h, p.V, gas));
        engine->apply(last.w);
      }
      const LineOfSight l = line_of_sight(p, e);
      const double tau = engine->thrust();
      double a_c = guidance(l, cfg.pn);
      if (cfg.gravity_compensation) a_c += standard_gravity * std::cos(p.gamma);
      const double a_z = normal_acceleration(p, tau, cfg.aero);
      const double delta = ap.step(a_c, a_z, p.q, cfg.dt);

      EngagementRow row;
      row.t = t;
      row.pursuer = p;
      row.evader = e;
      row.R = l.R;
      row.beta = l.beta;
      row.a_c = a_c;
      row.a_z = a_z;
      row.omega = p.q;
      row.delta = delta;
      row.tau_c = cfg.thrust_command;
      row.tau = tau;
      row.u = last.u;
      row.w = last.w;
      row.K_P = last.theta(0);
      row.K_I = last.theta(1);
      row.mach = p.V / gas.sound_speed(isa(p.h).T);
      row.unstarted = engine->unstarted();
      log.rows.push_back(row);

      const VehicleState p1 = step_dynamics(p, delta, tau, cfg.dt, cfg.aero);
      const EvaderState e1 = step_evader(e, cfg.dt);

      // Closest approach within the step, relative motion taken as linear.
      const double r0x = e.x - p.x, r0h = e.h - p.h;
      const double dx = (e1.x - p1.x) - r0x, dh = (e1.h - p1.h) - r0h;
      const double dd = dx * dx + dh * dh;
      const double s = dd > 0.0 ? std::clamp(-(r0x * dx + r0h * dh) / dd, 0.0, 1.0) : 0.0;
      const double r_min = std::hypot(r0x + s * dx, r0h + s * dh);
      log.miss_distance = std::min(log.miss_distance, r_min);
      if (r_min < cfg.capture_radius) {
        log.status = "intercept";
        log.intercept_time = t + s * cfg.dt;
        return log;
      }
      p = p1;
      e = e1;
    }
  } catch (const std::exception& ex) {
    log.status = "aborted";
    log.error = ex.what();
  }
  return log;
}

}  // namespace sfrj
