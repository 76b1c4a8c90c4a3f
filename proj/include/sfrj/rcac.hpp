// Adaptive PI control in regressor form, u = Phi theta with Phi = [z, gamma],
// theta = [K_P, K_I], and gains updated online by retrospective-cost
// recursive least squares with target model G_f(q) = N1 q^-1.
//
// Sign convention: z = r - y and N1 is the sign-and-scale guess of the
// first Markov parameter from u to y. The retrospective error for a
// candidate theta is what z_k would have been had the controller applied
// Phi_{k-1} theta instead of u_{k-1}:
//
//   zhat(theta) = z_k - N1 (Phi_{k-1} theta - u_{k-1})
//
// so each update is an RLS step on b = z_k + N1 u_{k-1} with regressor
// Phi_f = N1 Phi_{k-1}, minimising sum zhat^2 + (theta - theta0)' P0^-1 (theta - theta0).

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace sfrj {

using Vec2 = Eigen::Vector2d;
using Row2 = Eigen::RowVector2d;
using Mat2 = Eigen::Matrix2d;

struct RcacConfig {
  double P0_scale = 1e-6;
  double N1 = 1.0;
  double lambda = 1.0;
  Vec2 theta0 = Vec2::Zero();
  // Symmetric control limit |u| <= u_max.
  double u_max = 10.0;
  // Multiplies z before it enters the controller; 1 leaves it untouched.
  double error_scale = 1.0;

  void validate() const {
    if (!(P0_scale > 0.0)) throw std::invalid_argument("RcacConfig: P0_scale must be positive");
    if (N1 == 0.0 || !std::isfinite(N1)) throw std::invalid_argument("RcacConfig: N1 must be non-zero");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("RcacConfig: lambda must lie in (0, 1]");
    if (!(u_max > 0.0)) throw std::invalid_argument("RcacConfig: u_max must be positive");
    if (!(error_scale > 0.0)) throw std::invalid_argument("RcacConfig: error_scale must be positive");
  }
};

/// w = w_bar + K_w u, clamped to [0, w_max].
struct MapConfig {
  double w_bar = 10e6;
  double K_w = 1e6;
  double w_max = 16e6;

  void validate() const {
    if (!(w_bar > 0.0)) throw std::invalid_argument("MapConfig: w_bar must be positive");
    if (!(K_w > 0.0)) throw std::invalid_argument("MapConfig: K_w must be positive");
    if (!(w_max > 0.0)) throw std::invalid_argument("MapConfig: w_max must be positive");
  }
};

struct RcacState {
  Vec2 theta = Vec2::Zero();
  Mat2 P = Mat2::Identity();
  double gamma_acc = 0.0;
  std::optional<Row2> prev_Phi;
  double prev_u = 0.0;
  long updates = 0;

  static RcacState initial(const RcacConfig& cfg) {
    cfg.validate();
    RcacState s;
    s.theta = cfg.theta0;
    s.P = cfg.P0_scale * Mat2::Identity();
    return s;
  }
};

inline double accumulate_error(RcacState& s, double z) {
  s.gamma_acc += z;
  return s.gamma_acc;
}

inline double controller_output(const Vec2& theta, const Row2& Phi) { return Phi.dot(theta.transpose()); }

inline double heat_flux_map(double u, const MapConfig& m) {
  return std::clamp(m.w_bar + m.K_w * u, 0.0, m.w_max);
}

/// Smallest eigenvalue of a symmetric 2x2 matrix.
inline double min_eigenvalue(const Mat2& P) {
  const double a = P(0, 0), b = 0.5 * (P(0, 1) + P(1, 0)), d = P(1, 1);
  const double m = 0.5 * (a + d);
  const double r = std::hypot(0.5 * (a - d), b);
  return m - r;
}

/// One RLS step with the newest error z_k. Does nothing until a previous
/// (Phi, u) pair is stored.
inline void rcac_update(RcacState& s, double z, const RcacConfig& cfg) {
  if (!s.prev_Phi) return;
  const Row2 phi = cfg.N1 * *s.prev_Phi;
  const double b = z + cfg.N1 * s.prev_u;
  const Vec2 Pphi = s.P * phi.transpose();
  const double denom = cfg.lambda + phi.dot(Pphi.transpose());
  const Vec2 K = Pphi / denom;
  s.theta += K * (b - phi.dot(s.theta.transpose()));
  Mat2 P = (s.P - K * (phi * s.P)) / cfg.lambda;
  P = 0.5 * (P + P.transpose()).eval();
  if (!(min_eigenvalue(P) > 0.0) || !P.allFinite())
    throw std::runtime_error("rcac_update: covariance is no longer positive definite");
  s.P = P;
  ++s.updates;
}

struct ControlStep {
  double r = 0.0;
  double y = 0.0;
  double z = 0.0;
  double gamma = 0.0;
  double u = 0.0;
  double w = 0.0;
  Vec2 theta = Vec2::Zero();
  bool clamped = false;
};

/// PI controller with RCAC gain adaptation and the heat-flux map.
class RcacPi {
 public:
  RcacPi(RcacConfig cfg, MapConfig map) : cfg_(cfg), map_(map) {
    cfg_.validate();
    map_.validate();
    state_ = RcacState::initial(cfg_);
    // Control interval admitted by both the u limit and the w limits.
    u_lo_ = std::max(-cfg_.u_max, -map_.w_bar / map_.K_w);
    u_hi_ = std::min(cfg_.u_max, (map_.w_max - map_.w_bar) / map_.K_w);
    if (!(u_lo_ <= u_hi_)) throw std::invalid_argument("RcacPi: empty admissible control interval");
  }

  const RcacConfig& config() const { return cfg_; }
  const MapConfig& map() const { return map_; }
  const RcacState& state() const { return state_; }

  /// Consumes the measured output for command r and returns the next input.
  ControlStep step(double r, double y) {
    ControlStep c;
    c.r = r;
    c.y = y;
    c.z = r - y;
    const double zs = cfg_.error_scale * c.z;
    rcac_update(state_, zs, cfg_);

    Row2 phi(zs, state_.gamma_acc + zs);
    double u = controller_output(state_.theta, phi);
    if (u < u_lo_ || u > u_hi_) {
      // Saturated: hold the integrator.
      c.clamped = true;
      phi(1) = state_.gamma_acc;
      u = std::clamp(controller_output(state_.theta, phi), u_lo_, u_hi_);
    } else {
      accumulate_error(state_, zs);
    }
    state_.prev_Phi = phi;
    state_.prev_u = u;
    c.gamma = state_.gamma_acc;
    c.u = u;
    c.w = heat_flux_map(u, map_);
    c.theta = state_.theta;
    return c;
  }

 private:
  RcacConfig cfg_;
  MapConfig map_;
  RcacState state_;
  double u_lo_ = 0.0, u_hi_ = 0.0;
};

}  // namespace sfrj
