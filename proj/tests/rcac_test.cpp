#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sfrj/random.hpp"
#include "sfrj/rcac.hpp"

using namespace sfrj;

namespace {

struct Sample {
  Row2 phi;  // previous regressor
  double u;  // previous control
  double z;  // newest error
};

// Direct regularised least squares over the whole history, with forgetting
// applied to both the data and the regulariser:
//   min sum_i lambda^(k-i) (b_i - N1 phi_i theta)^2 + lambda^k (theta-theta0)' P0^-1 (theta-theta0)
// where b_i = z_i + N1 u_i.
Vec2 batch_solution(const std::vector<Sample>& h, const RcacConfig& cfg) {
  const std::size_t k = h.size();
  Mat2 A = std::pow(cfg.lambda, double(k)) / cfg.P0_scale * Mat2::Identity();
  Vec2 rhs = A * cfg.theta0;
  for (std::size_t i = 0; i < k; ++i) {
    const double w = std::pow(cfg.lambda, double(k - 1 - i));
    const Row2 f = cfg.N1 * h[i].phi;
    A += w * f.transpose() * f;
    rhs += w * f.transpose() * (h[i].z + cfg.N1 * h[i].u);
  }
  return A.ldlt().solve(rhs);
}

double rel_err(const Vec2& a, const Vec2& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST(Rcac, AccumulateError) {
  RcacState s;
  EXPECT_EQ(accumulate_error(s, 0.0), 0.0);
  s.gamma_acc = 5.0;
  EXPECT_EQ(accumulate_error(s, -2.0), 3.0);
  RcacState t;
  for (int i = 0; i < 3; ++i) accumulate_error(t, 1.0);
  EXPECT_EQ(t.gamma_acc, 3.0);
}

TEST(Rcac, ControllerOutput) {
  EXPECT_EQ(controller_output(Vec2::Zero(), Row2(7.0, -3.0)), 0.0);
  EXPECT_EQ(controller_output(Vec2(3.0, 4.0), Row2(1.0, 2.0)), 11.0);
  EXPECT_EQ(controller_output(Vec2(2.0, 1e9), Row2(5.0, 0.0)), 10.0);
}

TEST(Rcac, HeatFluxMap) {
  const MapConfig m;
  EXPECT_EQ(heat_flux_map(0.0, m), 10e6);
  EXPECT_EQ(heat_flux_map(2.0, m), 12e6);
  EXPECT_EQ(heat_flux_map(-1.0, m), 9e6);
  EXPECT_EQ(heat_flux_map(100.0, m), 16e6);
  EXPECT_EQ(heat_flux_map(-100.0, m), 0.0);
}

TEST(Rcac, ConfigValidation) {
  RcacConfig c;
  EXPECT_NO_THROW(c.validate());
  c.P0_scale = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.N1 = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.error_scale = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  MapConfig m;
  m.K_w = 0.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Rcac, NoUpdateWithoutHistory) {
  RcacConfig cfg;
  auto s = RcacState::initial(cfg);
  rcac_update(s, 123.0, cfg);
  EXPECT_EQ(s.theta, Vec2::Zero());
  EXPECT_EQ(s.updates, 0);
  EXPECT_EQ(s.P, 1e-6 * Mat2::Identity());
}

TEST(Rcac, FirstUpdateClosedForm) {
  RcacConfig cfg;
  cfg.P0_scale = 0.5;
  auto s = RcacState::initial(cfg);
  const Row2 phi0(2.0, -1.0);
  s.prev_Phi = phi0;
  s.prev_u = 0.0;
  const double z1 = 3.0;
  rcac_update(s, z1, cfg);
  const Mat2 P1 = (Mat2::Identity() / cfg.P0_scale + phi0.transpose() * phi0).inverse();
  const Vec2 expected = P1 * phi0.transpose() * z1;
  EXPECT_LT(rel_err(s.theta, expected), 1e-12);
  EXPECT_LT((s.P - P1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rcac, StationaryWhenRetrospectiveErrorVanishes) {
  RcacConfig cfg;
  cfg.N1 = 2.0;
  cfg.P0_scale = 0.1;
  auto s = RcacState::initial(cfg);
  s.theta = Vec2(0.3, -0.2);
  s.prev_Phi = Row2(1.5, 4.0);
  s.prev_u = 0.7;
  const Vec2 before = s.theta;
  const double z = cfg.N1 * (s.prev_Phi->dot(before.transpose()) - s.prev_u);
  rcac_update(s, z, cfg);
  EXPECT_LT((s.theta - before).norm(), 1e-15);
}

TEST(Rcac, RecursiveEqualsBatch) {
  RandomStream rng(2024, 5);
  for (int trial = 0; trial < 50; ++trial) {
    RcacConfig cfg;
    cfg.P0_scale = std::pow(10.0, rng.uniform(-3.0, 1.0));
    cfg.N1 = rng.uniform(0.1, 10.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    cfg.theta0 = Vec2(rng.normal(), rng.normal());
    const int len = 1 + int(rng.uniform() * 50);
    auto s = RcacState::initial(cfg);
    std::vector<Sample> hist;
    for (int k = 0; k < len; ++k) {
      const Sample smp{Row2(rng.normal(), rng.normal()), rng.normal(), rng.normal()};
      s.prev_Phi = smp.phi;
      s.prev_u = smp.u;
      rcac_update(s, smp.z, cfg);
      hist.push_back(smp);
      EXPECT_LT(rel_err(s.theta, batch_solution(hist, cfg)), 1e-9) << "trial " << trial << " step " << k;
      EXPECT_LT((s.P - s.P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_GT(min_eigenvalue(s.P), 0.0);
    }
  }
}

TEST(Rcac, ForgettingFactorMatchesDiscountedBatch) {
  RandomStream rng(7, 1);
  RcacConfig cfg;
  cfg.lambda = 0.95;
  cfg.P0_scale = 0.3;
  auto s = RcacState::initial(cfg);
  std::vector<Sample> hist;
  for (int k = 0; k < 30; ++k) {
    const Sample smp{Row2(rng.normal(), rng.normal()), rng.normal(), rng.normal()};
    s.prev_Phi = smp.phi;
    s.prev_u = smp.u;
    rcac_update(s, smp.z, cfg);
    hist.push_back(smp);
  }
  EXPECT_LT(rel_err(s.theta, batch_solution(hist, cfg)), 1e-9);
}

TEST(RcacPi, ZeroStartGivesNominalFlux) {
  RcacPi c(RcacConfig{}, MapConfig{});
  const auto step = c.step(600.0, 500.0);
  EXPECT_EQ(step.u, 0.0);
  EXPECT_EQ(step.w, 10e6);
  EXPECT_EQ(step.z, 100.0);
  EXPECT_EQ(step.gamma, 100.0);
}

TEST(RcacPi, ErrorScaleEntersRegressor) {
  RcacConfig cfg;
  cfg.error_scale = 0.1;
  RcacPi c(cfg, MapConfig{});
  const auto s0 = c.step(600.0, 500.0);
  EXPECT_EQ(s0.z, 100.0);
  EXPECT_DOUBLE_EQ(s0.gamma, 10.0);
  EXPECT_DOUBLE_EQ((*c.state().prev_Phi)(0), 10.0);
}

TEST(RcacPi, SaturationHoldsIntegrator) {
  RcacConfig cfg;
  cfg.theta0 = Vec2(1.0, 1.0);
  cfg.u_max = 2.0;
  RcacPi c(cfg, MapConfig{});
  const auto s = c.step(100.0, 0.0);
  EXPECT_TRUE(s.clamped);
  EXPECT_EQ(s.gamma, 0.0);
  EXPECT_LE(std::abs(s.u), 2.0);
  EXPECT_GE(s.w, 0.0);
  EXPECT_LE(s.w, 16e6);
}

TEST(RcacPi, ClampsToFluxAuthority) {
  RcacConfig cfg;
  cfg.theta0 = Vec2(-1.0, 0.0);
  MapConfig m;
  m.w_max = 12e6;
  RcacPi c(cfg, m);
  const auto s = c.step(0.0, 50.0);  // u = +50, above (w_max - w_bar) / K_w = 2
  EXPECT_TRUE(s.clamped);
  EXPECT_EQ(s.u, 2.0);
  EXPECT_EQ(s.w, 12e6);
}

TEST(RcacPi, CovarianceStaysPositiveDefinite) {
  RcacPi c(RcacConfig{}, MapConfig{});
  double y = 500.0;
  for (int k = 0; k < 200; ++k) {
    const auto s = c.step(600.0, y);
    y = 634.0 + 1.5e-4 * (s.w - 10e6);
    const Mat2& P = c.state().P;
    EXPECT_LT((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-12 * P.cwiseAbs().maxCoeff());
    EXPECT_GT(min_eigenvalue(P), 0.0);
  }
}
