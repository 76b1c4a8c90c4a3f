#include <gtest/gtest.h>

#include "sfrj/atmosphere.hpp"

using namespace sfrj;

TEST(Isa, SeaLevel) {
  const auto s = isa(0.0);
  EXPECT_DOUBLE_EQ(s.T, 288.15);
  EXPECT_DOUBLE_EQ(s.p, 101325.0);
  EXPECT_NEAR(s.rho, 1.2250, 1e-4);
}

TEST(Isa, EnvelopeCorners) {
  const auto a = isa(5000.0), b = isa(10000.0);
  EXPECT_NEAR(a.T, 255.65, 1e-10);
  EXPECT_NEAR(a.p, 54019.0, 5.0);
  EXPECT_NEAR(b.T, 223.15, 1e-10);
  EXPECT_NEAR(b.p, 26436.0, 5.0);
  // Sampled pressure range [26, 54] kPa bracketed within 3 %.
  EXPECT_NEAR(a.p / 54e3, 1.0, 0.03);
  EXPECT_NEAR(b.p / 26e3, 1.0, 0.03);
}

TEST(Isa, IdealGasAndMonotone) {
  double p_prev = 1e9, T_prev = 1e9;
  for (double h = 0.0; h <= 11000.0; h += 250.0) {
    const auto s = isa(h);
    EXPECT_NEAR(s.rho * isa_constants::R * s.T / s.p, 1.0, 1e-10);
    EXPECT_LT(s.p, p_prev);
    EXPECT_LT(s.T, T_prev);
    p_prev = s.p;
    T_prev = s.T;
  }
}

TEST(Isa, OutsideTroposphereThrows) {
  EXPECT_THROW(isa(-1.0), std::domain_error);
  EXPECT_THROW(isa(11000.5), std::domain_error);
  EXPECT_NO_THROW(isa(11000.0));
}
