#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sfrj/geometry.hpp"

using namespace sfrj;

TEST(Geometry, DefaultDimensions) {
  const auto g = build_geometry();
  EXPECT_NEAR(g.length(), 1.178, 1e-12);
  EXPECT_NEAR(g.area(0.1), 5.0265e-3, 1e-7);
  EXPECT_NEAR(g.area(0.6), 1.5394e-2, 1e-6);
  EXPECT_NEAR(g.area(1.038 + 0.07), 1.3273e-2, 1e-6);
  EXPECT_NEAR(g.diameter(1.178 - 1e-12), 0.140, 1e-9);
  EXPECT_NEAR(g.heated_span.length(), 0.838, 1e-12);
  EXPECT_NEAR(g.heated_wall_area(), std::numbers::pi * 0.14 * 0.838, 1e-12);
  ASSERT_TRUE(g.step_x.has_value());
  EXPECT_DOUBLE_EQ(*g.step_x, 0.2);
  EXPECT_DOUBLE_EQ(g.inlet_end, 0.2);
}

TEST(Geometry, SegmentsContiguousAndThroatNarrowest) {
  const auto g = build_geometry();
  ASSERT_EQ(g.segments.size(), 3u);
  for (std::size_t i = 1; i < g.segments.size(); ++i) EXPECT_DOUBLE_EQ(g.segments[i - 1].x1, g.segments[i].x0);
  double dmin = 1.0;
  for (double x = 1.038; x <= 1.178; x += 1e-4) dmin = std::min(dmin, g.diameter(x));
  EXPECT_NEAR(dmin, 0.130, 1e-6);
}

TEST(Geometry, OverridesAndScale) {
  GeometryOverrides o;
  o.scale = 2.0;
  const auto g = build_geometry(o);
  EXPECT_NEAR(g.length(), 2.356, 1e-12);
  EXPECT_NEAR(g.area(0.1), 4.0 * circle_area(0.08), 1e-12);

  GeometryOverrides e;
  e.exit_diameter = 0.15;
  const auto ge = build_geometry(e);
  EXPECT_EQ(ge.segments.size(), 4u);
  EXPECT_NEAR(ge.diameter(1.178 - 1e-12), 0.15, 1e-9);
}

TEST(Geometry, InvalidOverridesThrow) {
  GeometryOverrides o;
  o.inlet_diameter = -0.01;
  EXPECT_THROW(build_geometry(o), std::invalid_argument);
  GeometryOverrides t;
  t.throat_diameter = 0.2;
  EXPECT_THROW(build_geometry(t), std::invalid_argument);
  GeometryOverrides s;
  s.scale = 0.0;
  EXPECT_THROW(build_geometry(s), std::invalid_argument);
}

TEST(Geometry, HeatedSpanOutsideCombustorRejected) {
  auto g = build_geometry();
  g.heated_span = {0.1, 0.5};
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Grid, FacesFollowGeometry) {
  const auto geo = build_geometry();
  const auto g = build_grid(geo, 500);
  EXPECT_EQ(g.x_face.size(), 501u);
  EXPECT_NEAR(g.dx, 1.178 / 500, 1e-15);
  EXPECT_DOUBLE_EQ(g.x_face.back(), 1.178);
  for (int i = 0; i <= g.n_cells; ++i) {
    const double x = g.x_face[i];
    if (x >= 0.2 && x < 0.2 + g.smear_length) continue;
    EXPECT_NEAR(g.area_face[i], geo.area(std::min(x, 1.178 - 1e-15)), 1e-12) << i;
  }
  EXPECT_NEAR(g.smear_length, 3.0 * g.dx, 1e-15);
  EXPECT_NEAR(g.heated_wall_area(), geo.heated_wall_area(), 1e-12);
  int inlet = 0;
  for (double x : g.x_center) inlet += x < 0.2;
  EXPECT_EQ(g.inlet_cells, inlet);
}

TEST(Grid, TooFewCellsRejected) {
  EXPECT_THROW(build_grid(build_geometry(), 49), std::invalid_argument);
  EXPECT_NO_THROW(build_grid(build_geometry(), 50));
}

TEST(Grid, DuctHeatWeightIsUniform) {
  const auto g = build_grid(constant_area_duct(1.0, 0.1), 100);
  for (double w : g.heat_weight) EXPECT_NEAR(w, std::numbers::pi * 0.1 * 0.01, 1e-15);
  EXPECT_EQ(g.inlet_cells, 0);
  const auto cold = build_grid(constant_area_duct(1.0, 0.1, false), 100);
  EXPECT_EQ(cold.heated_wall_area(), 0.0);
}
