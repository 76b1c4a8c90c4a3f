// Axisymmetric engine geometry and its quasi-1D discretization.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfrj {

enum class SegmentShape {
  constant,          // d0 everywhere
  linear,            // d0 -> d1
  symmetric_throat,  // d0 -> d_throat at mid-length -> d1 (= d0), cosine blend
};

struct Segment {
  std::string name;
  double x0 = 0.0;
  double x1 = 0.0;
  double d0 = 0.0;
  double d1 = 0.0;
  double d_throat = 0.0;
  SegmentShape shape = SegmentShape::constant;

  double diameter(double x) const {
    const double s = (x - x0) / (x1 - x0);
    switch (shape) {
      case SegmentShape::constant:
        return d0;
      case SegmentShape::linear:
        return d0 + (d1 - d0) * s;
      case SegmentShape::symmetric_throat: {
        const double blend = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * s));
        return d_throat + (d0 - d_throat) * blend;
      }
    }
    return d0;
  }
  double min_diameter() const {
    switch (shape) {
      case SegmentShape::constant:
        return d0;
      case SegmentShape::linear:
        return std::min(d0, d1);
      case SegmentShape::symmetric_throat:
        return std::min(d0, d_throat);
    }
    return d0;
  }
};

struct Span {
  double x0 = 0.0;
  double x1 = 0.0;
  double length() const { return x1 - x0; }
  bool contains(double x) const { return x >= x0 && x <= x1; }
};

inline double circle_area(double d) { return 0.25 * std::numbers::pi * d * d; }

class EngineGeometry {
 public:
  std::vector<Segment> segments;
  Span heated_span;
  // End of the inlet channel; cells upstream of it are checked for unstart.
  // Zero when the geometry has no supersonic intake (plain ducts).
  double inlet_end = 0.0;
  // Location of a sudden area change that the grid smears, if any.
  std::optional<double> step_x;

  double length() const { return segments.back().x1 - segments.front().x0; }
  double x_begin() const { return segments.front().x0; }
  double x_end() const { return segments.back().x1; }

  const Segment& segment_at(double x) const {
    for (const auto& s : segments)
      if (x < s.x1) return s;
    return segments.back();
  }
  const Segment* find(const std::string& name) const {
    for (const auto& s : segments)
      if (s.name == name) return &s;
    return nullptr;
  }

  /// Wall diameter; right-continuous at segment joins.
  double diameter(double x) const { return segment_at(x).diameter(x); }
  double area(double x) const { return circle_area(diameter(x)); }

  /// Heated wall area: integral of pi d(x) over the heated span.
  double heated_wall_area() const {
    double total = 0.0;
    for (const auto& s : segments) {
      const double a = std::max(s.x0, heated_span.x0);
      const double b = std::min(s.x1, heated_span.x1);
      if (b > a) total += wall_area(s, a, b);
    }
    return total;
  }

  /// Lateral wall area between a and b within one segment.
  static double wall_area(const Segment& s, double a, double b) {
    if (s.shape == SegmentShape::constant) return std::numbers::pi * s.d0 * (b - a);
    // Composite Simpson on a smooth profile.
    constexpr int n = 64;
    const double h = (b - a) / n;
    double acc = s.diameter(a) + s.diameter(b);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * s.diameter(a + i * h);
    return std::numbers::pi * acc * h / 3.0;
  }

  void validate() const {
    if (segments.empty()) throw std::invalid_argument("EngineGeometry: no segments");
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& s = segments[i];
      if (!(s.x1 > s.x0))
        throw std::invalid_argument("EngineGeometry: segment '" + s.name + "' has non-positive length");
      if (!(s.min_diameter() > 0.0) || !(s.d0 > 0.0) || !(s.d1 > 0.0))
        throw std::invalid_argument("EngineGeometry: segment '" + s.name + "' has non-positive diameter");
      if (i > 0 && std::abs(segments[i - 1].x1 - s.x0) > 1e-12)
        throw std::invalid_argument("EngineGeometry: segments are not contiguous at '" + s.name + "'");
    }
    if (heated_span.length() < 0.0)
      throw std::invalid_argument("EngineGeometry: heated span is reversed");
    if (heated_span.length() > 0.0) {
      const Segment* comb = find("combustor");
      const double a = comb ? comb->x0 : x_begin();
      const double b = comb ? comb->x1 : x_end();
      if (heated_span.x0 < a - 1e-12 || heated_span.x1 > b + 1e-12)
        throw std::invalid_argument("EngineGeometry: heated span must lie within the combustor");
    }
  }
};

/// Optional overrides of the default engine dimensions (metres).
struct GeometryOverrides {
  std::optional<double> inlet_diameter;
  std::optional<double> inlet_length;
  std::optional<double> combustor_diameter;
  std::optional<double> combustor_length;
  std::optional<double> nozzle_length;
  std::optional<double> throat_diameter;
  std::optional<double> exit_diameter;
  // Uniform scale applied to every length after the overrides.
  double scale = 1.0;
};

namespace default_dimensions {
inline constexpr double inlet_diameter = 0.080;
inline constexpr double inlet_length = 0.2;
inline constexpr double combustor_diameter = 0.140;
inline constexpr double combustor_length = 0.838;
inline constexpr double nozzle_length = 0.140;
inline constexpr double throat_diameter = 0.130;
inline constexpr double exit_diameter = 0.140;
}  // namespace default_dimensions

/// Inlet channel, sudden expansion into a heated combustor, symmetric
/// converging-diverging nozzle.
inline EngineGeometry build_geometry(const GeometryOverrides& o = {}) {
  namespace dd = default_dimensions;
  const double k = o.scale;
  if (!(k > 0.0)) throw std::invalid_argument("build_geometry: scale must be positive");
  const double d_in = o.inlet_diameter.value_or(dd::inlet_diameter) * k;
  const double l_in = o.inlet_length.value_or(dd::inlet_length) * k;
  const double d_c = o.combustor_diameter.value_or(dd::combustor_diameter) * k;
  const double l_c = o.combustor_length.value_or(dd::combustor_length) * k;
  const double l_n = o.nozzle_length.value_or(dd::nozzle_length) * k;
  const double d_t = o.throat_diameter.value_or(dd::throat_diameter) * k;
  const double d_e = o.exit_diameter.value_or(dd::exit_diameter) * k;

  EngineGeometry g;
  g.segments.push_back({"inlet", 0.0, l_in, d_in, d_in, d_in, SegmentShape::constant});
  g.segments.push_back({"combustor", l_in, l_in + l_c, d_c, d_c, d_c, SegmentShape::constant});
  Segment noz{"nozzle", l_in + l_c, l_in + l_c + l_n, d_c, d_e, d_t, SegmentShape::symmetric_throat};
  if (std::abs(d_e - d_c) > 1e-15) {
    // Asymmetric exit: linear converging and diverging halves.
    noz.x1 = l_in + l_c + 0.5 * l_n;
    noz.d1 = d_t;
    noz.shape = SegmentShape::linear;
    g.segments.push_back(noz);
    g.segments.push_back({"nozzle_exit", noz.x1, l_in + l_c + l_n, d_t, d_e, d_t, SegmentShape::linear});
  } else {
    g.segments.push_back(noz);
  }
  if (!(d_t <= std::min(d_c, d_e)))
    throw std::invalid_argument("build_geometry: throat must be the nozzle's narrowest section");
  g.heated_span = {l_in, l_in + l_c};
  g.inlet_end = l_in;
  if (std::abs(d_c - d_in) > 1e-15) g.step_x = l_in;
  g.validate();
  return g;
}

/// Constant-area heated duct used for Rayleigh-flow validation.
inline EngineGeometry constant_area_duct(double length, double diameter, bool heated = true) {
  EngineGeometry g;
  g.segments.push_back({"combustor", 0.0, length, diameter, diameter, diameter, SegmentShape::constant});
  g.heated_span = heated ? Span{0.0, length} : Span{0.0, 0.0};
  g.inlet_end = 0.0;
  g.validate();
  return g;
}

/// Uniform finite-volume grid over a geometry. The sudden expansion, if
/// present, is replaced by a linear area ramp `smear_cells` cells long that
/// starts at the step.
struct Grid {
  int n_cells = 0;
  double dx = 0.0;
  double smear_length = 0.0;
  std::vector<double> x_face;       // n + 1
  std::vector<double> area_face;    // n + 1
  std::vector<double> x_center;     // n
  std::vector<double> area_center;  // n
  std::vector<double> heat_weight;  // heated wall area inside each cell, n
  int inlet_cells = 0;              // cells with centres inside the inlet channel

  double volume(int i) const { return area_center[i] * dx; }
  double heated_wall_area() const {
    double s = 0.0;
    for (double w : heat_weight) s += w;
    return s;
  }
};

inline Grid build_grid(const EngineGeometry& geo, int n_cells, double smear_cells = 3.0) {
  if (n_cells < 50) throw std::invalid_argument("build_grid: at least 50 cells are required");
  if (smear_cells < 0.0) throw std::invalid_argument("build_grid: negative smear length");
  Grid g;
  g.n_cells = n_cells;
  const double x0 = geo.x_begin();
  g.dx = geo.length() / n_cells;
  g.smear_length = geo.step_x ? smear_cells * g.dx : 0.0;

  auto smeared_area = [&](double x) {
    if (geo.step_x && g.smear_length > 0.0) {
      const double xs = *geo.step_x;
      if (x >= xs && x < xs + g.smear_length) {
        const double a_up = circle_area(geo.segment_at(xs - 1e-12).diameter(xs));
        const double a_dn = geo.area(xs + g.smear_length);
        const double t = (x - xs) / g.smear_length;
        return a_up + (a_dn - a_up) * t;
      }
    }
    return geo.area(x);
  };

  g.x_face.resize(n_cells + 1);
  g.area_face.resize(n_cells + 1);
  for (int i = 0; i <= n_cells; ++i) {
    g.x_face[i] = x0 + i * g.dx;
    g.area_face[i] = smeared_area(g.x_face[i]);
  }
  g.x_face[n_cells] = geo.x_end();
  g.area_face[n_cells] = geo.area(geo.x_end() - 1e-15);

  g.x_center.resize(n_cells);
  g.area_center.resize(n_cells);
  g.heat_weight.assign(n_cells, 0.0);
  for (int i = 0; i < n_cells; ++i) {
    g.x_center[i] = 0.5 * (g.x_face[i] + g.x_face[i + 1]);
    g.area_center[i] = 0.5 * (g.area_face[i] + g.area_face[i + 1]);
    if (g.x_center[i] < geo.inlet_end) ++g.inlet_cells;
    const double a = std::max(g.x_face[i], geo.heated_span.x0);
    const double b = std::min(g.x_face[i + 1], geo.heated_span.x1);
    if (b <= a) continue;
    for (const auto& s : geo.segments) {
      const double sa = std::max(a, s.x0);
      const double sb = std::min(b, s.x1);
      if (sb > sa) g.heat_weight[i] += EngineGeometry::wall_area(s, sa, sb);
    }
  }
  for (int i = 0; i < n_cells; ++i)
    if (!(g.area_center[i] > 0.0)) throw std::invalid_argument("build_grid: non-positive cell area");
  return g;
}

}  // namespace sfrj
