#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace plumetrace {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Signed area of the triangle (a, b, c); positive for counter-clockwise order.
inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

/// Barycentric coordinates of p with respect to (a, b, c).
inline Vec3 barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double area = signed_area(a, b, c);
  return {signed_area(p, b, c) / area, signed_area(a, p, c) / area, signed_area(a, b, p) / area};
}

/// A quadrature point on the reference triangle: barycentric coordinates and
/// a weight normalised so that the weights sum to one (multiply by the area).
struct QuadraturePoint {
  Vec3 bary;
  double weight;
};

/// Symmetric 6-point rule, exact for polynomials of degree 4.
inline std::span<const QuadraturePoint> degree4_rule() {
  static const std::array<QuadraturePoint, 6> rule = [] {
    constexpr double a1 = 0.445948490915964886318329253883;
    constexpr double b1 = 1.0 - 2.0 * a1;
    constexpr double w1 = 0.223381589678011465944827282897;
    constexpr double a2 = 0.091576213509770743459571463402;
    constexpr double b2 = 1.0 - 2.0 * a2;
    constexpr double w2 = 0.109951743655321867388505850436;
    return std::array<QuadraturePoint, 6>{{
        {Vec3(a1, a1, b1), w1}, {Vec3(a1, b1, a1), w1}, {Vec3(b1, a1, a1), w1},
        {Vec3(a2, a2, b2), w2}, {Vec3(a2, b2, a2), w2}, {Vec3(b2, a2, a2), w2},
    }};
  }();
  return rule;
}

/// Symmetric 7-point rule, exact for polynomials of degree 5.
inline std::span<const QuadraturePoint> degree5_rule() {
  static const std::array<QuadraturePoint, 7> rule = [] {
    const double s = std::sqrt(15.0);
    const double a1 = (6.0 - s) / 21.0, b1 = (9.0 + 2.0 * s) / 21.0, w1 = (155.0 - s) / 1200.0;
    const double a2 = (6.0 + s) / 21.0, b2 = (9.0 - 2.0 * s) / 21.0, w2 = (155.0 + s) / 1200.0;
    return std::array<QuadraturePoint, 7>{{
        {Vec3(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), 9.0 / 40.0},
        {Vec3(a1, a1, b1), w1}, {Vec3(a1, b1, a1), w1}, {Vec3(b1, a1, a1), w1},
        {Vec3(a2, a2, b2), w2}, {Vec3(a2, b2, a2), w2}, {Vec3(b2, a2, a2), w2},
    }};
  }();
  return rule;
}

/// Composite rule: the base rule applied on each of the level^2 congruent
/// sub-triangles of a uniform split. Points are expressed in the barycentric
/// coordinates of the parent triangle; weights still sum to one.
inline std::vector<QuadraturePoint> composite_rule(std::span<const QuadraturePoint> base, int level) {
  std::vector<QuadraturePoint> out;
  if (level <= 1) return {base.begin(), base.end()};
  const double n = level;
  const double w_scale = 1.0 / (n * n);
  auto emit = [&](const Vec3& v0, const Vec3& v1, const Vec3& v2) {
    for (const auto& q : base) out.push_back({q.bary[0] * v0 + q.bary[1] * v1 + q.bary[2] * v2, q.weight * w_scale});
  };
  // Lattice point (i, j) has barycentric coordinates (1 - (i+j)/n, i/n, j/n).
  auto lattice = [&](int i, int j) { return Vec3(1.0 - (i + j) / n, i / n, j / n); };
  for (int j = 0; j < level; ++j) {
    for (int i = 0; i + j < level; ++i) {
      emit(lattice(i, j), lattice(i + 1, j), lattice(i, j + 1));
      if (i + j + 1 < level) emit(lattice(i + 1, j), lattice(i + 1, j + 1), lattice(i, j + 1));
    }
  }
  return out;
}

}  // namespace plumetrace
