#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/mesh.hpp"

namespace plumetrace {

/// Wind velocity (m/s): either an analytic function of position or per-node
/// vectors interpolated linearly on each triangle.
class WindField {
 public:
  using Function = std::function<Vec2(const Vec2&)>;

  static WindField analytic(Function f) {
    WindField w;
    w.function_ = std::make_shared<const Function>(std::move(f));
    return w;
  }

  static WindField nodal(std::vector<Vec2> values) {
    WindField w;
    w.nodal_ = std::make_shared<const std::vector<Vec2>>(std::move(values));
    return w;
  }

  bool is_nodal() const { return nodal_ != nullptr; }

  /// Analytic evaluation; only valid for analytic fields.
  Vec2 evaluate(const Vec2& p) const {
    detail::require(function_ != nullptr, "wind: nodal field evaluated without a mesh");
    return (*function_)(p);
  }

  /// Velocity at a point given by barycentric coordinates in element e.
  Vec2 at(const Mesh& mesh, std::size_t e, const Vec3& bary) const {
    const auto& t = mesh.triangles()[e];
    if (nodal_) {
      check_size(mesh);
      return bary[0] * (*nodal_)[t[0]] + bary[1] * (*nodal_)[t[1]] + bary[2] * (*nodal_)[t[2]];
    }
    return (*function_)(bary[0] * mesh.node(t[0]) + bary[1] * mesh.node(t[1]) + bary[2] * mesh.node(t[2]));
  }

  Vec2 at_centroid(const Mesh& mesh, std::size_t e) const { return at(mesh, e, Vec3::Constant(1.0 / 3.0)); }

  /// Velocity at the midpoint of the segment between two nodes.
  Vec2 at_midpoint(const Mesh& mesh, std::size_t a, std::size_t b) const {
    if (nodal_) {
      check_size(mesh);
      return 0.5 * ((*nodal_)[a] + (*nodal_)[b]);
    }
    return (*function_)(0.5 * (mesh.node(a) + mesh.node(b)));
  }

  /// Velocity at an arbitrary point of the closed domain.
  Vec2 at_point(const Mesh& mesh, const Vec2& p) const {
    if (!nodal_) return (*function_)(p);
    const auto loc = mesh.locate(p);
    detail::require(loc.has_value(), "wind: point outside the mesh");
    return at(mesh, loc->element, loc->bary);
  }

  Vec2 at_node(const Mesh& mesh, std::size_t i) const {
    if (nodal_) {
      check_size(mesh);
      return (*nodal_)[i];
    }
    return (*function_)(mesh.node(i));
  }

 private:
  WindField() = default;

  void check_size(const Mesh& mesh) const {
    detail::require(nodal_->size() == mesh.num_nodes(), "wind: nodal field has " + std::to_string(nodal_->size()) +
                                                            " values for a mesh with " +
                                                            std::to_string(mesh.num_nodes()) + " nodes");
  }

  std::shared_ptr<const Function> function_;
  std::shared_ptr<const std::vector<Vec2>> nodal_;
};

inline WindField uniform_wind(double vx, double vy) {
  const Vec2 v(vx, vy);
  return WindField::analytic([v](const Vec2&) { return v; });
}

/// Rigid rotation about `center`; positive strength turns counter-clockwise.
inline WindField vortex_wind(const Vec2& center, double strength) {
  return WindField::analytic([center, strength](const Vec2& p) {
    const Vec2 r = p - center;
    return Vec2(-strength * r.y(), strength * r.x());
  });
}

/// Horizontal shear flow v = (rate * y, 0).
inline WindField shear_wind(double rate) {
  return WindField::analytic([rate](const Vec2& p) { return Vec2(rate * p.y(), 0.0); });
}

/// Pointwise sum of wind fields. Nodal parts need the mesh they live on; the
/// result is then nodal as well.
inline WindField sum_wind(std::vector<WindField> parts, const Mesh* mesh = nullptr) {
  const bool any_nodal = std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.is_nodal(); });
  if (any_nodal) {
    detail::require(mesh != nullptr, "wind: nodal fields need a mesh to be summed");
    std::vector<Vec2> values(mesh->num_nodes(), Vec2::Zero());
    for (const auto& p : parts)
      for (std::size_t i = 0; i < values.size(); ++i) values[i] += p.at_node(*mesh, i);
    return WindField::nodal(std::move(values));
  }
  return WindField::analytic([parts = std::move(parts)](const Vec2& x) {
    Vec2 v = Vec2::Zero();
    for (const auto& p : parts) v += p.evaluate(x);
    return v;
  });
}

/// Tags each boundary edge by the sign of v.n at its midpoint: Inflow below
/// -tol_vn, Outflow above tol_vn, Characteristic otherwise. A negative tol_vn
/// selects the default 1e-12 times the largest midpoint wind speed.
inline Mesh classify_boundary(const Mesh& mesh, const WindField& wind, double tol_vn = -1.0) {
  const auto& edges = mesh.boundary_edges();
  std::vector<double> vn(edges.size());
  double vmax = 0.0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Vec2 v = wind.at_midpoint(mesh, edges[i].nodes[0], edges[i].nodes[1]);
    vmax = std::max(vmax, v.norm());
    vn[i] = v.dot(mesh.outward_normal(edges[i]));
  }
  const double tol = tol_vn >= 0.0 ? tol_vn : 1e-12 * vmax;
  std::vector<BoundaryTag> tags(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i)
    tags[i] = vn[i] < -tol ? BoundaryTag::Inflow : (vn[i] > tol ? BoundaryTag::Outflow : BoundaryTag::Characteristic);
  return mesh.with_tags(tags);
}

/// Largest elementwise |div v| of the P1 interpolant of the wind.
inline double discrete_divergence_diagnostic(const Mesh& mesh, const WindField& wind) {
  std::vector<Vec2> v(mesh.num_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = wind.at_node(mesh, i);
  double worst = 0.0;
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const auto& t = mesh.triangles()[e];
    const Vec2& p0 = mesh.node(t[0]);
    const Vec2& p1 = mesh.node(t[1]);
    const Vec2& p2 = mesh.node(t[2]);
    const double two_a = 2.0 * mesh.area(e);
    const std::array<Vec2, 3> grad{Vec2(p1.y() - p2.y(), p2.x() - p1.x()) / two_a,
                                   Vec2(p2.y() - p0.y(), p0.x() - p2.x()) / two_a,
                                   Vec2(p0.y() - p1.y(), p1.x() - p0.x()) / two_a};
    double div = 0.0;
    for (int k = 0; k < 3; ++k) div += v[t[k]].dot(grad[k]);
    worst = std::max(worst, std::abs(div));
  }
  return worst;
}

}  // namespace plumetrace
