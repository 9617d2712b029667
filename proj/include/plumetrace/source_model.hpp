#pragma once

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/fem_assembly.hpp"
#include "plumetrace/geometry.hpp"
#include "plumetrace/mesh.hpp"
#include "plumetrace/parallel.hpp"
#include "plumetrace/transport.hpp"

namespace plumetrace {

/// Parameters of the capped radial source profile.
struct ShapeParams {
  double radius = 0.1;       ///< distance at which the profile drops to eps (m)
  double eps = 1e-3;
  double cap = 0.5;
  double trunc_tol = 1e-10;  ///< load entries below this are dropped
  int quad_refine = 4;       ///< minimum sub-triangle split level of the load quadrature

  void validate() const {
    detail::require(radius > 0.0 && std::isfinite(radius), "shape: radius must be positive");
    detail::require(eps > 0.0 && eps < 1.0, "shape: eps must lie in (0, 1)");
    detail::require(cap > 0.0 && cap <= 1.0, "shape: cap must lie in (0, 1]");
    detail::require(trunc_tol >= 0.0 && trunc_tol < cap, "shape: trunc_tol must lie in [0, cap)");
    detail::require(quad_refine >= 1 && quad_refine <= 64, "shape: quad_refine must lie in [1, 64]");
  }
};

/// omega(x_s, y) = min(cap, eps^(|y - x_s|^2 / r^2)).
inline double shape_omega(const Vec2& xs, const Vec2& y, const ShapeParams& p) {
  return std::min(p.cap, std::exp(std::log(p.eps) * (y - xs).squaredNorm() / (p.radius * p.radius)));
}

/// Distance beyond which omega < trunc_tol.
inline double shape_support_radius(const ShapeParams& p) {
  if (p.trunc_tol <= 0.0) return std::numeric_limits<double>::infinity();
  return p.radius * std::sqrt(std::log(p.trunc_tol) / std::log(p.eps));
}

/// Radius of the circle on which omega reaches the cap; the profile has a
/// kink there. Zero when cap = 1.
inline double shape_cap_radius(const ShapeParams& p) {
  return p.radius * std::sqrt(std::log(p.cap) / std::log(p.eps));
}

namespace detail {

inline double point_triangle_distance(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  if (barycentric(p, a, b, c).minCoeff() >= 0.0) return 0.0;
  auto seg = [&p](const Vec2& u, const Vec2& v) {
    const Vec2 d = v - u;
    const double s = std::clamp((p - u).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return (u + s * d - p).norm();
  };
  return std::min({seg(a, b), seg(b, c), seg(c, a)});
}

inline constexpr int kKinkDepth = 6;

/// b_i = int phi_i g over the elements that can meet the disc |y - xs| < reach.
/// Each element is split into n^2 sub-triangles carrying the base rule, with
/// n = max(level, ceil(diameter / resolution));
/// sub-triangles crossed by the circle |y - xs| = kink (where g is only
/// continuous) are bisected recursively up to kKinkDepth times first.
template <typename Fn>
VectorXd element_load(const Mesh& mesh, std::span<const QuadraturePoint> base, int level, double resolution,
                      const Vec2& xs, double reach, double kink, Fn&& g) {
  VectorXd b = VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const double diam = mesh.diameter(e);
    if ((mesh.centroid(e) - xs).norm() - diam >= reach) continue;
    const double n = std::max({1.0, static_cast<double>(level), resolution > 0.0 ? std::ceil(diam / resolution) : 0.0});
    const auto& t = mesh.triangles()[e];
    const Vec2& p0 = mesh.node(t[0]);
    const Vec2& p1 = mesh.node(t[1]);
    const Vec2& p2 = mesh.node(t[2]);
    auto phys = [&](const Vec3& c) -> Vec2 { return c[0] * p0 + c[1] * p1 + c[2] * p2; };
    Vec3 acc = Vec3::Zero();
    auto integrate = [&](auto& self, const Vec3& c0, const Vec3& c1, const Vec3& c2, double frac, int depth) -> void {
      if (kink > 0.0 && depth < kKinkDepth) {
        const Vec2 a = phys(c0), bb = phys(c1), c = phys(c2);
        const double dmax = std::max({(a - xs).norm(), (bb - xs).norm(), (c - xs).norm()});
        if (dmax > kink && point_triangle_distance(xs, a, bb, c) < kink) {
          const Vec3 m01 = 0.5 * (c0 + c1), m12 = 0.5 * (c1 + c2), m20 = 0.5 * (c2 + c0);
          self(self, c0, m01, m20, 0.25 * frac, depth + 1);
          self(self, m01, c1, m12, 0.25 * frac, depth + 1);
          self(self, m20, m12, c2, 0.25 * frac, depth + 1);
          self(self, m01, m12, m20, 0.25 * frac, depth + 1);
          return;
        }
      }
      for (const auto& q : base) {
        const Vec3 bary = q.bary[0] * c0 + q.bary[1] * c1 + q.bary[2] * c2;
        acc += (frac * q.weight * g(phys(bary))) * bary;
      }
    };
    // Lattice point (i, j) has barycentric coordinates (1 - (i+j)/n, i/n, j/n).
    auto lattice = [&](int i, int j) { return Vec3(1.0 - (i + j) / n, i / n, j / n); };
    const double frac = 1.0 / (n * n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i + j < n; ++i) {
        integrate(integrate, lattice(i, j), lattice(i + 1, j), lattice(i, j + 1), frac, 0);
        if (i + j + 1 < n) integrate(integrate, lattice(i + 1, j), lattice(i + 1, j + 1), lattice(i, j + 1), frac, 0);
      }
    }
    const double area = mesh.area(e);
    for (int k = 0; k < 3; ++k) b[static_cast<Eigen::Index>(t[k])] += area * acc[k];
  }
  return b;
}

}  // namespace detail

/// Load vector b_i = int phi_i omega(x_s, .) with entries below trunc_tol set to 0.
inline VectorXd shape_load(const Mesh& mesh, const Vec2& xs, const ShapeParams& p) {
  p.validate();
  VectorXd b = detail::element_load(mesh, degree4_rule(), p.quad_refine, 0.25 * p.radius, xs, shape_support_radius(p),
                                    shape_cap_radius(p), [&](const Vec2& y) { return shape_omega(xs, y, p); });
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (b[i] < p.trunc_tol) b[i] = 0.0;
  return b;
}

/// Shape loads and L2 projections on one mesh. Per-node results are cached
/// and the cache may be filled from several threads.
class ShapeBasis {
 public:
  ShapeBasis(std::shared_ptr<const Mesh> mesh, ShapeParams params) : mesh_(std::move(mesh)), params_(params) {
    detail::require(mesh_ != nullptr, "shape basis: null mesh");
    params_.validate();
    M_ = assemble_mass(*mesh_);
    mass_.compute(M_);
    if (mass_.info() != Eigen::Success) throw NumericalError("shape basis: mass matrix factorisation failed");
  }

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const ShapeParams& params() const { return params_; }
  const SparseMatrix& mass() const { return M_; }

  VectorXd load(const Vec2& xs) const { return shape_load(*mesh_, xs, params_); }

  /// f with M f = b(x_s).
  VectorXd project(const Vec2& xs) const {
    detail::require(mesh_->locate(xs).has_value(), "project_shape: source location outside the domain");
    return mass_.solve(load(xs));
  }

  /// L2 projection of an arbitrary load vector.
  VectorXd project_load(const VectorXd& b) const { return mass_.solve(b); }

  std::shared_ptr<const VectorXd> node_projection(std::size_t node) const {
    detail::require(node < mesh_->num_nodes(), "shape basis: node index out of range");
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(node); it != cache_.end()) return it->second;
    }
    auto f = std::make_shared<const VectorXd>(project(mesh_->node(node)));
    std::lock_guard lock(mutex_);
    return cache_.emplace(node, std::move(f)).first->second;
  }

 private:
  std::shared_ptr<const Mesh> mesh_;
  ShapeParams params_;
  SparseMatrix M_;
  Eigen::SimplicialLDLT<SparseMatrix> mass_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::shared_ptr<const VectorXd>> cache_;
};

inline VectorXd project_shape(const ShapeBasis& basis, const Vec2& xs) { return basis.project(xs); }

/// Piecewise-linear source trajectory with intensity, switched on only
/// inside [t_on, t_off]. Outside the breakpoint range values are held.
struct ParameterCurve {
  struct Breakpoint {
    double t;
    double intensity;
    Vec2 location;
  };
  std::vector<Breakpoint> breakpoints;
  double t_on = 0.0;
  double t_off = 0.0;

  void validate(const Mesh* mesh = nullptr) const {
    detail::require(!breakpoints.empty(), "curve: no breakpoints");
    detail::require(t_on <= t_off, "curve: t_on must not exceed t_off");
    for (std::size_t i = 0; i < breakpoints.size(); ++i) {
      const auto& b = breakpoints[i];
      detail::require(b.intensity >= 0.0 && std::isfinite(b.intensity), "curve: intensities must be nonnegative");
      if (i > 0) detail::require(b.t > breakpoints[i - 1].t, "curve: breakpoint times must increase strictly");
      if (mesh)
        detail::require(mesh->locate(b.location).has_value(),
                        "curve: breakpoint " + std::to_string(i) + " location lies outside the domain");
    }
  }

  bool active(double t) const {
    const double slack = 1e-9 * std::max(1.0, std::abs(t));
    return t >= t_on - slack && t <= t_off + slack;
  }

  double intensity(double t) const {
    if (!active(t)) return 0.0;
    return interpolate(t, [](const Breakpoint& b) { return b.intensity; });
  }

  /// Location at time t; times outside the active window map to the nearest window end.
  Vec2 location(double t) const {
    const double tc = std::clamp(t, t_on, t_off);
    return interpolate(tc, [](const Breakpoint& b) { return b.location; });
  }

 private:
  template <typename Get>
  auto interpolate(double t, Get get) const -> decltype(get(breakpoints.front())) {
    using V = decltype(get(breakpoints.front()));
    if (t <= breakpoints.front().t) return get(breakpoints.front());
    if (t >= breakpoints.back().t) return get(breakpoints.back());
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t,
                                     [](double v, const Breakpoint& b) { return v < b.t; });
    const auto& b1 = *it;
    const auto& b0 = *(it - 1);
    const double s = (t - b0.t) / (b1.t - b0.t);
    return V((1.0 - s) * get(b0) + s * get(b1));
  }
};

/// m^n = lambda(t_n) * f(x_s(t_n)) for n = 0..n_steps, zero outside the window.
inline SourceField sample_curve(const ParameterCurve& curve, const TimeGrid& grid, const ShapeBasis& basis) {
  curve.validate(&basis.mesh());
  grid.validate();
  SourceField src{std::vector<VectorXd>(grid.n_steps + 1)};
  for (std::size_t n = 0; n <= grid.n_steps; ++n) {
    const double lam = curve.intensity(grid.time(n));
    if (lam == 0.0) continue;
    src.steps[n] = lam * basis.project(curve.location(grid.time(n)));
  }
  return src;
}

/// One reconstructed source contribution: a shape centred on a mesh node,
/// active in the time step starting at level `step`.
struct Atom {
  std::size_t step = 0;
  std::size_t node = 0;
  double intensity = 0.0;
};

struct SourceAtomSet {
  std::vector<Atom> atoms;

  bool empty() const { return atoms.empty(); }
  std::size_t size() const { return atoms.size(); }
};

/// m^n = sum_j lambda_j f(node_j) over the atoms at step n.
inline SourceField atoms_to_source(const SourceAtomSet& set, const ShapeBasis& basis, const TimeGrid& grid) {
  SourceField src{std::vector<VectorXd>(grid.n_steps + 1)};
  const auto n_dof = static_cast<Eigen::Index>(basis.mesh().num_nodes());
  for (const auto& a : set.atoms) {
    detail::require(a.intensity >= 0.0, "atoms: intensities must be nonnegative");
    detail::require(a.step <= grid.n_steps, "atoms: step " + std::to_string(a.step) + " beyond the time grid");
    if (a.intensity == 0.0) continue;
    auto& m = src.steps[a.step];
    if (m.size() == 0) m = VectorXd::Zero(n_dof);
    m += a.intensity * *basis.node_projection(a.node);
  }
  return src;
}

/// Columns are the truncated shape loads b_j = M f_j of every node, so that
/// W^T q is the vector of integrals int omega(p_j, .) q_h.
inline SparseMatrix assemble_W(const Mesh& mesh, const ShapeParams& p, unsigned threads = 1) {
  p.validate();
  const std::size_t n = mesh.num_nodes();
  std::vector<VectorXd> cols(n);
  parallel_for(n, threads, [&](std::size_t j) { cols[j] = shape_load(mesh, mesh.node(j), p); });
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < cols[j].size(); ++i)
      if (cols[j][i] != 0.0) trip.emplace_back(static_cast<int>(i), static_cast<int>(j), cols[j][i]);
  SparseMatrix W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  W.setFromTriplets(trip.begin(), trip.end());
  W.makeCompressed();
  return W;
}

}  // namespace plumetrace
