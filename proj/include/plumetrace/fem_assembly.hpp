#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/mesh.hpp"
#include "plumetrace/wind.hpp"

namespace plumetrace {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Eigen::VectorXd;

/// Assembled P1 operators for one (mesh, wind, kappa) triple.
///
///   M_ij = int phi_i phi_j            K_ij = int grad phi_i . grad phi_j
///   V_ij = int phi_i (v . grad phi_j) S_ij = int (v . grad phi_i)(v . grad phi_j)
///
/// The Laplacian part of the streamline operator vanishes for P1 elements and
/// is not represented. `tau_S` and `tau_V` carry the per-element SUPG weight
/// tau_E inside the element sums; these are what the time steppers use.
struct OperatorSet {
  std::shared_ptr<const Mesh> mesh;
  SparseMatrix M, K, V, S;
  SparseMatrix tau_S, tau_V;
  std::vector<double> tau;
  double kappa = 0.0;
  std::vector<std::size_t> inflow_dofs;

  Eigen::Index n_dof() const { return M.rows(); }
};

/// SUPG weight min(h^2 / (2 kappa), h / |v|), or h^2 / (2 kappa) for |v| = 0.
inline double supg_tau(double h, double kappa, double speed) {
  const double diffusive = h * h / (2.0 * kappa);
  return speed > 0.0 ? std::min(diffusive, h / speed) : diffusive;
}

namespace detail {

struct ElementGeometry {
  double area;
  std::array<Vec2, 3> grad;  // constant gradients of the three hat functions
};

inline ElementGeometry element_geometry(const Mesh& mesh, std::size_t e) {
  const auto& t = mesh.triangles()[e];
  const Vec2& p0 = mesh.node(t[0]);
  const Vec2& p1 = mesh.node(t[1]);
  const Vec2& p2 = mesh.node(t[2]);
  const double area = signed_area(p0, p1, p2);
  const double two_a = 2.0 * area;
  return {area,
          {Vec2(p1.y() - p2.y(), p2.x() - p1.x()) / two_a, Vec2(p2.y() - p0.y(), p0.x() - p2.x()) / two_a,
           Vec2(p0.y() - p1.y(), p1.x() - p0.x()) / two_a}};
}

}  // namespace detail

/// Consistent P1 mass matrix (exact element integrals).
inline SparseMatrix assemble_mass(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.num_triangles());
  for (std::size_t e = 0; e < mesh.num_triangles(); ++e) {
    const auto& t = mesh.triangles()[e];
    const double a = mesh.area(e);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trip.emplace_back(static_cast<int>(t[i]), static_cast<int>(t[j]), a / (i == j ? 6.0 : 12.0));
  }
  const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
  SparseMatrix M(n, n);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

/// Assembles M, K, V, S and the per-element SUPG weights. The wind is sampled
/// once per element at the centroid, which makes V and S exact for
/// elementwise-constant wind. The mesh boundary must already be classified.
inline std::shared_ptr<const OperatorSet> assemble(std::shared_ptr<const Mesh> mesh, const WindField& wind, double kappa) {
  detail::require(mesh != nullptr, "assemble: null mesh");
  detail::require(kappa > 0.0 && std::isfinite(kappa), "assemble: kappa must be positive");
  detail::require(mesh->is_classified(), "assemble: boundary edges are not classified (run classify_boundary)");

  const std::size_t ne = mesh->num_triangles();
  using T = Eigen::Triplet<double>;
  std::vector<T> tm, tk, tv, ts, tts, ttv;
  for (auto* v : {&tm, &tk, &tv, &ts, &tts, &ttv}) v->reserve(9 * ne);

  auto ops = std::make_shared<OperatorSet>();
  ops->kappa = kappa;
  ops->tau.resize(ne);

  for (std::size_t e = 0; e < ne; ++e) {
    const auto& t = mesh->triangles()[e];
    const auto g = detail::element_geometry(*mesh, e);
    const Vec2 vc = wind.at_centroid(*mesh, e);
    const double tau = supg_tau(mesh->diameter(e), kappa, vc.norm());
    ops->tau[e] = tau;
    std::array<double, 3> streamline{};
    for (int i = 0; i < 3; ++i) streamline[i] = g.grad[i].dot(vc);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int r = static_cast<int>(t[i]), c = static_cast<int>(t[j]);
        const double m = g.area / (i == j ? 6.0 : 12.0);
        const double k = g.area * g.grad[i].dot(g.grad[j]);
        const double v = g.area / 3.0 * streamline[j];
        const double s = g.area * streamline[i] * streamline[j];
        tm.emplace_back(r, c, m);
        tk.emplace_back(r, c, k);
        tv.emplace_back(r, c, v);
        ts.emplace_back(r, c, s);
        tts.emplace_back(r, c, tau * s);
        ttv.emplace_back(r, c, tau * v);
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(mesh->num_nodes());
  auto build = [n](std::vector<T>& trip) {
    SparseMatrix A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
  };
  ops->M = build(tm);
  ops->K = build(tk);
  ops->V = build(tv);
  ops->S = build(ts);
  ops->tau_S = build(tts);
  ops->tau_V = build(ttv);
  ops->inflow_dofs = mesh->nodes_with_tag(BoundaryTag::Inflow);
  ops->mesh = std::move(mesh);
  return ops;
}

}  // namespace plumetrace
