#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <compare>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/parallel.hpp"
#include "plumetrace/source_model.hpp"
#include "plumetrace/stack.hpp"

namespace plumetrace {

using Eigen::MatrixXd;

/// Candidate atom position: time level and mesh node.
struct AtomSite {
  std::size_t step = 0;
  std::size_t node = 0;

  auto operator<=>(const AtomSite&) const = default;
};

/// Readings of unit-intensity atoms, one column per site.
struct DesignMatrix {
  MatrixXd A;
  std::vector<AtomSite> sites;
};

/// Observations of the forward response to a unit atom at `site`.
inline VectorXd atom_response(const InversionStack& stack, const AtomSite& site) {
  const auto& sys = *stack.system;
  const auto& levels = stack.obs->levels();
  detail::require(site.step < stack.grid.n_steps, "design matrix: atom step " + std::to_string(site.step) +
                                                      " has no following time step");
  VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(stack.obs->size()));
  VectorXd u = sys.dt() * *stack.basis->node_projection(site.node);
  for (std::size_t k = site.step; k < stack.grid.n_steps; ++k) {
    VectorXd rhs = sys.rhs_operator() * u;
    detail::zero_masked(rhs, sys.dirichlet_mask());
    u = sys.solve(rhs, static_cast<std::ptrdiff_t>(k + 1));
    if (levels[k + 1].nonZeros() != 0) out += levels[k + 1] * u;
  }
  return out;
}

/// Columns are computed independently on `stack.threads` workers and stored
/// in the order of `sites`.
inline DesignMatrix build_design_matrix(const std::vector<AtomSite>& sites, const InversionStack& stack) {
  DesignMatrix D{MatrixXd(static_cast<Eigen::Index>(stack.obs->size()), static_cast<Eigen::Index>(sites.size())), sites};
  for (const auto& s : sites)
    detail::require(s.node < static_cast<std::size_t>(stack.n_dof()), "design matrix: node index out of range");
  parallel_for(sites.size(), stack.threads,
               [&](std::size_t j) { D.A.col(static_cast<Eigen::Index>(j)) = atom_response(stack, sites[j]); });
  return D;
}

struct LassoSolution {
  VectorXd lambda;
  double kkt_residual = 0.0;
  double objective_value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct LassoOptions {
  double tol = 1e-9;  ///< KKT tolerance (see default_lasso_tol for the data-scaled default)
  std::size_t max_iter = 500;
};

/// The lasso in Gram form: minimise 0.5 l'Hl - c'l + alpha sum(l) + c0 over l >= 0,
/// with H = A'A / sigma^2, c = A'd / sigma^2, c0 = |d|^2 / (2 sigma^2).
struct LassoGram {
  MatrixXd H;
  VectorXd c;
  double c0 = 0.0;
  double alpha = 0.0;

  static LassoGram from(const MatrixXd& A, const VectorXd& d, double sigma, double alpha) {
    detail::require(A.rows() == d.size(), "lasso: A has " + std::to_string(A.rows()) + " rows but d has " +
                                              std::to_string(d.size()) + " entries");
    detail::require(sigma > 0.0 && std::isfinite(sigma), "lasso: sigma must be positive");
    detail::require(alpha >= 0.0 && std::isfinite(alpha), "lasso: alpha must be nonnegative");
    const double w = 1.0 / (sigma * sigma);
    LassoGram g;
    g.H = MatrixXd(A.cols(), A.cols());
    g.H.setZero();
    g.H.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose(), w);
    g.H.triangularView<Eigen::StrictlyUpper>() = g.H.transpose();
    g.c = w * (A.transpose() * d);
    g.c0 = 0.5 * w * d.squaredNorm();
    g.alpha = alpha;
    return g;
  }

  Eigen::Index size() const { return c.size(); }
  VectorXd gradient(const VectorXd& l) const { return H * l - c; }
  double objective(const VectorXd& l) const { return 0.5 * l.dot(H * l) - c.dot(l) + alpha * l.sum() + c0; }
};

/// Largest violation of: l_j > 0 => |g_j + alpha| = 0, l_j = 0 => g_j + alpha >= 0.
inline double kkt_residual(const VectorXd& gradient, double alpha, const VectorXd& lambda) {
  double r = 0.0;
  for (Eigen::Index j = 0; j < lambda.size(); ++j) {
    const double s = gradient[j] + alpha;
    r = std::max(r, lambda[j] > 0.0 ? std::abs(s) : std::max(0.0, -s));
  }
  return r;
}

inline double kkt_residual(const MatrixXd& A, const VectorXd& d, double sigma, double alpha, const VectorXd& lambda) {
  detail::require(lambda.size() == A.cols(), "kkt_residual: lambda length does not match A");
  detail::require((lambda.array() >= 0.0).all(), "kkt_residual: lambda must be nonnegative");
  return kkt_residual(VectorXd(A.transpose() * (A * lambda - d) / (sigma * sigma)), alpha, lambda);
}

inline double lasso_objective(const MatrixXd& A, const VectorXd& d, double sigma, double alpha, const VectorXd& lambda) {
  return 0.5 * (A * lambda - d).squaredNorm() / (sigma * sigma) + alpha * lambda.sum();
}

namespace detail {

/// Minimiser of the quadratic restricted to the index set F (zero elsewhere).
inline VectorXd solve_on_set(const LassoGram& P, const std::vector<Eigen::Index>& F) {
  VectorXd x = VectorXd::Zero(P.size());
  if (F.empty()) return x;
  const auto k = static_cast<Eigen::Index>(F.size());
  MatrixXd Hf(k, k);
  VectorXd rhs(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    rhs[a] = P.c[F[a]] - P.alpha;
    for (Eigen::Index b = 0; b < k; ++b) Hf(a, b) = P.H(F[a], F[b]);
  }
  Eigen::LDLT<MatrixXd> ldlt(Hf);
  VectorXd z;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0) {
    z = ldlt.solve(rhs);
  } else {
    const double ridge = 1e-12 * std::max(Hf.diagonal().maxCoeff(), std::numeric_limits<double>::min());
    Hf.diagonal().array() += ridge;
    z = Hf.ldlt().solve(rhs);
  }
  if (!z.allFinite()) z = Hf.completeOrthogonalDecomposition().solve(rhs);
  for (Eigen::Index a = 0; a < k; ++a) x[F[a]] = z[a];
  return x;
}

}  // namespace detail

/// Semismooth Newton (primal-dual active set) iteration on the optimality
/// system l = max(0, l - (g + alpha) / diag(H)). A step is kept only if it
/// lowers the objective; otherwise a projected-arc search is tried, and as a
/// last resort a feasible active-set step on the current support plus the
/// most violated inactive coordinate, which always descends.
inline LassoSolution solve_nn_lasso(const LassoGram& P, const LassoOptions& opt = {},
                                    const std::optional<VectorXd>& warm_start = std::nullopt) {
  const Eigen::Index n = P.size();
  detail::require(opt.tol > 0.0, "lasso: tolerance must be positive");
  detail::require(opt.max_iter >= 1, "lasso: max_iter must be at least 1");
  LassoSolution sol;
  sol.lambda = VectorXd::Zero(n);
  if (warm_start) {
    detail::require(warm_start->size() == n, "lasso: warm start has the wrong length");
    sol.lambda = warm_start->cwiseMax(0.0);
  }
  if (n == 0) {
    sol.objective_value = P.c0;
    sol.converged = true;
    return sol;
  }

  VectorXd& l = sol.lambda;
  VectorXd g = P.gradient(l);
  double f = P.objective(l);
  double res = kkt_residual(g, P.alpha, l);
  const VectorXd diag = P.H.diagonal().cwiseMax(std::numeric_limits<double>::min());

  auto accept = [&](const VectorXd& cand) {
    const double fc = P.objective(cand);
    const VectorXd gc = P.gradient(cand);
    const double rc = kkt_residual(gc, P.alpha, cand);
    const double slack = 1e-15 * std::max(1.0, std::abs(f));
    if (fc < f || (fc <= f + slack && rc < res)) {
      l = cand;
      g = gc;
      f = std::min(f, fc);
      res = rc;
      return true;
    }
    return false;
  };

  while (res > opt.tol && sol.iterations < opt.max_iter) {
    ++sol.iterations;

    std::vector<Eigen::Index> F;
    for (Eigen::Index j = 0; j < n; ++j)
      if (l[j] - (g[j] + P.alpha) / diag[j] > 0.0) F.push_back(j);
    const VectorXd x = detail::solve_on_set(P, F);
    if (accept(x.cwiseMax(0.0))) continue;

    bool moved = false;
    for (double t = 0.5; t > 1e-10 && !moved; t *= 0.5) moved = accept(VectorXd((l + t * (x - l)).cwiseMax(0.0)));
    if (moved) continue;

    std::vector<Eigen::Index> S;
    Eigen::Index worst = -1;
    double worst_val = -opt.tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (l[j] > 0.0) {
        S.push_back(j);
      } else if (g[j] + P.alpha < worst_val) {
        worst_val = g[j] + P.alpha;
        worst = j;
      }
    }
    if (worst >= 0) S.insert(std::upper_bound(S.begin(), S.end(), worst), worst);
    VectorXd cur = l;
    for (int inner = 0; inner < static_cast<int>(n) + 1 && !S.empty(); ++inner) {
      const VectorXd z = detail::solve_on_set(P, S);
      double step = 1.0;
      for (auto j : S)
        if (z[j] <= 0.0) step = std::min(step, cur[j] / (cur[j] - z[j]));
      cur = (cur + step * (z - cur)).cwiseMax(0.0);
      if (step >= 1.0) break;
      std::erase_if(S, [&](Eigen::Index j) { return cur[j] <= 0.0; });
      for (Eigen::Index j = 0; j < n; ++j)
        if (std::find(S.begin(), S.end(), j) == S.end()) cur[j] = 0.0;
    }
    if (!accept(cur)) break;
  }

  sol.kkt_residual = res;
  sol.objective_value = f;
  sol.converged = res <= opt.tol;
  return sol;
}

/// Default KKT tolerance 1e-9 (1 + |d|_inf / sigma^2).
inline double default_lasso_tol(const VectorXd& d, double sigma) {
  const double dmax = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
  return 1e-9 * (1.0 + dmax / (sigma * sigma));
}

/// min (1 / (2 sigma^2)) |A l - d|^2 + alpha sum(l) subject to l >= 0.
inline LassoSolution solve_nn_lasso(const MatrixXd& A, const VectorXd& d, double sigma, double alpha, double tol = -1.0,
                                    std::size_t max_iter = 500) {
  const LassoGram P = LassoGram::from(A, d, sigma, alpha);
  return solve_nn_lasso(P, {tol > 0.0 ? tol : default_lasso_tol(d, sigma), max_iter});
}

}  // namespace plumetrace
