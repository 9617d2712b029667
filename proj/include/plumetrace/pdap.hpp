#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plumetrace/errors.hpp"
#include "plumetrace/nn_lasso.hpp"
#include "plumetrace/parallel.hpp"
#include "plumetrace/sensing.hpp"
#include "plumetrace/source_model.hpp"
#include "plumetrace/stack.hpp"
#include "plumetrace/transport.hpp"

namespace plumetrace {

struct PdapConfig {
  double alpha = 1.0;
  double insert_tol = -1.0;  ///< negative: 1e-3 alpha
  double prune_tol = -1.0;   ///< negative: 1e-8 max(lambda)
  std::size_t max_iter = 100;
  double lasso_tol = -1.0;   ///< negative: the lasso default
  std::size_t lasso_max_iter = 500;

  void validate() const {
    detail::require(alpha > 0.0 && std::isfinite(alpha), "pdap: alpha must be positive");
    detail::require(max_iter >= 1, "pdap: max_iter must be at least 1");
    detail::require(lasso_max_iter >= 1, "pdap: lasso_max_iter must be at least 1");
    detail::require(std::isfinite(insert_tol) && std::isfinite(prune_tol), "pdap: tolerances must be finite");
  }

  double effective_insert_tol() const { return insert_tol >= 0.0 ? insert_tol : 1e-3 * alpha; }
};

struct IterationRecord {
  std::size_t iteration = 0;
  double objective = 0.0;     ///< objective after this iteration's lasso and pruning
  double misfit_norm = 0.0;   ///< |G(m) - d| after this iteration
  double max_dual = 0.0;      ///< max phi of the dual field computed at the start
  std::size_t added = 0;
  std::size_t pruned = 0;
  std::size_t active = 0;
  std::size_t lasso_iterations = 0;
  double lasso_kkt = 0.0;
};

struct ReconstructionReport {
  SourceAtomSet atoms;
  std::vector<IterationRecord> history;
  bool converged = false;
  std::size_t iterations = 0;
  double sigma = 0.0;
  double final_max_dual = 0.0;
  VectorXd predicted;  ///< G(m) of the returned atoms
  PdapConfig config;

  double relative_residual(const VectorXd& d) const {
    const double nd = d.norm();
    return nd > 0.0 ? (predicted - d).norm() / nd : predicted.norm();
  }
};

/// phi^n = -dt W^T q^n with q the adjoint pairing field, n = 0..n_steps. This
/// is the negative gradient of the data term with respect to the intensity of
/// an atom at (n, node), so phi > alpha marks a descent direction. Level
/// n_steps is zero since a source there acts on no step.
inline std::vector<VectorXd> dual_field(const SparseMatrix& W, const AdjointField& adjoint, unsigned threads = 1) {
  const auto& q = adjoint.pairing;
  const std::size_t levels = q.values.size();
  std::vector<VectorXd> phi(levels);
  parallel_for(levels, threads, [&](std::size_t n) {
    if (q.values[n].size() == 0 || n + 1 == levels) {
      phi[n] = VectorXd::Zero(W.cols());
      return;
    }
    detail::require(q.values[n].size() == W.rows(), "dual_field: adjoint size does not match W");
    phi[n] = -q.grid.dt * (W.transpose() * q.values[n]);
  });
  return phi;
}

namespace detail {

inline double pdap_objective(const VectorXd& pred, const VectorXd& d, double sigma, double alpha, const VectorXd& lambda) {
  return 0.5 * (pred - d).squaredNorm() / (sigma * sigma) + alpha * lambda.sum();
}

}  // namespace detail

/// Primal-dual active point iteration: insert the per-step maximiser of the
/// dual field wherever it exceeds alpha + insert_tol, re-solve the lasso over
/// all active atoms, prune vanishing ones, and stop when nothing is inserted.
inline ReconstructionReport pdap_run(const InversionStack& stack, const MeasurementSet& data, const PdapConfig& cfg) {
  stack.validate();
  cfg.validate();
  const auto n_obs = static_cast<Eigen::Index>(stack.obs->size());
  detail::require(data.d.size() == n_obs, "pdap: data has " + std::to_string(data.d.size()) + " entries, expected " +
                                              std::to_string(n_obs));
  detail::require(data.d.allFinite(), "pdap: data contains non-finite values");

  ReconstructionReport rep;
  rep.config = cfg;
  rep.sigma = effective_sigma(data);
  const double sigma = rep.sigma;
  const double w = 1.0 / (sigma * sigma);
  const double insert_tol = cfg.effective_insert_tol();
  const double lasso_tol = cfg.lasso_tol > 0.0 ? cfg.lasso_tol : default_lasso_tol(data.d, sigma);

  std::vector<AtomSite> sites;
  MatrixXd A(n_obs, 0);
  LassoGram P;
  P.H = MatrixXd(0, 0);
  P.c = VectorXd(0);
  P.c0 = 0.5 * w * data.d.squaredNorm();
  P.alpha = cfg.alpha;
  VectorXd lambda(0);
  VectorXd pred = VectorXd::Zero(n_obs);

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    rep.iterations = it;
    IterationRecord rec;
    rec.iteration = it;

    const VectorXd y = misfit(pred, data.d, sigma);
    const AdjointField adj = solve_adjoint(*stack.system, y, *stack.obs, stack.grid);
    const auto phi = dual_field(*stack.W, adj, stack.threads);

    std::set<AtomSite> active(sites.begin(), sites.end());
    std::vector<AtomSite> fresh;
    double max_dual = 0.0;
    for (std::size_t n = 0; n < stack.grid.n_steps; ++n) {
      Eigen::Index best = 0;
      const double v = phi[n].maxCoeff(&best);  // first maximal index
      if (n == 0 || v > max_dual) max_dual = v;
      const AtomSite s{n, static_cast<std::size_t>(best)};
      if (v > cfg.alpha + insert_tol && !active.count(s)) fresh.push_back(s);
    }
    rec.max_dual = max_dual;
    rep.final_max_dual = max_dual;
    rec.added = fresh.size();

    if (fresh.empty()) {
      rec.objective = detail::pdap_objective(pred, data.d, sigma, cfg.alpha, lambda);
      rec.misfit_norm = (pred - data.d).norm();
      rec.active = sites.size();
      rep.history.push_back(rec);
      rep.converged = true;
      break;
    }

    // Extend the design matrix and its Gram data by the new columns.
    const DesignMatrix Dn = build_design_matrix(fresh, stack);
    const Eigen::Index k0 = A.cols(), m = Dn.A.cols();
    MatrixXd A2(n_obs, k0 + m);
    A2 << A, Dn.A;
    MatrixXd H2(k0 + m, k0 + m);
    H2.topLeftCorner(k0, k0) = P.H;
    const MatrixXd cross = w * (A.transpose() * Dn.A);
    H2.topRightCorner(k0, m) = cross;
    H2.bottomLeftCorner(m, k0) = cross.transpose();
    H2.bottomRightCorner(m, m) = w * (Dn.A.transpose() * Dn.A);
    VectorXd c2(k0 + m);
    c2 << P.c, w * (Dn.A.transpose() * data.d);
    VectorXd l2 = VectorXd::Zero(k0 + m);
    l2.head(k0) = lambda;
    A = std::move(A2);
    P.H = std::move(H2);
    P.c = std::move(c2);
    sites.insert(sites.end(), fresh.begin(), fresh.end());

    const LassoSolution sol = solve_nn_lasso(P, {lasso_tol, cfg.lasso_max_iter}, l2);
    rec.lasso_iterations = sol.iterations;
    rec.lasso_kkt = sol.kkt_residual;
    lambda = sol.lambda;

    // Prune vanishing atoms.
    const double lmax = lambda.size() ? lambda.maxCoeff() : 0.0;
    const double cut = cfg.prune_tol >= 0.0 ? cfg.prune_tol : 1e-8 * lmax;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < lambda.size(); ++j)
      if (lambda[j] > 0.0 && lambda[j] >= cut) keep.push_back(j);
    rec.pruned = static_cast<std::size_t>(lambda.size()) - keep.size();
    if (rec.pruned > 0) {
      const auto k = static_cast<Eigen::Index>(keep.size());
      MatrixXd Ak(n_obs, k), Hk(k, k);
      VectorXd ck(k), lk(k);
      std::vector<AtomSite> sk;
      for (Eigen::Index a = 0; a < k; ++a) {
        Ak.col(a) = A.col(keep[a]);
        ck[a] = P.c[keep[a]];
        lk[a] = lambda[keep[a]];
        for (Eigen::Index b = 0; b < k; ++b) Hk(a, b) = P.H(keep[a], keep[b]);
        sk.push_back(sites[static_cast<std::size_t>(keep[a])]);
      }
      A = std::move(Ak);
      P.H = std::move(Hk);
      P.c = std::move(ck);
      lambda = std::move(lk);
      sites = std::move(sk);
    }

    pred = A * lambda;
    rec.objective = detail::pdap_objective(pred, data.d, sigma, cfg.alpha, lambda);
    rec.misfit_norm = (pred - data.d).norm();
    rec.active = sites.size();
    rep.history.push_back(rec);
  }

  for (std::size_t j = 0; j < sites.size(); ++j)
    rep.atoms.atoms.push_back({sites[j].step, sites[j].node, lambda[static_cast<Eigen::Index>(j)]});
  rep.predicted = pred;
  return rep;
}

/// Forward field of the atoms on [0, T_pred] with the stack's time step.
inline SpaceTimeField predict(const SourceAtomSet& atoms, const InversionStack& stack, double t_pred) {
  detail::require(t_pred >= stack.grid.horizon() - 1e-9 * stack.grid.dt,
                  "predict: horizon " + std::to_string(t_pred) + " is shorter than the observation window");
  const std::size_t steps = static_cast<std::size_t>(std::llround(t_pred / stack.grid.dt));
  const TimeGrid grid{stack.grid.dt, std::max<std::size_t>(steps, stack.grid.n_steps)};
  return solve_forward(*stack.system, atoms_to_source(atoms, *stack.basis, grid), grid);
}

inline nlohmann::json to_json(const PdapConfig& c) {
  return {{"alpha", c.alpha},
          {"insert_tol", c.effective_insert_tol()},
          {"prune_tol", c.prune_tol},
          {"max_iter", c.max_iter},
          {"lasso_tol", c.lasso_tol},
          {"lasso_max_iter", c.lasso_max_iter}};
}

inline nlohmann::json to_json(const ReconstructionReport& r, const Mesh& mesh, const TimeGrid& grid, const VectorXd& d) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : r.atoms.atoms) {
    const Vec2& p = mesh.node(a.node);
    atoms.push_back({{"n", a.step}, {"t", grid.time(a.step)}, {"node", a.node}, {"x", p.x()}, {"y", p.y()},
                     {"lambda", a.intensity}});
  }
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : r.history)
    hist.push_back({{"iteration", h.iteration},
                    {"objective", h.objective},
                    {"misfit_norm", h.misfit_norm},
                    {"max_dual", h.max_dual},
                    {"added", h.added},
                    {"pruned", h.pruned},
                    {"active", h.active},
                    {"lasso_iterations", h.lasso_iterations},
                    {"lasso_kkt", h.lasso_kkt}});
  return {{"converged", r.converged},
          {"iterations", r.iterations},
          {"sigma", r.sigma},
          {"final_max_dual", r.final_max_dual},
          {"relative_residual", r.relative_residual(d)},
          {"atoms", atoms},
          {"history", hist},
          {"config", to_json(r.config)}};
}

}  // namespace plumetrace
