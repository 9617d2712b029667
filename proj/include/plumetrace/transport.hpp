#pragma once

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <atomic>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/fem_assembly.hpp"

namespace plumetrace {

/// Uniform time grid t_n = n * dt, n = 0..n_steps.
struct TimeGrid {
  double dt = 0.0;
  std::size_t n_steps = 0;

  double horizon() const { return dt * static_cast<double>(n_steps); }
  double time(std::size_t n) const { return dt * static_cast<double>(n); }

  void validate() const {
    detail::require(dt > 0.0 && std::isfinite(dt), "time grid: dt must be positive");
    detail::require(n_steps >= 1, "time grid: need at least one step");
  }

  /// Grid with the given step covering [0, horizon] (horizon rounded to a whole number of steps).
  static TimeGrid covering(double dt, double horizon) {
    detail::require(dt > 0.0 && horizon > 0.0, "time grid: dt and horizon must be positive");
    TimeGrid g{dt, static_cast<std::size_t>(std::llround(horizon / dt))};
    g.validate();
    return g;
  }
};

/// Nodal values at every time level n = 0..n_steps. An empty vector at a
/// level stands for the zero field.
struct SpaceTimeField {
  TimeGrid grid;
  std::vector<VectorXd> values;

  /// Values at level n, materialising implicit zeros.
  VectorXd at(std::size_t n, Eigen::Index n_dof) const {
    return values[n].size() == 0 ? VectorXd::Zero(n_dof) : values[n];
  }
};

/// Discrete source m^n per time level. Level n feeds the step n -> n+1, so
/// the entry at n_steps (if present) has no effect. Empty vectors are zero.
struct SourceField {
  std::vector<VectorXd> steps;
};

struct SolveStats {
  std::size_t factorizations = 0;
  std::size_t solves = 0;
  std::size_t transposed_solves = 0;
};

/// Residual target for every linear solve.
inline constexpr double kSolveTolerance = 1e-10;

namespace detail {

/// Replaces the rows flagged in `mask` by identity rows.
inline SparseMatrix replace_rows(const SparseMatrix& A, const std::vector<char>& mask) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(A.nonZeros()) + mask.size());
  for (Eigen::Index c = 0; c < A.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(A, c); it; ++it)
      if (!mask[static_cast<std::size_t>(it.row())]) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(c), it.value());
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  SparseMatrix out(A.rows(), A.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

inline double relative_residual(const SparseMatrix& A, const VectorXd& x, const VectorXd& b) {
  const double nb = b.norm();
  return (b - A * x).norm() / (nb > 0.0 ? nb : 1.0);
}

inline void zero_masked(VectorXd& v, const std::vector<char>& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) v[static_cast<Eigen::Index>(i)] = 0.0;
}

}  // namespace detail

/// Implicit-Euler SUPG system for a fixed dt:
///
///   A_f = M + dt V + dt kappa K + dt (tau S) + (tau V^T),   B = M + (tau V^T)
///
/// with inflow rows of A_f replaced by identity rows. The sparse LU
/// factorisation is computed once at construction and shared by forward
/// solves and transposed (adjoint) solves. Solving is const and may be done
/// from several threads at once.
class TransientSystem {
 public:
  TransientSystem(std::shared_ptr<const OperatorSet> ops, double dt) : ops_(std::move(ops)), dt_(dt) {
    detail::require(ops_ != nullptr, "transient system: null operators");
    detail::require(dt_ > 0.0 && std::isfinite(dt_), "transient system: dt must be positive");
    const auto& o = *ops_;
    mask_.assign(static_cast<std::size_t>(o.n_dof()), 0);
    for (auto i : o.inflow_dofs) mask_[i] = 1;

    SparseMatrix tau_Vt = o.tau_V.transpose();
    SparseMatrix A = o.M + dt_ * o.V + (dt_ * o.kappa) * o.K + dt_ * o.tau_S + tau_Vt;
    B_ = o.M + tau_Vt;
    B_.makeCompressed();
    A_ = detail::replace_rows(A, mask_);
    At_ = A_.transpose();

    lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
    lu_->analyzePattern(A_);
    lu_->factorize(A_);
    if (lu_->info() != Eigen::Success) throw NumericalError("transient system: factorisation failed (singular matrix)");
    ++factorizations_;

    mass_.compute(o.M);
    if (mass_.info() != Eigen::Success) throw NumericalError("transient system: mass matrix factorisation failed");
  }

  const OperatorSet& operators() const { return *ops_; }
  std::shared_ptr<const OperatorSet> operators_ptr() const { return ops_; }
  double dt() const { return dt_; }
  Eigen::Index n_dof() const { return ops_->n_dof(); }

  /// System matrix with Dirichlet rows applied.
  const SparseMatrix& matrix() const { return A_; }
  /// The matrix the adjoint recursion solves with: the exact transpose.
  const SparseMatrix& adjoint_matrix() const { return At_; }
  /// Right-hand side operator M + (tau V^T).
  const SparseMatrix& rhs_operator() const { return B_; }
  const std::vector<char>& dirichlet_mask() const { return mask_; }

  VectorXd solve(const VectorXd& rhs, std::ptrdiff_t step = -1) const {
    ++solves_;
    VectorXd x = lu_->solve(rhs);
    return refine(A_, x, rhs, step, false);
  }

  VectorXd solve_transposed(const VectorXd& rhs, std::ptrdiff_t step = -1) const {
    ++transposed_solves_;
    VectorXd x = lu_->transpose().solve(rhs);
    return refine(At_, x, rhs, step, true);
  }

  VectorXd mass_solve(const VectorXd& rhs) const { return mass_.solve(rhs); }

  SolveStats stats() const { return {factorizations_.load(), solves_.load(), transposed_solves_.load()}; }

 private:
  VectorXd refine(const SparseMatrix& A, VectorXd x, const VectorXd& b, std::ptrdiff_t step, bool transposed) const {
    double res = detail::relative_residual(A, x, b);
    for (int it = 0; it < 2 && !(res <= kSolveTolerance); ++it) {
      const VectorXd r = b - A * x;
      x += transposed ? VectorXd(lu_->transpose().solve(r)) : VectorXd(lu_->solve(r));
      res = detail::relative_residual(A, x, b);
    }
    if (!(res <= kSolveTolerance))
      throw NumericalError("linear solve residual " + std::to_string(res) + " above tolerance", step);
    return x;
  }

  std::shared_ptr<const OperatorSet> ops_;
  double dt_;
  std::vector<char> mask_;
  SparseMatrix A_, At_, B_;
  std::unique_ptr<Eigen::SparseLU<SparseMatrix>> lu_;
  Eigen::SimplicialLDLT<SparseMatrix> mass_;
  mutable std::atomic<std::size_t> factorizations_{0}, solves_{0}, transposed_solves_{0};
};

/// Forward march: u^0 = 0, A u^{n+1} = B (u^n + dt m^n) with zero inflow rows.
/// Steps whose right-hand side is identically zero are skipped.
inline SpaceTimeField solve_forward(const TransientSystem& sys, const SourceField& source, const TimeGrid& grid) {
  grid.validate();
  detail::require(std::abs(grid.dt - sys.dt()) <= 1e-12 * sys.dt(), "solve_forward: grid dt differs from the system dt");
  detail::require(source.steps.size() >= grid.n_steps, "solve_forward: source has " + std::to_string(source.steps.size()) +
                                                           " levels, need at least " + std::to_string(grid.n_steps));
  const Eigen::Index n = sys.n_dof();
  for (const auto& m : source.steps)
    detail::require(m.size() == 0 || m.size() == n, "solve_forward: source vector size does not match the mesh");

  SpaceTimeField u{grid, std::vector<VectorXd>(grid.n_steps + 1)};
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const bool u_zero = u.values[k].size() == 0;
    const bool m_zero = source.steps[k].size() == 0;
    if (u_zero && m_zero) continue;
    VectorXd state = u_zero ? VectorXd::Zero(n) : u.values[k];
    if (!m_zero) state += sys.dt() * source.steps[k];
    VectorXd rhs = sys.rhs_operator() * state;
    detail::zero_masked(rhs, sys.dirichlet_mask());
    u.values[k + 1] = sys.solve(rhs, static_cast<std::ptrdiff_t>(k + 1));
  }
  return u;
}

/// Result of the backward (adjoint) march.
///
/// `state` is p^n from  A^T p^n = B^T D p^{n+1} + g^{n+1},  p^{N} = 0, where D
/// zeroes inflow rows and g^n is the misfit load at level n. `pairing` is
/// M^{-1} B^T D p^n, the field for which
///
///   <G(m), y> = sum_n dt (m^n)^T M pairing^n
///
/// holds exactly, so tested against a projected shape it yields the
/// derivative of the data term with respect to that atom's intensity.
struct AdjointField {
  SpaceTimeField state;
  SpaceTimeField pairing;
};

/// Backward march for given per-level loads (levels 0..n_steps; empty = zero).
inline AdjointField solve_adjoint_loads(const TransientSystem& sys, const std::vector<VectorXd>& loads, const TimeGrid& grid) {
  grid.validate();
  detail::require(std::abs(grid.dt - sys.dt()) <= 1e-12 * sys.dt(), "solve_adjoint: grid dt differs from the system dt");
  detail::require(loads.size() == grid.n_steps + 1, "solve_adjoint: need one load per time level");
  const Eigen::Index n = sys.n_dof();
  const SparseMatrix Bt = sys.rhs_operator().transpose();

  AdjointField out{{grid, std::vector<VectorXd>(grid.n_steps + 1)}, {grid, std::vector<VectorXd>(grid.n_steps + 1)}};
  VectorXd next_dp;  // D p^{n+1}; empty while zero
  for (std::size_t k = grid.n_steps; k-- > 0;) {
    const auto& g = loads[k + 1];
    if (next_dp.size() == 0 && g.size() == 0) continue;
    VectorXd rhs = next_dp.size() == 0 ? VectorXd::Zero(n) : VectorXd(Bt * next_dp);
    if (g.size() != 0) rhs += g;
    VectorXd p = sys.solve_transposed(rhs, static_cast<std::ptrdiff_t>(k));
    next_dp = p;
    detail::zero_masked(next_dp, sys.dirichlet_mask());
    out.pairing.values[k] = sys.mass_solve(Bt * next_dp);
    out.state.values[k] = std::move(p);
  }
  return out;
}

/// A set of nodes held at a fixed value in a steady solve.
struct DirichletPatch {
  std::vector<std::size_t> nodes;
  double value = 0.0;
};

/// Steady advection-diffusion: (V + kappa K + tau S) c = M f with inflow rows
/// set to zero and patch rows set to their values (patches applied last).
inline VectorXd solve_steady(const OperatorSet& ops, const VectorXd& volumetric_source,
                             const std::vector<DirichletPatch>& patches) {
  const Eigen::Index n = ops.n_dof();
  detail::require(volumetric_source.size() == n, "solve_steady: source size does not match the mesh");
  std::vector<char> mask(static_cast<std::size_t>(n), 0);
  VectorXd rhs = ops.M * volumetric_source;
  for (auto i : ops.inflow_dofs) {
    mask[i] = 1;
    rhs[static_cast<Eigen::Index>(i)] = 0.0;
  }
  for (const auto& patch : patches) {
    for (auto i : patch.nodes) {
      detail::require(i < static_cast<std::size_t>(n), "solve_steady: patch node " + std::to_string(i) + " not in mesh");
      mask[i] = 1;
      rhs[static_cast<Eigen::Index>(i)] = patch.value;
    }
  }
  const SparseMatrix A = detail::replace_rows(SparseMatrix(ops.V + ops.kappa * ops.K + ops.tau_S), mask);
  if (rhs.isZero(0.0)) return VectorXd::Zero(n);
  Eigen::SparseLU<SparseMatrix> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) throw NumericalError("solve_steady: singular system");
  VectorXd x = lu.solve(rhs);
  double res = detail::relative_residual(A, x, rhs);
  for (int it = 0; it < 2 && !(res <= kSolveTolerance); ++it) {
    x += lu.solve(VectorXd(rhs - A * x));
    res = detail::relative_residual(A, x, rhs);
  }
  if (!(res <= kSolveTolerance)) throw NumericalError("solve_steady: residual " + std::to_string(res) + " above tolerance");
  return x;
}

}  // namespace plumetrace
