#pragma once

#include <memory>

#include "plumetrace/errors.hpp"
#include "plumetrace/fem_assembly.hpp"
#include "plumetrace/parallel.hpp"
#include "plumetrace/sensing.hpp"
#include "plumetrace/source_model.hpp"
#include "plumetrace/transport.hpp"

namespace plumetrace {

/// Everything the inversion needs about the forward model, shared read-only.
struct InversionStack {
  std::shared_ptr<const TransientSystem> system;
  TimeGrid grid;
  std::shared_ptr<const ObservationOperator> obs;
  std::shared_ptr<const ShapeBasis> basis;
  std::shared_ptr<const SparseMatrix> W;
  unsigned threads = 1;

  Eigen::Index n_dof() const { return system->n_dof(); }

  void validate() const {
    detail::require(system && obs && basis && W, "inversion stack: missing component");
    grid.validate();
    detail::require(std::abs(grid.dt - system->dt()) <= 1e-12 * grid.dt, "inversion stack: dt mismatch");
    detail::require(obs->grid().n_steps == grid.n_steps, "inversion stack: observation grid mismatch");
    detail::require(obs->n_dof() == n_dof() && W->rows() == n_dof() && W->cols() == n_dof() &&
                        static_cast<Eigen::Index>(basis->mesh().num_nodes()) == n_dof(),
                    "inversion stack: components live on different meshes");
  }

  static InversionStack build(std::shared_ptr<const OperatorSet> ops, const TimeGrid& grid, const SensorConfig& sensors,
                              const ShapeParams& shape, unsigned threads = 1) {
    detail::require(ops != nullptr, "inversion stack: null operators");
    InversionStack s;
    s.system = std::make_shared<const TransientSystem>(ops, grid.dt);
    s.grid = grid;
    s.obs = std::make_shared<const ObservationOperator>(assemble_observation(*ops->mesh, grid, sensors));
    s.basis = std::make_shared<const ShapeBasis>(ops->mesh, shape);
    s.W = std::make_shared<const SparseMatrix>(assemble_W(*ops->mesh, shape, threads));
    s.threads = std::max(1u, threads);
    s.validate();
    return s;
  }
};

}  // namespace plumetrace
