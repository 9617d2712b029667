#pragma once

#include <memory>
#include <random>

#include "plumetrace/plumetrace.hpp"

namespace testing_support {

using namespace plumetrace;

inline std::shared_ptr<const Mesh> unit_square(std::size_t n, const WindField& wind) {
  return std::make_shared<const Mesh>(classify_boundary(generate_rect_mesh(1.0, 1.0, n, n), wind));
}

inline VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

}  // namespace testing_support
