#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/fem_assembly.hpp"
#include "plumetrace/mesh.hpp"
#include "plumetrace/parallel.hpp"
#include "plumetrace/transport.hpp"
#include "plumetrace/wind.hpp"

namespace plumetrace {

struct CandidateGrid {
  std::vector<double> kappas;

  void validate() const {
    detail::require(!kappas.empty(), "kappa grid: empty");
    for (std::size_t i = 0; i < kappas.size(); ++i) {
      detail::require(kappas[i] > 0.0 && std::isfinite(kappas[i]), "kappa grid: values must be positive");
      if (i > 0) detail::require(kappas[i] > kappas[i - 1], "kappa grid: values must be strictly ascending");
    }
  }
};

/// {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1}.
inline CandidateGrid default_kappa_grid() { return {{1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0}}; }

/// Sample points of a straight measurement line.
struct LineSpec {
  Vec2 start = Vec2::Zero();
  Vec2 direction = Vec2(1.0, 0.0);
  double length = 1.0;
  std::size_t n_points = 2;

  std::vector<Vec2> points() const {
    detail::require(n_points >= 2, "sample line: need at least two points");
    detail::require(length > 0.0 && std::isfinite(length), "sample line: length must be positive");
    const double dn = direction.norm();
    detail::require(dn > 0.0 && std::isfinite(dn), "sample line: direction must be nonzero");
    const Vec2 u = direction / dn;
    const double spacing = length / static_cast<double>(n_points - 1);
    std::vector<Vec2> pts(n_points);
    for (std::size_t i = 0; i < n_points; ++i) pts[i] = start + (spacing * static_cast<double>(i)) * u;
    return pts;
  }
};

/// Field values at n_p equally spaced points by linear interpolation on the mesh.
inline VectorXd sample_line(const Mesh& mesh, const VectorXd& field, const LineSpec& line) {
  detail::require(field.size() == static_cast<Eigen::Index>(mesh.num_nodes()), "sample line: field size does not match mesh");
  const auto pts = line.points();
  VectorXd out(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto v = mesh.interpolate(field, pts[i]);
    detail::require(v.has_value(), "sample line: point " + std::to_string(i) + " (" + std::to_string(pts[i].x()) + ", " +
                                       std::to_string(pts[i].y()) + ") lies outside the domain");
    out[static_cast<Eigen::Index>(i)] = *v;
  }
  return out;
}

inline VectorXd sample_line(const Mesh& mesh, const VectorXd& field, const Vec2& start, const Vec2& direction,
                            double length, std::size_t n_points) {
  return sample_line(mesh, field, LineSpec{start, direction, length, n_points});
}

/// Pi = mean of the squared differences.
inline double cost_pi(const VectorXd& simulated, const VectorXd& experimental) {
  detail::require(simulated.size() == experimental.size(), "cost_pi: length mismatch (" +
                                                               std::to_string(simulated.size()) + " vs " +
                                                               std::to_string(experimental.size()) + ")");
  detail::require(simulated.size() > 0, "cost_pi: empty vectors");
  return (simulated - experimental).squaredNorm() / static_cast<double>(simulated.size());
}

/// Named reading series sampled at common points.
struct ExperimentalReadings {
  std::vector<Vec2> points;
  std::vector<std::pair<std::string, VectorXd>> series;

  void validate() const {
    detail::require(!series.empty(), "readings: no series");
    for (const auto& [name, v] : series)
      detail::require(v.size() == static_cast<Eigen::Index>(points.size()),
                      "readings: series '" + name + "' has " + std::to_string(v.size()) + " values for " +
                          std::to_string(points.size()) + " points");
  }
};

/// Steady calibration setup: wind, optional volumetric source, injection
/// patches and the measurement line. The mesh must be classified for the wind.
struct SteadyScenario {
  std::shared_ptr<const Mesh> mesh;
  WindField wind = uniform_wind(0.0, 0.0);
  VectorXd volumetric_source;  ///< empty means zero
  std::vector<DirichletPatch> patches;
  LineSpec line;

  VectorXd solve(double kappa) const {
    detail::require(mesh != nullptr, "calibration: no mesh");
    const auto ops = assemble(mesh, wind, kappa);
    const VectorXd src = volumetric_source.size() ? volumetric_source : VectorXd::Zero(ops->n_dof());
    return solve_steady(*ops, src, patches);
  }

  VectorXd simulate_line(double kappa) const { return sample_line(*mesh, solve(kappa), line); }
};

struct SweepResult {
  std::vector<double> kappas;
  std::vector<std::string> series;
  std::vector<std::vector<double>> pi;  ///< pi[k][s]
  std::vector<std::size_t> argmin;      ///< per series, index into kappas

  double best_kappa(std::size_t s) const { return kappas[argmin[s]]; }
};

/// Pi for every (kappa, series) pair; argmin ties go to the smaller kappa.
inline SweepResult sweep_kappa(const SteadyScenario& scenario, const CandidateGrid& grid,
                               const ExperimentalReadings& readings, unsigned threads = 1) {
  grid.validate();
  readings.validate();
  const auto pts = scenario.line.points();
  detail::require(pts.size() == readings.points.size(), "calibration: line has " + std::to_string(pts.size()) +
                                                            " points but readings have " +
                                                            std::to_string(readings.points.size()));
  const double tol = 1e-6 * scenario.line.length;
  for (std::size_t i = 0; i < pts.size(); ++i)
    detail::require((pts[i] - readings.points[i]).norm() <= tol,
                    "calibration: reading point " + std::to_string(i) + " is not on the sample line");

  SweepResult res;
  res.kappas = grid.kappas;
  for (const auto& s : readings.series) res.series.push_back(s.first);
  res.pi.assign(grid.kappas.size(), std::vector<double>(readings.series.size(), 0.0));
  parallel_for(grid.kappas.size(), threads, [&](std::size_t k) {
    const VectorXd sim = scenario.simulate_line(grid.kappas[k]);
    for (std::size_t s = 0; s < readings.series.size(); ++s) res.pi[k][s] = cost_pi(sim, readings.series[s].second);
  });
  res.argmin.assign(readings.series.size(), 0);
  for (std::size_t s = 0; s < readings.series.size(); ++s)
    for (std::size_t k = 1; k < grid.kappas.size(); ++k)
      if (res.pi[k][s] < res.pi[res.argmin[s]][s]) res.argmin[s] = k;
  return res;
}

}  // namespace plumetrace
