#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/fem_assembly.hpp"
#include "plumetrace/mesh.hpp"
#include "plumetrace/transport.hpp"

namespace plumetrace {

struct Sensor {
  Vec2 position;
  std::vector<double> sample_times;
};

/// Sensor layout and the space-time averaging window of each reading.
struct SensorConfig {
  std::vector<Sensor> sensors;
  double rho_x = 0.0;           ///< spatial support radius (m)
  double rho_t = 0.0;           ///< temporal support radius (s)
  double sigma_plateau = 0.5;   ///< fraction of each radius on which the bump is 1

  void validate() const {
    detail::require(rho_x > 0.0 && rho_t > 0.0, "sensors: rho_x and rho_t must be positive");
    detail::require(sigma_plateau > 0.0 && sigma_plateau < 1.0, "sensors: sigma_plateau must lie in (0, 1)");
  }

  std::size_t num_observations() const {
    std::size_t n = 0;
    for (const auto& s : sensors) n += s.sample_times.size();
    return n;
  }
};

/// Radial profile of the averaging bump as a function of the squared scaled
/// distance s: 1 for s <= sigma^2, 0 for s >= 1, and a C-infinity smooth step
/// in between whose derivatives of every order vanish at both ends.
inline double bump_profile(double s, double sigma_plateau) {
  const double s0 = sigma_plateau * sigma_plateau;
  if (s <= s0) return 1.0;
  if (s >= 1.0) return 0.0;
  const double q = (s - s0) / (1.0 - s0);
  auto f = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; };
  const double a = f(1.0 - q), b = f(q);
  return a / (a + b);
}

/// Separable space-time bump eta(dx, dt) = psi(|dx|^2 / rho_x^2) psi(dt^2 / rho_t^2).
inline double eta_bump(const Vec2& dx, double dt_off, const SensorConfig& cfg) {
  return bump_profile(dx.squaredNorm() / (cfg.rho_x * cfg.rho_x), cfg.sigma_plateau) *
         bump_profile(dt_off * dt_off / (cfg.rho_t * cfg.rho_t), cfg.sigma_plateau);
}

/// One reading: which sensor, which of its samples, and where/when.
struct Observation {
  std::size_t sensor;
  std::size_t sample;
  Vec2 position;
  double time;
};

/// Linear map from a space-time nodal field to the stacked readings.
///
/// Stored as one sparse block O_n (N_obs x n_dof) per time level, so that
/// readings are sum_n O_n u^n and the adjoint load at level n is O_n^T y.
/// Readings are ordered sensor by sensor, samples in time order.
class ObservationOperator {
 public:
  using RowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  ObservationOperator(TimeGrid grid, Eigen::Index n_dof, std::vector<Observation> obs, std::vector<RowMatrix> levels)
      : grid_(grid), n_dof_(n_dof), obs_(std::move(obs)), levels_(std::move(levels)) {}

  std::size_t size() const { return obs_.size(); }
  const std::vector<Observation>& observations() const { return obs_; }
  const TimeGrid& grid() const { return grid_; }
  Eigen::Index n_dof() const { return n_dof_; }
  const std::vector<RowMatrix>& levels() const { return levels_; }

  VectorXd apply(const SpaceTimeField& u) const {
    detail::require(u.values.size() == levels_.size(), "observation: field has the wrong number of time levels");
    VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(size()));
    for (std::size_t n = 0; n < levels_.size(); ++n) {
      if (u.values[n].size() == 0 || levels_[n].nonZeros() == 0) continue;
      detail::require(u.values[n].size() == n_dof_, "observation: field size does not match the mesh");
      out += levels_[n] * u.values[n];
    }
    return out;
  }

  /// Per-level loads O_n^T y; levels without support are left empty.
  std::vector<VectorXd> scatter(const VectorXd& y) const {
    detail::require(y.size() == static_cast<Eigen::Index>(size()),
                    "observation: misfit has length " + std::to_string(y.size()) + ", expected " + std::to_string(size()));
    std::vector<VectorXd> out(levels_.size());
    if (y.isZero(0.0)) return out;
    for (std::size_t n = 0; n < levels_.size(); ++n)
      if (levels_[n].nonZeros() != 0) out[n] = levels_[n].transpose() * y;
    return out;
  }

  /// The operator as a single N_obs x ((N_T + 1) n_dof) matrix.
  SparseMatrix stacked() const {
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t n = 0; n < levels_.size(); ++n)
      for (Eigen::Index r = 0; r < levels_[n].outerSize(); ++r)
        for (RowMatrix::InnerIterator it(levels_[n], r); it; ++it)
          trip.emplace_back(static_cast<int>(r), static_cast<int>(static_cast<Eigen::Index>(n) * n_dof_ + it.col()), it.value());
    SparseMatrix O(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(levels_.size()) * n_dof_);
    O.setFromTriplets(trip.begin(), trip.end());
    return O;
  }

 private:
  TimeGrid grid_;
  Eigen::Index n_dof_;
  std::vector<Observation> obs_;
  std::vector<RowMatrix> levels_;
};

/// Builds the observation operator. Each reading is the normalised space-time
/// average of u against the sensor's bump: the spatial part is M * eta_h with
/// eta_h the nodal interpolant of the bump, the temporal part uses trapezoidal
/// weights on the time levels, and each row is scaled to sum to one so a
/// constant field reads as that constant.
inline ObservationOperator assemble_observation(const Mesh& mesh, const TimeGrid& grid, const SensorConfig& cfg) {
  cfg.validate();
  grid.validate();
  const auto n_dof = static_cast<Eigen::Index>(mesh.num_nodes());
  const SparseMatrix M = assemble_mass(mesh);
  const double T = grid.horizon();
  const double t_slack = 1e-9 * grid.dt;

  std::vector<Observation> obs;
  std::vector<std::vector<Eigen::Triplet<double>>> trip(grid.n_steps + 1);
  for (std::size_t si = 0; si < cfg.sensors.size(); ++si) {
    const auto& sensor = cfg.sensors[si];
    detail::require(mesh.locate(sensor.position).has_value(),
                    "sensor " + std::to_string(si) + " at (" + std::to_string(sensor.position.x()) + ", " +
                        std::to_string(sensor.position.y()) + ") lies outside the domain");
    VectorXd eta = VectorXd::Zero(n_dof);
    for (std::size_t k = 0; k < mesh.num_nodes(); ++k) {
      const Vec2 dx = mesh.node(k) - sensor.position;
      eta[static_cast<Eigen::Index>(k)] = bump_profile(dx.squaredNorm() / (cfg.rho_x * cfg.rho_x), cfg.sigma_plateau);
    }
    const VectorXd spatial = M * eta;
    const double spatial_sum = spatial.sum();
    detail::require(spatial_sum > 0.0, "sensor " + std::to_string(si) + ": spatial support contains no mesh node");

    for (std::size_t sj = 0; sj < sensor.sample_times.size(); ++sj) {
      const double ts = sensor.sample_times[sj];
      detail::require(ts >= -t_slack && ts <= T + t_slack,
                      "sensor " + std::to_string(si) + ": sample time " + std::to_string(ts) + " outside [0, " +
                          std::to_string(T) + "]");
      std::vector<std::pair<std::size_t, double>> wt;
      double wsum = 0.0;
      for (std::size_t n = 0; n <= grid.n_steps; ++n) {
        const double off = grid.time(n) - ts;
        if (std::abs(off) >= cfg.rho_t) continue;
        const double trap = (n == 0 || n == grid.n_steps) ? 0.5 * grid.dt : grid.dt;
        const double w = trap * bump_profile(off * off / (cfg.rho_t * cfg.rho_t), cfg.sigma_plateau);
        if (w > 0.0) {
          wt.emplace_back(n, w);
          wsum += w;
        }
      }
      detail::require(wsum > 0.0, "sensor " + std::to_string(si) + ": temporal support contains no time level");
      const auto row = static_cast<int>(obs.size());
      const double z = wsum * spatial_sum;
      for (const auto& [n, w] : wt)
        for (Eigen::Index k = 0; k < n_dof; ++k)
          if (spatial[k] != 0.0) trip[n].emplace_back(row, static_cast<int>(k), w * spatial[k] / z);
      obs.push_back({si, sj, sensor.position, ts});
    }
  }

  std::vector<ObservationOperator::RowMatrix> levels(grid.n_steps + 1);
  for (std::size_t n = 0; n <= grid.n_steps; ++n) {
    levels[n].resize(static_cast<Eigen::Index>(obs.size()), n_dof);
    levels[n].setFromTriplets(trip[n].begin(), trip[n].end());
    levels[n].makeCompressed();
  }
  return ObservationOperator(grid, n_dof, std::move(obs), std::move(levels));
}

/// Adjoint march driven by a misfit vector in observation space.
inline AdjointField solve_adjoint(const TransientSystem& sys, const VectorXd& misfit, const ObservationOperator& obs,
                                  const TimeGrid& grid) {
  detail::require(obs.grid().n_steps == grid.n_steps, "solve_adjoint: observation grid differs from the time grid");
  return solve_adjoint_loads(sys, obs.scatter(misfit), grid);
}

/// Sensor data with the noise level used as misfit weight.
struct MeasurementSet {
  VectorXd d;
  double sigma_noise = 0.0;
  std::uint64_t seed = 0;
  double snr_target = std::numeric_limits<double>::infinity();
};

inline double rms(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

/// d = clean + e with e i.i.d. N(0, sigma^2), sigma = RMS(clean) / snr.
/// An infinite snr returns the clean data with sigma_noise = 0.
inline MeasurementSet add_noise(const VectorXd& clean, double snr, std::uint64_t seed) {
  detail::require(snr > 0.0, "add_noise: snr must be positive (or infinite)");
  MeasurementSet m{clean, 0.0, seed, snr};
  if (std::isinf(snr)) return m;
  m.sigma_noise = rms(clean) / snr;
  if (m.sigma_noise == 0.0) return m;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, m.sigma_noise);
  for (Eigen::Index i = 0; i < m.d.size(); ++i) m.d[i] += normal(rng);
  return m;
}

/// Relative size of the misfit weight used for noiseless data.
inline constexpr double kSigmaFloorFactor = 1e-3;

/// The sigma in the misfit weight 1/sigma^2: the noise level when positive,
/// otherwise 1e-3 max|d|, otherwise 1.
inline double effective_sigma(const MeasurementSet& data) {
  if (data.sigma_noise > 0.0) return data.sigma_noise;
  const double dmax = data.d.size() ? data.d.cwiseAbs().maxCoeff() : 0.0;
  return dmax > 0.0 ? kSigmaFloorFactor * dmax : 1.0;
}

/// y = (predicted - d) / sigma^2.
inline VectorXd misfit(const VectorXd& predicted, const VectorXd& d, double sigma) {
  detail::require(predicted.size() == d.size(), "misfit: length mismatch (" + std::to_string(predicted.size()) + " vs " +
                                                    std::to_string(d.size()) + ")");
  detail::require(sigma > 0.0, "misfit: sigma must be positive");
  return (predicted - d) / (sigma * sigma);
}

inline VectorXd misfit(const VectorXd& predicted, const MeasurementSet& data) {
  return misfit(predicted, data.d, effective_sigma(data));
}

}  // namespace plumetrace
