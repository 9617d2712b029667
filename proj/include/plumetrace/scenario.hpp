#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "plumetrace/calibration.hpp"
#include "plumetrace/config.hpp"
#include "plumetrace/errors.hpp"
#include "plumetrace/fem_assembly.hpp"
#include "plumetrace/io/csv.hpp"
#include "plumetrace/io/vtk.hpp"
#include "plumetrace/mesh.hpp"
#include "plumetrace/pdap.hpp"
#include "plumetrace/sensing.hpp"
#include "plumetrace/source_model.hpp"
#include "plumetrace/stack.hpp"
#include "plumetrace/transport.hpp"
#include "plumetrace/wind.hpp"

#ifndef PLUMETRACE_VERSION_STRING
#define PLUMETRACE_VERSION_STRING "0.1.0"
#endif

namespace plumetrace {

inline constexpr const char* kVersion = PLUMETRACE_VERSION_STRING;

inline std::shared_ptr<const Mesh> build_mesh(const MeshSpec& spec) {
  if (!spec.file.empty()) return std::make_shared<const Mesh>(load_mesh(spec.file));
  return std::make_shared<const Mesh>(generate_rect_mesh(spec.width, spec.height, static_cast<std::size_t>(spec.nx),
                                                         static_cast<std::size_t>(spec.ny)));
}

inline WindField build_wind(const WindSpec& spec, const Mesh& mesh) {
  if (!spec.file.empty()) {
    std::ifstream is(spec.file);
    detail::require(static_cast<bool>(is), "cannot open wind file '" + spec.file + "'");
    return WindField::nodal(io::read_wind(is, mesh.num_nodes(), spec.file));
  }
  std::vector<WindField> parts;
  for (const auto& c : spec.components) {
    if (c.type == "uniform")
      parts.push_back(uniform_wind(c.vx, c.vy));
    else if (c.type == "vortex")
      parts.push_back(vortex_wind(c.center, c.strength));
    else
      parts.push_back(shear_wind(c.rate));
  }
  if (parts.empty()) return uniform_wind(0.0, 0.0);
  if (parts.size() == 1) return parts.front();
  return sum_wind(std::move(parts));
}

/// Edge length of the square cell with the mesh's mean triangle area doubled.
inline double mesh_cell_size(const Mesh& mesh) {
  return std::sqrt(2.0 * mesh.total_area() / static_cast<double>(mesh.num_triangles()));
}

inline SensorConfig build_sensors(const SensorSpec& spec, const Mesh& mesh, double dt) {
  SensorConfig cfg;
  std::vector<Vec2> positions = spec.positions;
  if (spec.layout == "grid") {
    Vec2 lo = mesh.node(0), hi = mesh.node(0);
    for (const auto& p : mesh.nodes()) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    positions.clear();
    for (std::int64_t j = 0; j < spec.ny; ++j)
      for (std::int64_t i = 0; i < spec.nx; ++i)
        positions.emplace_back(lo.x() + (static_cast<double>(i) + 0.5) * (hi.x() - lo.x()) / static_cast<double>(spec.nx),
                               lo.y() + (static_cast<double>(j) + 0.5) * (hi.y() - lo.y()) / static_cast<double>(spec.ny));
  }
  const auto n_samples = static_cast<std::size_t>(std::llround((spec.t_end - spec.t_start) / spec.sample_dt)) + 1;
  std::vector<double> times(n_samples);
  for (std::size_t k = 0; k < n_samples; ++k)
    times[k] = std::min(spec.t_end, spec.t_start + static_cast<double>(k) * spec.sample_dt);
  for (const auto& p : positions) cfg.sensors.push_back({p, times});
  cfg.rho_x = spec.rho_x > 0.0 ? spec.rho_x : spec.rho_x_cells * mesh_cell_size(mesh);
  cfg.rho_t = spec.rho_t > 0.0 ? spec.rho_t : spec.rho_t_steps * dt;
  cfg.sigma_plateau = spec.sigma_plateau;
  return cfg;
}

/// The discretised scenario: classified mesh, operators and grids.
struct Model {
  std::shared_ptr<const Mesh> mesh;
  WindField wind = uniform_wind(0.0, 0.0);
  std::shared_ptr<const OperatorSet> ops;
  TimeGrid obs_grid;
  TimeGrid pred_grid;
  SensorConfig sensors;
};

/// Mesh and wind only (enough for calibration).
inline Model build_geometry(const Scenario& sc) {
  Model m;
  auto raw = build_mesh(sc.mesh);
  m.wind = build_wind(sc.wind, *raw);
  m.mesh = std::make_shared<const Mesh>(classify_boundary(*raw, m.wind));
  return m;
}

inline Model build_model(const Scenario& sc) {
  detail::require(sc.kappa > 0.0, sc.source + ": kappa must be set to a positive value");
  Model m = build_geometry(sc);
  m.ops = assemble(m.mesh, m.wind, sc.kappa);
  m.obs_grid = TimeGrid::covering(sc.time.dt, sc.time.t_obs);
  m.pred_grid = TimeGrid::covering(sc.time.dt, sc.time.t_pred);
  m.sensors = build_sensors(sc.sensors, *m.mesh, sc.time.dt);
  detail::require(!m.sensors.sensors.empty(), sc.source + ": no sensors configured");
  return m;
}

inline InversionStack build_stack(const Model& m, const ShapeParams& shape, unsigned threads) {
  return InversionStack::build(m.ops, m.obs_grid, m.sensors, shape, threads);
}

/// Levels 0..grid.n_steps of a longer field.
inline SpaceTimeField restrict_field(const SpaceTimeField& u, const TimeGrid& grid) {
  detail::require(u.values.size() > grid.n_steps, "restrict_field: field is shorter than the grid");
  return {grid, std::vector<VectorXd>(u.values.begin(), u.values.begin() + static_cast<std::ptrdiff_t>(grid.n_steps + 1))};
}

/// Named file contents written together: into a staging directory first and
/// then moved into place, so a failing run leaves no partial outputs.
class OutputBundle {
 public:
  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

  const std::string* find(const std::string& name) const {
    for (const auto& [n, c] : files_)
      if (n == name) return &c;
    return nullptr;
  }

  void commit(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    detail::require(!ec && fs::is_directory(dir), "cannot create output directory '" + dir.string() + "'");
    const fs::path staging = dir / ".plume-trace-staging";
    fs::remove_all(staging, ec);
    fs::create_directories(staging, ec);
    detail::require(!ec, "cannot create staging directory '" + staging.string() + "'");
    try {
      for (const auto& [name, content] : files_) {
        std::ofstream os(staging / name, std::ios::binary);
        os << content;
        os.close();
        detail::require(static_cast<bool>(os), "failed writing '" + (staging / name).string() + "'");
      }
      for (const auto& [name, content] : files_) fs::rename(staging / name, dir / name);
    } catch (...) {
      fs::remove_all(staging, ec);
      throw;
    }
    fs::remove_all(staging, ec);
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

namespace detail {

inline void add_vtk_series(OutputBundle& out, const Mesh& mesh, const std::string& prefix, const std::string& scalar,
                           const std::vector<VectorXd>& levels, std::int64_t every) {
  if (every <= 0) return;
  const std::size_t last = levels.size() - 1;
  for (std::size_t n = 0; n <= last; ++n) {
    if (n % static_cast<std::size_t>(every) != 0 && n != last) continue;
    out.add(io::vtk_step_name(prefix, n), io::vtk_unstructured(mesh, {{scalar, &levels[n]}}, prefix + " step " + std::to_string(n)));
  }
}

/// Adds resolved_config.toml and manifest.json (listing every file) to the bundle.
inline void finish_bundle(OutputBundle& out, const Scenario& sc, const std::string& command, nlohmann::json inputs,
                          nlohmann::json summary) {
  const std::string resolved = resolved_toml(sc);
  out.add("resolved_config.toml", resolved);
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [name, content] : out.files()) files.push_back({{"path", name}, {"bytes", content.size()}});
  nlohmann::json manifest{{"tool", "plume-trace"},
                          {"version", kVersion},
                          {"command", command},
                          {"config", sc.source},
                          {"inputs", std::move(inputs)},
                          {"seed", sc.noise.seed},
                          {"resolved_config", resolved},
                          {"summary", std::move(summary)},
                          {"outputs", files}};
  out.add("manifest.json", manifest.dump(2) + "\n");
}

}  // namespace detail

inline OutputBundle run_mesh(const Scenario& sc) {
  const auto mesh = build_mesh(sc.mesh);
  std::ostringstream os;
  write_mesh(*mesh, os);
  OutputBundle out;
  out.add("mesh.txt", os.str());
  detail::finish_bundle(out, sc, "mesh", nlohmann::json::object(),
                        {{"nodes", mesh->num_nodes()}, {"triangles", mesh->num_triangles()}});
  return out;
}

struct SimulationResult {
  Model model;
  std::shared_ptr<const ObservationOperator> obs;
  SourceField source;    ///< on the prediction grid
  SpaceTimeField field;  ///< on the prediction grid
  VectorXd clean;
  MeasurementSet data;
};

inline SimulationResult simulate(const Scenario& sc) {
  detail::require(sc.truth.has_value(), sc.source + ": simulate needs a [truth] section");
  SimulationResult r;
  r.model = build_model(sc);
  const auto& m = r.model;
  const ShapeBasis basis(m.mesh, sc.shape);
  const TransientSystem sys(m.ops, sc.time.dt);
  r.source = sample_curve(sc.truth->curve, m.pred_grid, basis);
  r.field = solve_forward(sys, r.source, m.pred_grid);
  r.obs = std::make_shared<const ObservationOperator>(assemble_observation(*m.mesh, m.obs_grid, m.sensors));
  r.clean = r.obs->apply(restrict_field(r.field, m.obs_grid));
  r.data = add_noise(r.clean, sc.noise.snr, static_cast<std::uint64_t>(sc.noise.seed));
  return r;
}

inline OutputBundle simulate_outputs(const Scenario& sc, const SimulationResult& r) {
  OutputBundle out;
  out.add("measurements_clean.csv", io::measurements_csv(*r.obs, r.clean));
  out.add("measurements.csv", io::measurements_csv(*r.obs, r.data.d));
  detail::add_vtk_series(out, *r.model.mesh, "concentration", "concentration", r.field.values, sc.output.vtk_every);
  detail::finish_bundle(out, sc, "simulate", nlohmann::json::object(),
                        {{"readings", r.obs->size()},
                         {"sensors", r.model.sensors.sensors.size()},
                         {"sigma_noise", r.data.sigma_noise},
                         {"snr", std::isinf(sc.noise.snr) ? nlohmann::json("inf") : nlohmann::json(sc.noise.snr)}});
  return out;
}

/// sigma for the misfit weight of measured data: [pdap] sigma if given, else
/// the noise level implied by the configured snr (RMS(d)^2 = sigma^2 (snr^2 + 1)),
/// else the noiseless floor.
inline MeasurementSet measurements_for_inversion(const Scenario& sc, const VectorXd& d) {
  MeasurementSet data;
  data.d = d;
  data.seed = static_cast<std::uint64_t>(sc.noise.seed);
  data.snr_target = sc.noise.snr;
  if (sc.pdap_sigma)
    data.sigma_noise = *sc.pdap_sigma;
  else if (std::isfinite(sc.noise.snr))
    data.sigma_noise = rms(d) / std::sqrt(sc.noise.snr * sc.noise.snr + 1.0);
  return data;
}

struct InversionResult {
  Model model;
  std::shared_ptr<const InversionStack> stack;
  MeasurementSet data;
  ReconstructionReport report;
  SourceField source;      ///< reconstructed, on the observation grid
  SpaceTimeField forecast; ///< on the prediction grid
};

inline InversionResult invert(const Scenario& sc, const VectorXd& d, unsigned threads) {
  InversionResult r;
  r.model = build_model(sc);
  r.stack = std::make_shared<const InversionStack>(build_stack(r.model, sc.shape, threads));
  r.data = measurements_for_inversion(sc, d);
  r.report = pdap_run(*r.stack, r.data, sc.pdap);
  r.source = atoms_to_source(r.report.atoms, *r.stack->basis, r.model.obs_grid);
  r.forecast = predict(r.report.atoms, *r.stack, sc.time.t_pred);
  return r;
}

inline InversionResult invert_file(const Scenario& sc, const std::string& measurements, unsigned threads) {
  std::ifstream is(measurements);
  detail::require(static_cast<bool>(is), "cannot open measurements file '" + measurements + "'");
  Model m = build_model(sc);
  const auto obs = assemble_observation(*m.mesh, m.obs_grid, m.sensors);
  const VectorXd d = io::read_measurements(is, obs, measurements);
  return invert(sc, d, threads);
}

inline OutputBundle invert_outputs(const Scenario& sc, const InversionResult& r, const std::string& measurements_path) {
  OutputBundle out;
  const auto& mesh = *r.model.mesh;
  out.add("report.json", to_json(r.report, mesh, r.model.obs_grid, r.data.d).dump(2) + "\n");
  out.add("residual.csv", io::residual_csv(*r.stack->obs, r.data.d, r.report.predicted));
  detail::add_vtk_series(out, mesh, "source", "source", r.source.steps, sc.output.vtk_every);
  detail::add_vtk_series(out, mesh, "forecast", "concentration", r.forecast.values, sc.output.vtk_every);
  detail::finish_bundle(out, sc, "invert", {{"measurements", measurements_path}},
                        {{"converged", r.report.converged},
                         {"iterations", r.report.iterations},
                         {"atoms", r.report.atoms.size()},
                         {"relative_residual", r.report.relative_residual(r.data.d)}});
  return out;
}

inline SteadyScenario build_steady(const Scenario& sc) {
  detail::require(sc.calibration.present, sc.source + ": calibrate needs a [calibration] section");
  const Model g = build_geometry(sc);
  SteadyScenario s;
  s.mesh = g.mesh;
  s.wind = g.wind;
  s.line = sc.calibration.line;
  for (const auto& p : sc.calibration.patches) {
    DirichletPatch patch;
    patch.value = p.value;
    for (std::size_t i = 0; i < g.mesh->num_nodes(); ++i)
      if ((g.mesh->node(i) - p.center).norm() <= p.radius) patch.nodes.push_back(i);
    detail::require(!patch.nodes.empty(), sc.source + ": calibration patch contains no mesh node");
    s.patches.push_back(std::move(patch));
  }
  return s;
}

/// Readings of the model itself at `kappa` on the calibration line.
inline ExperimentalReadings synthesize_readings(const Scenario& sc, double kappa, const std::string& series = "model") {
  const SteadyScenario s = build_steady(sc);
  ExperimentalReadings r;
  r.points = s.line.points();
  r.series.emplace_back(series, s.simulate_line(kappa));
  return r;
}

inline SweepResult calibrate(const Scenario& sc, const ExperimentalReadings& readings, unsigned threads) {
  return sweep_kappa(build_steady(sc), CandidateGrid{sc.calibration.kappas}, readings, threads);
}

inline OutputBundle calibrate_outputs(const Scenario& sc, const SweepResult& res, const std::string& readings_path) {
  OutputBundle out;
  out.add("pi_table.csv", io::sweep_csv(res));
  nlohmann::json best = nlohmann::json::array();
  for (std::size_t s = 0; s < res.series.size(); ++s)
    best.push_back({{"series", res.series[s]}, {"kappa", res.best_kappa(s)}, {"pi", res.pi[res.argmin[s]][s]}});
  nlohmann::json summary{{"argmin", best}};
  out.add("calibration_summary.json", summary.dump(2) + "\n");
  detail::finish_bundle(out, sc, "calibrate", {{"readings", readings_path}}, summary);
  return out;
}

}  // namespace plumetrace
