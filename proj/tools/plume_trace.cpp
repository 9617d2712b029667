// plume-trace: command-line front end for mesh generation, synthetic
// simulation, source inversion and diffusion calibration.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "plumetrace/plumetrace.hpp"

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kNumerical = 2 };

struct Options {
  std::string config;
  std::string measurements;
  std::string readings;
  std::string out;
  unsigned threads = 0;
};

std::filesystem::path output_dir(const plumetrace::Scenario& sc, const Options& opt) {
  return opt.out.empty() ? std::filesystem::path(sc.output.dir) : std::filesystem::path(opt.out);
}

int run(const std::string& command, const Options& opt) {
  using namespace plumetrace;
  const Scenario sc = load_scenario(opt.config);
  const unsigned threads = opt.threads > 0 ? opt.threads : default_thread_count();
  const auto dir = output_dir(sc, opt);

  OutputBundle out;
  if (command == "mesh") {
    out = run_mesh(sc);
  } else if (command == "simulate") {
    const auto r = simulate(sc);
    out = simulate_outputs(sc, r);
    std::fprintf(stderr, "simulate: %zu readings from %zu sensors\n", r.obs->size(), r.model.sensors.sensors.size());
  } else if (command == "invert") {
    detail::require(!opt.measurements.empty(), "invert needs --measurements");
    const auto r = invert_file(sc, opt.measurements, threads);
    out = invert_outputs(sc, r, opt.measurements);
    std::fprintf(stderr, "invert: %s after %zu iterations, %zu atoms, relative residual %.3e\n",
                 r.report.converged ? "converged" : "not converged", r.report.iterations, r.report.atoms.size(),
                 r.report.relative_residual(r.data.d));
  } else {
    detail::require(!opt.readings.empty(), "calibrate needs --readings");
    std::ifstream is(opt.readings);
    detail::require(static_cast<bool>(is), "cannot open readings file '" + opt.readings + "'");
    const auto readings = io::read_readings(is, opt.readings);
    const auto res = calibrate(sc, readings, threads);
    out = calibrate_outputs(sc, res, opt.readings);
    for (std::size_t s = 0; s < res.series.size(); ++s)
      std::fprintf(stderr, "calibrate: series %s best kappa %g (Pi = %.6e)\n", res.series[s].c_str(), res.best_kappa(s),
                   res.pi[res.argmin[s]][s]);
  }
  out.commit(dir);
  std::fprintf(stderr, "wrote %zu files to %s\n", out.files().size(), dir.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contaminant source identification and forecasting on 2D meshes", "plume-trace"};
  app.set_version_flag("--version", std::string(plumetrace::kVersion));
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Scenario configuration (TOML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--threads", opt.threads, "Worker threads (default: PLUMETRACE_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "Output directory (default: [output] dir)");
  };
  auto* mesh = app.add_subcommand("mesh", "Generate the configured mesh and write it in plumetrace-mesh format");
  auto* simulate = app.add_subcommand("simulate", "Forward-simulate the truth curve and write sensor data");
  auto* invert = app.add_subcommand("invert", "Reconstruct sources from measurements and forecast");
  auto* calibrate = app.add_subcommand("calibrate", "Sweep kappa against line readings");
  for (auto* sub : {mesh, simulate, invert, calibrate}) add_common(sub);
  invert->add_option("--measurements", opt.measurements, "Measurement CSV (sensor_id,x,y,t,value)")->required();
  calibrate->add_option("--readings", opt.readings, "Readings CSV (point_id,x,y,series,value)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, opt);
  } catch (const plumetrace::NumericalError& e) {
    std::fprintf(stderr, "plume-trace: numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const plumetrace::ValidationError& e) {
    std::fprintf(stderr, "plume-trace: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "plume-trace: %s\n", e.what());
    return kValidation;
  }
}
