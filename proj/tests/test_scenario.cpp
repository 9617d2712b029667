#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "plumetrace/plumetrace.hpp"

using namespace plumetrace;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(kappa = 0.01

[mesh]
nx = 8
ny = 8

[wind]
type = "uniform"
vx = 0.3
vy = 0.0

[time]
dt = 0.02
t_obs = 0.2
t_pred = 0.4

[truth]
t_on = 0.02
t_off = 0.15
breakpoints = [
  { t = 0.0, intensity = 5.0, x = 0.4, y = 0.5 },
  { t = 0.2, intensity = 5.0, x = 0.5, y = 0.5 },
]

[sensors]
layout = "grid"
nx = 3
ny = 3

[noise]
snr = 20.0
seed = 7

[pdap]
alpha = 1.0

[output]
vtk_every = 5
)";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("plumetrace_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name, std::ios::binary) << text;
    return dir_ / name;
  }

  // Runs the CLI and returns its exit status; stderr goes to err_.
  int run(const std::string& args) {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(PLUMETRACE_CLI) + " " + args + " 2> " + err.string() + " > /dev/null";
    const int status = std::system(cmd.c_str());
    err_ = slurp(err);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
  std::string err_;
};

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  if (at != std::string::npos) s.replace(at, from.size(), to);
  return s;
}

std::string expect_parse_error(const std::string& text) {
  try {
    parse_scenario(text, "s.toml");
  } catch (const ValidationError& e) {
    return e.what();
  }
  ADD_FAILURE() << "accepted:\n" << text;
  return {};
}

}  // namespace

TEST(Config, ErrorsCarryFileAndLine) {
  EXPECT_EQ(expect_parse_error(replace(kSmall, "nx = 8", "nx = 0")).rfind("s.toml:4: mesh.nx", 0), 0u);
  EXPECT_NE(expect_parse_error(replace(kSmall, "vy = 0.0", "vy = 0.0\nspeed = 2")).find("s.toml:11: wind.speed: unknown key"),
            std::string::npos);
  EXPECT_NE(expect_parse_error(replace(kSmall, "dt = 0.02", "dt = \"fast\"")).find("s.toml:13: time.dt: expected a number"),
            std::string::npos);
  const std::string head(kSmall, std::string(kSmall).find("[pdap]"));
  const auto pdap_line = std::to_string(std::count(head.begin(), head.end(), '\n') + 1);
  EXPECT_EQ(expect_parse_error(replace(kSmall, "[pdap]", "[pdap")).rfind("s.toml:" + pdap_line + ":", 0), 0u);
  EXPECT_NE(expect_parse_error(replace(kSmall, "type = \"uniform\"", "type = \"gusty\"")).find("unknown wind type"),
            std::string::npos);
  EXPECT_NE(expect_parse_error(replace(kSmall, "snr = 20.0", "snr = -1.0")).find("noise.snr"), std::string::npos);
  EXPECT_NE(expect_parse_error(replace(kSmall, "t_pred = 0.4", "t_pred = 0.1")).find("time.t_pred"), std::string::npos);
}

TEST(Config, DefaultsAreFilledIn) {
  const auto sc = parse_scenario(kSmall, "s.toml");
  EXPECT_DOUBLE_EQ(sc.shape.radius, ShapeParams{}.radius);
  EXPECT_DOUBLE_EQ(sc.sensors.sample_dt, 0.02);
  EXPECT_DOUBLE_EQ(sc.sensors.t_end, 0.2);
  EXPECT_EQ(sc.pdap.max_iter, 100u);
  EXPECT_TRUE(sc.truth.has_value());
  EXPECT_FALSE(sc.calibration.present);
}

TEST(Config, ResolvedTomlRoundTrips) {
  auto text = replace(kSmall, "kappa = 0.01", "kappa = 0.30000000000000004");
  const auto sc = parse_scenario(text, "s.toml");
  const std::string once = resolved_toml(sc);
  const auto back = parse_scenario(once, "resolved.toml");
  EXPECT_EQ(back.kappa, sc.kappa);
  EXPECT_EQ(back.truth->curve.breakpoints[1].location, sc.truth->curve.breakpoints[1].location);
  EXPECT_EQ(resolved_toml(back), once);
}

TEST_F(Cli, BadConfigExitsWithOne) {
  const auto cfg = write("bad.toml", replace(kSmall, "nx = 8", "nx = 0"));
  EXPECT_EQ(run("mesh --config " + cfg.string() + " --out " + (dir_ / "o").string()), 1);
  EXPECT_NE(err_.find("bad.toml:4"), std::string::npos) << err_;
  EXPECT_FALSE(fs::exists(dir_ / "o"));
  EXPECT_EQ(run("mesh"), 1);
  EXPECT_EQ(run("frobnicate --config " + cfg.string()), 1);
}

TEST_F(Cli, MeshRoundTrip) {
  const auto cfg = write("m.toml", replace(replace(kSmall, "nx = 8", "nx = 4"), "ny = 8", "ny = 4"));
  ASSERT_EQ(run("mesh --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0) << err_;
  const std::string text = slurp(dir_ / "a" / "mesh.txt");
  std::istringstream is(text);
  const Mesh m = read_mesh(is);
  EXPECT_EQ(m.num_nodes(), 25u);
  EXPECT_EQ(m.num_triangles(), 32u);
  std::ostringstream os;
  write_mesh(m, os);
  EXPECT_EQ(os.str(), text);
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "mesh");
  EXPECT_EQ(manifest["summary"]["nodes"], 25);
  for (const auto& f : manifest["outputs"]) EXPECT_TRUE(fs::exists(dir_ / "a" / f["path"].get<std::string>())) << f;
}

TEST_F(Cli, SimulateShapeAndDeterminism) {
  const auto cfg = write("s.toml", kSmall);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --threads 1 --out " + (dir_ / "a").string()), 0) << err_;
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --threads 3 --out " + (dir_ / "b").string()), 0) << err_;
  for (const char* f : {"measurements.csv", "measurements_clean.csv", "manifest.json", "concentration_0000.vtk"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  const std::string csv = slurp(dir_ / "a" / "measurements.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 9 * 11);
  EXPECT_NE(slurp(dir_ / "a" / "measurements_clean.csv"), csv);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "concentration_0020.vtk"));
  EXPECT_FALSE(fs::exists(dir_ / "a" / ".plume-trace-staging"));
}

TEST_F(Cli, ZeroIntensityGivesZeroReadings) {
  std::string text = kSmall;
  text = replace(text, "intensity = 5.0", "intensity = 0.0");
  text = replace(text, "intensity = 5.0", "intensity = 0.0");
  const auto cfg = write("z.toml", text);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0) << err_;
  std::ifstream is(dir_ / "a" / "measurements.csv");
  std::string line;
  std::getline(is, line);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::stod(line.substr(line.rfind(',') + 1)), 0.0) << line;
  }
  EXPECT_EQ(rows, 99u);
}

TEST_F(Cli, InvertMissingFileLeavesNoOutputs) {
  const auto cfg = write("s.toml", kSmall);
  EXPECT_EQ(run("invert --config " + cfg.string() + " --measurements " + (dir_ / "nope.csv").string() + " --out " +
                (dir_ / "o").string()),
            1);
  EXPECT_NE(err_.find("nope.csv"), std::string::npos) << err_;
  EXPECT_TRUE(!fs::exists(dir_ / "o") || fs::is_empty(dir_ / "o"));
}

TEST_F(Cli, InvertMalformedMeasurementsReportsLine) {
  const auto cfg = write("s.toml", kSmall);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0) << err_;
  std::string csv = slurp(dir_ / "a" / "measurements.csv");
  const auto third = csv.find('\n', csv.find('\n', csv.find('\n') + 1) + 1);
  csv.insert(third, "x");
  const auto bad = write("bad.csv", csv);
  EXPECT_EQ(run("invert --config " + cfg.string() + " --measurements " + bad.string() + " --out " + (dir_ / "o").string()), 1);
  EXPECT_NE(err_.find("bad.csv:3"), std::string::npos) << err_;
}

TEST_F(Cli, InvertZerosAndPartialRuns) {
  const auto cfg = write("s.toml", kSmall);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0) << err_;
  std::string zeros;
  {
    std::istringstream is(slurp(dir_ / "a" / "measurements.csv"));
    std::string line;
    std::getline(is, line);
    zeros = line + "\n";
    while (std::getline(is, line)) zeros += line.substr(0, line.rfind(',')) + ",0\n";
  }
  const auto zcsv = write("zeros.csv", zeros);
  ASSERT_EQ(run("invert --config " + cfg.string() + " --measurements " + zcsv.string() + " --out " + (dir_ / "z").string()), 0)
      << err_;
  auto rep = nlohmann::json::parse(slurp(dir_ / "z" / "report.json"));
  EXPECT_TRUE(rep["converged"].get<bool>());
  EXPECT_TRUE(rep["atoms"].empty());

  const auto one = write("one.toml", replace(kSmall, "alpha = 1.0", "alpha = 1.0\nmax_iter = 1"));
  const auto meas = (dir_ / "a" / "measurements.csv").string();
  ASSERT_EQ(run("invert --config " + one.string() + " --measurements " + meas + " --out " + (dir_ / "p").string()), 0) << err_;
  rep = nlohmann::json::parse(slurp(dir_ / "p" / "report.json"));
  EXPECT_FALSE(rep["converged"].get<bool>());
  EXPECT_EQ(rep["iterations"], 1);
  EXPECT_NE(err_.find("not converged"), std::string::npos);
}

TEST_F(Cli, InvertIsDeterministicAcrossThreads) {
  const auto cfg = write("s.toml", kSmall);
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0) << err_;
  const auto meas = (dir_ / "a" / "measurements.csv").string();
  ASSERT_EQ(run("invert --config " + cfg.string() + " --threads 1 --measurements " + meas + " --out " + (dir_ / "x").string()), 0);
  ASSERT_EQ(run("invert --config " + cfg.string() + " --threads 4 --measurements " + meas + " --out " + (dir_ / "y").string()), 0);
  for (const char* f : {"report.json", "residual.csv", "forecast_0020.vtk", "source_0000.vtk"})
    EXPECT_EQ(slurp(dir_ / "x" / f), slurp(dir_ / "y" / f)) << f;
}

TEST_F(Cli, CalibrateWritesSweepTable) {
  const std::string src = PLUMETRACE_SOURCE_DIR;
  ASSERT_EQ(run("calibrate --config " + src + "/scenarios/calibration.toml --readings " + src +
                "/scenarios/data/calibration_readings.csv --out " + (dir_ / "c").string()),
            0)
      << err_;
  const std::string table = slurp(dir_ / "c" / "pi_table.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 1 + 6 * 2);
  const auto summary = nlohmann::json::parse(slurp(dir_ / "c" / "calibration_summary.json"));
  EXPECT_DOUBLE_EQ(summary["argmin"][0]["kappa"].get<double>(), 1e-3);
  EXPECT_LE(summary["argmin"][0]["pi"].get<double>(), 1e-20);

  EXPECT_EQ(run("calibrate --config " + write("s.toml", kSmall).string() + " --readings " + src +
                "/scenarios/data/calibration_readings.csv --out " + (dir_ / "d").string()),
            1);
  EXPECT_NE(err_.find("[calibration]"), std::string::npos) << err_;
}
