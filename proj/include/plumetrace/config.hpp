#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <tomlplusplus/toml.hpp>

#include "plumetrace/calibration.hpp"
#include "plumetrace/errors.hpp"
#include "plumetrace/pdap.hpp"
#include "plumetrace/source_model.hpp"

namespace plumetrace {

struct MeshSpec {
  std::string file;  ///< empty: generate a rectangle
  double width = 1.0, height = 1.0;
  std::int64_t nx = 32, ny = 32;
};

struct WindComponent {
  std::string type = "uniform";  ///< uniform | vortex | shear
  double vx = 0.0, vy = 0.0;
  Vec2 center = Vec2::Zero();
  double strength = 0.0;
  double rate = 0.0;
};

struct WindSpec {
  std::string file;  ///< per-node CSV; overrides components
  std::vector<WindComponent> components;
};

struct TimeSpec {
  double dt = 0.01;
  double t_obs = 1.0;
  double t_pred = 1.0;
};

struct TruthSpec {
  ParameterCurve curve;
};

struct SensorSpec {
  std::string layout = "grid";  ///< grid | list
  std::int64_t nx = 0, ny = 0;
  std::vector<Vec2> positions;
  double sample_dt = 0.0;  ///< 0: the time step
  double t_start = 0.0;
  double t_end = -1.0;     ///< negative: t_obs
  double rho_x = 0.0;      ///< 0: rho_x_cells mesh cells
  double rho_x_cells = 2.0;
  double rho_t = 0.0;      ///< 0: rho_t_steps time steps
  double rho_t_steps = 2.0;
  double sigma_plateau = 0.5;
};

struct NoiseSpec {
  double snr = std::numeric_limits<double>::infinity();
  std::int64_t seed = 0;
};

struct PatchSpec {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
  double value = 1.0;
};

struct CalibrationSpec {
  std::vector<double> kappas;  ///< empty: the default grid
  LineSpec line;
  std::vector<PatchSpec> patches;
  bool present = false;
};

struct OutputSpec {
  std::string dir = "out";
  std::int64_t vtk_every = 10;  ///< 0 disables field export
};

/// A fully resolved scenario: every default filled in, paths absolute.
struct Scenario {
  std::string source;  ///< config path, for messages
  double kappa = 0.0;
  MeshSpec mesh;
  WindSpec wind;
  TimeSpec time;
  ShapeParams shape;
  std::optional<TruthSpec> truth;
  SensorSpec sensors;
  NoiseSpec noise;
  PdapConfig pdap;
  std::optional<double> pdap_sigma;
  CalibrationSpec calibration;
  OutputSpec output;
};

namespace detail {

/// Typed access to one TOML table with file:line error messages and a check
/// for unknown keys.
class Section {
 public:
  Section(const toml::table* t, std::string name, std::string file) : t_(t), name_(std::move(name)), file_(std::move(file)) {}

  bool present() const { return t_ != nullptr; }
  bool has(const std::string& key) const { return t_ && t_->contains(key); }

  ValidationError error(const std::string& key, const std::string& msg) const {
    std::string where = file_;
    if (t_) {
      const toml::node* n = t_->get(key);
      const auto& src = n ? n->source() : t_->source();
      if (src.begin.line) where += ":" + std::to_string(src.begin.line);
    }
    return ValidationError(where + ": " + qualified(key) + ": " + msg);
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    use(key);
    const toml::node* n = t_ ? t_->get(key) : nullptr;
    if (!n) {
      if (fallback) return *fallback;
      throw error(key, "required number is missing");
    }
    if (auto v = n->value<double>()) return *v;  // accepts integers too
    if (auto s = n->value<std::string>()) {
      if (*s == "inf" || *s == "+inf") return std::numeric_limits<double>::infinity();
    }
    throw error(key, "expected a number");
  }

  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) {
    use(key);
    const toml::node* n = t_ ? t_->get(key) : nullptr;
    if (!n) {
      if (fallback) return *fallback;
      throw error(key, "required integer is missing");
    }
    if (!n->is_integer()) throw error(key, "expected an integer");
    return *n->value<std::int64_t>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    use(key);
    const toml::node* n = t_ ? t_->get(key) : nullptr;
    if (!n) {
      if (fallback) return *fallback;
      throw error(key, "required string is missing");
    }
    if (!n->is_string()) throw error(key, "expected a string");
    return *n->value<std::string>();
  }

  Vec2 point(const std::string& key, std::optional<Vec2> fallback = std::nullopt) {
    use(key);
    const toml::node* n = t_ ? t_->get(key) : nullptr;
    if (!n) {
      if (fallback) return *fallback;
      throw error(key, "required point [x, y] is missing");
    }
    return as_point(n, key);
  }

  std::vector<double> numbers(const std::string& key) {
    use(key);
    std::vector<double> out;
    const toml::node* n = t_ ? t_->get(key) : nullptr;
    if (!n) return out;
    const auto* arr = n->as_array();
    if (!arr) throw error(key, "expected an array of numbers");
    for (const auto& e : *arr) {
      const auto v = e.value<double>();
      if (!v) throw error(key, "expected an array of numbers");
      out.push_back(*v);
    }
    return out;
  }

  std::vector<Vec2> points(const std::string& key) {
    use(key);
    std::vector<Vec2> out;
    const toml::node* n = t_ ? t_->get(key) : nullptr;
    if (!n) return out;
    const auto* arr = n->as_array();
    if (!arr) throw error(key, "expected an array of [x, y] points");
    for (const auto& e : *arr) out.push_back(as_point(&e, key));
    return out;
  }

  /// Sub-tables from an array of tables (or inline tables).
  std::vector<Section> tables(const std::string& key) {
    use(key);
    std::vector<Section> out;
    const toml::node* n = t_ ? t_->get(key) : nullptr;
    if (!n) return out;
    const auto* arr = n->as_array();
    if (!arr) throw error(key, "expected an array of tables");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = arr->get(i)->as_table();
      if (!t) throw error(key, "expected an array of tables");
      out.emplace_back(t, qualified(key) + "[" + std::to_string(i) + "]", file_);
    }
    return out;
  }

  Section table(const std::string& key) {
    use(key);
    const toml::node* n = t_ ? t_->get(key) : nullptr;
    if (n && !n->is_table()) throw error(key, "expected a table");
    return Section(n ? n->as_table() : nullptr, qualified(key), file_);
  }

  /// Rejects keys that were never asked for.
  void finish() const {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      const std::string key(k.str());
      if (!used_.count(key)) throw error(key, "unknown key");
    }
  }

 private:
  std::string qualified(const std::string& key) const {
    if (key.empty() || name_.empty()) return name_.empty() ? key : name_;
    return name_ + "." + key;
  }
  void use(const std::string& key) { used_.insert(key); }

  Vec2 as_point(const toml::node* n, const std::string& key) const {
    const auto* arr = n->as_array();
    if (!arr || arr->size() != 2) throw error(key, "expected [x, y]");
    const auto x = arr->get(0)->value<double>();
    const auto y = arr->get(1)->value<double>();
    if (!x || !y) throw error(key, "expected [x, y]");
    return Vec2(*x, *y);
  }

  const toml::table* t_;
  std::string name_;
  std::string file_;
  std::set<std::string> used_;
};

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal().string();
}

}  // namespace detail

/// Parses a scenario from TOML text. Relative input paths are resolved
/// against `base_dir`. Throws ValidationError with file:line context.
inline Scenario parse_scenario(const std::string& text, const std::string& source = "<config>",
                               const std::filesystem::path& base_dir = ".") {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ValidationError(source + ":" + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
  }
  using detail::Section;
  Section top(&root, "", source);
  Scenario sc;
  sc.source = source;
  sc.kappa = top.number("kappa", 0.0);
  if (top.has("kappa") && !(sc.kappa > 0.0)) throw top.error("kappa", "must be positive");

  {
    auto s = top.table("mesh");
    sc.mesh.file = detail::resolve_path(s.string("file", ""), base_dir);
    sc.mesh.width = s.number("width", 1.0);
    sc.mesh.height = s.number("height", 1.0);
    sc.mesh.nx = s.integer("nx", 32);
    sc.mesh.ny = s.integer("ny", 32);
    if (sc.mesh.file.empty()) {
      if (!(sc.mesh.width > 0.0)) throw s.error("width", "must be positive");
      if (!(sc.mesh.height > 0.0)) throw s.error("height", "must be positive");
      if (sc.mesh.nx < 1) throw s.error("nx", "must be at least 1");
      if (sc.mesh.ny < 1) throw s.error("ny", "must be at least 1");
    }
    s.finish();
  }

  {
    auto s = top.table("wind");
    sc.wind.file = detail::resolve_path(s.string("file", ""), base_dir);
    auto parse_component = [](Section& c) {
      WindComponent w;
      w.type = c.string("type");
      if (w.type == "uniform") {
        w.vx = c.number("vx", 0.0);
        w.vy = c.number("vy", 0.0);
      } else if (w.type == "vortex") {
        w.center = c.point("center");
        w.strength = c.number("strength");
      } else if (w.type == "shear") {
        w.rate = c.number("rate");
      } else {
        throw c.error("type", "unknown wind type '" + w.type + "' (uniform, vortex, shear)");
      }
      c.finish();
      return w;
    };
    for (auto& c : s.tables("components")) sc.wind.components.push_back(parse_component(c));
    // Single-component shorthand: the component keys live in [wind] itself.
    if (s.has("type")) sc.wind.components.push_back(parse_component(s));
    s.finish();
  }

  {
    auto s = top.table("time");
    sc.time.dt = s.number("dt", 0.01);
    sc.time.t_obs = s.number("t_obs", 1.0);
    sc.time.t_pred = s.number("t_pred", sc.time.t_obs);
    if (!(sc.time.dt > 0.0)) throw s.error("dt", "must be positive");
    if (!(sc.time.t_obs >= sc.time.dt)) throw s.error("t_obs", "must be at least one time step");
    if (!(sc.time.t_pred >= sc.time.t_obs)) throw s.error("t_pred", "must not be shorter than t_obs");
    s.finish();
  }

  {
    auto s = top.table("shape");
    sc.shape.radius = s.number("radius", sc.shape.radius);
    sc.shape.eps = s.number("eps", sc.shape.eps);
    sc.shape.cap = s.number("cap", sc.shape.cap);
    sc.shape.trunc_tol = s.number("trunc_tol", sc.shape.trunc_tol);
    sc.shape.quad_refine = static_cast<int>(s.integer("quad_refine", sc.shape.quad_refine));
    try {
      sc.shape.validate();
    } catch (const ValidationError& e) {
      throw s.error("", e.what());
    }
    s.finish();
  }

  if (top.has("truth")) {
    auto s = top.table("truth");
    TruthSpec t;
    t.curve.t_on = s.number("t_on");
    t.curve.t_off = s.number("t_off");
    for (auto& b : s.tables("breakpoints")) {
      ParameterCurve::Breakpoint bp{b.number("t"), b.number("intensity"), Vec2(b.number("x"), b.number("y"))};
      b.finish();
      t.curve.breakpoints.push_back(bp);
    }
    try {
      t.curve.validate();
    } catch (const ValidationError& e) {
      throw s.error("breakpoints", e.what());
    }
    sc.truth = t;
    s.finish();
  }

  {
    auto s = top.table("sensors");
    auto& ss = sc.sensors;
    ss.layout = s.string("layout", "grid");
    if (ss.layout == "grid") {
      ss.nx = s.integer("nx", 0);
      ss.ny = s.integer("ny", 0);
    } else if (ss.layout == "list") {
      ss.positions = s.points("positions");
    } else if (s.present()) {
      throw s.error("layout", "expected 'grid' or 'list'");
    }
    ss.sample_dt = s.number("sample_dt", sc.time.dt);
    ss.t_start = s.number("t_start", 0.0);
    ss.t_end = s.number("t_end", sc.time.t_obs);
    ss.rho_x = s.number("rho_x", 0.0);
    ss.rho_x_cells = s.number("rho_x_cells", 2.0);
    ss.rho_t = s.number("rho_t", 0.0);
    ss.rho_t_steps = s.number("rho_t_steps", 2.0);
    ss.sigma_plateau = s.number("sigma_plateau", 0.5);
    if (ss.layout == "grid" && s.present() && (ss.nx < 1 || ss.ny < 1)) throw s.error("nx", "grid layout needs nx, ny >= 1");
    if (ss.layout == "list" && ss.positions.empty()) throw s.error("positions", "list layout needs at least one sensor");
    if (!(ss.sample_dt > 0.0)) throw s.error("sample_dt", "must be positive");
    if (!(ss.t_start >= 0.0 && ss.t_end >= ss.t_start && ss.t_end <= sc.time.t_obs + 1e-9 * sc.time.dt))
      throw s.error("t_end", "sampling window must lie within [0, t_obs]");
    if (ss.rho_x < 0.0 || (ss.rho_x == 0.0 && !(ss.rho_x_cells > 0.0))) throw s.error("rho_x", "must be positive");
    if (ss.rho_t < 0.0 || (ss.rho_t == 0.0 && !(ss.rho_t_steps > 0.0))) throw s.error("rho_t", "must be positive");
    if (!(ss.sigma_plateau > 0.0 && ss.sigma_plateau < 1.0)) throw s.error("sigma_plateau", "must lie in (0, 1)");
    s.finish();
  }

  {
    auto s = top.table("noise");
    sc.noise.snr = s.number("snr", std::numeric_limits<double>::infinity());
    sc.noise.seed = s.integer("seed", 0);
    if (!(sc.noise.snr > 0.0)) throw s.error("snr", "must be positive or inf");
    s.finish();
  }

  {
    auto s = top.table("pdap");
    auto& p = sc.pdap;
    p.alpha = s.number("alpha", 1.0);
    p.insert_tol = s.number("insert_tol", -1.0);
    p.prune_tol = s.number("prune_tol", -1.0);
    p.max_iter = static_cast<std::size_t>(std::max<std::int64_t>(0, s.integer("max_iter", 100)));
    p.lasso_tol = s.number("lasso_tol", -1.0);
    p.lasso_max_iter = static_cast<std::size_t>(std::max<std::int64_t>(0, s.integer("lasso_max_iter", 500)));
    if (s.has("sigma")) {
      sc.pdap_sigma = s.number("sigma");
      if (!(*sc.pdap_sigma > 0.0)) throw s.error("sigma", "must be positive");
    }
    if (!(p.alpha > 0.0)) throw s.error("alpha", "must be positive");
    if (p.max_iter < 1) throw s.error("max_iter", "must be at least 1");
    if (p.lasso_max_iter < 1) throw s.error("lasso_max_iter", "must be at least 1");
    s.finish();
  }

  if (top.has("calibration")) {
    auto s = top.table("calibration");
    auto& c = sc.calibration;
    c.present = true;
    c.kappas = s.numbers("kappas");
    if (c.kappas.empty()) c.kappas = default_kappa_grid().kappas;
    try {
      CandidateGrid{c.kappas}.validate();
    } catch (const ValidationError& e) {
      throw s.error("kappas", e.what());
    }
    auto l = s.table("line");
    if (!l.present()) throw s.error("line", "required table is missing");
    c.line.start = l.point("start");
    c.line.direction = l.point("direction", Vec2(1.0, 0.0));
    c.line.length = l.number("length");
    const auto np = l.integer("n_points");
    if (np < 2) throw l.error("n_points", "must be at least 2");
    c.line.n_points = static_cast<std::size_t>(np);
    if (!(c.line.length > 0.0)) throw l.error("length", "must be positive");
    if (!(c.line.direction.norm() > 0.0)) throw l.error("direction", "must be nonzero");
    l.finish();
    for (auto& p : s.tables("patches")) {
      PatchSpec ps{p.point("center"), p.number("radius"), p.number("value", 1.0)};
      if (!(ps.radius > 0.0)) throw p.error("radius", "must be positive");
      p.finish();
      c.patches.push_back(ps);
    }
    s.finish();
  }

  {
    auto s = top.table("output");
    sc.output.dir = s.string("dir", "out");
    sc.output.vtk_every = s.integer("vtk_every", 10);
    if (sc.output.vtk_every < 0) throw s.error("vtk_every", "must be nonnegative");
    s.finish();
  }

  top.finish();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  detail::require(static_cast<bool>(is), "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  const auto base = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
  return parse_scenario(ss.str(), path, base);
}

/// The scenario with every default spelled out, as TOML. Parsing the result
/// yields the same scenario.
inline std::string resolved_toml(const Scenario& sc) {
  auto arr2 = [](const Vec2& p) { return toml::array{p.x(), p.y()}; };
  toml::table root;
  if (sc.kappa > 0.0) root.insert("kappa", sc.kappa);

  toml::table mesh;
  if (!sc.mesh.file.empty()) {
    mesh.insert("file", sc.mesh.file);
  } else {
    mesh.insert("width", sc.mesh.width);
    mesh.insert("height", sc.mesh.height);
    mesh.insert("nx", sc.mesh.nx);
    mesh.insert("ny", sc.mesh.ny);
  }
  root.insert("mesh", mesh);

  toml::table wind;
  if (!sc.wind.file.empty()) wind.insert("file", sc.wind.file);
  toml::array comps;
  for (const auto& c : sc.wind.components) {
    toml::table t;
    t.insert("type", c.type);
    if (c.type == "uniform") {
      t.insert("vx", c.vx);
      t.insert("vy", c.vy);
    } else if (c.type == "vortex") {
      t.insert("center", arr2(c.center));
      t.insert("strength", c.strength);
    } else {
      t.insert("rate", c.rate);
    }
    comps.push_back(t);
  }
  if (!comps.empty()) wind.insert("components", comps);
  root.insert("wind", wind);

  root.insert("time", toml::table{{"dt", sc.time.dt}, {"t_obs", sc.time.t_obs}, {"t_pred", sc.time.t_pred}});
  root.insert("shape", toml::table{{"radius", sc.shape.radius},
                                   {"eps", sc.shape.eps},
                                   {"cap", sc.shape.cap},
                                   {"trunc_tol", sc.shape.trunc_tol},
                                   {"quad_refine", sc.shape.quad_refine}});
  if (sc.truth) {
    toml::array bps;
    for (const auto& b : sc.truth->curve.breakpoints)
      bps.push_back(toml::table{{"t", b.t}, {"intensity", b.intensity}, {"x", b.location.x()}, {"y", b.location.y()}});
    root.insert("truth", toml::table{{"t_on", sc.truth->curve.t_on}, {"t_off", sc.truth->curve.t_off}, {"breakpoints", bps}});
  }

  const auto& ss = sc.sensors;
  toml::table sensors{{"layout", ss.layout}};
  if (ss.layout == "grid") {
    sensors.insert("nx", ss.nx);
    sensors.insert("ny", ss.ny);
  } else {
    toml::array pos;
    for (const auto& p : ss.positions) pos.push_back(arr2(p));
    sensors.insert("positions", pos);
  }
  sensors.insert("sample_dt", ss.sample_dt);
  sensors.insert("t_start", ss.t_start);
  sensors.insert("t_end", ss.t_end);
  sensors.insert("rho_x", ss.rho_x);
  sensors.insert("rho_x_cells", ss.rho_x_cells);
  sensors.insert("rho_t", ss.rho_t);
  sensors.insert("rho_t_steps", ss.rho_t_steps);
  sensors.insert("sigma_plateau", ss.sigma_plateau);
  root.insert("sensors", sensors);

  toml::table noise{{"seed", sc.noise.seed}};
  if (std::isinf(sc.noise.snr))
    noise.insert("snr", "inf");
  else
    noise.insert("snr", sc.noise.snr);
  root.insert("noise", noise);

  toml::table pdap{{"alpha", sc.pdap.alpha},
                   {"insert_tol", sc.pdap.insert_tol},
                   {"prune_tol", sc.pdap.prune_tol},
                   {"max_iter", static_cast<std::int64_t>(sc.pdap.max_iter)},
                   {"lasso_tol", sc.pdap.lasso_tol},
                   {"lasso_max_iter", static_cast<std::int64_t>(sc.pdap.lasso_max_iter)}};
  if (sc.pdap_sigma) pdap.insert("sigma", *sc.pdap_sigma);
  root.insert("pdap", pdap);

  if (sc.calibration.present) {
    const auto& c = sc.calibration;
    toml::array ks;
    for (double k : c.kappas) ks.push_back(k);
    toml::array patches;
    for (const auto& p : c.patches)
      patches.push_back(toml::table{{"center", arr2(p.center)}, {"radius", p.radius}, {"value", p.value}});
    root.insert("calibration",
                toml::table{{"kappas", ks},
                            {"line", toml::table{{"start", arr2(c.line.start)},
                                                 {"direction", arr2(c.line.direction)},
                                                 {"length", c.line.length},
                                                 {"n_points", static_cast<std::int64_t>(c.line.n_points)}}},
                            {"patches", patches}});
  }
  root.insert("output", toml::table{{"dir", sc.output.dir}, {"vtk_every", sc.output.vtk_every}});

  std::ostringstream os;
  os << root << '\n';
  return os.str();
}

}  // namespace plumetrace
