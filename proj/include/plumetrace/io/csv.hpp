#pragma once

#include <cmath>
#include <cstdlib>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "plumetrace/calibration.hpp"
#include "plumetrace/errors.hpp"
#include "plumetrace/mesh.hpp"
#include "plumetrace/sensing.hpp"

namespace plumetrace::io {

using plumetrace::detail::format_double;

/// Minimal reader for headed, comma-separated numeric tables without quoting.
class CsvReader {
 public:
  CsvReader(std::istream& is, std::string source, const std::vector<std::string>& header)
      : is_(is), source_(std::move(source)) {
    std::vector<std::string> got;
    if (!next(got)) throw error("empty file, expected header");
    std::string want, have;
    for (std::size_t i = 0; i < header.size(); ++i) want += (i ? "," : "") + header[i];
    for (std::size_t i = 0; i < got.size(); ++i) have += (i ? "," : "") + got[i];
    if (have != want) throw error("expected header '" + want + "', found '" + have + "'");
    width_ = header.size();
  }

  /// Next data row; false at end of input.
  bool row(std::vector<std::string>& fields) {
    if (!next(fields)) return false;
    if (fields.size() != width_)
      throw error("expected " + std::to_string(width_) + " fields, found " + std::to_string(fields.size()));
    return true;
  }

  double number(const std::string& field) const {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size() || !std::isfinite(v))
      throw error("invalid number '" + field + "'");
    return v;
  }

  std::size_t index(const std::string& field) const {
    char* end = nullptr;
    const long long v = std::strtoll(field.c_str(), &end, 10);
    if (field.empty() || end != field.c_str() + field.size() || v < 0) throw error("invalid index '" + field + "'");
    return static_cast<std::size_t>(v);
  }

  ValidationError error(const std::string& msg) const {
    return ValidationError(source_ + ":" + std::to_string(line_no_) + ": " + msg);
  }

 private:
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      fields.clear();
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, ',')) {
        const auto a = f.find_first_not_of(" \t");
        const auto b = f.find_last_not_of(" \t");
        fields.push_back(a == std::string::npos ? std::string() : f.substr(a, b - a + 1));
      }
      if (line.back() == ',') fields.emplace_back();
      return true;
    }
    return false;
  }

  std::istream& is_;
  std::string source_;
  std::size_t line_no_ = 0;
  std::size_t width_ = 0;
};

inline void require_size(const ObservationOperator& obs, const VectorXd& v) {
  plumetrace::detail::require(v.size() == static_cast<Eigen::Index>(obs.size()),
                              "csv: " + std::to_string(v.size()) + " values for " + std::to_string(obs.size()) + " readings");
}

/// One row per reading in operator order: sensor_id,x,y,t,value.
inline std::string measurements_csv(const ObservationOperator& obs, const VectorXd& values) {
  require_size(obs, values);
  std::string out = "sensor_id,x,y,t,value\n";
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& o = obs.observations()[i];
    out += std::to_string(o.sensor) + ',' + format_double(o.position.x()) + ',' + format_double(o.position.y()) + ',' +
           format_double(o.time) + ',' + format_double(values[static_cast<Eigen::Index>(i)]) + '\n';
  }
  return out;
}

/// Reads a measurement table and checks it row by row against the sensor
/// layout of `obs` (same order, positions and times within 1e-9 relative).
inline VectorXd read_measurements(std::istream& is, const ObservationOperator& obs, const std::string& source = "<csv>") {
  CsvReader csv(is, source, {"sensor_id", "x", "y", "t", "value"});
  VectorXd d(static_cast<Eigen::Index>(obs.size()));
  std::vector<std::string> f;
  std::size_t i = 0;
  while (csv.row(f)) {
    if (i >= obs.size()) throw csv.error("more rows than the sensor configuration has readings (" + std::to_string(obs.size()) + ")");
    const auto& o = obs.observations()[i];
    const std::size_t sid = csv.index(f[0]);
    const Vec2 p(csv.number(f[1]), csv.number(f[2]));
    const double t = csv.number(f[3]);
    const double scale = 1e-9 * std::max(1.0, o.position.norm());
    if (sid != o.sensor || (p - o.position).norm() > scale || std::abs(t - o.time) > 1e-9 * std::max(1.0, std::abs(o.time)))
      throw csv.error("row does not match the configured sensor " + std::to_string(o.sensor) + " at t = " +
                      format_double(o.time));
    d[static_cast<Eigen::Index>(i++)] = csv.number(f[4]);
  }
  if (i != obs.size())
    throw csv.error("found " + std::to_string(i) + " readings, the sensor configuration needs " + std::to_string(obs.size()));
  return d;
}

/// sensor_id,x,y,t,observed,predicted,residual.
inline std::string residual_csv(const ObservationOperator& obs, const VectorXd& observed, const VectorXd& predicted) {
  require_size(obs, observed);
  require_size(obs, predicted);
  std::string out = "sensor_id,x,y,t,observed,predicted,residual\n";
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& o = obs.observations()[i];
    const auto k = static_cast<Eigen::Index>(i);
    out += std::to_string(o.sensor) + ',' + format_double(o.position.x()) + ',' + format_double(o.position.y()) + ',' +
           format_double(o.time) + ',' + format_double(observed[k]) + ',' + format_double(predicted[k]) + ',' +
           format_double(predicted[k] - observed[k]) + '\n';
  }
  return out;
}

/// point_id,x,y,series,value; series keep their order of first appearance.
inline ExperimentalReadings read_readings(std::istream& is, const std::string& source = "<csv>") {
  CsvReader csv(is, source, {"point_id", "x", "y", "series", "value"});
  ExperimentalReadings r;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<char>> seen;
  std::vector<std::string> f;
  while (csv.row(f)) {
    const std::size_t pid = csv.index(f[0]);
    const Vec2 p(csv.number(f[1]), csv.number(f[2]));
    if (f[3].empty()) throw csv.error("empty series name");
    if (pid >= r.points.size()) {
      if (pid != r.points.size()) throw csv.error("point ids must be introduced in order 0, 1, 2, ...");
      r.points.push_back(p);
      for (auto& v : values) v.push_back(0.0);
      for (auto& s : seen) s.push_back(0);
    } else if ((r.points[pid] - p).norm() > 1e-12 * std::max(1.0, p.norm())) {
      throw csv.error("point " + std::to_string(pid) + " appears with different coordinates");
    }
    std::size_t s = 0;
    while (s < r.series.size() && r.series[s].first != f[3]) ++s;
    if (s == r.series.size()) {
      r.series.emplace_back(f[3], VectorXd());
      values.emplace_back(r.points.size(), 0.0);
      seen.emplace_back(r.points.size(), 0);
    }
    if (seen[s][pid]) throw csv.error("duplicate reading for point " + std::to_string(pid) + " in series '" + f[3] + "'");
    seen[s][pid] = 1;
    values[s][pid] = csv.number(f[4]);
  }
  if (r.series.empty()) throw csv.error("no readings");
  for (std::size_t s = 0; s < r.series.size(); ++s) {
    for (std::size_t p = 0; p < r.points.size(); ++p)
      if (!seen[s][p])
        throw ValidationError(source + ": series '" + r.series[s].first + "' has no reading for point " + std::to_string(p));
    r.series[s].second = Eigen::Map<const VectorXd>(values[s].data(), static_cast<Eigen::Index>(values[s].size()));
  }
  return r;
}

inline std::string readings_csv(const ExperimentalReadings& r) {
  r.validate();
  std::string out = "point_id,x,y,series,value\n";
  for (const auto& [name, v] : r.series)
    for (std::size_t p = 0; p < r.points.size(); ++p)
      out += std::to_string(p) + ',' + format_double(r.points[p].x()) + ',' + format_double(r.points[p].y()) + ',' + name +
             ',' + format_double(v[static_cast<Eigen::Index>(p)]) + '\n';
  return out;
}

/// kappa,series,pi.
inline std::string sweep_csv(const SweepResult& s) {
  std::string out = "kappa,series,pi\n";
  for (std::size_t k = 0; k < s.kappas.size(); ++k)
    for (std::size_t j = 0; j < s.series.size(); ++j)
      out += format_double(s.kappas[k]) + ',' + s.series[j] + ',' + format_double(s.pi[k][j]) + '\n';
  return out;
}

/// Per-node wind vectors: node_id,vx,vy with every node listed once.
inline std::vector<Vec2> read_wind(std::istream& is, std::size_t n_nodes, const std::string& source = "<csv>") {
  CsvReader csv(is, source, {"node_id", "vx", "vy"});
  std::vector<Vec2> v(n_nodes, Vec2::Zero());
  std::vector<char> seen(n_nodes, 0);
  std::vector<std::string> f;
  while (csv.row(f)) {
    const std::size_t id = csv.index(f[0]);
    if (id >= n_nodes) throw csv.error("node id " + std::to_string(id) + " out of range (mesh has " + std::to_string(n_nodes) + " nodes)");
    if (seen[id]) throw csv.error("duplicate node id " + std::to_string(id));
    seen[id] = 1;
    v[id] = Vec2(csv.number(f[1]), csv.number(f[2]));
  }
  for (std::size_t i = 0; i < n_nodes; ++i)
    if (!seen[i]) throw ValidationError(source + ": no wind value for node " + std::to_string(i));
  return v;
}

inline std::string wind_csv(const std::vector<Vec2>& v) {
  std::string out = "node_id,vx,vy\n";
  for (std::size_t i = 0; i < v.size(); ++i)
    out += std::to_string(i) + ',' + format_double(v[i].x()) + ',' + format_double(v[i].y()) + '\n';
  return out;
}

}  // namespace plumetrace::io
