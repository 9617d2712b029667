#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "plumetrace/errors.hpp"
#include "plumetrace/geometry.hpp"

namespace plumetrace {

enum class BoundaryTag { Inflow, Outflow, Characteristic };

inline const char* to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Inflow: return "inflow";
    case BoundaryTag::Outflow: return "outflow";
    case BoundaryTag::Characteristic: return "characteristic";
  }
  return "?";
}

using Triangle = std::array<std::size_t, 3>;
using Edge = std::array<std::size_t, 2>;

/// A boundary edge, oriented counter-clockwise with respect to the single
/// triangle that owns it, so the outward normal is (dy, -dx) / length.
struct BoundaryEdge {
  Edge nodes;
  std::optional<BoundaryTag> tag;
};

/// Point location result: owning triangle and barycentric coordinates.
struct MeshLocation {
  std::size_t element;
  Vec3 bary;
};

/// Immutable 2D triangulation with boundary edges.
///
/// Construction validates node indices, rejects degenerate triangles, flips
/// clockwise triangles to counter-clockwise order and checks that the listed
/// boundary edges are exactly the edges owned by a single triangle.
class Mesh {
 public:
  Mesh(std::vector<Vec2> nodes, std::vector<Triangle> triangles, std::vector<Edge> boundary)
      : nodes_(std::move(nodes)), triangles_(std::move(triangles)) {
    orient_and_validate();
    auto owned = collect_boundary();
    detail::require(boundary.size() == owned.size(),
                    "mesh: boundary lists " + std::to_string(boundary.size()) + " edges but the triangulation has " +
                        std::to_string(owned.size()));
    boundary_.reserve(boundary.size());
    for (const auto& e : boundary) {
      detail::require(e[0] < nodes_.size() && e[1] < nodes_.size(), "mesh: boundary edge references a missing node");
      const auto it = owned.find(key(e[0], e[1]));
      detail::require(it != owned.end(), "mesh: listed boundary edge (" + std::to_string(e[0]) + ", " +
                                             std::to_string(e[1]) + ") is not a boundary edge of the triangulation");
      boundary_.push_back({it->second, std::nullopt});
      owned.erase(it);
    }
    build_locator();
  }

  /// Builds the mesh and derives the boundary edges from the triangulation,
  /// in order of first appearance.
  static Mesh from_triangles(std::vector<Vec2> nodes, std::vector<Triangle> triangles) {
    Mesh mesh;
    mesh.nodes_ = std::move(nodes);
    mesh.triangles_ = std::move(triangles);
    mesh.orient_and_validate();
    const auto owned = mesh.collect_boundary();
    std::vector<std::pair<std::size_t, Edge>> ordered;
    for (const auto& [k, e] : owned) ordered.emplace_back(mesh.edge_order_.at(k), e);
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [order, e] : ordered) mesh.boundary_.push_back({e, std::nullopt});
    mesh.build_locator();
    return mesh;
  }

  const std::vector<Vec2>& nodes() const { return nodes_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }

  const Vec2& node(std::size_t i) const { return nodes_[i]; }

  double area(std::size_t e) const {
    const auto& t = triangles_[e];
    return signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
  }

  Vec2 centroid(std::size_t e) const {
    const auto& t = triangles_[e];
    return (nodes_[t[0]] + nodes_[t[1]] + nodes_[t[2]]) / 3.0;
  }

  /// Element diameter: the longest edge.
  double diameter(std::size_t e) const {
    const auto& t = triangles_[e];
    return std::max({(nodes_[t[0]] - nodes_[t[1]]).norm(), (nodes_[t[1]] - nodes_[t[2]]).norm(),
                     (nodes_[t[2]] - nodes_[t[0]]).norm()});
  }

  double max_diameter() const {
    double h = 0.0;
    for (std::size_t e = 0; e < triangles_.size(); ++e) h = std::max(h, diameter(e));
    return h;
  }

  double mean_edge_length() const {
    double sum = 0.0;
    for (const auto& t : triangles_)
      for (int k = 0; k < 3; ++k) sum += (nodes_[t[k]] - nodes_[t[(k + 1) % 3]]).norm();
    return triangles_.empty() ? 0.0 : sum / (3.0 * static_cast<double>(triangles_.size()));
  }

  double total_area() const {
    double a = 0.0;
    for (std::size_t e = 0; e < triangles_.size(); ++e) a += area(e);
    return a;
  }

  /// Area enclosed by the boundary (shoelace over the oriented boundary edges).
  double boundary_area() const {
    double a = 0.0;
    for (const auto& b : boundary_) {
      const Vec2& p = nodes_[b.nodes[0]];
      const Vec2& q = nodes_[b.nodes[1]];
      a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
  }

  static Vec2 outward_normal(const Vec2& from, const Vec2& to) {
    const Vec2 d = to - from;
    return Vec2(d.y(), -d.x()) / d.norm();
  }

  Vec2 outward_normal(const BoundaryEdge& edge) const {
    return outward_normal(nodes_[edge.nodes[0]], nodes_[edge.nodes[1]]);
  }

  bool is_classified() const {
    return std::all_of(boundary_.begin(), boundary_.end(), [](const auto& b) { return b.tag.has_value(); });
  }

  /// Copy of this mesh with the given boundary tags (one per boundary edge).
  Mesh with_tags(const std::vector<BoundaryTag>& tags) const {
    detail::require(tags.size() == boundary_.size(), "mesh: tag count does not match boundary edge count");
    Mesh out = *this;
    for (std::size_t i = 0; i < tags.size(); ++i) out.boundary_[i].tag = tags[i];
    return out;
  }

  /// Sorted node indices touching at least one boundary edge with the tag.
  std::vector<std::size_t> nodes_with_tag(BoundaryTag tag) const {
    std::vector<std::size_t> out;
    for (const auto& b : boundary_)
      if (b.tag == tag) out.insert(out.end(), b.nodes.begin(), b.nodes.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::vector<std::size_t> boundary_nodes() const {
    std::vector<std::size_t> out;
    for (const auto& b : boundary_) out.insert(out.end(), b.nodes.begin(), b.nodes.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Finds the triangle containing p (closed, with a relative tolerance).
  /// Ties on shared edges resolve to the lowest element index.
  std::optional<MeshLocation> locate(const Vec2& p, double tol = 1e-10) const {
    if (triangles_.empty()) return std::nullopt;
    const double slack = tol * std::max(1.0, extent_);
    if (p.x() < lo_.x() - slack || p.y() < lo_.y() - slack || p.x() > hi_.x() + slack || p.y() > hi_.y() + slack)
      return std::nullopt;
    const auto cell = cell_of(p);
    std::optional<MeshLocation> best;
    for (std::size_t e : buckets_[cell]) {
      const auto& t = triangles_[e];
      const Vec3 b = barycentric(p, nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
      if (b.minCoeff() >= -tol) {
        if (!best || e < best->element) best = MeshLocation{e, b};
      }
    }
    return best;
  }

  /// Value of a nodal P1 field at p; nullopt outside the mesh.
  template <typename Vector>
  std::optional<double> interpolate(const Vector& field, const Vec2& p) const {
    const auto loc = locate(p);
    if (!loc) return std::nullopt;
    const auto& t = triangles_[loc->element];
    return loc->bary[0] * field[t[0]] + loc->bary[1] * field[t[1]] + loc->bary[2] * field[t[2]];
  }

 private:
  Mesh() = default;

  static std::pair<std::size_t, std::size_t> key(std::size_t a, std::size_t b) { return {std::min(a, b), std::max(a, b)}; }

  void orient_and_validate() {
    for (const auto& p : nodes_)
      detail::require(std::isfinite(p.x()) && std::isfinite(p.y()), "mesh: non-finite node coordinate");
    for (std::size_t e = 0; e < triangles_.size(); ++e) {
      auto& t = triangles_[e];
      for (std::size_t k : t)
        detail::require(k < nodes_.size(), "mesh: triangle " + std::to_string(e) + " references node " +
                                               std::to_string(k) + " but there are only " +
                                               std::to_string(nodes_.size()) + " nodes");
      detail::require(t[0] != t[1] && t[1] != t[2] && t[0] != t[2],
                      "mesh: triangle " + std::to_string(e) + " repeats a vertex");
      double a = signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
      const double scale = std::max({(nodes_[t[0]] - nodes_[t[1]]).squaredNorm(),
                                     (nodes_[t[1]] - nodes_[t[2]]).squaredNorm(),
                                     (nodes_[t[2]] - nodes_[t[0]]).squaredNorm()});
      detail::require(std::abs(a) > 1e-14 * scale, "mesh: triangle " + std::to_string(e) + " is degenerate (zero area)");
      if (a < 0) std::swap(t[1], t[2]);
    }
  }

  // Maps each undirected edge owned by exactly one triangle to its CCW orientation.
  std::map<std::pair<std::size_t, std::size_t>, Edge> collect_boundary() {
    std::map<std::pair<std::size_t, std::size_t>, std::pair<int, Edge>> count;
    edge_order_.clear();
    for (const auto& t : triangles_) {
      for (int k = 0; k < 3; ++k) {
        const Edge directed{t[k], t[(k + 1) % 3]};
        const auto kk = key(directed[0], directed[1]);
        auto [it, inserted] = count.try_emplace(kk, 0, directed);
        ++it->second.first;
        if (inserted) edge_order_.emplace(kk, edge_order_.size());
      }
    }
    std::map<std::pair<std::size_t, std::size_t>, Edge> owned;
    for (const auto& [k, v] : count) {
      detail::require(v.first <= 2, "mesh: edge (" + std::to_string(k.first) + ", " + std::to_string(k.second) +
                                        ") is shared by more than two triangles");
      if (v.first == 1) owned.emplace(k, v.second);
    }
    return owned;
  }

  std::size_t cell_of(const Vec2& p) const {
    auto clampi = [](double v, std::size_t n) {
      const double c = std::floor(v);
      if (c < 0) return std::size_t{0};
      return std::min(static_cast<std::size_t>(c), n - 1);
    };
    const std::size_t ix = clampi((p.x() - lo_.x()) / cell_.x(), nx_);
    const std::size_t iy = clampi((p.y() - lo_.y()) / cell_.y(), ny_);
    return iy * nx_ + ix;
  }

  void build_locator() {
    if (nodes_.empty() || triangles_.empty()) return;
    lo_ = hi_ = nodes_.front();
    for (const auto& p : nodes_) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    extent_ = (hi_ - lo_).maxCoeff();
    const auto n = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(triangles_.size()) / 2.0)));
    nx_ = ny_ = std::max<std::size_t>(1, n);
    cell_ = (hi_ - lo_).cwiseMax(1e-300) / static_cast<double>(nx_);
    cell_.y() = std::max((hi_.y() - lo_.y()) / static_cast<double>(ny_), 1e-300);
    buckets_.assign(nx_ * ny_, {});
    const double pad = 1e-9 * std::max(1.0, extent_);
    for (std::size_t e = 0; e < triangles_.size(); ++e) {
      const auto& t = triangles_[e];
      Vec2 blo = nodes_[t[0]].cwiseMin(nodes_[t[1]]).cwiseMin(nodes_[t[2]]).array() - pad;
      Vec2 bhi = nodes_[t[0]].cwiseMax(nodes_[t[1]]).cwiseMax(nodes_[t[2]]).array() + pad;
      const std::size_t c0 = cell_of(blo), c1 = cell_of(bhi);
      for (std::size_t iy = c0 / nx_; iy <= c1 / nx_; ++iy)
        for (std::size_t ix = c0 % nx_; ix <= c1 % nx_; ++ix) buckets_[iy * nx_ + ix].push_back(e);
    }
  }

  std::vector<Vec2> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<BoundaryEdge> boundary_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_order_;

  Vec2 lo_ = Vec2::Zero(), hi_ = Vec2::Zero(), cell_ = Vec2::Ones();
  double extent_ = 0.0;
  std::size_t nx_ = 1, ny_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

/// Structured triangulation of [0, width] x [0, height]: each of the nx * ny
/// cells is split along its lower-left to upper-right diagonal. Node (i, j)
/// has index j * (nx + 1) + i. Boundary edges are listed untagged.
inline Mesh generate_rect_mesh(double width, double height, std::size_t nx, std::size_t ny) {
  detail::require(width > 0 && height > 0 && std::isfinite(width) && std::isfinite(height),
                  "generate_rect_mesh: width and height must be positive");
  detail::require(nx >= 1 && ny >= 1, "generate_rect_mesh: nx and ny must be at least 1");
  std::vector<Vec2> nodes;
  nodes.reserve((nx + 1) * (ny + 1));
  for (std::size_t j = 0; j <= ny; ++j)
    for (std::size_t i = 0; i <= nx; ++i)
      nodes.emplace_back(width * static_cast<double>(i) / static_cast<double>(nx),
                         height * static_cast<double>(j) / static_cast<double>(ny));
  auto id = [nx](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  std::vector<Triangle> tris;
  tris.reserve(2 * nx * ny);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  // Boundary in counter-clockwise walk: bottom, right, top, left.
  std::vector<Edge> boundary;
  for (std::size_t i = 0; i < nx; ++i) boundary.push_back({id(i, 0), id(i + 1, 0)});
  for (std::size_t j = 0; j < ny; ++j) boundary.push_back({id(nx, j), id(nx, j + 1)});
  for (std::size_t i = nx; i > 0; --i) boundary.push_back({id(i, ny), id(i - 1, ny)});
  for (std::size_t j = ny; j > 0; --j) boundary.push_back({id(0, j), id(0, j - 1)});
  return Mesh(std::move(nodes), std::move(tris), std::move(boundary));
}

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Writes the plain-text mesh format (`plumetrace-mesh v1`).
inline void write_mesh(const Mesh& mesh, std::ostream& os) {
  os << "plumetrace-mesh v1\n";
  os << "nodes " << mesh.num_nodes() << '\n';
  for (const auto& p : mesh.nodes()) os << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << '\n';
  os << "triangles " << mesh.num_triangles() << '\n';
  for (const auto& t : mesh.triangles()) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "boundary " << mesh.boundary_edges().size() << '\n';
  for (const auto& b : mesh.boundary_edges()) os << b.nodes[0] << ' ' << b.nodes[1] << '\n';
}

inline void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream os(path);
  detail::require(static_cast<bool>(os), "cannot open '" + path + "' for writing");
  write_mesh(mesh, os);
  detail::require(static_cast<bool>(os), "failed writing '" + path + "'");
}

/// Parses the plain-text mesh format. Errors carry the offending line number.
inline Mesh read_mesh(std::istream& is, const std::string& source = "<mesh>") {
  std::size_t line_no = 0;
  std::string line;
  auto fail = [&](const std::string& msg) -> ValidationError {
    return ValidationError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto next_line = [&]() -> std::istringstream {
    while (std::getline(is, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
    }
    throw fail("unexpected end of file");
  };
  auto header = [&](const char* word) {
    auto ss = next_line();
    std::string w;
    long long n = -1;
    if (!(ss >> w >> n) || w != word || n < 0) throw fail(std::string("expected '") + word + " <count>'");
    return static_cast<std::size_t>(n);
  };
  auto index = [&](std::istringstream& ss) {
    long long v = -1;
    if (!(ss >> v)) throw fail("expected a node index");
    if (v < 0) throw fail("negative node index");
    return static_cast<std::size_t>(v);
  };
  auto expect_end = [&](std::istringstream& ss) {
    std::string rest;
    if (ss >> rest) throw fail("unexpected trailing token '" + rest + "'");
  };

  {
    auto ss = next_line();
    std::string magic, version;
    ss >> magic >> version;
    if (magic != "plumetrace-mesh" || version != "v1") throw fail("expected header 'plumetrace-mesh v1'");
  }
  std::vector<Vec2> nodes(header("nodes"));
  for (auto& p : nodes) {
    auto ss = next_line();
    double x = 0, y = 0;
    if (!(ss >> x >> y)) throw fail("expected 'x y'");
    expect_end(ss);
    p = Vec2(x, y);
  }
  std::vector<Triangle> tris(header("triangles"));
  for (auto& t : tris) {
    auto ss = next_line();
    for (auto& k : t) {
      k = index(ss);
      if (k >= nodes.size()) throw fail("node index " + std::to_string(k) + " out of range");
    }
    expect_end(ss);
  }
  std::vector<Edge> boundary(header("boundary"));
  for (auto& e : boundary) {
    auto ss = next_line();
    for (auto& k : e) {
      k = index(ss);
      if (k >= nodes.size()) throw fail("node index " + std::to_string(k) + " out of range");
    }
    expect_end(ss);
  }
  try {
    return Mesh(std::move(nodes), std::move(tris), std::move(boundary));
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream is(path);
  detail::require(static_cast<bool>(is), "cannot open mesh file '" + path + "'");
  return read_mesh(is, path);
}

}  // namespace plumetrace
