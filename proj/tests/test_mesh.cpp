#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "plumetrace/mesh.hpp"
#include "plumetrace/wind.hpp"

using namespace plumetrace;

namespace {

std::size_t count_tag(const Mesh& m, BoundaryTag tag) {
  return static_cast<std::size_t>(std::count_if(m.boundary_edges().begin(), m.boundary_edges().end(),
                                                [tag](const auto& b) { return b.tag == tag; }));
}

// Tags of the edges whose midpoint lies on the given side of the unit square.
std::set<BoundaryTag> tags_on(const Mesh& m, char side) {
  std::set<BoundaryTag> out;
  for (const auto& b : m.boundary_edges()) {
    const Vec2 mid = 0.5 * (m.node(b.nodes[0]) + m.node(b.nodes[1]));
    const bool hit = (side == 'L' && mid.x() < 1e-12) || (side == 'R' && mid.x() > 1 - 1e-12) ||
                     (side == 'B' && mid.y() < 1e-12) || (side == 'T' && mid.y() > 1 - 1e-12);
    if (hit) out.insert(*b.tag);
  }
  return out;
}

}  // namespace

TEST(GenerateRectMesh, MinimalSquare) {
  const Mesh m = generate_rect_mesh(1, 1, 1, 1);
  EXPECT_EQ(m.num_nodes(), 4u);
  EXPECT_EQ(m.num_triangles(), 2u);
  EXPECT_EQ(m.boundary_edges().size(), 4u);
}

TEST(GenerateRectMesh, AreasSumToOne) {
  const Mesh m = generate_rect_mesh(1, 1, 4, 4);
  EXPECT_EQ(m.total_area(), 1.0);
}

TEST(GenerateRectMesh, NodeCount) {
  const Mesh m = generate_rect_mesh(2, 1, 8, 4);
  EXPECT_EQ(m.num_nodes(), 45u);
  EXPECT_EQ(m.num_triangles(), 64u);
  EXPECT_FALSE(m.is_classified());
}

TEST(GenerateRectMesh, RejectsBadInput) {
  EXPECT_THROW(generate_rect_mesh(0, 1, 1, 1), ValidationError);
  EXPECT_THROW(generate_rect_mesh(1, -1, 1, 1), ValidationError);
  EXPECT_THROW(generate_rect_mesh(1, 1, 0, 1), ValidationError);
  EXPECT_THROW(generate_rect_mesh(1, 1, 1, 0), ValidationError);
}

TEST(MeshInvariants, PositiveAreasAndEdgeSharing) {
  const Mesh m = generate_rect_mesh(3, 2, 7, 5);
  std::map<std::pair<std::size_t, std::size_t>, int> count;
  for (std::size_t e = 0; e < m.num_triangles(); ++e) {
    EXPECT_GT(m.area(e), 0.0);
    const auto& t = m.triangles()[e];
    for (int k = 0; k < 3; ++k) {
      const auto a = t[k], b = t[(k + 1) % 3];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::size_t boundary = 0;
  for (const auto& [edge, c] : count) {
    EXPECT_LE(c, 2);
    if (c == 1) ++boundary;
  }
  EXPECT_EQ(boundary, m.boundary_edges().size());
}

TEST(MeshInvariants, AreaMatchesShoelace) {
  for (auto [w, h, nx, ny] : {std::tuple{1.0, 1.0, 3, 3}, std::tuple{2.5, 0.7, 11, 4}, std::tuple{0.3, 4.0, 2, 9}}) {
    const Mesh m = generate_rect_mesh(w, h, nx, ny);
    EXPECT_NEAR(m.total_area(), m.boundary_area(), 1e-12 * m.boundary_area());
    EXPECT_NEAR(m.boundary_area(), w * h, 1e-12 * w * h);
  }
}

TEST(MeshInvariants, AreaMatchesShoelaceWithHole) {
  // 3x3 block of unit cells with the middle cell removed.
  std::vector<Vec2> nodes;
  for (int j = 0; j <= 3; ++j)
    for (int i = 0; i <= 3; ++i) nodes.emplace_back(i, j);
  auto id = [](int i, int j) { return static_cast<std::size_t>(j * 4 + i); };
  std::vector<Triangle> tris;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) {
      if (i == 1 && j == 1) continue;
      tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  const Mesh m = Mesh::from_triangles(nodes, tris);
  EXPECT_EQ(m.boundary_edges().size(), 16u);
  EXPECT_NEAR(m.total_area(), 8.0, 1e-12);
  EXPECT_NEAR(m.boundary_area(), 8.0, 1e-12);
}

TEST(LoadMesh, RoundTripOfUnitSquare) {
  const std::string text =
      "plumetrace-mesh v1\nnodes 4\n0 0\n1 0\n0 1\n1 1\ntriangles 2\n0 1 3\n0 3 2\nboundary 4\n0 1\n1 3\n3 2\n2 0\n";
  std::istringstream is(text);
  const Mesh a = read_mesh(is);
  const Mesh b = generate_rect_mesh(1, 1, 1, 1);
  ASSERT_EQ(a.num_nodes(), b.num_nodes());
  ASSERT_EQ(a.num_triangles(), b.num_triangles());
  std::multiset<std::pair<double, double>> pa, pb;
  for (const auto& p : a.nodes()) pa.insert({p.x(), p.y()});
  for (const auto& p : b.nodes()) pb.insert({p.x(), p.y()});
  EXPECT_EQ(pa, pb);
  // Triangles as sets of coordinates.
  auto tri_set = [](const Mesh& m) {
    std::set<std::set<std::pair<double, double>>> s;
    for (const auto& t : m.triangles()) {
      std::set<std::pair<double, double>> c;
      for (auto k : t) c.insert({m.node(k).x(), m.node(k).y()});
      s.insert(c);
    }
    return s;
  };
  EXPECT_EQ(tri_set(a), tri_set(b));
}

TEST(LoadMesh, WriteReadIsExact) {
  const Mesh m = generate_rect_mesh(1.3, 0.7, 5, 3);
  std::ostringstream os;
  write_mesh(m, os);
  std::istringstream is(os.str());
  const Mesh r = read_mesh(is);
  EXPECT_EQ(r.nodes(), m.nodes());
  EXPECT_EQ(r.triangles(), m.triangles());
  ASSERT_EQ(r.boundary_edges().size(), m.boundary_edges().size());
  for (std::size_t i = 0; i < r.boundary_edges().size(); ++i)
    EXPECT_EQ(r.boundary_edges()[i].nodes, m.boundary_edges()[i].nodes);
}

TEST(LoadMesh, RejectsIndexOutOfRange) {
  std::istringstream is("plumetrace-mesh v1\nnodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 3\nboundary 3\n0 1\n1 2\n2 0\n");
  EXPECT_THROW(read_mesh(is), ValidationError);
}

TEST(LoadMesh, FixesClockwiseTriangle) {
  std::istringstream is("plumetrace-mesh v1\nnodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\nboundary 3\n0 1\n1 2\n2 0\n");
  const Mesh m = read_mesh(is);
  EXPECT_GT(m.area(0), 0.0);
  EXPECT_NEAR(m.area(0), 0.5, 1e-15);
}

TEST(LoadMesh, RejectsDegenerateTriangle) {
  std::istringstream is("plumetrace-mesh v1\nnodes 3\n0 0\n1 0\n2 0\ntriangles 1\n0 1 2\nboundary 3\n0 1\n1 2\n2 0\n");
  EXPECT_THROW(read_mesh(is), ValidationError);
}

TEST(LoadMesh, RejectsMalformedText) {
  for (const char* text : {"", "plumetrace-mesh v2\n", "plumetrace-mesh v1\nnodes 2\n0 0\n", "plumetrace-mesh v1\nnodes x\n",
                           "plumetrace-mesh v1\nnodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\nboundary 2\n0 1\n1 2\n"}) {
    std::istringstream is(text);
    EXPECT_THROW(read_mesh(is), ValidationError) << text;
  }
}

TEST(LoadMesh, MissingFile) { EXPECT_THROW(load_mesh("/nonexistent/mesh.txt"), ValidationError); }

TEST(ClassifyBoundary, UniformEastWind) {
  const Mesh m = classify_boundary(generate_rect_mesh(1, 1, 4, 4), uniform_wind(1, 0));
  EXPECT_EQ(tags_on(m, 'L'), std::set{BoundaryTag::Inflow});
  EXPECT_EQ(tags_on(m, 'R'), std::set{BoundaryTag::Outflow});
  EXPECT_EQ(tags_on(m, 'T'), std::set{BoundaryTag::Characteristic});
  EXPECT_EQ(tags_on(m, 'B'), std::set{BoundaryTag::Characteristic});
}

TEST(ClassifyBoundary, ZeroWind) {
  const Mesh m = classify_boundary(generate_rect_mesh(1, 1, 4, 4), uniform_wind(0, 0));
  EXPECT_EQ(count_tag(m, BoundaryTag::Characteristic), m.boundary_edges().size());
}

TEST(ClassifyBoundary, UniformSouthWind) {
  const Mesh m = classify_boundary(generate_rect_mesh(1, 1, 4, 4), uniform_wind(0, -1));
  EXPECT_EQ(tags_on(m, 'T'), std::set{BoundaryTag::Inflow});
  EXPECT_EQ(tags_on(m, 'B'), std::set{BoundaryTag::Outflow});
  EXPECT_EQ(tags_on(m, 'L'), std::set{BoundaryTag::Characteristic});
  EXPECT_EQ(tags_on(m, 'R'), std::set{BoundaryTag::Characteristic});
}

TEST(ClassifyBoundary, PartitionAndIdempotence) {
  const auto wind = vortex_wind(Vec2(0.3, 0.6), 1.0);
  const Mesh once = classify_boundary(generate_rect_mesh(1, 1, 9, 7), wind);
  const Mesh twice = classify_boundary(once, wind);
  EXPECT_EQ(count_tag(once, BoundaryTag::Inflow) + count_tag(once, BoundaryTag::Outflow) +
                count_tag(once, BoundaryTag::Characteristic),
            once.boundary_edges().size());
  for (std::size_t i = 0; i < once.boundary_edges().size(); ++i)
    EXPECT_EQ(once.boundary_edges()[i].tag, twice.boundary_edges()[i].tag);
}

TEST(MeshLocate, InterpolatesLinearFieldsExactly) {
  const Mesh m = generate_rect_mesh(2, 1, 6, 5);
  Eigen::VectorXd f(static_cast<Eigen::Index>(m.num_nodes()));
  for (std::size_t i = 0; i < m.num_nodes(); ++i) f[static_cast<Eigen::Index>(i)] = 3 * m.node(i).x() - 2 * m.node(i).y() + 1;
  for (const Vec2& p : {Vec2(0.1, 0.2), Vec2(1.99, 0.5), Vec2(0, 0), Vec2(2, 1), Vec2(1.0, 0.4)}) {
    const auto v = m.interpolate(f, p);
    ASSERT_TRUE(v.has_value());
    EXPECT_NEAR(*v, 3 * p.x() - 2 * p.y() + 1, 1e-12);
  }
  EXPECT_FALSE(m.locate(Vec2(2.1, 0.5)).has_value());
  EXPECT_FALSE(m.locate(Vec2(-0.01, 0.5)).has_value());
}
