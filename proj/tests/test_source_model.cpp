#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"

using namespace plumetrace;

namespace {

std::shared_ptr<const Mesh> square(std::size_t n) { return std::make_shared<const Mesh>(generate_rect_mesh(1, 1, n, n)); }

// Integral over the plane of min(cap, exp(-a d^2)), a = -ln(eps) / r^2.
double omega_integral(const ShapeParams& p) {
  const double a = -std::log(p.eps) / (p.radius * p.radius);
  const double d0sq = -std::log(p.cap) / a;
  return p.cap * std::numbers::pi * d0sq + std::numbers::pi * p.cap / a;
}

}  // namespace

TEST(ShapeOmega, Examples) {
  const ShapeParams p;
  const Vec2 xs(0.4, 0.6);
  EXPECT_EQ(shape_omega(xs, xs, p), 0.5);
  EXPECT_NEAR(shape_omega(xs, xs + Vec2(0.1, 0), p), 1e-3, 1e-15);
  EXPECT_NEAR(shape_omega(xs, xs + Vec2(0, 0.2), p), 1e-12, 1e-22);
}

TEST(ShapeOmega, RadialSymmetry) {
  const ShapeParams p{0.13, 0.01, 0.7};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 2 * std::numbers::pi), d(0.0, 0.3);
  const Vec2 xs(0.2, -0.1);
  for (int i = 0; i < 50; ++i) {
    const double r = d(rng), a = u(rng), b = u(rng);
    const double va = shape_omega(xs, xs + r * Vec2(std::cos(a), std::sin(a)), p);
    const double vb = shape_omega(xs, xs + r * Vec2(std::cos(b), std::sin(b)), p);
    EXPECT_NEAR(va, vb, 1e-12 * va);
  }
}

TEST(ShapeParams, Validation) {
  EXPECT_THROW((ShapeParams{0.0}).validate(), ValidationError);
  EXPECT_THROW((ShapeParams{0.1, 1.0}).validate(), ValidationError);
  EXPECT_THROW((ShapeParams{0.1, 0.0}).validate(), ValidationError);
  EXPECT_THROW((ShapeParams{0.1, 1e-3, 1.5}).validate(), ValidationError);
  EXPECT_THROW((ShapeParams{0.1, 1e-3, 0.0}).validate(), ValidationError);
  EXPECT_NEAR(shape_support_radius(ShapeParams{}), 0.1 * std::sqrt(10.0 / 3.0), 1e-15);
}

TEST(ProjectShape, ConstantsReproduce) {
  const ShapeBasis basis(square(9), ShapeParams{});
  const VectorXd ones = VectorXd::Ones(static_cast<Eigen::Index>(basis.mesh().num_nodes()));
  EXPECT_LE((basis.project_load(basis.mass() * ones) - ones).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ProjectShape, NormalEquationsAndLinearity) {
  const ShapeBasis basis(square(16), ShapeParams{});
  const Vec2 xs(0.37, 0.52);
  const VectorXd b = basis.load(xs);
  const VectorXd f = project_shape(basis, xs);
  EXPECT_LE((basis.mass() * f - b).norm(), 1e-12 * b.norm());
  const SourceAtomSet one{{{0, 7, 1.0}}}, two{{{0, 7, 2.0}}};
  const TimeGrid g{0.1, 2};
  EXPECT_LE((atoms_to_source(two, basis, g).steps[0] - 2.0 * atoms_to_source(one, basis, g).steps[0]).norm(), 0.0);
  EXPECT_THROW(project_shape(basis, Vec2(1.5, 0.5)), ValidationError);
}

TEST(ProjectShape, TotalLoadMatchesAnalyticIntegral) {
  const ShapeParams p;
  const ShapeBasis basis(square(32), p);
  const VectorXd b = basis.load(Vec2(0.5, 0.5));
  EXPECT_NEAR(b.sum(), omega_integral(p), 1e-4 * omega_integral(p));
  const VectorXd b2 = basis.load(Vec2(0.41, 0.47));
  EXPECT_NEAR(b2.sum(), omega_integral(p), 1e-4 * omega_integral(p));
}

TEST(ProjectShape, TruncationDropsSmallEntries) {
  const ShapeParams p;
  const auto mesh = square(32);
  const VectorXd b = shape_load(*mesh, Vec2(0.5, 0.5), p);
  for (Eigen::Index i = 0; i < b.size(); ++i) EXPECT_TRUE(b[i] == 0.0 || b[i] >= p.trunc_tol);
}

TEST(SampleCurve, ZeroIntensity) {
  const ShapeBasis basis(square(8), ShapeParams{});
  ParameterCurve c{{{0.0, 0.0, Vec2(0.5, 0.5)}, {1.0, 0.0, Vec2(0.6, 0.5)}}, 0.0, 1.0};
  const auto src = sample_curve(c, TimeGrid{0.1, 10}, basis);
  for (const auto& m : src.steps) EXPECT_EQ(m.size(), 0);
}

TEST(SampleCurve, ActiveWindow) {
  const auto mesh = std::make_shared<const Mesh>(generate_rect_mesh(10, 10, 10, 10));
  const ShapeBasis basis(mesh, ShapeParams{1.0});
  ParameterCurve c{{{0.5, 2.0, Vec2(3, 3)}, {5.0, 4.0, Vec2(6, 5)}}, 0.5, 5.0};
  const TimeGrid grid{0.5, 12};
  const auto src = sample_curve(c, grid, basis);
  for (std::size_t n = 0; n <= grid.n_steps; ++n) {
    const double t = grid.time(n);
    if (t < 0.5 || t > 5.0)
      EXPECT_EQ(src.steps[n].size(), 0) << t;
    else
      EXPECT_GT(src.steps[n].norm(), 0.0) << t;
  }
  EXPECT_LE((src.steps[1] - 2.0 * basis.project(Vec2(3, 3))).norm(), 1e-12);
  EXPECT_LE((src.steps[10] - 4.0 * basis.project(Vec2(6, 5))).norm(), 1e-12);
}

TEST(SampleCurve, StaticCurveIsConstant) {
  const ShapeBasis basis(square(10), ShapeParams{});
  ParameterCurve c{{{0.0, 1.5, Vec2(0.4, 0.4)}, {1.0, 1.5, Vec2(0.4, 0.4)}}, 0.2, 0.8};
  const auto src = sample_curve(c, TimeGrid{0.1, 10}, basis);
  for (std::size_t n = 3; n <= 8; ++n) EXPECT_LE((src.steps[n] - src.steps[2]).norm(), 1e-14 * src.steps[2].norm());
}

TEST(ParameterCurve, InterpolationAndValidation) {
  ParameterCurve c{{{0.0, 1.0, Vec2(0, 0)}, {1.0, 3.0, Vec2(1, 2)}}, 0.25, 0.75};
  EXPECT_DOUBLE_EQ(c.intensity(0.5), 2.0);
  EXPECT_EQ(c.intensity(0.1), 0.0);
  EXPECT_LE((c.location(0.5) - Vec2(0.5, 1.0)).norm(), 1e-15);
  EXPECT_LE((c.location(0.0) - Vec2(0.25, 0.5)).norm(), 1e-15);
  EXPECT_LE((c.location(0.9) - Vec2(0.75, 1.5)).norm(), 1e-15);
  const Mesh mesh = generate_rect_mesh(1, 1, 2, 2);
  EXPECT_THROW(c.validate(&mesh), ValidationError);
  EXPECT_THROW((ParameterCurve{{}, 0, 1}).validate(), ValidationError);
  EXPECT_THROW((ParameterCurve{{{0.0, 1.0, Vec2(0, 0)}}, 1, 0}).validate(), ValidationError);
  EXPECT_THROW((ParameterCurve{{{0.0, -1.0, Vec2(0, 0)}}, 0, 1}).validate(), ValidationError);
  EXPECT_THROW((ParameterCurve{{{0.5, 1.0, Vec2(0, 0)}, {0.5, 1.0, Vec2(0, 0)}}, 0, 1}).validate(), ValidationError);
}

TEST(AtomsToSource, Examples) {
  const ShapeBasis basis(square(12), ShapeParams{});
  const TimeGrid g{0.1, 5};
  for (const auto& m : atoms_to_source({}, basis, g).steps) EXPECT_EQ(m.size(), 0);
  const auto one = atoms_to_source({{{2, 40, 1.0}}}, basis, g);
  EXPECT_EQ(one.steps[2], basis.project(basis.mesh().node(40)));
  const auto pair = atoms_to_source({{{3, 40, 0.7}, {3, 40, 1.9}}}, basis, g);
  const auto merged = atoms_to_source({{{3, 40, 2.6}}}, basis, g);
  EXPECT_LE((pair.steps[3] - merged.steps[3]).norm(), 1e-13 * merged.steps[3].norm());
  EXPECT_THROW(atoms_to_source({{{0, 1, -1.0}}}, basis, g), ValidationError);
  EXPECT_THROW(atoms_to_source({{{6, 1, 1.0}}}, basis, g), ValidationError);
}

TEST(AssembleW, ZeroAdjoint) {
  const auto mesh = square(8);
  const SparseMatrix W = assemble_W(*mesh, ShapeParams{});
  EXPECT_TRUE(VectorXd(W.transpose() * VectorXd::Zero(W.rows())).isZero(0.0));
}

TEST(AssembleW, ColumnsMatchBruteForceQuadrature) {
  // int omega(p_j, z) q_h(z) dz by a uniform 400 x 400 split of every nearby
  // element with the degree-5 rule and no truncation.
  const ShapeParams p;
  const auto mesh = square(8);
  const SparseMatrix W = assemble_W(*mesh, p);
  std::mt19937_64 rng(12);
  const VectorXd q = testing_support::random_vector(static_cast<Eigen::Index>(mesh->num_nodes()), rng);
  const VectorXd phi = W.transpose() * q;
  const auto rule = composite_rule(degree5_rule(), 400);
  for (std::size_t j : {0ul, 13ul, 40ul, 80ul}) {
    double ref = 0.0;
    for (std::size_t e = 0; e < mesh->num_triangles(); ++e) {
      if ((mesh->centroid(e) - mesh->node(j)).norm() > 0.5) continue;
      const auto& t = mesh->triangles()[e];
      double acc = 0.0;
      for (const auto& qp : rule) {
        const Vec2 z = qp.bary[0] * mesh->node(t[0]) + qp.bary[1] * mesh->node(t[1]) + qp.bary[2] * mesh->node(t[2]);
        double qh = 0.0;
        for (int k = 0; k < 3; ++k) qh += qp.bary[k] * q[static_cast<Eigen::Index>(t[k])];
        acc += qp.weight * shape_omega(mesh->node(j), z, p) * qh;
      }
      ref += mesh->area(e) * acc;
    }
    EXPECT_NEAR(phi[static_cast<Eigen::Index>(j)], ref, 1e-6 * std::abs(ref)) << "node " << j;
  }
}

TEST(AssembleW, SupportRadius) {
  const ShapeParams p;
  const auto mesh = square(24);
  const SparseMatrix W = assemble_W(*mesh, p, 3);
  const double bound = shape_support_radius(p) + mesh->max_diameter();
  for (Eigen::Index c = 0; c < W.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(W, c); it; ++it)
      EXPECT_LE((mesh->node(static_cast<std::size_t>(it.row())) - mesh->node(static_cast<std::size_t>(c))).norm(), bound);
}

TEST(AssembleW, ColumnsAreTruncatedLoads) {
  const ShapeParams p;
  const auto mesh = square(10);
  const SparseMatrix W1 = assemble_W(*mesh, p, 1), W4 = assemble_W(*mesh, p, 4);
  EXPECT_TRUE((MatrixXd(W1).array() == MatrixXd(W4).array()).all());
  EXPECT_EQ(VectorXd(MatrixXd(W1).col(17)), shape_load(*mesh, mesh->node(17), p));
}
