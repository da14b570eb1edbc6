#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "lightn/grad_check.hpp"
#include "lightn/losses.hpp"
#include "test_util.hpp"

using namespace lightn;
using lightn::test::random_cloud;
using lightn::test::random_matrix;

namespace {

double chamfer_oracle(const PointCloud& q, const PointCloud& p) {
  auto directed = [](const PointCloud& a, const PointCloud& b) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < b.size(); ++j) {
        double d = 0.0;
        for (std::size_t c = 0; c < 3; ++c) d += (a[i][c] - b[j][c]) * (a[i][c] - b[j][c]);
        if (d < best) best = d;
      }
      total += best;
    }
    return total / static_cast<double>(a.size());
  };
  return directed(q, p) + directed(p, q);
}

PointCloud rigid(const PointCloud& q, double angle, const Point& shift) {
  PointCloud out = q;
  const double c = std::cos(angle), s = std::sin(angle);
  for (Point& p : out.points) {
    const double x = c * p[0] - s * p[1], y = s * p[0] + c * p[1];
    p = {x + shift[0], y + shift[1], p[2] + shift[2]};
  }
  return out;
}

}  // namespace

TEST(Chamfer, HandExamples) {
  EXPECT_EQ(chamfer(PointCloud({{0, 0, 0}}), PointCloud({{1, 0, 0}, {-1, 0, 0}})), 2.0);
  EXPECT_EQ(chamfer(PointCloud({{0, 0, 0}}), PointCloud({{3, 4, 0}})), 50.0);
  const PointCloud p = random_cloud(9, 1);
  EXPECT_EQ(chamfer(p, p), 0.0);
  EXPECT_THROW(chamfer(PointCloud(), p), DomainError);
}

TEST(Chamfer, MatchesDoubleLoopOracleExactly) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    const PointCloud q = random_cloud(1 + rng.below(8), seed);
    const PointCloud p = random_cloud(1 + rng.below(8), seed + 1000);
    EXPECT_EQ(chamfer(q, p), chamfer_oracle(q, p)) << "seed " << seed;
  }
}

TEST(Chamfer, NonNegativeAndSymmetricForEqualSizes) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const PointCloud a = random_cloud(12, seed), b = random_cloud(12, seed + 50);
    EXPECT_GT(chamfer(a, b), 0.0);
    EXPECT_NEAR(chamfer(a, b), chamfer(b, a), 1e-12);
  }
}

TEST(Chamfer, Gradient) {
  const PointCloud p = random_cloud(10, 3);
  auto f = [&](Tape& t, const Var& q) { return chamfer(q, t.constant(p.to_matrix())); };
  for (std::uint64_t seed = 1; seed <= 3; ++seed) EXPECT_LE(grad_check(f, random_matrix(6, 3, seed)), 1e-4);
}

TEST(Repulsion, CoincidentPairClosedForm) {
  LossConfig cfg;
  cfg.k_rep = 1;
  EXPECT_NEAR(repulsion(PointCloud({{0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}}), cfg), 1e-6, 1e-18);
}

TEST(Repulsion, ZeroWhenAllFartherThanH) {
  const PointCloud q = random_cloud(20, 4);  // spacing far above 0.001
  EXPECT_EQ(repulsion(q, LossConfig{}), 0.0);
}

TEST(Repulsion, ThresholdFlipsWithScale) {
  PointCloud q({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  EXPECT_EQ(repulsion(q, LossConfig{}), 0.0);
  for (Point& p : q.points)
    for (double& c : p) c *= 5e-4;
  EXPECT_GT(repulsion(q, LossConfig{}), 0.0);
}

TEST(Repulsion, DegenerateBelowTwoPoints) {
  Tape t;
  bool degenerate = false;
  const Var r = repulsion(t.constant(Matrix::row_vector({1, 2, 3})), LossConfig{}, &degenerate);
  EXPECT_TRUE(degenerate);
  EXPECT_EQ(r.value().item(), 0.0);
}

TEST(Repulsion, RigidMotionInvariant) {
  LossConfig cfg;
  cfg.h = 0.5;
  const PointCloud q = random_cloud(16, 5, 0.4);
  const double base = repulsion(q, cfg);
  EXPECT_GT(base, 0.0);
  EXPECT_NEAR(repulsion(rigid(q, 0.7, {0.3, -2.0, 5.0}), cfg), base, 1e-12);
}

TEST(Repulsion, Gradient) {
  LossConfig cfg;
  cfg.h = 0.6;
  cfg.k_rep = 3;
  auto f = [&](Tape&, const Var& q) { return repulsion(q, cfg); };
  EXPECT_LE(grad_check(f, random_matrix(8, 3, 6, -0.3, 0.3), 1e-6), 1e-4);
}

TEST(SamplingLoss, WorkedComposition) {
  // chamfer 2, repulsion 1e-6 on separate clouds, T(0) = 1 for exp.
  const double cd = chamfer(PointCloud({{0, 0, 0}}), PointCloud({{1, 0, 0}, {-1, 0, 0}}));
  LossConfig k1;
  k1.k_rep = 1;
  const double rep = repulsion(PointCloud({{0, 0, 0}, {0, 0, 0}}), k1);
  const double total = cd + 1.0 * rep + 1.0 * projection_loss(0.0, TemperatureKind::exponential);
  EXPECT_NEAR(total, 3.000001, 1e-15);
}

TEST(SamplingLoss, WeightIdentities) {
  Tape t;
  const Var z = t.constant(random_matrix(6, 3, 1, -0.01, 0.01));  // tight cluster, repulsion > 0 at h = 0.05
  const Var p = t.constant(random_matrix(20, 3, 2));
  const Var tv = t.constant(Matrix::scalar(0.4));
  LossConfig cfg;
  cfg.h = 0.05;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  const SamplingLoss zero = sampling_loss(z, p, tv, cfg);
  EXPECT_EQ(zero.total.value().item(), zero.chamfer.value().item());
  cfg.alpha = 1.0;
  cfg.beta = 1.0;
  const SamplingLoss one = sampling_loss(z, p, tv, cfg);
  cfg.alpha = 2.0;
  const SamplingLoss two = sampling_loss(z, p, tv, cfg);
  EXPECT_GT(one.repulsion.value().item(), 0.0);
  EXPECT_NEAR(two.total.value().item() - one.total.value().item(), one.repulsion.value().item(), 1e-15);
}

TEST(TotalLoss, Composition) {
  LossConfig cfg;
  cfg.delta = 0.0;
  EXPECT_EQ(total_loss(1.25, 7.0, cfg), 1.25);
  cfg.delta = 1.0;
  EXPECT_EQ(total_loss(1.25, 0.0, cfg), 1.25);
  cfg.delta = 0.5;
  EXPECT_EQ(total_loss(1.5, 2.0, cfg), 2.5);
}

TEST(LossConfig, Validation) {
  LossConfig cfg;
  cfg.h = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.k_rep = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.alpha = std::numeric_limits<double>::infinity();
  EXPECT_THROW(cfg.validate(), ConfigError);
}
