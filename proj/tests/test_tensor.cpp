#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "lightn/checkpoint.hpp"
#include "lightn/grad_check.hpp"
#include "lightn/ops.hpp"
#include "lightn/rng.hpp"
#include "grad_cases.hpp"
#include "test_util.hpp"

using namespace lightn;
using lightn::test::random_matrix;
using lightn::test::weighted_sum;

TEST(Matrix, ConstructionAndAccess) {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.transposed()(2, 1), 6.0);
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), DimensionError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(m.item(), ContractError);
  EXPECT_EQ(Matrix::scalar(4).item(), 4.0);
}

TEST(Ops, MatmulValues) {
  Tape t;
  const Var a = t.constant(Matrix::from_rows({{1, 2}, {3, 4}}));
  const Var b = t.constant(Matrix::from_rows({{5, 6}, {7, 8}}));
  EXPECT_EQ(matmul(a, b).value(), Matrix::from_rows({{19, 22}, {43, 50}}));
  EXPECT_THROW(matmul(a, t.constant(Matrix(3, 1))), DimensionError);
}

TEST(Ops, GramIsExactlySymmetric) {
  Tape t;
  const Var x = t.constant(random_matrix(17, 5, 3));
  const Matrix g = gram(x).value();
  const Matrix ref = matmul(x, transpose(x)).value();
  for (std::size_t i = 0; i < 17; ++i)
    for (std::size_t j = 0; j < 17; ++j) {
      EXPECT_EQ(g(i, j), g(j, i));
      EXPECT_NEAR(g(i, j), ref(i, j), 1e-12);
    }
}

TEST(Ops, RowSoftmaxRowsSumToOne) {
  Tape t;
  const Matrix s = row_softmax(t.constant(random_matrix(4, 6, 1, -50, 50))).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < 6; ++j) acc += s(i, j);
    EXPECT_NEAR(acc, 1.0, 1e-12);
  }
}

TEST(Ops, LayerNormNormalizesRows) {
  Tape t;
  const Var x = t.constant(random_matrix(3, 8, 2, -4, 4));
  const Matrix y = layer_norm(x, t.constant(Matrix(1, 8, 1.0)), t.constant(Matrix(1, 8, 0.0))).value();
  for (std::size_t i = 0; i < 3; ++i) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < 8; ++j) mu += y(i, j) / 8;
    for (std::size_t j = 0; j < 8; ++j) var += (y(i, j) - mu) * (y(i, j) - mu) / 8;
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Ops, MaxMinOverRowsTieGoesToLowestIndex) {
  Tape t;
  const Var x = t.leaf(Matrix::from_rows({{1, 5}, {3, 5}, {3, 2}}));
  const Var mx = max_over_rows(x);
  EXPECT_EQ(mx.value(), Matrix::row_vector({3, 5}));
  t.backward(sum(mx));
  EXPECT_EQ(x.grad(), Matrix::from_rows({{0, 1}, {1, 0}, {0, 0}}));
}

TEST(Ops, PairwiseSqDists) {
  Tape t;
  const Var a = t.constant(Matrix::from_rows({{0, 0, 0}, {1, 1, 1}}));
  const Var b = t.constant(Matrix::from_rows({{1, 0, 0}}));
  EXPECT_EQ(pairwise_sq_dists(a, b).value(), Matrix::from_rows({{1}, {2}}));
}

TEST(Ops, SoftmaxCrossEntropyValue) {
  Tape t;
  const Var l = t.constant(Matrix::row_vector({1, 2, 3}));
  const double z = std::exp(1) + std::exp(2) + std::exp(3);
  EXPECT_NEAR(softmax_cross_entropy(l, 2).value().item(), -std::log(std::exp(3) / z), 1e-12);
  EXPECT_THROW(softmax_cross_entropy(l, 3), DomainError);
}

TEST(Ops, ShapeErrors) {
  Tape t;
  const Var a = t.constant(Matrix(2, 3));
  EXPECT_THROW(add(a, t.constant(Matrix(3, 2))), DimensionError);
  EXPECT_THROW(reshape(a, 4, 2), DimensionError);
  EXPECT_THROW(add_row_bias(a, t.constant(Matrix(1, 2))), DimensionError);
  EXPECT_THROW(gather_elements(a, {{2, 0}}), DimensionError);
  EXPECT_THROW(pow_int(a, 0), DomainError);
}

TEST(Tape, BackwardRequiresScalar) {
  Tape t;
  const Var a = t.leaf(Matrix(2, 2, 1.0));
  EXPECT_THROW(t.backward(a), ContractError);
}

TEST(Tape, MixedTapesRejected) {
  Tape t1, t2;
  const Var a = t1.leaf(Matrix(1, 1, 1.0));
  const Var b = t2.leaf(Matrix(1, 1, 1.0));
  EXPECT_THROW(add(a, b), ContractError);
}

TEST(Tape, ConstantsGetNoGradientBuffers) {
  Tape t;
  const Var w = t.constant(random_matrix(3, 2, 1));
  const Var x = t.leaf(random_matrix(4, 3, 2));
  t.backward(sum(matmul(x, w)));
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(w.has_grad());
  EXPECT_FALSE(w.requires_grad());
}

TEST(Tape, GradientsAccumulateOverReuse) {
  Tape t;
  const Var x = t.leaf(Matrix::scalar(3.0));
  t.backward(add(mul(x, x), x));  // d/dx (x^2 + x) = 7
  EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

// Every differentiable primitive against central differences.
using lightn::test::GradCase;
using lightn::test::grad_cases;

class PrimitiveGrad : public ::testing::TestWithParam<GradCase> {};

TEST_P(PrimitiveGrad, MatchesFiniteDifferences) {
  const GradCase& c = GetParam();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Matrix x = random_matrix(c.rows, c.cols, seed, c.lo, c.hi);
    EXPECT_LE(grad_check(c.f, x), 1e-4) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGrad, ::testing::ValuesIn(grad_cases()),
                         [](const ::testing::TestParamInfo<GradCase>& i) { return i.param.name; });

TEST(Rng, DeterministicAndInRange) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.below(7), 7u);
    b.below(7);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint ck;
  ck.set_meta("kind", "test");
  ck.tensors.emplace_back("w", random_matrix(3, 4, 5, -1e6, 1e6));
  ck.tensors.emplace_back("tiny", Matrix::row_vector({1e-300, -0.1, 5e-324}));
  std::stringstream ss;
  ck.write(ss);
  const Checkpoint back = Checkpoint::read(ss);
  EXPECT_EQ(back.get_meta("kind"), "test");
  EXPECT_EQ(back.tensor("w"), ck.tensor("w"));
  EXPECT_EQ(back.tensor("tiny"), ck.tensor("tiny"));
}

TEST(Checkpoint, MalformedInputReportsLine) {
  std::stringstream ss("lightn-checkpoint 1\ntensor w 1 2\n1 abc\nend\n");
  try {
    Checkpoint::read(ss);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
