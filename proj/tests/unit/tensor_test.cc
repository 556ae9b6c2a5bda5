/*
 * Copyright 2026 The etp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "etp/errors.h"
#include "etp/tensor.h"
#include "testing/gradcheck.h"
#include "testing/gradient_cases.h"

namespace etp {
namespace {

using testing::kGradientTolerance;

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

class OpGradientTest : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradientTest, MatchesCentralDifferences) {
  for (const auto& c : testing::op_gradient_cases(GetParam())) {
    const auto r = c.run();
    EXPECT_LE(r.max_relative_error, kGradientTolerance) << c.name << ": " << r.worst;
    EXPECT_GT(r.checked, 0u) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradientTest, ::testing::Range<std::uint64_t>(1, 6));

TEST(TensorTest, BroadcastAddShapes) {
  const Tensor a = Tensor::constant(mat({{1, 2}, {3, 4}}));
  EXPECT_EQ(add(a, Tensor::constant(mat({{10, 20}}))).value(), mat({{11, 22}, {13, 24}}));
  EXPECT_EQ(add(a, Tensor::constant(mat({{10}, {20}}))).value(), mat({{11, 12}, {23, 24}}));
  EXPECT_EQ(add(a, Tensor::scalar(1)).value(), mat({{2, 3}, {4, 5}}));
  EXPECT_THROW(add(a, Tensor::constant(mat({{1, 2, 3}}))), DimensionError);
  EXPECT_THROW(matmul(a, Tensor::constant(mat({{1, 2, 3}}))), DimensionError);
}

TEST(TensorTest, BroadcastGradientReducesOverRepeatedAxis) {
  Tensor a = Tensor::parameter(mat({{1, 2}, {3, 4}}));
  Tensor row = Tensor::parameter(mat({{0, 0}}));
  backward(sum(add(a, row)));
  EXPECT_EQ(row.grad(), mat({{2, 2}}));
  EXPECT_EQ(a.grad(), mat({{1, 1}, {1, 1}}));
}

TEST(TensorTest, MaskedSoftmaxHasExactZeros) {
  const double inf = std::numeric_limits<double>::infinity();
  const Matrix mask = mat({{0, 0, 0}, {-inf, 0, 0}, {-inf, -inf, 0}});
  const Tensor s = softmax(Tensor::constant(mat({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}})), &mask);
  EXPECT_EQ(s.value()(1, 0), 0.0);
  EXPECT_EQ(s.value()(2, 0), 0.0);
  EXPECT_EQ(s.value()(2, 1), 0.0);
  EXPECT_EQ(s.value()(2, 2), 1.0);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(s.value().row(i).sum(), 1.0, 1e-15);
  const Matrix all_masked = mat({{-inf, -inf}});
  EXPECT_THROW(softmax(Tensor::constant(mat({{1, 2}})), &all_masked), UsageError);
}

TEST(TensorTest, SoftmaxIsShiftInvariantForLargeLogits) {
  const Tensor s = softmax(Tensor::constant(mat({{1000, 1001}})));
  EXPECT_NEAR(s.value()(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(TensorTest, BinaryCrossEntropyValues) {
  const Tensor p = Tensor::constant(mat({{0.8}, {0.2}}));
  const double v = binary_cross_entropy(p, mat({{1}, {0}}), mat({{1}, {2}})).item();
  EXPECT_NEAR(v, -std::log(0.8) - 2 * std::log(0.8), 1e-15);
  const Tensor exact = Tensor::constant(mat({{1}, {0}}));
  EXPECT_EQ(binary_cross_entropy(exact, mat({{1}, {0}}), mat({{1}, {1}})).item(), 0.0);
  const Tensor floored = Tensor::constant(mat({{0.0}}));
  EXPECT_NEAR(binary_cross_entropy(floored, mat({{1}}), mat({{1}})).item(),
              -std::log(kProbabilityFloor), 1e-9);
}

TEST(TensorTest, NegativeLogLikelihood) {
  const Tensor p = Tensor::constant(mat({{0.25, 0.75}}));
  EXPECT_NEAR(negative_log_likelihood(p, {{0, 1, 2.0}}).item(), -2 * std::log(0.75), 1e-15);
  EXPECT_THROW(negative_log_likelihood(p, {{1, 0, 1.0}}), DimensionError);
}

TEST(TensorTest, DropoutEvalIsIdentityAndTrainScalesSurvivors) {
  std::mt19937_64 rng(5);
  const Matrix v = Matrix::Constant(20, 20, 2.0);
  const Tensor a = Tensor::constant(v);
  EXPECT_EQ(dropout(a, 0.5, rng, false).value(), v);
  const Matrix d = dropout(a, 0.5, rng, true).value();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    EXPECT_TRUE(d.data()[i] == 0.0 || d.data()[i] == 4.0);
  }
  EXPECT_THROW(dropout(a, 1.0, rng, true), UsageError);
}

TEST(TensorTest, GatherRowsAccumulatesRepeatedRows) {
  Tensor table = Tensor::parameter(mat({{1, 2}, {3, 4}, {5, 6}}));
  const Tensor g = gather_rows(table, {2, 0, 2});
  EXPECT_EQ(g.value(), mat({{5, 6}, {1, 2}, {5, 6}}));
  backward(sum(g));
  EXPECT_EQ(table.grad(), mat({{1, 1}, {0, 0}, {2, 2}}));
  EXPECT_THROW(gather_rows(table, {3}), DimensionError);
}

TEST(TensorTest, BackwardRequiresScalar) {
  Tensor a = Tensor::parameter(mat({{1, 2}}));
  EXPECT_THROW(backward(a), UsageError);
}

TEST(TensorTest, NoGradGuardRecordsNothing) {
  Tensor a = Tensor::parameter(mat({{1, 2}}));
  NoGradGuard guard;
  const Tensor y = mul(a, a);
  EXPECT_FALSE(y.requires_grad());
}

TEST(TensorTest, GradientsAccumulateAcrossBackwardCalls) {
  Tensor a = Tensor::parameter(mat({{3}}));
  backward(mul(a, a));
  backward(mul(a, a));
  EXPECT_EQ(a.grad()(0, 0), 12.0);
  a.zero_grad();
  backward(scale(a, 2.0));
  EXPECT_EQ(a.grad()(0, 0), 2.0);
}

TEST(TensorTest, SharedSubexpressionGradient) {
  Tensor a = Tensor::parameter(mat({{2}}));
  const Tensor b = tanh(a);
  backward(add(mul(b, b), b));
  const double t = std::tanh(2.0);
  EXPECT_NEAR(a.grad()(0, 0), (2 * t + 1) * (1 - t * t), 1e-15);
}

TEST(TensorTest, SliceBoundsAreChecked) {
  const Tensor a = Tensor::constant(mat({{1, 2}, {3, 4}}));
  EXPECT_THROW(slice_rows(a, 1, 2), DimensionError);
  EXPECT_THROW(slice_cols(a, 2, 1), DimensionError);
  EXPECT_EQ(slice(a, 1, 1, 0, 2).value(), mat({{3, 4}}));
  EXPECT_EQ(concat({a, a}).cols(), 4u);
  EXPECT_EQ(stack_rows({a, a}).rows(), 4u);
}

}  // namespace
}  // namespace etp
