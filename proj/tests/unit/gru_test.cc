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

#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "etp/gru.h"
#include "testing/gradcheck.h"

namespace etp {
namespace {

using testing::random_matrix;

TEST(GruTest, ZeroWeightsHalveTheState) {
  const GruWeights w = GruWeights::zeros(2, 3);
  const Matrix h = Matrix::Constant(1, 3, 0.8);
  const Tensor out = gru_cell(Tensor::constant(Matrix::Ones(1, 2)), Tensor::constant(h), w);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out.value()(0, j), 0.4);
}

TEST(GruTest, ProjectedCellMatchesCell) {
  std::mt19937_64 rng(3);
  const GruWeights w = GruWeights::init(3, 4, rng);
  const Tensor x = Tensor::constant(random_matrix(2, 3, rng));
  const Tensor h = Tensor::constant(random_matrix(2, 4, rng));
  const Tensor gx = add(matmul(x, w.input_weight), w.input_bias);
  const Matrix a = gru_cell(x, h, w).value();
  const Matrix b = gru_cell_projected(gx, h, w, nullptr).value();
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GruTest, StepMaskCarriesStateThrough) {
  std::mt19937_64 rng(4);
  const GruWeights w = GruWeights::init(2, 3, rng);
  const Tensor gx = Tensor::constant(random_matrix(2, 9, rng));
  const Matrix h = random_matrix(2, 3, rng);
  Matrix mask(2, 1);
  mask << 1, 0;
  const Matrix out = gru_cell_projected(gx, Tensor::constant(h), w, &mask).value();
  EXPECT_EQ(out.row(1), h.row(1));
  EXPECT_NE(out.row(0), h.row(0));
}

// Runs item `b` of a padded batch and the same item alone; both directions
// must agree exactly up to rounding.
TEST(GruTest, PaddingDoesNotLeakIntoRealPositions) {
  std::mt19937_64 rng(5);
  const std::size_t steps = 5, batch = 3, in = 2, hidden = 3;
  const std::vector<std::size_t> lengths = {5, 2, 4};
  const BiGruWeights w = BiGruWeights::init(in, hidden, rng);
  const Matrix x = random_matrix(steps * batch, in, rng);
  std::vector<double> valid(steps * batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < lengths[b]; ++t) valid[t * batch + b] = 1.0;
  }
  const Matrix full = bigru_sequence(Tensor::constant(x), steps, batch, valid, w).value();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = lengths[b];
    Matrix xs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
    for (std::size_t t = 0; t < n; ++t) xs.row(t) = x.row(t * batch + b);
    const Matrix alone =
        bigru_sequence(Tensor::constant(xs), n, 1, std::vector<double>(n, 1.0), w).value();
    for (std::size_t t = 0; t < n; ++t) {
      EXPECT_LE((full.row(t * batch + b) - alone.row(t)).cwiseAbs().maxCoeff(), 1e-12)
          << "item " << b << " step " << t;
    }
  }
}

TEST(GruTest, ReverseDirectionStartsAtLastRealToken) {
  std::mt19937_64 rng(6);
  const GruWeights w = GruWeights::init(2, 3, rng);
  const Matrix x = random_matrix(4, 2, rng);
  const std::vector<double> valid = {1, 1, 1, 0};
  const Matrix rev = gru_sequence(Tensor::constant(x), 4, 1, valid, w, true).value();
  const Matrix first = gru_cell(Tensor::constant(x.row(2)), Tensor::zeros(1, 3), w).value();
  EXPECT_LE((rev.row(2) - first).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GruTest, BidirectionalConcatenatesDirections) {
  std::mt19937_64 rng(7);
  const BiGruWeights w = BiGruWeights::init(2, 3, rng);
  const Tensor x = Tensor::constant(random_matrix(6, 2, rng));
  const std::vector<double> valid(6, 1.0);
  const Matrix both = bigru_sequence(x, 3, 2, valid, w).value();
  const Matrix fwd = gru_sequence(x, 3, 2, valid, w.forward, false).value();
  const Matrix bwd = gru_sequence(x, 3, 2, valid, w.backward, true).value();
  EXPECT_EQ(both.leftCols(3), fwd);
  EXPECT_EQ(both.rightCols(3), bwd);
}

}  // namespace
}  // namespace etp
