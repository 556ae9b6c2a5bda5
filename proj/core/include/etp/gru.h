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

// Gated recurrent units built from tape ops.
//
// Gates are packed [reset | update | candidate] along columns:
//   r  = sigmoid(x W_r + b_r + h U_r + c_r)
//   z  = sigmoid(x W_z + b_z + h U_z + c_z)
//   h~ = tanh(x W_n + b_n + r * (h U_n + c_n))
//   h' = (1 - z) * h + z * h~
//
// Sequences are batched time-major: a (T*B) x d tensor whose row t*B + b is
// step t of batch item b.

#ifndef ETP_GRU_H_
#define ETP_GRU_H_

#include <cstddef>
#include <random>
#include <vector>

#include "etp/parameters.h"
#include "etp/tensor.h"

namespace etp {

struct GruWeights {
  Tensor input_weight;      // in x 3h
  Tensor recurrent_weight;  // h x 3h
  Tensor input_bias;        // 1 x 3h
  Tensor recurrent_bias;    // 1 x 3h

  std::size_t input_dim() const { return input_weight.rows(); }
  std::size_t hidden_dim() const { return recurrent_weight.rows(); }

  static GruWeights init(std::size_t input_dim, std::size_t hidden_dim,
                         std::mt19937_64& rng);
  static GruWeights zeros(std::size_t input_dim, std::size_t hidden_dim);
  ParameterSet parameters() const;
};

// One step. `x` is B x in, `h` is B x hidden.
Tensor gru_cell(const Tensor& x, const Tensor& h, const GruWeights& w);

// One step from precomputed input projections `gx` = x W + b (B x 3h).
// `step_mask`, when non-null, is a B x 1 column of 0/1; rows with 0 carry
// `h` through unchanged.
Tensor gru_cell_projected(const Tensor& gx, const Tensor& h,
                          const GruWeights& w, const Matrix* step_mask);

// Runs a GRU over a time-major sequence. `valid` has T*B entries (1 for real
// positions); padded steps leave the state untouched, so with right padding
// the reverse direction starts at each item's last real token. Returns the
// (T*B) x hidden state sequence in forward time order.
Tensor gru_sequence(const Tensor& inputs, std::size_t steps,
                    std::size_t batch, const std::vector<double>& valid,
                    const GruWeights& w, bool reverse);

struct BiGruWeights {
  GruWeights forward;
  GruWeights backward;

  static BiGruWeights init(std::size_t input_dim, std::size_t hidden_dim,
                           std::mt19937_64& rng);
  ParameterSet parameters() const;
};

// Forward and reverse states concatenated: (T*B) x 2*hidden.
Tensor bigru_sequence(const Tensor& inputs, std::size_t steps,
                      std::size_t batch, const std::vector<double>& valid,
                      const BiGruWeights& w);

}  // namespace etp

#endif  // ETP_GRU_H_
