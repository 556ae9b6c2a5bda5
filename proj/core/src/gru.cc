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

#include "etp/gru.h"

#include <cmath>

#include "etp/errors.h"

namespace etp {

GruWeights GruWeights::init(std::size_t input_dim, std::size_t hidden_dim,
                            std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  GruWeights w;
  w.input_weight = uniform_parameter(input_dim, 3 * hidden_dim, bound, rng);
  w.recurrent_weight =
      uniform_parameter(hidden_dim, 3 * hidden_dim, bound, rng);
  w.input_bias = uniform_parameter(1, 3 * hidden_dim, bound, rng);
  w.recurrent_bias = uniform_parameter(1, 3 * hidden_dim, bound, rng);
  return w;
}

GruWeights GruWeights::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  GruWeights w;
  w.input_weight = zero_parameter(input_dim, 3 * hidden_dim);
  w.recurrent_weight = zero_parameter(hidden_dim, 3 * hidden_dim);
  w.input_bias = zero_parameter(1, 3 * hidden_dim);
  w.recurrent_bias = zero_parameter(1, 3 * hidden_dim);
  return w;
}

ParameterSet GruWeights::parameters() const {
  ParameterSet p;
  p.add("w_ih", input_weight);
  p.add("w_hh", recurrent_weight);
  p.add("b_ih", input_bias);
  p.add("b_hh", recurrent_bias);
  return p;
}

Tensor gru_cell_projected(const Tensor& gx, const Tensor& h,
                          const GruWeights& w, const Matrix* step_mask) {
  const std::size_t hd = w.hidden_dim();
  if (gx.cols() != 3 * hd || h.cols() != hd || gx.rows() != h.rows()) {
    throw DimensionError("gru_cell: gates " + shape_string(gx.value()) +
                         " and state " + shape_string(h.value()) +
                         " do not match hidden size " + std::to_string(hd));
  }
  Tensor gh = add(matmul(h, w.recurrent_weight), w.recurrent_bias);
  Tensor gates = sigmoid(add(slice_cols(gx, 0, 2 * hd),
                             slice_cols(gh, 0, 2 * hd)));
  Tensor reset = slice_cols(gates, 0, hd);
  Tensor update = slice_cols(gates, hd, hd);
  Tensor candidate = tanh(add(slice_cols(gx, 2 * hd, hd),
                              mul(reset, slice_cols(gh, 2 * hd, hd))));
  Tensor delta = mul(update, sub(candidate, h));
  if (step_mask != nullptr) {
    delta = mul(delta, Tensor::constant(*step_mask));
  }
  return add(h, delta);
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruWeights& w) {
  if (x.cols() != w.input_dim()) {
    throw DimensionError("gru_cell: input " + shape_string(x.value()) +
                         " does not match input size " +
                         std::to_string(w.input_dim()));
  }
  Tensor gx = add(matmul(x, w.input_weight), w.input_bias);
  return gru_cell_projected(gx, h, w, nullptr);
}

Tensor gru_sequence(const Tensor& inputs, std::size_t steps,
                    std::size_t batch, const std::vector<double>& valid,
                    const GruWeights& w, bool reverse) {
  if (inputs.rows() != steps * batch || valid.size() != steps * batch) {
    throw DimensionError("gru_sequence: " + shape_string(inputs.value()) +
                         " is not " + std::to_string(steps) + " steps of " +
                         std::to_string(batch));
  }
  if (inputs.cols() != w.input_dim()) {
    throw DimensionError("gru_sequence: input " +
                         shape_string(inputs.value()) +
                         " does not match input size " +
                         std::to_string(w.input_dim()));
  }
  Tensor projected = add(matmul(inputs, w.input_weight), w.input_bias);
  std::vector<Tensor> states(steps);
  Tensor h = Tensor::zeros(batch, w.hidden_dim());
  const auto b = static_cast<Eigen::Index>(batch);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    Matrix step_mask(b, 1);
    bool all_valid = true;
    for (std::size_t i = 0; i < batch; ++i) {
      step_mask(static_cast<Eigen::Index>(i), 0) = valid[t * batch + i];
      all_valid = all_valid && valid[t * batch + i] == 1.0;
    }
    Tensor gx = slice_rows(projected, t * batch, batch);
    h = gru_cell_projected(gx, h, w, all_valid ? nullptr : &step_mask);
    states[t] = h;
  }
  return stack_rows(states);
}

BiGruWeights BiGruWeights::init(std::size_t input_dim, std::size_t hidden_dim,
                                std::mt19937_64& rng) {
  BiGruWeights w;
  w.forward = GruWeights::init(input_dim, hidden_dim, rng);
  w.backward = GruWeights::init(input_dim, hidden_dim, rng);
  return w;
}

ParameterSet BiGruWeights::parameters() const {
  ParameterSet p;
  p.add_all("fwd.", forward.parameters());
  p.add_all("bwd.", backward.parameters());
  return p;
}

Tensor bigru_sequence(const Tensor& inputs, std::size_t steps,
                      std::size_t batch, const std::vector<double>& valid,
                      const BiGruWeights& w) {
  Tensor fwd = gru_sequence(inputs, steps, batch, valid, w.forward, false);
  Tensor bwd = gru_sequence(inputs, steps, batch, valid, w.backward, true);
  return concat({fwd, bwd});
}

}  // namespace etp
