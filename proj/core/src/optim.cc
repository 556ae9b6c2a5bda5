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

#include "etp/optim.h"

#include <cmath>

#include "etp/errors.h"

namespace etp {

AdamState make_adam_state(const ParameterSet& params) {
  AdamState state;
  for (const auto& [name, tensor] : params.entries()) {
    const Matrix& v = tensor.value();
    state.first_moment.push_back(Matrix::Zero(v.rows(), v.cols()));
    state.second_moment.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
  return state;
}

void adam_step(ParameterSet& params, AdamState& state,
               const AdamConfig& config) {
  const auto& entries = params.entries();
  if (state.first_moment.size() != entries.size() ||
      state.second_moment.size() != entries.size()) {
    throw UsageError("adam_step: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Matrix& g = entries[i].second.grad();
    if (state.first_moment[i].rows() != g.rows() ||
        state.first_moment[i].cols() != g.cols()) {
      throw DimensionError("adam_step: state for '" + entries[i].first +
                           "' has shape " +
                           shape_string(state.first_moment[i]) +
                           ", parameter has " + shape_string(g));
    }
    if (!g.allFinite()) {
      throw NumericalError("adam_step: non-finite gradient in '" +
                           entries[i].first + "'");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor param = entries[i].second;
    const Matrix& g = param.grad();
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    Matrix& w = param.mutable_value();
    w.array() -= config.learning_rate * (m.array() / correction1) /
                 ((v.array() / correction2).sqrt() + config.epsilon);
  }
}

double gradient_norm(const ParameterSet& params) {
  double sq = 0.0;
  for (const auto& entry : params.entries()) {
    sq += entry.second.grad().squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace etp
