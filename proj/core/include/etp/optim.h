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

#ifndef ETP_OPTIM_H_
#define ETP_OPTIM_H_

#include <cstdint>
#include <vector>

#include "etp/parameters.h"

namespace etp {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers, one per parameter, plus the step count.
struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
};

// Zero-initialized state matching `params`.
AdamState make_adam_state(const ParameterSet& params);

// One bias-corrected Adam update using the gradients currently accumulated
// in `params`. Throws NumericalError naming the parameter if any gradient
// entry is NaN or infinite; no parameter is touched in that case.
void adam_step(ParameterSet& params, AdamState& state,
               const AdamConfig& config);

// Global L2 norm over all gradients.
double gradient_norm(const ParameterSet& params);

}  // namespace etp

#endif  // ETP_OPTIM_H_
