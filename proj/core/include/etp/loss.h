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

// Training objectives. Every loss is a scalar Tensor on the tape.

#ifndef ETP_LOSS_H_
#define ETP_LOSS_H_

#include <cstddef>
#include <string>
#include <vector>

#include "etp/data.h"
#include "etp/model.h"
#include "etp/spans.h"
#include "etp/tensor.h"

namespace etp::loss {

// Per-token class weights of the explanation loss, for a passage of n
// tokens with n_1 rationale and n_0 other tokens:
//   kInversePrior  w_i = n / n_{t_i}  (rare class up-weighted)
//   kLiteralCount  w_i = n_{t_i}
//   kNone          w_i = 1
// A passage with a single class falls back to w_i = 1 under kInversePrior.
enum class ExpWeighting { kInversePrior, kLiteralCount, kNone };

const char* to_string(ExpWeighting w);
ExpWeighting parse_exp_weighting(const std::string& s);

struct LossBreakdown {
  double task = 0.0;
  double exp = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

// Mean over the batch of -ln probs[b, labels[b]] (floored at 1e-12).
Tensor task_loss(const Tensor& probs, const std::vector<int>& labels);

// (1/n) sum_i w_i BCE(p_i, t_i) over the n positions with valid[i] == 1
// (all positions when `valid` is empty). `p` is a column of |t| entries.
Tensor weighted_token_bce(const Tensor& p, const std::vector<double>& targets,
                          ExpWeighting weighting = ExpWeighting::kInversePrior,
                          const std::vector<double>& valid = {});

// Per-position weights for one passage (0 where invalid).
std::vector<double> token_weights(const std::vector<double>& targets,
                                  ExpWeighting weighting,
                                  const std::vector<double>& valid = {});

// total = fma(lambda, exp, task). Throws UsageError for lambda < 0.
LossBreakdown combined_loss(double task, double exp, double lambda);
Tensor combined_loss(const Tensor& task, const Tensor& exp, double lambda);

// sum_i BCE(p_start_i, t_i), unnormalized.
Tensor span_start_loss(const Tensor& start_probs,
                       const std::vector<double>& start_targets);

// Evidence interval with inclusive end token, as indexed by the end
// distribution.
struct Boundary {
  std::size_t start = 0;
  std::size_t end = 0;
};
// sum_e -ln P(end_e | start_e), probabilities floored at 1e-12.
Tensor span_end_loss(const Tensor& end_probs,
                     const std::vector<Boundary>& evidence);
Tensor span_total_loss(const Tensor& start, const Tensor& end);

std::vector<Boundary> boundaries(const SpanSet& spans);
std::vector<double> start_indicators(const SpanSet& spans, std::size_t length);

// Batch-level explanation loss of the explainer: the mean over items of the
// token loss (token head) or L_start + L_end (span head).
Tensor explanation_loss(const model::ExplainerOutput& out,
                        const data::Batch& batch, ExpWeighting weighting);

// Number of log terms whose probability hit the floor in the last call on
// this thread (diagnostic).
std::size_t last_clamp_count();

}  // namespace etp::loss

#endif  // ETP_LOSS_H_
