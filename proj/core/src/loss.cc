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

#include "etp/loss.h"

#include <cmath>

#include "etp/errors.h"

namespace etp::loss {

namespace {

thread_local std::size_t clamp_count = 0;

Matrix column(const std::vector<double>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = v[i];
  }
  return m;
}

void count_clamps(const Matrix& p, const Matrix& targets,
                  const Matrix& weights) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (weights.data()[i] == 0.0) continue;
    const double t = targets.data()[i];
    const double q = p.data()[i];
    if ((t != 0.0 && q <= kProbabilityFloor) ||
        (t != 1.0 && 1.0 - q <= kProbabilityFloor)) {
      ++clamp_count;
    }
  }
}

}  // namespace

const char* to_string(ExpWeighting w) {
  switch (w) {
    case ExpWeighting::kInversePrior:
      return "inverse_prior";
    case ExpWeighting::kLiteralCount:
      return "literal_count";
    case ExpWeighting::kNone:
      return "none";
  }
  return "inverse_prior";
}

ExpWeighting parse_exp_weighting(const std::string& s) {
  if (s == "inverse_prior") return ExpWeighting::kInversePrior;
  if (s == "literal_count") return ExpWeighting::kLiteralCount;
  if (s == "none") return ExpWeighting::kNone;
  throw UsageError("unknown exp_weighting '" + s + "'");
}

std::size_t last_clamp_count() { return clamp_count; }

Tensor task_loss(const Tensor& probs, const std::vector<int>& labels) {
  if (labels.size() != probs.rows() || labels.empty()) {
    throw DimensionError("task_loss: " + std::to_string(labels.size()) +
                         " labels for probabilities " +
                         shape_string(probs.value()));
  }
  clamp_count = 0;
  std::vector<Pick> picks;
  const double w = 1.0 / static_cast<double>(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= probs.cols()) {
      throw DimensionError("task_loss: label " + std::to_string(labels[b]) +
                           " out of range");
    }
    picks.push_back({b, static_cast<std::size_t>(labels[b]), w});
    if (probs.value()(static_cast<Eigen::Index>(b), labels[b]) <=
        kProbabilityFloor) {
      ++clamp_count;
    }
  }
  return negative_log_likelihood(probs, picks);
}

std::vector<double> token_weights(const std::vector<double>& targets,
                                  ExpWeighting weighting,
                                  const std::vector<double>& valid) {
  if (!valid.empty() && valid.size() != targets.size()) {
    throw DimensionError("token_weights: mask length mismatch");
  }
  double n = 0.0;
  double ones = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!valid.empty() && valid[i] == 0.0) continue;
    n += 1.0;
    ones += targets[i];
  }
  const double zeros = n - ones;
  std::vector<double> w(targets.size(), 0.0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!valid.empty() && valid[i] == 0.0) continue;
    const double same = targets[i] != 0.0 ? ones : zeros;
    switch (weighting) {
      case ExpWeighting::kInversePrior:
        w[i] = (ones == 0.0 || zeros == 0.0) ? 1.0 : n / same;
        break;
      case ExpWeighting::kLiteralCount:
        w[i] = same;
        break;
      case ExpWeighting::kNone:
        w[i] = 1.0;
        break;
    }
  }
  return w;
}

Tensor weighted_token_bce(const Tensor& p, const std::vector<double>& targets,
                          ExpWeighting weighting,
                          const std::vector<double>& valid) {
  if (p.rows() != targets.size() || p.cols() != 1) {
    throw DimensionError("weighted_token_bce: scores " +
                         shape_string(p.value()) + " for " +
                         std::to_string(targets.size()) + " labels");
  }
  std::vector<double> w = token_weights(targets, weighting, valid);
  double n = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (valid.empty() || valid[i] != 0.0) n += 1.0;
  }
  if (n == 0.0) return scale(sum(p), 0.0);
  for (double& x : w) x /= n;
  const Matrix t = column(targets);
  const Matrix wm = column(w);
  clamp_count = 0;
  count_clamps(p.value(), t, wm);
  return binary_cross_entropy(p, t, wm);
}

LossBreakdown combined_loss(double task, double exp, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("combined_loss: lambda must be >= 0");
  LossBreakdown b;
  b.task = task;
  b.exp = exp;
  b.lambda = lambda;
  b.total = std::fma(lambda, exp, task);
  return b;
}

Tensor combined_loss(const Tensor& task, const Tensor& exp, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("combined_loss: lambda must be >= 0");
  if (lambda == 0.0) return task;
  return add(task, scale(exp, lambda));
}

Tensor span_start_loss(const Tensor& start_probs,
                       const std::vector<double>& start_targets) {
  if (start_probs.rows() != start_targets.size() || start_probs.cols() != 1) {
    throw DimensionError("span_start_loss: " +
                         shape_string(start_probs.value()) + " for " +
                         std::to_string(start_targets.size()) + " targets");
  }
  const Matrix t = column(start_targets);
  const Matrix w = Matrix::Ones(t.rows(), 1);
  clamp_count = 0;
  count_clamps(start_probs.value(), t, w);
  return binary_cross_entropy(start_probs, t, w);
}

Tensor span_end_loss(const Tensor& end_probs,
                     const std::vector<Boundary>& evidence) {
  const std::size_t n = end_probs.rows();
  std::vector<Pick> picks;
  clamp_count = 0;
  for (const Boundary& e : evidence) {
    if (e.start > e.end || e.end >= n) {
      throw DataError("span_end_loss: evidence [" + std::to_string(e.start) +
                      ", " + std::to_string(e.end) +
                      "] out of range for length " + std::to_string(n));
    }
    picks.push_back({e.start, e.end, 1.0});
    if (end_probs.value()(static_cast<Eigen::Index>(e.start),
                          static_cast<Eigen::Index>(e.end)) <=
        kProbabilityFloor) {
      ++clamp_count;
    }
  }
  if (picks.empty()) return scale(sum(end_probs), 0.0);
  return negative_log_likelihood(end_probs, picks);
}

Tensor span_total_loss(const Tensor& start, const Tensor& end) {
  return add(start, end);
}

std::vector<Boundary> boundaries(const SpanSet& spans) {
  std::vector<Boundary> out;
  out.reserve(spans.size());
  for (const Span& s : spans) {
    if (s.end > s.start) out.push_back({s.start, s.end - 1});
  }
  return out;
}

std::vector<double> start_indicators(const SpanSet& spans,
                                     std::size_t length) {
  std::vector<double> t(length, 0.0);
  for (const Span& s : spans) {
    if (s.start < length && s.end > s.start) t[s.start] = 1.0;
  }
  return t;
}

Tensor explanation_loss(const model::ExplainerOutput& out,
                        const data::Batch& batch, ExpWeighting weighting) {
  const double inv = 1.0 / static_cast<double>(batch.size);
  if (out.token_scores.defined()) {
    // One fused BCE over the whole batch; each item's weights carry its own
    // 1/n and the 1/B of the batch mean.
    Matrix targets = Matrix::Zero(
        static_cast<Eigen::Index>(batch.steps * batch.size), 1);
    Matrix weights = targets;
    for (std::size_t b = 0; b < batch.size; ++b) {
      const data::Encoded& e = *batch.items[b];
      const std::size_t n = e.doc_length();
      if (n == 0) continue;
      std::vector<double> w = token_weights(e.targets, weighting);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row =
            static_cast<Eigen::Index>(batch.flat(e.doc_begin + i, b));
        targets(row, 0) = e.targets[i];
        weights(row, 0) = w[i] * inv / static_cast<double>(n);
      }
    }
    clamp_count = 0;
    count_clamps(out.token_scores.value(), targets, weights);
    return binary_cross_entropy(out.token_scores, targets, weights);
  }
  if (out.spans.size() != batch.size) {
    throw UsageError("explanation_loss: explainer output has no head output");
  }
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < batch.size; ++b) {
    const data::Encoded& e = *batch.items[b];
    if (e.doc_length() == 0) continue;
    Tensor start = span_start_loss(
        out.spans[b].start_probs,
        start_indicators(e.gold_spans, e.doc_length()));
    Tensor end = span_end_loss(out.spans[b].end_probs,
                               boundaries(e.gold_spans));
    parts.push_back(span_total_loss(start, end));
  }
  if (parts.empty()) return Tensor::scalar(0.0);
  return scale(sum(stack_rows(parts)), inv);
}

}  // namespace etp::loss
