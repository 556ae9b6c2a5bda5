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

// Evaluation battery: task metrics, hard and soft rationale agreement,
// faithfulness, explanation statistics and the lambda-selection criterion.
// Every function is pure.

#ifndef ETP_METRICS_H_
#define ETP_METRICS_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "etp/data.h"
#include "etp/spans.h"

namespace etp::metrics {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Harmonic mean with 0/0 -> 0.
double harmonic(double precision, double recall);

// Unweighted mean of per-class F1 over k classes. A class absent from both
// predictions and gold scores 0. Throws UsageError on empty or mismatched
// input and on labels outside [0, k).
double macro_f1(const std::vector<int>& pred, const std::vector<int>& gold,
                int k);

// Throws DimensionError on a length mismatch.
Prf token_prf(const Mask& pred, const Mask& gold);

struct TokenAgreement {
  Prf macro;  // per instance, then averaged
  Prf micro;  // pooled counts
};
TokenAgreement token_agreement(const std::vector<Mask>& pred,
                               const std::vector<Mask>& gold);

double iou(const Span& a, const Span& b);

// Greedy one-to-one matching by descending IOU (ties: earlier pred, then
// earlier gold); a match counts when IOU >= threshold.
double iou_f1(const SpanSet& pred, const SpanSet& gold,
              double threshold = 0.5);
double mean_iou_f1(const std::vector<SpanSet>& pred,
                   const std::vector<SpanSet>& gold, double threshold = 0.5);

// Average precision of `scores` ranked descending (ties by index). Nullopt
// when gold has no positive.
std::optional<double> auprc(const std::vector<double>& scores,
                            const Mask& gold);
// Mean over instances with at least one positive; 0 when there are none.
double mean_auprc(const std::vector<std::vector<double>>& scores,
                  const std::vector<Mask>& gold);

// Class probabilities for a list of instances.
using BatchClassifier = std::function<std::vector<std::vector<double>>(
    const std::vector<data::Instance>&)>;

struct Faithfulness {
  std::vector<double> comprehensiveness;
  std::vector<double> sufficiency;
  double mean_comprehensiveness() const;
  double mean_sufficiency() const;
};

// For each instance with predicted class j on the full input p = P(j):
//   comprehensiveness = p - P(j | rationale replaced by the wildcard)
//   sufficiency       = p - P(j | everything else replaced by the wildcard)
// Rationales are word masks over the document.
Faithfulness faithfulness(const BatchClassifier& classify,
                          const std::vector<data::Instance>& instances,
                          const std::vector<Mask>& rationales,
                          const std::string& wildcard);

// Single-instance forms.
double comprehensiveness(const BatchClassifier& classify,
                         const data::Instance& instance, const Mask& rationale,
                         const std::string& wildcard);
double sufficiency(const BatchClassifier& classify,
                   const data::Instance& instance, const Mask& rationale,
                   const std::string& wildcard);

// A mask with the same number of ones as `mask` at uniformly random
// positions.
Mask random_mask_like(const Mask& mask, std::mt19937_64& rng);

struct ExplanationStatistics {
  double macro_avg_length = 0.0;       // predicted spans
  double gold_macro_avg_length = 0.0;  // gold spans
  double precision = 0.0;              // corpus level
  double recall = 0.0;                 // corpus level
  double jaccard = 0.0;                // |p & g| / |p | g|, macro
  double one_way_jaccard = 0.0;        // |p & g| / |p|, macro
};

// Mean span length within each instance, then over instances that have at
// least one span; 0 when none do.
double macro_average_length(const std::vector<SpanSet>& spans);
ExplanationStatistics explanation_statistics(const std::vector<Mask>& pred,
                                             const std::vector<Mask>& gold);

// macro_f1 + exp_metric. Both must lie in [0, 1].
double lambda_criterion(double macro_f1, double exp_metric);

struct MetricsReport {
  std::size_t num_instances = 0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  double token_precision = 0.0;
  double token_recall = 0.0;
  double token_f1 = 0.0;
  double token_micro_precision = 0.0;
  double token_micro_recall = 0.0;
  double token_micro_f1 = 0.0;
  double iou_f1 = 0.0;
  double auprc = 0.0;
  double comprehensiveness = 0.0;
  double sufficiency = 0.0;
  double random_comprehensiveness = 0.0;
  double random_sufficiency = 0.0;
  ExplanationStatistics statistics;
  double criterion = 0.0;  // lambda_criterion(macro_f1, token_f1)

  // Ordered (key, value) pairs shared by both serializations.
  std::vector<std::pair<std::string, double>> fields() const;
  std::string to_json() const;
  std::string to_text() const;  // key=value lines
};

// Inputs of one evaluation: everything is word level over documents.
struct EvaluationInput {
  std::vector<int> gold_labels;
  std::vector<int> pred_labels;
  std::vector<Mask> gold_rationales;
  std::vector<Mask> pred_rationales;
  std::vector<std::vector<double>> soft_scores;  // may be empty
  int num_classes = 2;
};

// Agreement metrics only; faithfulness fields are left at 0.
MetricsReport agreement_report(const EvaluationInput& input);

struct SweepRow {
  double lambda = 0.0;
  MetricsReport report;
  std::string error;  // non-empty when the run failed
};

std::string sweep_csv(const std::vector<SweepRow>& rows);
// Index of the successful row with the largest criterion (first on ties).
std::optional<std::size_t> select_lambda(const std::vector<SweepRow>& rows);

}  // namespace etp::metrics

#endif  // ETP_METRICS_H_
