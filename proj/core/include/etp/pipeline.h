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

// Two-phase training and inference.
//
// Stage 1 trains the explainer on L_task + lambda * L_exp. Training
// instances whose auxiliary prediction matches the gold label are then
// masked with the explainer's hard rationale, and stage 2 trains an
// independent predictor on them with the task loss alone. Inference is
// explain -> mask -> predict; the auxiliary head is not consulted.

#ifndef ETP_PIPELINE_H_
#define ETP_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "etp/data.h"
#include "etp/loss.h"
#include "etp/metrics.h"
#include "etp/model.h"

namespace etp::pipeline {

struct TrainConfig {
  double lambda = 1.0;
  int epochs = 10;
  int patience = 3;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;
  std::string wildcard = data::kDefaultWildcard;
  double threshold = 0.5;
  loss::ExpWeighting exp_weighting = loss::ExpWeighting::kInversePrior;
  data::SubwordMode subword = data::SubwordMode::kWord;
  std::size_t max_length = 512;
  // Architecture; vocab_size and num_classes are filled in from the data.
  model::ModelConfig model;

  // Optional progress sink, one line per epoch.
  std::function<void(const std::string&)> log;

  void validate() const;
  // Flat key=value pairs (no log sink), stable order.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
};

struct EpochRecord {
  int epoch = 0;
  double task_loss = 0.0;
  double exp_loss = 0.0;
  double total_loss = 0.0;
  double val_macro_f1 = 0.0;
  double val_token_f1 = 0.0;
  double val_criterion = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; 0 if no epoch completed
  bool stopped_early = false;

  // epoch,L_task,L_exp,L_loss,val_macro_f1,val_token_f1
  std::string csv() const;
};

// Per-instance explainer output at word level.
struct Rationale {
  std::vector<double> aux_probs;  // auxiliary head
  Mask hard;                      // per document word
  SpanSet spans;                  // mask_to_spans(hard)
  std::vector<double> soft;       // per document word
};

std::vector<Rationale> explain_instances(const model::ExplainerModel& model,
                                         const data::Featurizer& featurizer,
                                         const std::vector<data::Instance>& data,
                                         const TrainConfig& config);

// Mean training objective over `data` in evaluation mode (no dropout).
loss::LossBreakdown explainer_objective(const model::ExplainerModel& model,
                                        const data::Featurizer& featurizer,
                                        const std::vector<data::Instance>& data,
                                        const TrainConfig& config);
double predictor_objective(const model::PredictorModel& model,
                           const data::Featurizer& featurizer,
                           const std::vector<data::Instance>& data,
                           const TrainConfig& config);

// Trains `model` in place and leaves it at the best validation epoch
// (macro F1 of the auxiliary head + token F1). A non-finite loss restores the
// best weights seen so far and throws NumericalError.
History train_explainer(model::ExplainerModel& model,
                        const data::Featurizer& featurizer,
                        const std::vector<data::Instance>& train,
                        const std::vector<data::Instance>& val,
                        const TrainConfig& config);

// Indices of instances whose auxiliary prediction equals the gold label.
std::vector<std::size_t> filter_indices(const model::ExplainerModel& model,
                                        const data::Featurizer& featurizer,
                                        const std::vector<data::Instance>& data,
                                        const TrainConfig& config);
std::vector<data::Instance> filter_training_instances(
    const model::ExplainerModel& model, const data::Featurizer& featurizer,
    const std::vector<data::Instance>& data, const TrainConfig& config);

// Documents replaced by mask_input(document, hard rationale, wildcard);
// labels, queries, ids and gold rationales are preserved.
std::vector<data::Instance> build_masked_dataset(
    const model::ExplainerModel& model, const data::Featurizer& featurizer,
    const std::vector<data::Instance>& data, const TrainConfig& config);

// Task loss only; early stopping on validation macro F1. Throws UsageError
// on an empty training set. `val_token_f1` is copied into the history.
History train_predictor(model::PredictorModel& model,
                        const data::Featurizer& featurizer,
                        const std::vector<data::Instance>& train,
                        const std::vector<data::Instance>& val,
                        const TrainConfig& config, double val_token_f1 = 0.0);

std::vector<std::vector<double>> classify(const model::PredictorModel& model,
                                          const data::Featurizer& featurizer,
                                          const std::vector<data::Instance>& data,
                                          std::size_t batch_size);

struct PipelineState {
  TrainConfig config;
  data::Featurizer featurizer;
  data::LabelMap labels;
  model::ExplainerModel explainer;
  std::optional<model::PredictorModel> predictor;
  History stage1;
  std::optional<History> stage2;
  std::size_t num_filtered = 0;  // stage-2 training set size
};

// Builds the vocabulary from `train` and runs both stages.
PipelineState run_pipeline(const std::vector<data::Instance>& train,
                           const std::vector<data::Instance>& val,
                           const data::LabelMap& labels,
                           const TrainConfig& config);

struct Prediction {
  std::string id;
  int label = 0;
  std::vector<double> probs;  // predictor on the masked input
  Rationale rationale;
};

// explain -> mask -> predict. Throws UsageError before stage 2 exists.
std::vector<Prediction> infer(const PipelineState& state,
                              const std::vector<data::Instance>& data);

// Full metric battery: agreement metrics on the hard rationale, AUPRC of
// the soft scores, and faithfulness of the predictor for predicted and
// random same-size rationales (seeded from config.seed).
metrics::MetricsReport evaluate(const PipelineState& state,
                                const std::vector<data::Instance>& data,
                                const std::vector<Prediction>& predictions);

// Scores externally supplied predictions; faithfulness needs `predictor`.
metrics::MetricsReport evaluate_predictions(
    const std::vector<data::Instance>& gold,
    const std::vector<Prediction>& predictions, int num_classes,
    const metrics::BatchClassifier* predictor, const std::string& wildcard,
    std::uint64_t seed);

}  // namespace etp::pipeline

#endif  // ETP_PIPELINE_H_
