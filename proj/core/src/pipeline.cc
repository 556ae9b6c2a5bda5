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

#include "etp/pipeline.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "etp/checkpoint.h"
#include "etp/errors.h"
#include "etp/optim.h"

namespace etp::pipeline {

namespace {

// Seeds derived from the run seed, one stream per purpose.
constexpr std::uint64_t kExplainerInit = 0x1;
constexpr std::uint64_t kPredictorInit = 0x2;
constexpr std::uint64_t kExplainerTrain = 0x3;
constexpr std::uint64_t kPredictorTrain = 0x4;
constexpr std::uint64_t kRandomRationale = 0x5;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

std::vector<int> batch_labels(const data::Batch& batch) {
  std::vector<int> labels;
  labels.reserve(batch.size);
  for (const data::Encoded* e : batch.items) labels.push_back(e->label);
  return labels;
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<Mask> gold_masks(const std::vector<data::Instance>& data) {
  std::vector<Mask> out;
  out.reserve(data.size());
  for (const data::Instance& inst : data) out.push_back(inst.rationale);
  return out;
}

std::vector<int> gold_labels(const std::vector<data::Instance>& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const data::Instance& inst : data) out.push_back(inst.label);
  return out;
}

void emit(const TrainConfig& config, const std::string& line) {
  if (config.log) config.log(line);
}

std::string epoch_line(const char* stage, const EpochRecord& r) {
  std::ostringstream s;
  s << stage << " epoch " << r.epoch << ": L_task=" << r.task_loss
    << " L_exp=" << r.exp_loss << " L_loss=" << r.total_loss
    << " val_macro_f1=" << r.val_macro_f1
    << " val_token_f1=" << r.val_token_f1;
  return s.str();
}

struct ValidationScore {
  double macro_f1 = 0.0;
  double token_f1 = 0.0;
};

ValidationScore validate_explainer(const model::ExplainerModel& model,
                                   const data::Featurizer& featurizer,
                                   const std::vector<data::Instance>& val,
                                   const TrainConfig& config) {
  const std::vector<Rationale> r =
      explain_instances(model, featurizer, val, config);
  std::vector<int> pred;
  std::vector<Mask> hard;
  for (const Rationale& x : r) {
    pred.push_back(argmax(x.aux_probs));
    hard.push_back(x.hard);
  }
  ValidationScore s;
  s.macro_f1 =
      metrics::macro_f1(pred, gold_labels(val), model.config().num_classes);
  s.token_f1 = metrics::token_agreement(hard, gold_masks(val)).macro.f1;
  return s;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string(what) + " became non-finite");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("config: epochs must be >= 1");
  if (patience < 0) throw UsageError("config: patience must be >= 0");
  if (batch_size < 1) throw UsageError("config: batch_size must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw UsageError("config: lambda must be a finite value >= 0");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw UsageError("config: threshold must lie in (0, 1)");
  }
  if (!(learning_rate > 0.0)) {
    throw UsageError("config: learning_rate must be positive");
  }
  if (wildcard.empty()) throw UsageError("config: wildcard must be non-empty");
  if (max_length < 2) throw UsageError("config: max_length must be >= 2");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_pairs()
    const {
  return {
      {"lambda", format_double(lambda)},
      {"epochs", std::to_string(epochs)},
      {"patience", std::to_string(patience)},
      {"batch_size", std::to_string(batch_size)},
      {"learning_rate", format_double(learning_rate)},
      {"seed", std::to_string(seed)},
      {"wildcard", wildcard},
      {"threshold", format_double(threshold)},
      {"exp_weighting", loss::to_string(exp_weighting)},
      {"subword", data::to_string(subword)},
      {"max_length", std::to_string(max_length)},
      {"head", model::to_string(model.head)},
      {"embed_dim", std::to_string(model.embed_dim)},
      {"encoder_hidden", std::to_string(model.encoder_hidden)},
      {"encoder_layers", std::to_string(model.encoder_layers)},
      {"task_hidden", std::to_string(model.task_hidden)},
      {"token_head_hidden", std::to_string(model.token_head_hidden)},
      {"span_hidden", std::to_string(model.span_hidden)},
      {"dropout", format_double(model.dropout)},
  };
}

std::string History::csv() const {
  std::ostringstream out;
  out << "epoch,L_task,L_exp,L_loss,val_macro_f1,val_token_f1\n";
  for (const EpochRecord& r : epochs) {
    out << r.epoch << ',' << format_double(r.task_loss) << ','
        << format_double(r.exp_loss) << ',' << format_double(r.total_loss)
        << ',' << format_double(r.val_macro_f1) << ','
        << format_double(r.val_token_f1) << '\n';
  }
  return out.str();
}

std::vector<Rationale> explain_instances(const model::ExplainerModel& model,
                                         const data::Featurizer& featurizer,
                                         const std::vector<data::Instance>& data,
                                         const TrainConfig& config) {
  const std::vector<data::Encoded> encoded = featurizer.encode_all(data);
  std::vector<Rationale> out;
  out.reserve(data.size());
  std::size_t next = 0;
  for (const data::Batch& batch :
       data::batchify(encoded, std::max<std::size_t>(config.batch_size, 32))) {
    const std::vector<model::Explanation> ex = model::explain(model, batch);
    for (std::size_t b = 0; b < batch.size; ++b, ++next) {
      const data::Encoded& enc = *batch.items[b];
      const std::size_t words = data[next].document.size();
      Rationale r;
      r.aux_probs = ex[b].class_probs;
      r.hard = model::hard_rationale(ex[b], enc, model.config().head,
                                     config.threshold, words);
      r.spans = mask_to_spans(r.hard);
      r.soft = model::soft_rationale(ex[b], enc, words);
      out.push_back(std::move(r));
    }
  }
  return out;
}

loss::LossBreakdown explainer_objective(const model::ExplainerModel& model,
                                        const data::Featurizer& featurizer,
                                        const std::vector<data::Instance>& data,
                                        const TrainConfig& config) {
  NoGradGuard no_grad;
  const std::vector<data::Encoded> encoded = featurizer.encode_all(data);
  double task = 0.0, exp = 0.0;
  for (const data::Batch& batch : data::batchify(encoded, config.batch_size)) {
    const model::ExplainerOutput out = model.forward(batch, false, nullptr);
    const double w = static_cast<double>(batch.size);
    task += w * loss::task_loss(out.class_probs, batch_labels(batch)).item();
    exp += w * loss::explanation_loss(out, batch, config.exp_weighting).item();
  }
  const auto n = static_cast<double>(std::max<std::size_t>(data.size(), 1));
  return loss::combined_loss(task / n, exp / n, config.lambda);
}

double predictor_objective(const model::PredictorModel& model,
                           const data::Featurizer& featurizer,
                           const std::vector<data::Instance>& data,
                           const TrainConfig& config) {
  NoGradGuard no_grad;
  const std::vector<data::Encoded> encoded = featurizer.encode_all(data);
  double task = 0.0;
  for (const data::Batch& batch : data::batchify(encoded, config.batch_size)) {
    const Tensor probs = model.forward(batch, false, nullptr);
    task += static_cast<double>(batch.size) *
            loss::task_loss(probs, batch_labels(batch)).item();
  }
  return task / static_cast<double>(std::max<std::size_t>(data.size(), 1));
}

History train_explainer(model::ExplainerModel& model,
                        const data::Featurizer& featurizer,
                        const std::vector<data::Instance>& train,
                        const std::vector<data::Instance>& val,
                        const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw UsageError("train_explainer: empty training set");
  if (val.empty()) throw UsageError("train_explainer: empty validation set");
  const std::vector<data::Encoded> encoded = featurizer.encode_all(train);
  ParameterSet params = model.parameters();
  AdamState adam = make_adam_state(params);
  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  std::mt19937_64 rng(derive_seed(config.seed, kExplainerTrain));

  History history;
  std::vector<Matrix> best = params.snapshot();
  double best_score = -1.0;
  int stale = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double task_sum = 0.0, exp_sum = 0.0;
    const auto order = shuffled(encoded.size(), rng);
    for (const data::Batch& batch :
         data::batchify(encoded, config.batch_size, order)) {
      const model::ExplainerOutput out = model.forward(batch, true, &rng);
      const Tensor task = loss::task_loss(out.class_probs, batch_labels(batch));
      const Tensor exp =
          loss::explanation_loss(out, batch, config.exp_weighting);
      const Tensor total = loss::combined_loss(task, exp, config.lambda);
      try {
        require_finite(total.item(), "stage-1 loss");
        params.zero_grad();
        backward(total);
        adam_step(params, adam, adam_config);
      } catch (const NumericalError&) {
        params.restore(best);
        throw;
      }
      const double w = static_cast<double>(batch.size);
      task_sum += w * task.item();
      exp_sum += w * exp.item();
    }
    const auto n = static_cast<double>(encoded.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.task_loss = task_sum / n;
    rec.exp_loss = exp_sum / n;
    rec.total_loss =
        loss::combined_loss(rec.task_loss, rec.exp_loss, config.lambda).total;
    const ValidationScore v = validate_explainer(model, featurizer, val, config);
    rec.val_macro_f1 = v.macro_f1;
    rec.val_token_f1 = v.token_f1;
    rec.val_criterion = metrics::lambda_criterion(v.macro_f1, v.token_f1);
    history.epochs.push_back(rec);
    emit(config, epoch_line("stage1", rec));
    if (rec.val_criterion > best_score) {
      best_score = rec.val_criterion;
      best = params.snapshot();
      history.best_epoch = epoch;
      stale = 0;
    } else if (++stale > config.patience) {
      history.stopped_early = true;
      break;
    }
  }
  params.restore(best);
  return history;
}

std::vector<std::size_t> filter_indices(const model::ExplainerModel& model,
                                        const data::Featurizer& featurizer,
                                        const std::vector<data::Instance>& data,
                                        const TrainConfig& config) {
  const std::vector<data::Encoded> encoded = featurizer.encode_all(data);
  std::vector<std::size_t> keep;
  std::size_t next = 0;
  for (const data::Batch& batch :
       data::batchify(encoded, std::max<std::size_t>(config.batch_size, 32))) {
    for (const model::Explanation& e : model::explain(model, batch)) {
      if (argmax(e.class_probs) == data[next].label) keep.push_back(next);
      ++next;
    }
  }
  return keep;
}

std::vector<data::Instance> filter_training_instances(
    const model::ExplainerModel& model, const data::Featurizer& featurizer,
    const std::vector<data::Instance>& data, const TrainConfig& config) {
  std::vector<data::Instance> out;
  for (std::size_t i : filter_indices(model, featurizer, data, config)) {
    out.push_back(data[i]);
  }
  return out;
}

std::vector<data::Instance> build_masked_dataset(
    const model::ExplainerModel& model, const data::Featurizer& featurizer,
    const std::vector<data::Instance>& data, const TrainConfig& config) {
  const std::vector<Rationale> r =
      explain_instances(model, featurizer, data, config);
  std::vector<data::Instance> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back(model::mask_instance(data[i], r[i].hard, config.wildcard));
  }
  return out;
}

std::vector<std::vector<double>> classify(const model::PredictorModel& model,
                                          const data::Featurizer& featurizer,
                                          const std::vector<data::Instance>& data,
                                          std::size_t batch_size) {
  const std::vector<data::Encoded> encoded = featurizer.encode_all(data);
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  for (const data::Batch& batch :
       data::batchify(encoded, std::max<std::size_t>(batch_size, 32))) {
    for (auto& p : model::predict_proba(model, batch)) {
      out.push_back(std::move(p));
    }
  }
  return out;
}

History train_predictor(model::PredictorModel& model,
                        const data::Featurizer& featurizer,
                        const std::vector<data::Instance>& train,
                        const std::vector<data::Instance>& val,
                        const TrainConfig& config, double val_token_f1) {
  config.validate();
  if (train.empty()) {
    throw UsageError("train_predictor: no training instances survived");
  }
  if (val.empty()) throw UsageError("train_predictor: empty validation set");
  const std::vector<data::Encoded> encoded = featurizer.encode_all(train);
  ParameterSet params = model.parameters();
  AdamState adam = make_adam_state(params);
  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  std::mt19937_64 rng(derive_seed(config.seed, kPredictorTrain));
  const std::vector<int> val_gold = gold_labels(val);

  History history;
  std::vector<Matrix> best = params.snapshot();
  double best_score = -1.0;
  int stale = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double task_sum = 0.0;
    const auto order = shuffled(encoded.size(), rng);
    for (const data::Batch& batch :
         data::batchify(encoded, config.batch_size, order)) {
      const Tensor probs = model.forward(batch, true, &rng);
      const Tensor task = loss::task_loss(probs, batch_labels(batch));
      try {
        require_finite(task.item(), "stage-2 loss");
        params.zero_grad();
        backward(task);
        adam_step(params, adam, adam_config);
      } catch (const NumericalError&) {
        params.restore(best);
        throw;
      }
      task_sum += static_cast<double>(batch.size) * task.item();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.task_loss = task_sum / static_cast<double>(encoded.size());
    rec.total_loss = rec.task_loss;
    std::vector<int> pred;
    for (const auto& p : classify(model, featurizer, val, config.batch_size)) {
      pred.push_back(argmax(p));
    }
    rec.val_macro_f1 =
        metrics::macro_f1(pred, val_gold, model.config().num_classes);
    rec.val_token_f1 = val_token_f1;
    rec.val_criterion = rec.val_macro_f1;
    history.epochs.push_back(rec);
    emit(config, epoch_line("stage2", rec));
    if (rec.val_criterion > best_score) {
      best_score = rec.val_criterion;
      best = params.snapshot();
      history.best_epoch = epoch;
      stale = 0;
    } else if (++stale > config.patience) {
      history.stopped_early = true;
      break;
    }
  }
  params.restore(best);
  return history;
}

PipelineState run_pipeline(const std::vector<data::Instance>& train,
                           const std::vector<data::Instance>& val,
                           const data::LabelMap& labels,
                           const TrainConfig& config) {
  config.validate();
  data::Featurizer featurizer(
      data::Featurizer::build_vocabulary(train, config.subword,
                                         config.wildcard),
      config.subword, config.max_length);
  model::ModelConfig mc = config.model;
  mc.vocab_size = featurizer.vocab().size();
  mc.num_classes = static_cast<int>(std::max<std::size_t>(labels.size(), 2));
  mc.validate();

  PipelineState state{config,
                      featurizer,
                      labels,
                      model::ExplainerModel(
                          mc, derive_seed(config.seed, kExplainerInit)),
                      std::nullopt,
                      {},
                      std::nullopt,
                      0};
  state.config.model = mc;
  state.stage1 = train_explainer(state.explainer, featurizer, train, val,
                                 state.config);

  const std::vector<data::Instance> kept =
      filter_training_instances(state.explainer, featurizer, train, config);
  state.num_filtered = kept.size();
  emit(config, "filter: kept " + std::to_string(kept.size()) + " of " +
                   std::to_string(train.size()) + " training instances");
  if (kept.empty()) {
    emit(config, "warning: the auxiliary head got every training label wrong");
  }
  const auto masked_train =
      build_masked_dataset(state.explainer, featurizer, kept, config);
  const auto masked_val =
      build_masked_dataset(state.explainer, featurizer, val, config);
  const double best_token_f1 =
      state.stage1.epochs[static_cast<std::size_t>(state.stage1.best_epoch - 1)]
          .val_token_f1;

  model::PredictorModel predictor(mc,
                                  derive_seed(config.seed, kPredictorInit));
  state.stage2 = train_predictor(predictor, featurizer, masked_train,
                                 masked_val, state.config, best_token_f1);
  state.predictor = std::move(predictor);
  return state;
}

std::vector<Prediction> infer(const PipelineState& state,
                              const std::vector<data::Instance>& data) {
  if (!state.predictor) throw UsageError("infer: stage 2 has not been run");
  std::vector<Rationale> r =
      explain_instances(state.explainer, state.featurizer, data, state.config);
  std::vector<data::Instance> masked;
  masked.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    masked.push_back(
        model::mask_instance(data[i], r[i].hard, state.config.wildcard));
  }
  auto probs = classify(*state.predictor, state.featurizer, masked,
                        state.config.batch_size);
  std::vector<Prediction> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i].id = data[i].id;
    out[i].label = argmax(probs[i]);
    out[i].probs = std::move(probs[i]);
    out[i].rationale = std::move(r[i]);
  }
  return out;
}

metrics::MetricsReport evaluate_predictions(
    const std::vector<data::Instance>& gold,
    const std::vector<Prediction>& predictions, int num_classes,
    const metrics::BatchClassifier* predictor, const std::string& wildcard,
    std::uint64_t seed) {
  if (gold.size() != predictions.size()) {
    throw DataError("evaluate: " + std::to_string(predictions.size()) +
                    " predictions for " + std::to_string(gold.size()) +
                    " instances");
  }
  metrics::EvaluationInput in;
  in.num_classes = num_classes;
  std::vector<Mask> hard;
  bool have_soft = true;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Prediction& p = predictions[i];
    if (p.rationale.hard.size() != gold[i].document.size()) {
      throw DataError("evaluate: rationale of '" + p.id +
                      "' does not match its document length");
    }
    in.gold_labels.push_back(gold[i].label);
    in.pred_labels.push_back(p.label);
    in.gold_rationales.push_back(gold[i].rationale);
    in.pred_rationales.push_back(p.rationale.hard);
    have_soft = have_soft && p.rationale.soft.size() == gold[i].document.size();
  }
  if (have_soft) {
    for (const Prediction& p : predictions) {
      in.soft_scores.push_back(p.rationale.soft);
    }
  }
  metrics::MetricsReport report = metrics::agreement_report(in);
  if (predictor != nullptr && !gold.empty()) {
    const metrics::Faithfulness f =
        metrics::faithfulness(*predictor, gold, in.pred_rationales, wildcard);
    report.comprehensiveness = f.mean_comprehensiveness();
    report.sufficiency = f.mean_sufficiency();
    std::mt19937_64 rng(derive_seed(seed, kRandomRationale));
    std::vector<Mask> random;
    for (const Mask& m : in.pred_rationales) {
      random.push_back(metrics::random_mask_like(m, rng));
    }
    const metrics::Faithfulness fr =
        metrics::faithfulness(*predictor, gold, random, wildcard);
    report.random_comprehensiveness = fr.mean_comprehensiveness();
    report.random_sufficiency = fr.mean_sufficiency();
  }
  return report;
}

metrics::MetricsReport evaluate(const PipelineState& state,
                                const std::vector<data::Instance>& data,
                                const std::vector<Prediction>& predictions) {
  if (!state.predictor) throw UsageError("evaluate: stage 2 has not been run");
  const metrics::BatchClassifier classifier =
      [&](const std::vector<data::Instance>& xs) {
        return classify(*state.predictor, state.featurizer, xs,
                        state.config.batch_size);
      };
  return evaluate_predictions(data, predictions,
                              state.config.model.num_classes, &classifier,
                              state.config.wildcard, state.config.seed);
}

}  // namespace etp::pipeline
