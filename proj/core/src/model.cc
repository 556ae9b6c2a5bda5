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

#include "etp/model.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "etp/errors.h"

namespace etp::model {

const char* to_string(HeadKind kind) {
  return kind == HeadKind::kToken ? "token" : "span";
}

HeadKind parse_head_kind(const std::string& s) {
  if (s == "token") return HeadKind::kToken;
  if (s == "span") return HeadKind::kSpan;
  throw UsageError("unknown explanation head '" + s + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (vocab_size <= data::kUnknownId) {
    throw UsageError("model: vocabulary too small");
  }
  if (num_classes < 2) throw UsageError("model: need at least two classes");
  if (embed_dim == 0 || encoder_hidden == 0 || encoder_layers == 0 ||
      task_hidden == 0 || token_head_hidden == 0 || span_hidden == 0) {
    throw UsageError("model: layer sizes must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw UsageError("model: dropout must lie in [0, 1)");
  }
}

void ModelConfig::write_meta(
    std::vector<std::pair<std::string, std::string>>& meta) const {
  auto put = [&](const char* key, const std::string& v) {
    meta.emplace_back(std::string("model.") + key, v);
  };
  put("vocab_size", std::to_string(vocab_size));
  put("num_classes", std::to_string(num_classes));
  put("embed_dim", std::to_string(embed_dim));
  put("encoder_hidden", std::to_string(encoder_hidden));
  put("encoder_layers", std::to_string(encoder_layers));
  put("task_hidden", std::to_string(task_hidden));
  put("token_head_hidden", std::to_string(token_head_hidden));
  put("span_hidden", std::to_string(span_hidden));
  put("dropout", format_double(dropout));
  put("head", to_string(head));
}

ModelConfig ModelConfig::from_meta(const Checkpoint& checkpoint) {
  auto get = [&](const char* key) -> const std::string& {
    const std::string* v = checkpoint.find_meta(std::string("model.") + key);
    if (v == nullptr) {
      throw DataError(std::string("checkpoint: missing metadata model.") +
                      key);
    }
    return *v;
  };
  auto size = [&](const char* key) {
    return static_cast<std::size_t>(std::stoull(get(key)));
  };
  ModelConfig c;
  c.vocab_size = size("vocab_size");
  c.num_classes = std::stoi(get("num_classes"));
  c.embed_dim = size("embed_dim");
  c.encoder_hidden = size("encoder_hidden");
  c.encoder_layers = size("encoder_layers");
  c.task_hidden = size("task_hidden");
  c.token_head_hidden = size("token_head_hidden");
  c.span_hidden = size("span_hidden");
  c.dropout = parse_double(get("dropout"));
  c.head = parse_head_kind(get("head"));
  c.validate();
  return c;
}

namespace {

// B x (T*B) matrix averaging each item's valid rows.
Matrix pooling_matrix(const std::vector<double>& valid, std::size_t steps,
                      std::size_t batch) {
  Matrix pool = Matrix::Zero(static_cast<Eigen::Index>(batch),
                             static_cast<Eigen::Index>(steps * batch));
  for (std::size_t b = 0; b < batch; ++b) {
    double count = 0.0;
    for (std::size_t t = 0; t < steps; ++t) count += valid[t * batch + b];
    if (count == 0.0) continue;
    for (std::size_t t = 0; t < steps; ++t) {
      pool(static_cast<Eigen::Index>(b),
           static_cast<Eigen::Index>(t * batch + b)) =
          valid[t * batch + b] / count;
    }
  }
  return pool;
}

Matrix column(const std::vector<double>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = v[i];
  }
  return m;
}

// Flat time-major rows of item b's document positions.
std::vector<int> document_rows(const data::Batch& batch, std::size_t b) {
  const data::Encoded& e = *batch.items[b];
  std::vector<int> rows;
  rows.reserve(e.doc_length());
  for (std::size_t t = e.doc_begin; t < e.ids.size(); ++t) {
    rows.push_back(static_cast<int>(batch.flat(t, b)));
  }
  return rows;
}

std::vector<double> to_vector(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// TextEncoder

TextEncoder::TextEncoder(const ModelConfig& config, std::mt19937_64& rng) {
  embedding = uniform_parameter(config.vocab_size, config.embed_dim, 0.1, rng);
  std::size_t in = config.embed_dim;
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    layers.push_back(BiGruWeights::init(in, config.encoder_hidden, rng));
    in = 2 * config.encoder_hidden;
  }
}

EncoderOutput TextEncoder::encode(const std::vector<int>& ids,
                                  const std::vector<double>& valid,
                                  std::size_t steps, std::size_t batch) const {
  if (ids.size() != steps * batch || valid.size() != steps * batch) {
    throw DimensionError("encode: expected " + std::to_string(steps * batch) +
                         " ids and mask entries, got " +
                         std::to_string(ids.size()) + " and " +
                         std::to_string(valid.size()));
  }
  const int vocab = static_cast<int>(embedding.rows());
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw DataError("encode: token id " + std::to_string(id) +
                      " outside the vocabulary of " + std::to_string(vocab));
    }
  }
  Tensor h = gather_rows(embedding, ids);
  for (const auto& layer : layers) {
    h = bigru_sequence(h, steps, batch, valid, layer);
  }
  EncoderOutput out;
  out.token_reps = h;
  out.pooled = matmul(Tensor::constant(pooling_matrix(valid, steps, batch)), h);
  out.steps = steps;
  out.batch = batch;
  return out;
}

EncoderOutput TextEncoder::encode(const data::Batch& batch) const {
  return encode(batch.ids, batch.valid, batch.steps, batch.size);
}

ParameterSet TextEncoder::parameters() const {
  ParameterSet p;
  p.add("embedding", embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    p.add_all("layer" + std::to_string(l) + ".", layers[l].parameters());
  }
  return p;
}

// ---------------------------------------------------------------------------
// TaskHead

TaskHead::TaskHead(const ModelConfig& config, std::mt19937_64& rng)
    : dropout_rate(config.dropout) {
  hidden_weight = xavier_parameter(config.rep_dim(), config.task_hidden, rng);
  hidden_bias = zero_parameter(1, config.task_hidden);
  output_weight = xavier_parameter(
      config.task_hidden, static_cast<std::size_t>(config.num_classes), rng);
  output_bias = zero_parameter(1, static_cast<std::size_t>(config.num_classes));
}

Tensor TaskHead::forward(const Tensor& pooled, bool training,
                         std::mt19937_64* rng) const {
  Tensor x = pooled;
  if (training && dropout_rate > 0.0) {
    if (rng == nullptr) throw UsageError("TaskHead: training needs an rng");
    x = dropout(x, dropout_rate, *rng, true);
  }
  Tensor hidden = tanh(add(matmul(x, hidden_weight), hidden_bias));
  return softmax(add(matmul(hidden, output_weight), output_bias));
}

ParameterSet TaskHead::parameters() const {
  ParameterSet p;
  p.add("hidden.w", hidden_weight);
  p.add("hidden.b", hidden_bias);
  p.add("output.w", output_weight);
  p.add("output.b", output_bias);
  return p;
}

// ---------------------------------------------------------------------------
// TokenHead

TokenHead::TokenHead(const ModelConfig& config, std::mt19937_64& rng) {
  gru = GruWeights::init(config.rep_dim(), config.token_head_hidden, rng);
  score_weight = xavier_parameter(config.token_head_hidden, 1, rng);
  score_bias = zero_parameter(1, 1);
}

Tensor TokenHead::forward(const EncoderOutput& enc,
                          const data::Batch& batch) const {
  Tensor states =
      gru_sequence(enc.token_reps, enc.steps, enc.batch, batch.valid, gru,
                   /*reverse=*/false);
  Tensor scores = sigmoid(add(matmul(states, score_weight), score_bias));
  return mul(scores, Tensor::constant(column(batch.document)));
}

ParameterSet TokenHead::parameters() const {
  ParameterSet p;
  p.add_all("gru.", gru.parameters());
  p.add("score.w", score_weight);
  p.add("score.b", score_bias);
  return p;
}

// ---------------------------------------------------------------------------
// SpanHead

SpanHead::SpanHead(const ModelConfig& config, std::mt19937_64& rng) {
  const std::size_t d = config.span_hidden;
  first = BiGruWeights::init(config.rep_dim(), d, rng);
  second = BiGruWeights::init(config.rep_dim() + 6 * d, d, rng);
  start_weight = xavier_parameter(2 * d, 1, rng);
  start_bias = zero_parameter(1, 1);
  const std::size_t h = config.rep_dim() + 2 * d;
  end_weight = uniform_parameter(h, h, 1.0 / static_cast<double>(h), rng);
}

std::vector<SpanOutput> SpanHead::forward(const EncoderOutput& enc,
                                          const data::Batch& batch) const {
  const std::size_t steps = enc.steps;
  const std::size_t n = enc.batch;
  const Tensor& reps = enc.token_reps;

  Tensor m1 = bigru_sequence(reps, steps, n, batch.valid, first);
  Tensor start_all = mul(sigmoid(add(matmul(m1, start_weight), start_bias)),
                         Tensor::constant(column(batch.document)));

  // Item selector: select(b, t*n + b) = 1.
  Matrix select = Matrix::Zero(static_cast<Eigen::Index>(n),
                               static_cast<Eigen::Index>(steps * n));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < n; ++b) {
      select(static_cast<Eigen::Index>(b),
             static_cast<Eigen::Index>(t * n + b)) = 1.0;
    }
  }
  Tensor attended =
      matmul(Tensor::constant(select), mul(m1, start_all));  // n x 2d
  Tensor spread = matmul(Tensor::constant(select.transpose()), attended);
  Tensor m1_tilde = mul(m1, spread);
  Tensor second_in = concat({reps, m1, m1_tilde, mul(m1, m1_tilde)});
  Tensor m2 = bigru_sequence(second_in, steps, n, batch.valid, second);
  Tensor h = concat({reps, m2});

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<SpanOutput> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::vector<int> rows = document_rows(batch, b);
    SpanOutput item;
    if (rows.empty()) {
      item.start_probs = Tensor::zeros(0, 1);
      item.end_probs = Tensor::zeros(0, 0);
      out.push_back(std::move(item));
      continue;
    }
    const auto len = static_cast<Eigen::Index>(rows.size());
    Tensor hd = gather_rows(h, rows);
    Tensor logits = matmul(matmul(hd, end_weight), transpose(hd));
    Matrix upper = Matrix::Zero(len, len);
    for (Eigen::Index i = 0; i < len; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) upper(i, j) = kNegInf;
    }
    item.start_probs = gather_rows(start_all, rows);
    item.end_probs = softmax(logits, &upper);
    out.push_back(std::move(item));
  }
  return out;
}

ParameterSet SpanHead::parameters() const {
  ParameterSet p;
  p.add_all("first.", first.parameters());
  p.add_all("second.", second.parameters());
  p.add("start.w", start_weight);
  p.add("start.b", start_bias);
  p.add("end.w", end_weight);
  return p;
}

// ---------------------------------------------------------------------------
// ExplainerModel

namespace {

TextEncoder make_encoder(const ModelConfig& config, std::mt19937_64& rng) {
  config.validate();
  return TextEncoder(config, rng);
}

}  // namespace

ExplainerModel::ExplainerModel(const ModelConfig& config, std::uint64_t seed)
    : ExplainerModel(config, std::mt19937_64(seed)) {}

ExplainerModel::ExplainerModel(const ModelConfig& config, std::mt19937_64 rng)
    : encoder(make_encoder(config, rng)),
      task_head(config, rng),
      config_(config) {
  if (config.head == HeadKind::kToken) {
    token_head.emplace(config, rng);
  } else {
    span_head.emplace(config, rng);
  }
}

ExplainerOutput ExplainerModel::forward(const data::Batch& batch,
                                        bool training,
                                        std::mt19937_64* rng) const {
  EncoderOutput enc = encoder.encode(batch);
  ExplainerOutput out;
  out.class_probs = task_head.forward(enc.pooled, training, rng);
  if (token_head) {
    out.token_scores = token_head->forward(enc, batch);
  } else {
    out.spans = span_head->forward(enc, batch);
  }
  return out;
}

ParameterSet ExplainerModel::parameters() const {
  ParameterSet p;
  p.add_all("encoder.", encoder.parameters());
  p.add_all("task.", task_head.parameters());
  if (token_head) p.add_all("token_head.", token_head->parameters());
  if (span_head) p.add_all("span_head.", span_head->parameters());
  return p;
}

ParameterSet ExplainerModel::explanation_parameters() const {
  ParameterSet p;
  if (token_head) p.add_all("token_head.", token_head->parameters());
  if (span_head) p.add_all("span_head.", span_head->parameters());
  return p;
}

Checkpoint ExplainerModel::to_checkpoint() const {
  Checkpoint ckpt = capture(parameters());
  ckpt.meta.emplace_back("kind", "explainer");
  config_.write_meta(ckpt.meta);
  return ckpt;
}

ExplainerModel ExplainerModel::from_checkpoint(const Checkpoint& checkpoint) {
  const std::string* kind = checkpoint.find_meta("kind");
  if (kind == nullptr || *kind != "explainer") {
    throw DataError("checkpoint does not hold an explainer model");
  }
  ExplainerModel model(ModelConfig::from_meta(checkpoint), 0);
  ParameterSet params = model.parameters();
  apply(checkpoint, params);
  return model;
}

ExplainerModel ExplainerModel::clone() const {
  return from_checkpoint(to_checkpoint());
}

// ---------------------------------------------------------------------------
// PredictorModel

PredictorModel::PredictorModel(const ModelConfig& config, std::uint64_t seed)
    : PredictorModel(config, std::mt19937_64(seed)) {}

PredictorModel::PredictorModel(const ModelConfig& config, std::mt19937_64 rng)
    : encoder(make_encoder(config, rng)),
      task_head(config, rng),
      config_(config) {}

Tensor PredictorModel::forward(const data::Batch& batch, bool training,
                               std::mt19937_64* rng) const {
  EncoderOutput enc = encoder.encode(batch);
  return task_head.forward(enc.pooled, training, rng);
}

ParameterSet PredictorModel::parameters() const {
  ParameterSet p;
  p.add_all("encoder.", encoder.parameters());
  p.add_all("task.", task_head.parameters());
  return p;
}

Checkpoint PredictorModel::to_checkpoint() const {
  Checkpoint ckpt = capture(parameters());
  ckpt.meta.emplace_back("kind", "predictor");
  config_.write_meta(ckpt.meta);
  return ckpt;
}

PredictorModel PredictorModel::from_checkpoint(const Checkpoint& checkpoint) {
  const std::string* kind = checkpoint.find_meta("kind");
  if (kind == nullptr || *kind != "predictor") {
    throw DataError("checkpoint does not hold a predictor model");
  }
  PredictorModel model(ModelConfig::from_meta(checkpoint), 0);
  ParameterSet params = model.parameters();
  apply(checkpoint, params);
  return model;
}

PredictorModel PredictorModel::clone() const {
  return from_checkpoint(to_checkpoint());
}

// ---------------------------------------------------------------------------
// Evaluation helpers

std::vector<Explanation> explain(const ExplainerModel& model,
                                 const data::Batch& batch) {
  NoGradGuard no_grad;
  ExplainerOutput out = model.forward(batch, /*training=*/false, nullptr);
  std::vector<Explanation> result(batch.size);
  const Matrix& probs = out.class_probs.value();
  for (std::size_t b = 0; b < batch.size; ++b) {
    Explanation& e = result[b];
    const data::Encoded& enc = *batch.items[b];
    e.class_probs = to_vector(probs.row(static_cast<Eigen::Index>(b)));
    if (model.token_head) {
      const Matrix& scores = out.token_scores.value();
      for (std::size_t t = enc.doc_begin; t < enc.ids.size(); ++t) {
        e.token_scores.push_back(
            scores(static_cast<Eigen::Index>(batch.flat(t, b)), 0));
      }
    } else {
      e.start_probs = to_vector(out.spans[b].start_probs.value());
      e.end_probs = out.spans[b].end_probs.value();
      e.token_scores = span_coverage_scores(e.start_probs, e.end_probs);
    }
  }
  return result;
}

std::vector<std::vector<double>> predict_proba(const PredictorModel& model,
                                               const data::Batch& batch) {
  NoGradGuard no_grad;
  const Matrix probs = model.forward(batch, false, nullptr).value();
  std::vector<std::vector<double>> out;
  for (Eigen::Index b = 0; b < probs.rows(); ++b) {
    out.push_back(to_vector(probs.row(b)));
  }
  return out;
}

std::vector<double> pool_subtokens(const std::vector<double>& scores,
                                   const std::vector<Span>& groups) {
  std::size_t expected = 0;
  std::vector<double> pooled;
  pooled.reserve(groups.size());
  for (const Span& g : groups) {
    if (g.start != expected || g.end <= g.start || g.end > scores.size()) {
      throw DataError("pool_subtokens: groups must partition the " +
                      std::to_string(scores.size()) +
                      " sub-tokens in order");
    }
    pooled.push_back(*std::max_element(
        scores.begin() + static_cast<std::ptrdiff_t>(g.start),
        scores.begin() + static_cast<std::ptrdiff_t>(g.end)));
    expected = g.end;
  }
  if (expected != scores.size()) {
    throw DataError("pool_subtokens: groups do not cover every sub-token");
  }
  return pooled;
}

SpanSet decode_spans(const std::vector<double>& start_probs,
                     const Matrix& end_probs, double threshold) {
  const auto n = static_cast<Eigen::Index>(start_probs.size());
  if (end_probs.rows() != n || end_probs.cols() != n) {
    throw DimensionError("decode_spans: end probabilities " +
                         shape_string(end_probs) + " for " +
                         std::to_string(n) + " start probabilities");
  }
  SpanSet spans;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (start_probs[static_cast<std::size_t>(i)] < threshold) continue;
    Eigen::Index best = i;
    for (Eigen::Index j = i; j < n; ++j) {
      if (end_probs(i, j) > end_probs(i, best)) best = j;
    }
    const Span s{static_cast<std::size_t>(i),
                 static_cast<std::size_t>(best) + 1};
    // Starts are visited in increasing order, so only the last span can
    // overlap the new one.
    if (!spans.empty() && s.start < spans.back().end) {
      spans.back().end = std::max(spans.back().end, s.end);
    } else {
      spans.push_back(s);
    }
  }
  return spans;
}

std::vector<double> span_coverage_scores(const std::vector<double>& start_probs,
                                         const Matrix& end_probs) {
  const auto n = static_cast<Eigen::Index>(start_probs.size());
  // tail(i, k) = P(end >= k | start = i).
  Matrix tail = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index k = n - 1; k >= i; --k) {
      acc += end_probs(i, k);
      tail(i, k) = acc;
    }
  }
  std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index k = 0; k < n; ++k) {
    double best = 0.0;
    for (Eigen::Index i = 0; i <= k; ++i) {
      best = std::max(best,
                      start_probs[static_cast<std::size_t>(i)] * tail(i, k));
    }
    scores[static_cast<std::size_t>(k)] = std::min(best, 1.0);
  }
  return scores;
}

Mask hard_rationale(const Explanation& explanation, const data::Encoded& enc,
                    HeadKind head, double threshold, std::size_t num_words) {
  std::vector<double> sub(explanation.token_scores.size());
  if (head == HeadKind::kToken) {
    for (std::size_t i = 0; i < sub.size(); ++i) {
      sub[i] = explanation.token_scores[i] >= threshold ? 1.0 : 0.0;
    }
  } else {
    const SpanSet spans = decode_spans(explanation.start_probs,
                                       explanation.end_probs, threshold);
    std::fill(sub.begin(), sub.end(), 0.0);
    for (const Span& s : spans) {
      for (std::size_t i = s.start; i < s.end; ++i) sub[i] = 1.0;
    }
  }
  const std::vector<double> words = pool_subtokens(sub, enc.groups);
  Mask mask(num_words, 0);
  for (std::size_t w = 0; w < words.size() && w < num_words; ++w) {
    mask[w] = words[w] > 0.5 ? 1 : 0;
  }
  return mask;
}

std::vector<double> soft_rationale(const Explanation& explanation,
                                   const data::Encoded& enc,
                                   std::size_t num_words) {
  const std::vector<double> words =
      pool_subtokens(explanation.token_scores, enc.groups);
  std::vector<double> out(num_words, 0.0);
  std::copy_n(words.begin(), std::min(words.size(), num_words), out.begin());
  return out;
}

data::Instance mask_instance(const data::Instance& instance, const Mask& mask,
                             const std::string& wildcard) {
  data::Instance out = instance;
  out.document = mask_input(instance.document, mask, wildcard);
  return out;
}

}  // namespace etp::model
