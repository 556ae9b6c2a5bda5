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

// Networks of the explain-then-predict pipeline.
//
// ExplainerModel: one TextEncoder shared by an auxiliary TaskHead and an
// explanation head (TokenHead or SpanHead). PredictorModel: an independent
// TextEncoder + TaskHead that classifies wildcard-masked input.
//
// TextEncoder: embedding followed by stacked bidirectional GRU layers. The
// token representations have d_rep = 2 * encoder_hidden columns; the pooled
// vector is their mean over real (unpadded) positions.
//
// SpanHead, per batch item over its n document positions:
//   M1      = BiGRU(M_S)
//   p_start = sigmoid(M1 w + b)                      (n)
//   M1~[i]  = M1[i] * sum_j p_start[j] M1[j]
//   M2      = BiGRU([M_S, M1, M1~, M1 * M1~])
//   H       = [M_S, M2]
//   P(end=j | start=i) = softmax_j(H[i] W H[j]^T + U[i,j])
// with U[i,j] = -inf for j < i, so each row is a distribution over j >= i.

#ifndef ETP_MODEL_H_
#define ETP_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "etp/checkpoint.h"
#include "etp/data.h"
#include "etp/gru.h"
#include "etp/parameters.h"
#include "etp/spans.h"
#include "etp/tensor.h"

namespace etp::model {

enum class HeadKind { kToken, kSpan };

const char* to_string(HeadKind kind);
HeadKind parse_head_kind(const std::string& s);

struct ModelConfig {
  std::size_t vocab_size = 0;
  int num_classes = 2;
  std::size_t embed_dim = 64;
  std::size_t encoder_hidden = 64;
  std::size_t encoder_layers = 2;
  std::size_t task_hidden = 256;
  std::size_t token_head_hidden = 128;
  std::size_t span_hidden = 64;
  double dropout = 0.1;
  HeadKind head = HeadKind::kToken;

  std::size_t rep_dim() const { return 2 * encoder_hidden; }
  void validate() const;

  // Stored as "model.<field>" checkpoint metadata.
  void write_meta(std::vector<std::pair<std::string, std::string>>& meta) const;
  static ModelConfig from_meta(const Checkpoint& checkpoint);
};

struct EncoderOutput {
  Tensor token_reps;  // (T*B) x d_rep, time-major
  Tensor pooled;      // B x d_rep
  std::size_t steps = 0;
  std::size_t batch = 0;
};

class TextEncoder {
 public:
  TextEncoder(const ModelConfig& config, std::mt19937_64& rng);

  // `ids` and `valid` are time-major with steps * batch entries. Ids must be
  // below the vocabulary size.
  EncoderOutput encode(const std::vector<int>& ids,
                       const std::vector<double>& valid, std::size_t steps,
                       std::size_t batch) const;
  EncoderOutput encode(const data::Batch& batch) const;

  ParameterSet parameters() const;

  Tensor embedding;  // vocab x embed_dim
  std::vector<BiGruWeights> layers;
};

// dropout -> dense(task_hidden, tanh) -> dense(num_classes) -> softmax.
class TaskHead {
 public:
  TaskHead(const ModelConfig& config, std::mt19937_64& rng);

  // B x num_classes probabilities. Dropout is active only when `training`;
  // `rng` may be null in evaluation mode.
  Tensor forward(const Tensor& pooled, bool training,
                 std::mt19937_64* rng) const;
  ParameterSet parameters() const;

  Tensor hidden_weight;
  Tensor hidden_bias;
  Tensor output_weight;
  Tensor output_bias;
  double dropout_rate = 0.1;
};

// Unidirectional GRU over the token representations, then a per-token
// dense layer and sigmoid. Positions outside the document (query,
// separator, padding) are forced to 0.
class TokenHead {
 public:
  TokenHead(const ModelConfig& config, std::mt19937_64& rng);

  // (T*B) x 1 scores, time-major.
  Tensor forward(const EncoderOutput& enc, const data::Batch& batch) const;
  ParameterSet parameters() const;

  GruWeights gru;
  Tensor score_weight;
  Tensor score_bias;
};

struct SpanOutput {
  Tensor start_probs;  // n x 1 over document positions
  Tensor end_probs;    // n x n, row i = P(end | start = i)
};

class SpanHead {
 public:
  SpanHead(const ModelConfig& config, std::mt19937_64& rng);

  std::vector<SpanOutput> forward(const EncoderOutput& enc,
                                  const data::Batch& batch) const;
  ParameterSet parameters() const;

  BiGruWeights first;
  BiGruWeights second;
  Tensor start_weight;  // 2*span_hidden x 1
  Tensor start_bias;    // 1 x 1
  Tensor end_weight;    // (d_rep + 2*span_hidden) squared
};

struct ExplainerOutput {
  Tensor class_probs;               // B x num_classes (auxiliary head)
  Tensor token_scores;              // token head only
  std::vector<SpanOutput> spans;    // span head only
};

class ExplainerModel {
 public:
  ExplainerModel(const ModelConfig& config, std::uint64_t seed);
  ExplainerModel(ExplainerModel&&) = default;
  ExplainerModel& operator=(ExplainerModel&&) = default;
  ExplainerModel(const ExplainerModel&) = delete;
  ExplainerModel& operator=(const ExplainerModel&) = delete;

  ExplainerOutput forward(const data::Batch& batch, bool training,
                          std::mt19937_64* rng) const;

  // "encoder.*", "task.*", then "token_head.*" or "span_head.*". The
  // encoder tensors appear once and feed both heads.
  ParameterSet parameters() const;
  ParameterSet explanation_parameters() const;
  const ModelConfig& config() const { return config_; }

  ExplainerModel clone() const;
  Checkpoint to_checkpoint() const;
  static ExplainerModel from_checkpoint(const Checkpoint& checkpoint);

  TextEncoder encoder;
  TaskHead task_head;
  std::optional<TokenHead> token_head;
  std::optional<SpanHead> span_head;

 private:
  ExplainerModel(const ModelConfig& config, std::mt19937_64 rng);

  ModelConfig config_;
};

class PredictorModel {
 public:
  PredictorModel(const ModelConfig& config, std::uint64_t seed);
  PredictorModel(PredictorModel&&) = default;
  PredictorModel& operator=(PredictorModel&&) = default;
  PredictorModel(const PredictorModel&) = delete;
  PredictorModel& operator=(const PredictorModel&) = delete;

  // B x num_classes probabilities.
  Tensor forward(const data::Batch& batch, bool training,
                 std::mt19937_64* rng) const;
  ParameterSet parameters() const;
  const ModelConfig& config() const { return config_; }

  PredictorModel clone() const;
  Checkpoint to_checkpoint() const;
  static PredictorModel from_checkpoint(const Checkpoint& checkpoint);

  TextEncoder encoder;
  TaskHead task_head;

 private:
  PredictorModel(const ModelConfig& config, std::mt19937_64 rng);

  ModelConfig config_;
};

// ---------------------------------------------------------------------------
// Evaluation-time outputs (plain values, no graph).

struct Explanation {
  std::vector<double> class_probs;
  // Per document sub-token. Token head: p^i. Span head: the probability
  // that some decoded start at or before the token has its end at or
  // after it, max_{i<=k} p_start[i] * P(end >= k | start = i).
  std::vector<double> token_scores;
  std::vector<double> start_probs;  // span head only
  Matrix end_probs;                 // span head only
};

std::vector<Explanation> explain(const ExplainerModel& model,
                                 const data::Batch& batch);
std::vector<std::vector<double>> predict_proba(const PredictorModel& model,
                                               const data::Batch& batch);

// Word score = max over its sub-token scores. `groups` must partition
// [0, scores.size()) in order; anything else is a DataError.
std::vector<double> pool_subtokens(const std::vector<double>& scores,
                                   const std::vector<Span>& groups);

// Starts are positions with p_start >= threshold; each start i takes
// end = argmax_j P(end = j | start = i) (first maximum). Each decoded span
// is [i, end + 1); overlapping spans are merged.
SpanSet decode_spans(const std::vector<double>& start_probs,
                     const Matrix& end_probs, double threshold);

std::vector<double> span_coverage_scores(const std::vector<double>& start_probs,
                                         const Matrix& end_probs);

// Word-level hard rationale for one encoded instance: token head scores
// pooled to words and thresholded; span head spans decoded, then pooled.
// Words dropped by truncation are 0.
Mask hard_rationale(const Explanation& explanation, const data::Encoded& enc,
                    HeadKind head, double threshold, std::size_t num_words);

// Word-level soft scores (pooled sub-token scores; 0 for truncated words).
std::vector<double> soft_rationale(const Explanation& explanation,
                                   const data::Encoded& enc,
                                   std::size_t num_words);

// Replaces unselected tokens by `wildcard`. Positions flagged in `keep`
// (query, separator) are always preserved.
template <typename Token>
std::vector<Token> mask_input(const std::vector<Token>& tokens,
                              const Mask& mask, const Token& wildcard,
                              const std::vector<bool>& keep = {});

// Document masking: the query is left untouched.
data::Instance mask_instance(const data::Instance& instance, const Mask& mask,
                             const std::string& wildcard);

}  // namespace etp::model

#include "etp/model_inl.h"

#endif  // ETP_MODEL_H_
