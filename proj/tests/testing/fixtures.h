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

// Small models, datasets and configurations that keep tests fast.

#ifndef ETP_TESTING_FIXTURES_H_
#define ETP_TESTING_FIXTURES_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "etp/data.h"
#include "etp/model.h"
#include "etp/pipeline.h"

namespace etp::testing {

inline model::ModelConfig tiny_model_config(std::size_t vocab_size,
                                            model::HeadKind head,
                                            int num_classes = 2) {
  model::ModelConfig c;
  c.vocab_size = vocab_size;
  c.num_classes = num_classes;
  c.embed_dim = 5;
  c.encoder_hidden = 4;
  c.encoder_layers = 2;
  c.task_hidden = 6;
  c.token_head_hidden = 4;
  c.span_hidden = 3;
  c.dropout = 0.0;
  c.head = head;
  return c;
}

inline data::SyntheticSpec tiny_spec(std::size_t num_train = 48,
                                     std::uint64_t seed = 3) {
  data::SyntheticSpec s;
  s.vocab_size = 40;
  s.num_classes = 2;
  s.doc_min = 6;
  s.doc_max = 10;
  s.phrase_min = 2;
  s.phrase_max = 3;
  s.distractor_rate = 0.3;
  s.seed = seed;
  s.num_train = num_train;
  s.num_val = 16;
  s.num_test = 16;
  return s;
}

inline pipeline::TrainConfig tiny_train_config(model::HeadKind head =
                                                   model::HeadKind::kToken) {
  pipeline::TrainConfig c;
  c.epochs = 2;
  c.patience = 1;
  c.batch_size = 8;
  c.learning_rate = 1e-2;
  c.seed = 11;
  c.model = tiny_model_config(0, head);
  return c;
}

// Featurizer over the training split with word-level tokens.
inline data::Featurizer make_featurizer(const std::vector<data::Instance>& train,
                                        std::size_t max_length = 512) {
  return data::Featurizer(
      data::Featurizer::build_vocabulary(train, data::SubwordMode::kWord,
                                         data::kDefaultWildcard),
      data::SubwordMode::kWord, max_length);
}

// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("etp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace etp::testing

#endif  // ETP_TESTING_FIXTURES_H_
