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

#include "cli/run_config.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include "etp/checkpoint.h"
#include "etp/errors.h"

namespace etp::cli {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw UsageError("invalid integer for " + key + ": '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return parse_double(value);
  } catch (const std::exception&) {
    throw UsageError("invalid number for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("invalid boolean for " + key + ": '" + value + "'");
}

template <typename Ref>
ConfigKey real_key(std::string name, std::string help, Ref ref) {
  std::string key = name;
  return {std::move(name), std::move(help), false,
          [key, ref](RunConfig& c, const std::string& v) {
            ref(c) = parse_real(key, v);
          },
          [ref](const RunConfig& c) { return format_double(ref(c)); }};
}

template <typename T, typename Ref>
ConfigKey int_key(std::string name, std::string help, Ref ref) {
  std::string key = name;
  return {std::move(name), std::move(help), false,
          [key, ref](RunConfig& c, const std::string& v) {
            ref(c) = parse_integer<T>(key, v);
          },
          [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}

template <typename Ref>
ConfigKey string_key(std::string name, std::string help, Ref ref) {
  return {std::move(name), std::move(help), false,
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; },
          [ref](const RunConfig& c) { return std::string(ref(c)); }};
}

template <typename Ref>
ConfigKey bool_key(std::string name, std::string help, Ref ref) {
  std::string key = name;
  return {std::move(name), std::move(help), true,
          [key, ref](RunConfig& c, const std::string& v) {
            ref(c) = parse_bool(key, v);
          },
          [ref](const RunConfig& c) {
            return std::string(ref(c) ? "true" : "false");
          }};
}

std::vector<ConfigKey> build_keys() {
  using R = RunConfig;
  std::vector<ConfigKey> k;
  // Training.
  k.push_back(real_key("lambda", "weight of the explanation loss",
                       [](auto& c) -> auto& { return c.train.lambda; }));
  k.push_back(int_key<int>("epochs", "maximum epochs per stage",
                           [](auto& c) -> auto& { return c.train.epochs; }));
  k.push_back(int_key<int>("patience", "early-stopping patience",
                           [](auto& c) -> auto& { return c.train.patience; }));
  k.push_back(int_key<std::size_t>(
      "batch_size", "mini-batch size",
      [](auto& c) -> auto& { return c.train.batch_size; }));
  k.push_back(real_key("learning_rate", "Adam step size",
                       [](auto& c) -> auto& { return c.train.learning_rate; }));
  k.push_back({"seed", "seed for data generation and training", false,
               [](R& c, const std::string& v) {
                 c.train.seed = parse_integer<std::uint64_t>("seed", v);
                 c.synthetic.seed = c.train.seed;
               },
               [](const R& c) { return std::to_string(c.train.seed); }});
  k.push_back(string_key("wildcard", "placeholder for masked tokens",
                         [](auto& c) -> auto& { return c.train.wildcard; }));
  k.push_back(real_key("threshold", "hard-rationale threshold",
                       [](auto& c) -> auto& { return c.train.threshold; }));
  k.push_back({"exp_weighting",
               "explanation loss weighting: inverse_prior|literal_count|none",
               false,
               [](R& c, const std::string& v) {
                 c.train.exp_weighting = loss::parse_exp_weighting(v);
               },
               [](const R& c) {
                 return std::string(loss::to_string(c.train.exp_weighting));
               }});
  k.push_back({"subword", "sub-word segmentation: word|char-bigram", false,
               [](R& c, const std::string& v) {
                 c.train.subword = data::parse_subword_mode(v);
               },
               [](const R& c) {
                 return std::string(data::to_string(c.train.subword));
               }});
  k.push_back(int_key<std::size_t>(
      "max_length", "input length budget in sub-tokens",
      [](auto& c) -> auto& { return c.train.max_length; }));
  k.push_back({"head", "explanation head: token|span", false,
               [](R& c, const std::string& v) {
                 c.train.model.head = model::parse_head_kind(v);
               },
               [](const R& c) {
                 return std::string(model::to_string(c.train.model.head));
               }});
  k.push_back(int_key<std::size_t>(
      "embed_dim", "embedding width",
      [](auto& c) -> auto& { return c.train.model.embed_dim; }));
  k.push_back(int_key<std::size_t>(
      "encoder_hidden", "encoder GRU width per direction",
      [](auto& c) -> auto& { return c.train.model.encoder_hidden; }));
  k.push_back(int_key<std::size_t>(
      "encoder_layers", "stacked encoder layers",
      [](auto& c) -> auto& { return c.train.model.encoder_layers; }));
  k.push_back(int_key<std::size_t>(
      "task_hidden", "task head hidden width",
      [](auto& c) -> auto& { return c.train.model.task_hidden; }));
  k.push_back(int_key<std::size_t>(
      "token_head_hidden", "token head GRU width",
      [](auto& c) -> auto& { return c.train.model.token_head_hidden; }));
  k.push_back(int_key<std::size_t>(
      "span_hidden", "span head GRU width per direction",
      [](auto& c) -> auto& { return c.train.model.span_hidden; }));
  k.push_back(real_key("dropout", "task head dropout",
                       [](auto& c) -> auto& { return c.train.model.dropout; }));
  // Synthetic data.
  k.push_back(int_key<std::size_t>(
      "vocab", "synthetic vocabulary size",
      [](auto& c) -> auto& { return c.synthetic.vocab_size; }));
  k.push_back(int_key<int>(
      "classes", "synthetic class count",
      [](auto& c) -> auto& { return c.synthetic.num_classes; }));
  k.push_back(int_key<std::size_t>(
      "doc_min", "shortest synthetic document",
      [](auto& c) -> auto& { return c.synthetic.doc_min; }));
  k.push_back(int_key<std::size_t>(
      "doc_max", "longest synthetic document",
      [](auto& c) -> auto& { return c.synthetic.doc_max; }));
  k.push_back(int_key<std::size_t>(
      "phrase_min", "shortest evidence phrase",
      [](auto& c) -> auto& { return c.synthetic.phrase_min; }));
  k.push_back(int_key<std::size_t>(
      "phrase_max", "longest evidence phrase",
      [](auto& c) -> auto& { return c.synthetic.phrase_max; }));
  k.push_back(real_key("distractor_rate", "distractor phrase probability",
                       [](auto& c) -> auto& {
                         return c.synthetic.distractor_rate;
                       }));
  k.push_back(bool_key("pair_task", "generate query/document pairs",
                       [](auto& c) -> auto& { return c.synthetic.pair_task; }));
  k.push_back(int_key<std::size_t>(
      "n", "synthetic training instances",
      [](auto& c) -> auto& { return c.synthetic.num_train; }));
  k.push_back(int_key<std::size_t>(
      "n_val", "synthetic validation instances",
      [](auto& c) -> auto& { return c.synthetic.num_val; }));
  k.push_back(int_key<std::size_t>(
      "n_test", "synthetic test instances",
      [](auto& c) -> auto& { return c.synthetic.num_test; }));
  k.push_back(int_key<std::size_t>(
      "pool_size", "evidence tokens per class (0 = automatic)",
      [](auto& c) -> auto& { return c.synthetic.pool_size; }));
  // Paths and command options.
  k.push_back(string_key("data", "dataset directory",
                         [](auto& c) -> auto& { return c.data_dir; }));
  k.push_back(string_key("out", "output directory or file",
                         [](auto& c) -> auto& { return c.out; }));
  k.push_back(string_key("run", "trained run directory",
                         [](auto& c) -> auto& { return c.run_dir; }));
  k.push_back(string_key("input", "JSONL instances to read",
                         [](auto& c) -> auto& { return c.input; }));
  k.push_back(string_key("predictions", "predictions JSONL to score",
                         [](auto& c) -> auto& { return c.predictions; }));
  k.push_back(string_key("split", "dataset split for eval: train|val|test",
                         [](auto& c) -> auto& { return c.split; }));
  k.push_back({"lambdas", "comma-separated sweep grid", false,
               [](R& c, const std::string& v) {
                 c.lambdas = parse_double_list(v);
               },
               [](const R& c) { return format_double_list(c.lambdas); }});
  k.push_back(int_key<std::size_t>(
      "jobs", "parallel sweep workers",
      [](auto& c) -> auto& { return c.jobs; }));
  k.push_back(bool_key("force", "overwrite a non-empty output directory",
                       [](auto& c) -> auto& { return c.force; }));
  k.push_back(bool_key("quiet", "suppress progress output",
                       [](auto& c) -> auto& { return c.quiet; }));
  return k;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

const ConfigKey* find_key(const std::string& name) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void apply_setting(RunConfig& config, const std::string& key,
                   const std::string& value) {
  const ConfigKey* k = find_key(key);
  if (k == nullptr) throw UsageError("unknown configuration key '" + key + "'");
  k->set(config, value);
}

void apply_config_text(RunConfig& config, const std::string& text,
                       const std::string& source) {
  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(number) +
                       ": expected key = value");
    }
    try {
      apply_setting(config, trim(line.substr(0, eq)),
                    trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(source + ":" + std::to_string(number) + ": " +
                       e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str(), path);
}

std::string to_config_text(const RunConfig& config) {
  std::ostringstream out;
  for (const ConfigKey& k : config_keys()) {
    out << k.name << " = " << k.get(config) << '\n';
  }
  return out.str();
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_real("lambdas", item));
  }
  return out;
}

std::string format_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace etp::cli
