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

#include "etp/data.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "etp/errors.h"
#include "json.hpp"

namespace etp::data {

using nlohmann::json;

void validate(const Instance& instance) {
  if (instance.rationale.size() != instance.document.size()) {
    throw DataError("instance " + instance.id + ": rationale has " +
                    std::to_string(instance.rationale.size()) +
                    " entries for " +
                    std::to_string(instance.document.size()) + " tokens");
  }
  if (!is_normalized(instance.evidence) ||
      spans_to_mask(instance.evidence, instance.document.size()) !=
          instance.rationale) {
    throw DataError("instance " + instance.id +
                    ": evidence spans disagree with the rationale mask");
  }
}

// ---------------------------------------------------------------------------
// LabelMap

LabelMap::LabelMap(std::vector<std::string> names) : names_(std::move(names)) {}

int LabelMap::index_of(const std::string& name) {
  if (auto found = find(name)) return *found;
  if (frozen_) throw DataError("unknown label '" + name + "'");
  names_.push_back(name);
  return static_cast<int>(names_.size()) - 1;
}

int LabelMap::index_of_integer(int label) {
  if (label < 0) throw DataError("negative label " + std::to_string(label));
  const std::string name = std::to_string(label);
  if (static_cast<std::size_t>(label) < names_.size()) {
    if (names_[static_cast<std::size_t>(label)] != name) {
      throw DataError("integer label " + name + " conflicts with label '" +
                      names_[static_cast<std::size_t>(label)] + "'");
    }
    return label;
  }
  if (frozen_) throw DataError("unknown label " + name);
  while (names_.size() <= static_cast<std::size_t>(label)) {
    const std::string next = std::to_string(names_.size());
    if (find(next)) throw DataError("label map cannot hold integer " + name);
    names_.push_back(next);
  }
  return label;
}

std::optional<int> LabelMap::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

const std::string& LabelMap::name(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= names_.size()) {
    throw DataError("label index " + std::to_string(index) + " out of range");
  }
  return names_[static_cast<std::size_t>(index)];
}

bool LabelMap::is_integer() const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] != std::to_string(i)) return false;
  }
  return true;
}

void LabelMap::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write label map '" + path + "'");
  for (const auto& n : names_) out << n << "\n";
}

LabelMap LabelMap::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read label map '" + path + "'");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) names.push_back(line);
  }
  LabelMap map(std::move(names));
  map.freeze();
  return map;
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

std::vector<std::string> string_array(const json& j, const char* field,
                                      const std::string& where) {
  if (!j.is_array()) {
    throw DataError(where + ": field '" + field + "' must be an array");
  }
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_string()) {
      throw DataError(where + ": field '" + field +
                      "' must contain strings");
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

struct RawLine {
  json object;
  std::size_t line_no;
};

}  // namespace

std::vector<Instance> parse_jsonl(const std::string& text, LabelMap& labels,
                                  const std::string& source) {
  std::vector<RawLine> raw;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      raw.push_back({json::parse(line), line_no});
    } catch (const json::parse_error& e) {
      throw DataError(source + ":" + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    }
  }

  // String labels not yet in the map are appended in sorted order so the
  // mapping does not depend on line order.
  std::set<std::string> fresh;
  for (const auto& r : raw) {
    const auto it = r.object.find("label");
    if (it != r.object.end() && it->is_string() &&
        !labels.find(it->get<std::string>())) {
      fresh.insert(it->get<std::string>());
    }
  }
  for (const auto& name : fresh) labels.index_of(name);

  std::vector<Instance> out;
  out.reserve(raw.size());
  for (const auto& [obj, no] : raw) {
    const std::string where = source + ":" + std::to_string(no);
    if (!obj.is_object()) throw DataError(where + ": line is not an object");
    for (const char* field : {"id", "document", "label", "evidences"}) {
      if (!obj.contains(field)) {
        throw DataError(where + ": missing field '" + field + "'");
      }
    }
    Instance inst;
    if (!obj["id"].is_string()) {
      throw DataError(where + ": field 'id' must be a string");
    }
    inst.id = obj["id"].get<std::string>();
    inst.document = string_array(obj["document"], "document", where);
    if (obj.contains("query") && !obj["query"].is_null()) {
      inst.query = string_array(obj["query"], "query", where);
    }
    const json& label = obj["label"];
    if (label.is_number_integer()) {
      inst.label = labels.index_of_integer(label.get<int>());
    } else if (label.is_string()) {
      inst.label = labels.index_of(label.get<std::string>());
    } else {
      throw DataError(where + ": field 'label' must be an integer or string");
    }
    const json& evidences = obj["evidences"];
    if (!evidences.is_array()) {
      throw DataError(where + ": field 'evidences' must be an array");
    }
    SpanSet spans;
    for (const auto& ev : evidences) {
      if (!ev.is_object() || !ev.contains("start_token") ||
          !ev.contains("end_token") ||
          !ev["start_token"].is_number_integer() ||
          !ev["end_token"].is_number_integer()) {
        throw DataError(where + ": evidence needs integer start_token and "
                        "end_token");
      }
      const auto s = ev["start_token"].get<long long>();
      const auto e = ev["end_token"].get<long long>();
      if (s < 0 || e < s || e > static_cast<long long>(inst.document.size())) {
        throw DataError("instance " + inst.id + ": evidence span [" +
                        std::to_string(s) + ", " + std::to_string(e) +
                        ") out of range for " +
                        std::to_string(inst.document.size()) + " tokens");
      }
      spans.push_back({static_cast<std::size_t>(s),
                       static_cast<std::size_t>(e)});
    }
    inst.evidence = normalize(std::move(spans));
    inst.rationale = spans_to_mask(inst.evidence, inst.document.size());
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> load_jsonl(const std::string& path, LabelMap& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read dataset '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str(), labels, path);
}

std::string to_jsonl_line(const Instance& instance, const LabelMap& labels) {
  json obj;
  obj["id"] = instance.id;
  obj["document"] = instance.document;
  if (instance.query) {
    obj["query"] = *instance.query;
  } else {
    obj["query"] = nullptr;
  }
  if (labels.is_integer()) {
    obj["label"] = instance.label;
  } else {
    obj["label"] = labels.name(instance.label);
  }
  json evidences = json::array();
  for (const Span& s : instance.evidence) {
    evidences.push_back({{"start_token", s.start}, {"end_token", s.end}});
  }
  obj["evidences"] = std::move(evidences);
  return obj.dump();
}

void save_jsonl(const std::string& path, const std::vector<Instance>& data,
                const LabelMap& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  for (const auto& inst : data) out << to_jsonl_line(inst, labels) << "\n";
  if (!out) throw DataError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::string wildcard) {
  for (const std::string& t :
       {std::string(kPadToken), std::string(kSeparatorToken), wildcard,
        std::string(kUnknownToken)}) {
    if (ids_.count(t)) {
      throw UsageError("vocabulary: wildcard '" + wildcard +
                       "' collides with a reserved token");
    }
    ids_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnknownId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write vocabulary '" + path + "'");
  for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 4 || lines[kPadId] != kPadToken ||
      lines[kSeparatorId] != kSeparatorToken ||
      lines[kUnknownId] != kUnknownToken) {
    throw DataError("vocabulary '" + path + "': reserved tokens missing");
  }
  Vocabulary vocab(lines[kWildcardId]);
  for (std::size_t i = 4; i < lines.size(); ++i) {
    if (vocab.contains(lines[i])) {
      throw DataError("vocabulary '" + path + "': duplicate token '" +
                      lines[i] + "'");
    }
    vocab.add(lines[i]);
  }
  return vocab;
}

const char* to_string(SubwordMode mode) {
  return mode == SubwordMode::kWord ? "word" : "char-bigram";
}

SubwordMode parse_subword_mode(const std::string& s) {
  if (s == "word") return SubwordMode::kWord;
  if (s == "char-bigram") return SubwordMode::kCharBigram;
  throw UsageError("unknown subword mode '" + s + "'");
}

std::vector<std::string> split_word(const std::string& word, SubwordMode mode,
                                    const std::string& wildcard) {
  if (mode == SubwordMode::kWord || word.size() <= 2 || word == wildcard ||
      word == kPadToken || word == kSeparatorToken || word == kUnknownToken) {
    return {word};
  }
  std::vector<std::string> pieces;
  for (std::size_t i = 0; i < word.size(); i += 2) {
    pieces.push_back(word.substr(i, 2));
  }
  return pieces;
}

std::vector<std::string> tokenize_whitespace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

// ---------------------------------------------------------------------------
// Featurizer

Featurizer::Featurizer(Vocabulary vocab, SubwordMode mode,
                       std::size_t max_length)
    : vocab_(std::move(vocab)), mode_(mode), max_length_(max_length) {
  if (max_length_ < 2) throw UsageError("max_length must be at least 2");
}

Vocabulary Featurizer::build_vocabulary(const std::vector<Instance>& train,
                                        SubwordMode mode,
                                        const std::string& wildcard) {
  std::set<std::string> tokens;
  auto collect = [&](const std::vector<std::string>& words) {
    for (const auto& w : words) {
      for (auto& piece : split_word(w, mode, wildcard)) tokens.insert(piece);
    }
  };
  for (const auto& inst : train) {
    collect(inst.document);
    if (inst.query) collect(*inst.query);
  }
  Vocabulary vocab(wildcard);
  for (const auto& t : tokens) vocab.add(t);
  return vocab;
}

Encoded Featurizer::encode(const Instance& instance) const {
  Encoded enc;
  enc.label = instance.label;
  const std::string& wildcard = vocab_.wildcard();
  if (instance.query) {
    for (const auto& w : *instance.query) {
      for (const auto& piece : split_word(w, mode_, wildcard)) {
        enc.ids.push_back(vocab_.id(piece));
      }
    }
    if (enc.ids.size() + 1 >= max_length_) {
      throw DataError("instance " + instance.id +
                      ": query alone exceeds the maximum length");
    }
    enc.ids.push_back(kSeparatorId);
  }
  enc.doc_begin = enc.ids.size();
  const std::size_t budget = max_length_ - enc.doc_begin;
  std::size_t doc_len = 0;
  for (std::size_t w = 0; w < instance.document.size(); ++w) {
    auto pieces = split_word(instance.document[w], mode_, wildcard);
    if (doc_len + pieces.size() > budget) {
      enc.truncated = true;
      break;
    }
    enc.groups.push_back({doc_len, doc_len + pieces.size()});
    const double target =
        w < instance.rationale.size() && instance.rationale[w] ? 1.0 : 0.0;
    for (const auto& piece : pieces) {
      enc.ids.push_back(vocab_.id(piece));
      enc.targets.push_back(target);
    }
    doc_len += pieces.size();
    ++enc.num_words;
  }
  Mask sub_mask(enc.targets.size());
  for (std::size_t i = 0; i < sub_mask.size(); ++i) {
    sub_mask[i] = enc.targets[i] != 0.0;
  }
  // Spans are kept per word-level evidence interval, so adjacent gold
  // intervals stay separate.
  for (const Span& s : instance.evidence) {
    if (s.start >= enc.num_words) continue;
    const std::size_t end = std::min(s.end, enc.num_words);
    enc.gold_spans.push_back({enc.groups[s.start].start,
                              enc.groups[end - 1].end});
  }
  return enc;
}

std::vector<Encoded> Featurizer::encode_all(
    const std::vector<Instance>& data) const {
  std::vector<Encoded> out;
  out.reserve(data.size());
  for (const auto& inst : data) out.push_back(encode(inst));
  return out;
}

// ---------------------------------------------------------------------------
// Batching

Batch make_batch(const std::vector<const Encoded*>& items) {
  Batch batch;
  batch.size = items.size();
  batch.items = items;
  for (const Encoded* e : items) {
    batch.steps = std::max(batch.steps, e->ids.size());
  }
  const std::size_t n = batch.steps * batch.size;
  batch.ids.assign(n, kPadId);
  batch.valid.assign(n, 0.0);
  batch.document.assign(n, 0.0);
  for (std::size_t b = 0; b < items.size(); ++b) {
    const Encoded& e = *items[b];
    for (std::size_t t = 0; t < e.ids.size(); ++t) {
      batch.ids[batch.flat(t, b)] = e.ids[t];
      batch.valid[batch.flat(t, b)] = 1.0;
      batch.document[batch.flat(t, b)] = t >= e.doc_begin ? 1.0 : 0.0;
    }
  }
  return batch;
}

std::vector<Batch> batchify(const std::vector<Encoded>& encoded,
                            std::size_t batch_size,
                            const std::vector<std::size_t>& order) {
  if (batch_size == 0) throw UsageError("batch_size must be positive");
  std::vector<Batch> batches;
  const std::size_t n = order.empty() ? encoded.size() : order.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<const Encoded*> items;
    for (std::size_t i = start; i < std::min(n, start + batch_size); ++i) {
      items.push_back(&encoded[order.empty() ? i : order[i]]);
    }
    batches.push_back(make_batch(items));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Synthetic data

std::size_t SyntheticSpec::class_pool_size() const {
  return pool_size != 0 ? pool_size : std::max(phrase_max, vocab_size / 10);
}

std::size_t SyntheticSpec::neutral_pool_size() const {
  const std::size_t evidence =
      class_pool_size() * static_cast<std::size_t>(num_classes);
  return vocab_size > evidence ? vocab_size - evidence : 0;
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& what) { throw UsageError(what); };
  if (num_classes < 2) fail("synthetic: need at least two classes");
  if (doc_min == 0 || doc_min > doc_max) fail("synthetic: bad document range");
  if (phrase_min == 0 || phrase_min > phrase_max) {
    fail("synthetic: bad phrase length range");
  }
  if (phrase_max > doc_min) {
    fail("synthetic: evidence phrase may exceed the shortest document");
  }
  if (distractor_rate < 0.0 || distractor_rate >= 1.0) {
    fail("synthetic: distractor rate must lie in [0, 1)");
  }
  if (distractor_rate > 0.0 && phrase_min < 2) {
    fail("synthetic: distractors need phrase_min >= 2");
  }
  if (neutral_pool_size() == 0) fail("synthetic: no neutral tokens left");
}

std::string neutral_token(std::size_t i) { return "w" + std::to_string(i); }

std::string class_token(int cls, std::size_t i) {
  return "c" + std::to_string(cls) + "_" + std::to_string(i);
}

std::optional<int> token_class(const std::string& token) {
  if (token.size() < 4 || token[0] != 'c') return std::nullopt;
  const auto us = token.find('_');
  if (us == std::string::npos || us == 1) return std::nullopt;
  int cls = 0;
  auto [p, ec] = std::from_chars(token.data() + 1, token.data() + us, cls);
  if (ec != std::errc() || p != token.data() + us) return std::nullopt;
  return cls;
}

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo,
                          std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Instance make_synthetic(const SyntheticSpec& spec, std::mt19937_64& rng,
                        const std::string& id) {
  const std::size_t pool = spec.class_pool_size();
  const std::size_t neutral = spec.neutral_pool_size();
  const int k = spec.num_classes;
  auto other_class = [&](int c) {
    int o = static_cast<int>(uniform_index(rng, 0, k - 2));
    return o >= c ? o + 1 : o;
  };

  Instance inst;
  inst.id = id;
  const int cls = static_cast<int>(uniform_index(rng, 0, k - 1));
  const std::size_t len = uniform_index(rng, spec.doc_min, spec.doc_max);
  const std::size_t phrase =
      uniform_index(rng, spec.phrase_min, std::min(spec.phrase_max, len));
  inst.document.resize(len);
  for (auto& tok : inst.document) {
    tok = neutral_token(uniform_index(rng, 0, neutral - 1));
  }
  const std::size_t start = uniform_index(rng, 0, len - phrase);
  for (std::size_t i = start; i < start + phrase; ++i) {
    inst.document[i] = class_token(cls, uniform_index(rng, 0, pool - 1));
  }

  // Occupied positions, padded by one so phrases never touch.
  std::vector<bool> blocked(len, false);
  auto block = [&](std::size_t s, std::size_t e) {
    for (std::size_t i = s == 0 ? 0 : s - 1; i < std::min(len, e + 1); ++i) {
      blocked[i] = true;
    }
  };
  block(start, start + phrase);
  std::bernoulli_distribution another(spec.distractor_rate);
  for (int d = 0; d < 3 && spec.distractor_rate > 0.0 && another(rng); ++d) {
    const std::size_t dlen = uniform_index(rng, 1, spec.phrase_min - 1);
    const int dcls = other_class(cls);
    std::vector<std::size_t> candidates;
    for (std::size_t s = 0; s + dlen <= len; ++s) {
      bool free = true;
      for (std::size_t i = s; i < s + dlen && free; ++i) free = !blocked[i];
      if (free) candidates.push_back(s);
    }
    if (candidates.empty()) break;
    const std::size_t s =
        candidates[uniform_index(rng, 0, candidates.size() - 1)];
    for (std::size_t i = s; i < s + dlen; ++i) {
      inst.document[i] = class_token(dcls, uniform_index(rng, 0, pool - 1));
    }
    block(s, s + dlen);
  }

  inst.evidence = {{start, start + phrase}};
  inst.rationale = spans_to_mask(inst.evidence, len);
  if (spec.pair_task) {
    const bool supported = std::bernoulli_distribution(0.5)(rng);
    const int qcls = supported ? cls : other_class(cls);
    inst.query = std::vector<std::string>{
        class_token(qcls, uniform_index(rng, 0, pool - 1)),
        class_token(qcls, uniform_index(rng, 0, pool - 1))};
    inst.label = supported ? 1 : 0;
  } else {
    inst.label = cls;
  }
  return inst;
}

std::vector<Instance> make_split(const SyntheticSpec& spec,
                                 std::mt19937_64& rng, const char* split,
                                 std::size_t n) {
  std::vector<Instance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::ostringstream id;
    id << "syn-" << split << "-" << i;
    out.push_back(make_synthetic(spec, rng, id.str()));
  }
  return out;
}

}  // namespace

DatasetSplits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  DatasetSplits splits;
  if (spec.pair_task) {
    splits.labels = LabelMap({"REFUTES", "SUPPORTS"});
  } else {
    std::vector<std::string> names;
    for (int c = 0; c < spec.num_classes; ++c) {
      names.push_back(std::to_string(c));
    }
    splits.labels = LabelMap(std::move(names));
  }
  splits.labels.freeze();
  std::mt19937_64 rng(spec.seed);
  splits.train = make_split(spec, rng, "train", spec.num_train);
  splits.val = make_split(spec, rng, "val", spec.num_val);
  splits.test = make_split(spec, rng, "test", spec.num_test);
  return splits;
}

}  // namespace etp::data
