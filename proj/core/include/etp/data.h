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

// Datasets: instances with gold rationales, the JSONL file schema, label
// maps, vocabularies, featurization into id sequences and padded batches,
// and the planted-rationale synthetic task generator.
//
// JSONL schema, one object per line:
//   {"id": "a", "document": ["x", "y"], "query": null | ["q", ...],
//    "label": 0 | "SUPPORTS",
//    "evidences": [{"start_token": 1, "end_token": 2}]}
// Evidence spans are half-open token intervals over `document`.

#ifndef ETP_DATA_H_
#define ETP_DATA_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "etp/spans.h"

namespace etp::data {

struct Instance {
  std::string id;
  std::vector<std::string> document;
  std::optional<std::vector<std::string>> query;
  int label = 0;
  Mask rationale;    // gold, |document| entries
  SpanSet evidence;  // gold, normalized; agrees with `rationale`
};

// Throws DataError if the mask length or span/mask agreement is violated.
void validate(const Instance& instance);

// Class names in index order.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<std::string> names);

  // Index for a name; unknown names are appended unless frozen.
  int index_of(const std::string& name);
  // Integer labels map to themselves; names "0".."k" are created as needed.
  int index_of_integer(int label);
  std::optional<int> find(const std::string& name) const;
  const std::string& name(int index) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  // True if every name is the decimal form of its own index.
  bool is_integer() const;

  void freeze() { frozen_ = true; }

  void save(const std::string& path) const;
  static LabelMap load(const std::string& path);

 private:
  std::vector<std::string> names_;
  bool frozen_ = false;
};

// Reads one instance per non-empty line. String labels unseen in `labels`
// are added in sorted order unless the map is frozen. Errors carry the line
// number (malformed JSON, missing fields) or the instance id (bad spans).
std::vector<Instance> load_jsonl(const std::string& path, LabelMap& labels);
std::vector<Instance> parse_jsonl(const std::string& text, LabelMap& labels,
                                  const std::string& source = "<string>");
void save_jsonl(const std::string& path, const std::vector<Instance>& data,
                const LabelMap& labels);
std::string to_jsonl_line(const Instance& instance, const LabelMap& labels);

// ---------------------------------------------------------------------------
// Vocabulary and featurization

inline constexpr int kPadId = 0;
inline constexpr int kSeparatorId = 1;
inline constexpr int kWildcardId = 2;
inline constexpr int kUnknownId = 3;
inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kSeparatorToken = "[SEP]";
inline constexpr const char* kUnknownToken = "[UNK]";
inline constexpr const char* kDefaultWildcard = ".";

// Token <-> id map. Ids 0..3 are reserved for pad, separator, wildcard and
// unknown, in that order; the file format is one token per line with the
// line index as id.
class Vocabulary {
 public:
  explicit Vocabulary(std::string wildcard = kDefaultWildcard);

  int add(const std::string& token);
  // kUnknownId for tokens outside the vocabulary.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::string& wildcard() const { return tokens_[kWildcardId]; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

enum class SubwordMode { kWord, kCharBigram };

const char* to_string(SubwordMode mode);
SubwordMode parse_subword_mode(const std::string& s);

// Splits one word into sub-tokens. kWord is the identity; kCharBigram cuts
// the word into consecutive two-character pieces ("abcde" -> ab cd e).
// Reserved tokens and the wildcard are never split.
std::vector<std::string> split_word(const std::string& word, SubwordMode mode,
                                    const std::string& wildcard);

// Whitespace tokenizer for raw text.
std::vector<std::string> tokenize_whitespace(const std::string& text);

// One instance laid out as [query, SEP, document] (or [document] without a
// query) in sub-token ids.
struct Encoded {
  std::vector<int> ids;
  std::size_t doc_begin = 0;
  std::size_t num_words = 0;   // document words kept after truncation
  std::vector<Span> groups;    // per kept word, over document sub-tokens
  std::vector<double> targets; // gold per document sub-token
  SpanSet gold_spans;          // gold, over document sub-tokens
  int label = 0;
  bool truncated = false;

  std::size_t doc_length() const { return ids.size() - doc_begin; }
};

class Featurizer {
 public:
  Featurizer(Vocabulary vocab, SubwordMode mode, std::size_t max_length);

  // Builds a vocabulary from the document and query words of `train`,
  // sorted for stability.
  static Vocabulary build_vocabulary(const std::vector<Instance>& train,
                                     SubwordMode mode,
                                     const std::string& wildcard);

  // Documents longer than the budget lose trailing words (never the query);
  // the result is flagged as truncated.
  Encoded encode(const Instance& instance) const;
  std::vector<Encoded> encode_all(const std::vector<Instance>& data) const;

  const Vocabulary& vocab() const { return vocab_; }
  SubwordMode mode() const { return mode_; }
  std::size_t max_length() const { return max_length_; }

 private:
  Vocabulary vocab_;
  SubwordMode mode_;
  std::size_t max_length_;
};

// Right-padded, time-major batch: entry t * size + b is step t of item b.
struct Batch {
  std::size_t steps = 0;
  std::size_t size = 0;
  std::vector<int> ids;
  std::vector<double> valid;     // 1 on real positions
  std::vector<double> document;  // 1 on document positions
  std::vector<const Encoded*> items;

  std::size_t flat(std::size_t t, std::size_t b) const { return t * size + b; }
};

Batch make_batch(const std::vector<const Encoded*>& items);
// Consecutive batches of at most `batch_size` in the order given by `order`
// (identity order when empty).
std::vector<Batch> batchify(const std::vector<Encoded>& encoded,
                            std::size_t batch_size,
                            const std::vector<std::size_t>& order = {});

// ---------------------------------------------------------------------------
// Synthetic planted-rationale task

struct SyntheticSpec {
  std::size_t vocab_size = 200;
  int num_classes = 2;
  std::size_t doc_min = 20;
  std::size_t doc_max = 40;
  std::size_t phrase_min = 3;
  std::size_t phrase_max = 5;
  double distractor_rate = 0.3;
  bool pair_task = false;
  std::uint64_t seed = 7;
  std::size_t num_train = 2000;
  std::size_t num_val = 200;
  std::size_t num_test = 200;
  // Evidence tokens per class; 0 selects max(phrase_max, vocab_size / 10).
  std::size_t pool_size = 0;

  std::size_t class_pool_size() const;
  std::size_t neutral_pool_size() const;
  // Throws UsageError on inconsistent settings.
  void validate() const;
};

struct DatasetSplits {
  std::vector<Instance> train;
  std::vector<Instance> val;
  std::vector<Instance> test;
  LabelMap labels;
};

std::string neutral_token(std::size_t i);
std::string class_token(int cls, std::size_t i);
// Class whose evidence pool contains `token`, if any.
std::optional<int> token_class(const std::string& token);

// Each document is neutral filler with one contiguous evidence phrase drawn
// from the pool of class c. With probability `distractor_rate` (repeated,
// at most three times) a shorter phrase of 1..phrase_min-1 tokens from
// another class's pool is added, never touching other phrases. Single-text
// mode labels the document c; pair mode adds a two-token query from some
// class pool q and labels SUPPORTS iff q == c. The gold rationale is exactly
// the evidence phrase.
DatasetSplits generate_synthetic(const SyntheticSpec& spec);

}  // namespace etp::data

#endif  // ETP_DATA_H_
