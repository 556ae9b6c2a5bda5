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

#ifndef ETP_SPANS_H_
#define ETP_SPANS_H_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace etp {

// Binary per-token selection; 1 marks a rationale token.
using Mask = std::vector<std::uint8_t>;

// Half-open token interval [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

// Sorted by start, pairwise disjoint, every span non-empty.
using SpanSet = std::vector<Span>;

bool is_normalized(const SpanSet& spans);
// Sorts, drops empty spans and merges overlapping or touching spans.
SpanSet normalize(SpanSet spans);

// Throws DataError if a span is reversed or reaches past `length`.
Mask spans_to_mask(const SpanSet& spans, std::size_t length);
// Maximal runs of ones.
SpanSet mask_to_spans(const Mask& mask);

std::size_t count_ones(const Mask& mask);

}  // namespace etp

#endif  // ETP_SPANS_H_
