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

#include "etp/spans.h"

#include <algorithm>
#include <string>

#include "etp/errors.h"

namespace etp {

bool is_normalized(const SpanSet& spans) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].start >= spans[i].end) return false;
    if (i > 0 && spans[i - 1].end > spans[i].start) return false;
  }
  return true;
}

SpanSet normalize(SpanSet spans) {
  std::erase_if(spans, [](const Span& s) { return s.start >= s.end; });
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  SpanSet merged;
  for (const Span& s : spans) {
    if (!merged.empty() && s.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, s.end);
    } else {
      merged.push_back(s);
    }
  }
  return merged;
}

Mask spans_to_mask(const SpanSet& spans, std::size_t length) {
  Mask mask(length, 0);
  for (const Span& s : spans) {
    if (s.start > s.end || s.end > length) {
      throw DataError("span [" + std::to_string(s.start) + ", " +
                      std::to_string(s.end) + ") out of range for length " +
                      std::to_string(length));
    }
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(s.start),
              mask.begin() + static_cast<std::ptrdiff_t>(s.end), 1);
  }
  return mask;
}

SpanSet mask_to_spans(const Mask& mask) {
  SpanSet spans;
  std::size_t i = 0;
  while (i < mask.size()) {
    if (mask[i] == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < mask.size() && mask[j] != 0) ++j;
    spans.push_back({i, j});
    i = j;
  }
  return spans;
}

std::size_t count_ones(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; }));
}

}  // namespace etp
