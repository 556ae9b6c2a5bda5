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

// Parameter checkpoints.
//
// A checkpoint is a UTF-8 text file:
//
//   etp-checkpoint 1
//   meta <key> <value...>          (zero or more; value runs to end of line)
//   tensor <name> <rows> <cols>    (zero or more, each followed by `rows`
//   <v00> <v01> ...                 lines of `cols` space-separated values)
//   end
//
// Values are written in shortest round-trip decimal form, so a load
// reproduces every double bit for bit. Metadata and tensors keep their
// insertion order.

#ifndef ETP_CHECKPOINT_H_
#define ETP_CHECKPOINT_H_

#include <string>
#include <utility>
#include <vector>

#include "etp/parameters.h"

namespace etp {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const std::string* find_meta(const std::string& key) const;
  const Matrix* find_tensor(const std::string& name) const;
};

Checkpoint capture(const ParameterSet& params);
// Copies checkpoint values into `params`; every parameter must be present
// with a matching shape.
void apply(const Checkpoint& checkpoint, ParameterSet& params);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace etp

#endif  // ETP_CHECKPOINT_H_
