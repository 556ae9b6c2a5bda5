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

#ifndef ETP_MODEL_INL_H_
#define ETP_MODEL_INL_H_

#include <string>

#include "etp/errors.h"

namespace etp::model {

template <typename Token>
std::vector<Token> mask_input(const std::vector<Token>& tokens,
                              const Mask& mask, const Token& wildcard,
                              const std::vector<bool>& keep) {
  if (mask.size() != tokens.size()) {
    throw DataError("mask_input: mask has " + std::to_string(mask.size()) +
                    " entries for " + std::to_string(tokens.size()) +
                    " tokens");
  }
  if (!keep.empty() && keep.size() != tokens.size()) {
    throw DataError("mask_input: keep flags do not match the token count");
  }
  std::vector<Token> out(tokens.size(), wildcard);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (mask[i] != 0 || (!keep.empty() && keep[i])) out[i] = tokens[i];
  }
  return out;
}

}  // namespace etp::model

#endif  // ETP_MODEL_INL_H_
