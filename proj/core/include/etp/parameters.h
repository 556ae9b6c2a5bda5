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

#ifndef ETP_PARAMETERS_H_
#define ETP_PARAMETERS_H_

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "etp/tensor.h"

namespace etp {

// Named trainable tensors in registration order. Copies share the
// underlying tensors.
class ParameterSet {
 public:
  void add(std::string name, Tensor tensor);
  // Adds every entry of `other` with `prefix` prepended to its name.
  void add_all(const std::string& prefix, const ParameterSet& other);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_values() const;

  void zero_grad();
  // Deep copy of every value, in registration order.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Uniform(-bound, bound) initialized parameter.
Tensor uniform_parameter(std::size_t rows, std::size_t cols, double bound,
                         std::mt19937_64& rng);
// Glorot/Xavier uniform initialization for a fan_in x fan_out weight.
Tensor xavier_parameter(std::size_t fan_in, std::size_t fan_out,
                        std::mt19937_64& rng);
Tensor zero_parameter(std::size_t rows, std::size_t cols);

}  // namespace etp

#endif  // ETP_PARAMETERS_H_
