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

#include "etp/parameters.h"

#include <cmath>

#include "etp/errors.h"

namespace etp {

void ParameterSet::add(std::string name, Tensor tensor) {
  if (!tensor.requires_grad()) {
    throw UsageError("ParameterSet: '" + name + "' is not trainable");
  }
  if (contains(name)) {
    throw UsageError("ParameterSet: duplicate parameter '" + name + "'");
  }
  entries_.emplace_back(std::move(name), std::move(tensor));
}

void ParameterSet::add_all(const std::string& prefix,
                           const ParameterSet& other) {
  for (const auto& [name, tensor] : other.entries_) add(prefix + name, tensor);
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw UsageError("ParameterSet: no parameter named '" + name + "'");
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& entry : entries_) {
    if (entry.first == name) return true;
  }
  return false;
}

std::size_t ParameterSet::num_values() const {
  std::size_t n = 0;
  for (const auto& entry : entries_) n += entry.second.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& entry : entries_) entry.second.zero_grad();
}

std::vector<Matrix> ParameterSet::snapshot() const {
  std::vector<Matrix> values;
  values.reserve(entries_.size());
  for (const auto& entry : entries_) values.push_back(entry.second.value());
  return values;
}

void ParameterSet::restore(const std::vector<Matrix>& values) {
  if (values.size() != entries_.size()) {
    throw UsageError("ParameterSet::restore: snapshot has " +
                     std::to_string(values.size()) + " tensors, expected " +
                     std::to_string(entries_.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    Matrix& dst = entries_[i].second.mutable_value();
    if (dst.rows() != values[i].rows() || dst.cols() != values[i].cols()) {
      throw DimensionError("ParameterSet::restore: '" + entries_[i].first +
                           "' expects " + shape_string(dst) + ", got " +
                           shape_string(values[i]));
    }
    dst = values[i];
  }
}

Tensor uniform_parameter(std::size_t rows, std::size_t cols, double bound,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return Tensor::parameter(std::move(m));
}

Tensor xavier_parameter(std::size_t fan_in, std::size_t fan_out,
                        std::mt19937_64& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_parameter(fan_in, fan_out, bound, rng);
}

Tensor zero_parameter(std::size_t rows, std::size_t cols) {
  return Tensor::parameter(Matrix::Zero(static_cast<Eigen::Index>(rows),
                                        static_cast<Eigen::Index>(cols)));
}

}  // namespace etp
