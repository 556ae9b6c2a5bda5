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

// Dense rank-2 tensors with reverse-mode automatic differentiation.
//
// Every Tensor is a row-major matrix of doubles. Vectors are 1xN or Nx1,
// scalars are 1x1. Ops build a graph of Nodes as they execute; backward()
// orders that graph topologically (the Tape) and runs each node's
// backward rule exactly once.
//
// A result requires a gradient iff one of its inputs does. Constants and
// values derived only from constants carry no graph.

#ifndef ETP_TENSOR_H_
#define ETP_TENSOR_H_

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace etp {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace internal {

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first gradient contribution
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Returns the gradient buffer, allocating zeros on first use.
  Matrix& grad_buffer();
};

}  // namespace internal

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v);
  static Tensor zeros(std::size_t rows, std::size_t cols);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  // Parameters are updated in place by optimizers and checkpoint loading.
  Matrix& mutable_value();
  bool requires_grad() const;
  bool has_grad() const;
  // Gradient buffer; zeros if nothing has been accumulated yet.
  const Matrix& grad() const;
  void zero_grad();

  std::size_t rows() const { return static_cast<std::size_t>(value().rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(value().cols()); }
  std::size_t size() const { return rows() * cols(); }
  std::array<std::size_t, 2> shape() const { return {rows(), cols()}; }
  double item() const;
  const char* op() const;

  const std::shared_ptr<internal::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<internal::Node> node_;
};

std::string shape_string(const Matrix& m);

// Topologically ordered record of the graph reachable from a root.
// Parents always precede their children.
class Tape {
 public:
  static Tape record(const Tensor& root);

  const std::vector<internal::Node*>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<internal::Node*> order_;
};

// While alive, ops on this thread record no graph: results never require a
// gradient. Used for evaluation-time forward passes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Accumulates d(loss)/d(p) into every reachable tensor p that requires a
// gradient, then releases the intermediate graph. `loss` must be 1x1.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. Binary elementwise ops (add, sub, mul) accept a second operand of the
// same shape, a 1xN row (broadcast down rows), an Mx1 column (broadcast across
// columns), or a 1x1 scalar.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor transpose(const Tensor& a);

// Concatenates along columns (the last axis); all parts share a row count.
Tensor concat(const std::vector<Tensor>& parts);
// Concatenates along rows; all parts share a column count.
Tensor stack_rows(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, std::size_t row, std::size_t num_rows,
             std::size_t col, std::size_t num_cols);
Tensor slice_rows(const Tensor& a, std::size_t row, std::size_t num_rows);
Tensor slice_cols(const Tensor& a, std::size_t col, std::size_t num_cols);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// Row-wise softmax. `additive_mask`, when given, has the shape of `a` and
// holds 0 or -infinity; masked entries come out exactly 0. A row that is
// entirely masked is a usage error.
Tensor softmax(const Tensor& a, const Matrix* additive_mask = nullptr);

Tensor sum(const Tensor& a);      // 1x1
Tensor mean(const Tensor& a);     // 1x1
Tensor row_sum(const Tensor& a);  // Mx1
// sum_ij a_ij * w_ij for a constant weight matrix of the same shape.
Tensor weighted_sum(const Tensor& a, const Matrix& weights);

// Inverted dropout: in training mode zeroes each entry with probability
// `rate` and scales survivors by 1/(1-rate). Identity otherwise.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng,
               bool training);

// Row gather; embedding lookup is gather_rows(table, ids).
Tensor gather_rows(const Tensor& table, const std::vector<int>& rows);
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  return gather_rows(table, ids);
}

inline constexpr double kProbabilityFloor = 1e-12;

// sum_i w_i * BCE(p_i, t_i), BCE(p,t) = -(t ln p + (1-t) ln(1-p)).
// Probabilities are floored at kProbabilityFloor inside the logs; a floored
// term contributes no gradient. Terms with zero coefficient are skipped, so
// p == t exactly gives 0.
Tensor binary_cross_entropy(const Tensor& p, const Matrix& targets,
                            const Matrix& weights);

struct Pick {
  std::size_t row;
  std::size_t col;
  double weight;
};
// sum_k w_k * -ln(max(P[row_k, col_k], floor)).
Tensor negative_log_likelihood(const Tensor& probs,
                               const std::vector<Pick>& picks);

}  // namespace etp

#endif  // ETP_TENSOR_H_
