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

#include "etp/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "etp/errors.h"

namespace etp {

using internal::Node;

Matrix& Node::grad_buffer() {
  if (grad.size() == 0 && value.size() != 0) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  return grad;
}

namespace {

using NodePtr = std::shared_ptr<Node>;

thread_local bool grad_disabled = false;

std::string shapes_message(const char* op, const Matrix& a, const Matrix& b) {
  std::ostringstream os;
  os << op << ": shape mismatch " << shape_string(a) << " vs "
     << shape_string(b);
  return os.str();
}

// Builds a result node. The backward rule and parent links are kept only
// when some parent requires a gradient.
Tensor make_result(Matrix value, const char* op, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (!grad_disabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

const NodePtr& checked(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw UsageError(std::string(op) + ": undefined tensor operand");
  }
  return t.node();
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast classify(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  throw DimensionError(shapes_message(op, a, b));
}

// Expands b to the shape of a.
Matrix expand(const Matrix& b, Eigen::Index rows, Eigen::Index cols,
              Broadcast mode) {
  switch (mode) {
    case Broadcast::kSame:
      return b;
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kCol:
      return b.replicate(1, cols);
    case Broadcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

// Sums a full-shape gradient back down to the broadcast operand's shape.
Matrix reduce(const Matrix& g, Broadcast mode) {
  switch (mode) {
    case Broadcast::kSame:
      return g;
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kCol:
      return g.rowwise().sum();
    case Broadcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

void accumulate(const NodePtr& parent, const Matrix& contribution) {
  if (parent->requires_grad) parent->grad_buffer() += contribution;
}

}  // namespace

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "parameter";
  node->requires_grad = true;
  node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return constant(Matrix::Zero(static_cast<Eigen::Index>(rows),
                               static_cast<Eigen::Index>(cols)));
}

const Matrix& Tensor::value() const { return checked(*this, "value")->value; }

Matrix& Tensor::mutable_value() { return checked(*this, "value")->value; }

bool Tensor::requires_grad() const {
  return defined() && node_->requires_grad;
}

bool Tensor::has_grad() const { return defined() && node_->grad.size() != 0; }

const Matrix& Tensor::grad() const {
  const auto& n = checked(*this, "grad");
  if (!n->requires_grad) {
    throw UsageError("grad: tensor does not require a gradient");
  }
  return n->grad_buffer();
}

void Tensor::zero_grad() {
  const auto& n = checked(*this, "zero_grad");
  if (n->requires_grad) n->grad_buffer().setZero();
}

double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw UsageError("item: tensor " + shape_string(v) + " is not a scalar");
  }
  return v(0, 0);
}

const char* Tensor::op() const { return checked(*this, "op")->op; }

NoGradGuard::NoGradGuard() : previous_(grad_disabled) {
  grad_disabled = true;
}

NoGradGuard::~NoGradGuard() { grad_disabled = previous_; }

// ---------------------------------------------------------------------------
// Tape

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.node()->requires_grad) return tape;
  // Iterative post-order DFS; each node is emitted after all its parents.
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    tape.order_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

void backward(const Tensor& loss) {
  checked(loss, "backward");
  if (loss.value().size() != 1) {
    throw UsageError("backward: loss " + shape_string(loss.value()) +
                     " is not a scalar");
  }
  if (!loss.node()->requires_grad) return;
  Tape tape = Tape::record(loss);
  loss.node()->grad_buffer()(0, 0) += 1.0;
  const auto& order = tape.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(*node);
  }
  // Release the graph; parameters (leaves) keep their gradients.
  for (Node* node : order) {
    if (!node->backward_fn) continue;
    node->backward_fn = nullptr;
    node->parents.clear();
  }
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& na = checked(a, "matmul");
  const auto& nb = checked(b, "matmul");
  if (na->value.cols() != nb->value.rows()) {
    throw DimensionError(shapes_message("matmul", na->value, nb->value));
  }
  Matrix out = na->value * nb->value;
  return make_result(std::move(out), "matmul", {na, nb}, [](Node& self) {
    const NodePtr& pa = self.parents[0];
    const NodePtr& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->grad_buffer().noalias() += self.grad * pb->value.transpose();
    }
    if (pb->requires_grad) {
      pb->grad_buffer().noalias() += pa->value.transpose() * self.grad;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& na = checked(a, "add");
  const auto& nb = checked(b, "add");
  Broadcast mode = classify("add", na->value, nb->value);
  Matrix out = na->value +
               expand(nb->value, na->value.rows(), na->value.cols(), mode);
  return make_result(std::move(out), "add", {na, nb}, [mode](Node& self) {
    accumulate(self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      accumulate(self.parents[1], reduce(self.grad, mode));
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto& na = checked(a, "sub");
  const auto& nb = checked(b, "sub");
  Broadcast mode = classify("sub", na->value, nb->value);
  Matrix out = na->value -
               expand(nb->value, na->value.rows(), na->value.cols(), mode);
  return make_result(std::move(out), "sub", {na, nb}, [mode](Node& self) {
    accumulate(self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      accumulate(self.parents[1], -reduce(self.grad, mode));
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto& na = checked(a, "mul");
  const auto& nb = checked(b, "mul");
  Broadcast mode = classify("mul", na->value, nb->value);
  Matrix out = na->value.cwiseProduct(
      expand(nb->value, na->value.rows(), na->value.cols(), mode));
  return make_result(std::move(out), "mul", {na, nb}, [mode](Node& self) {
    const NodePtr& pa = self.parents[0];
    const NodePtr& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->grad_buffer() += self.grad.cwiseProduct(
          expand(pb->value, self.grad.rows(), self.grad.cols(), mode));
    }
    if (pb->requires_grad) {
      pb->grad_buffer() += reduce(self.grad.cwiseProduct(pa->value), mode);
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  const auto& na = checked(a, "scale");
  return make_result(na->value * factor, "scale", {na}, [factor](Node& self) {
    accumulate(self.parents[0], self.grad * factor);
  });
}

Tensor transpose(const Tensor& a) {
  const auto& na = checked(a, "transpose");
  Matrix out = na->value.transpose();
  return make_result(std::move(out), "transpose", {na}, [](Node& self) {
    accumulate(self.parents[0], self.grad.transpose());
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  std::vector<NodePtr> nodes;
  Eigen::Index rows = checked(parts[0], "concat")->value.rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    const auto& n = checked(p, "concat");
    if (n->value.rows() != rows) {
      throw DimensionError(
          shapes_message("concat", parts[0].value(), n->value));
    }
    cols += n->value.cols();
    nodes.push_back(n);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& n : nodes) {
    out.middleCols(at, n->value.cols()) = n->value;
    at += n->value.cols();
  }
  return make_result(std::move(out), "concat", std::move(nodes),
                     [](Node& self) {
                       Eigen::Index offset = 0;
                       for (const auto& p : self.parents) {
                         Eigen::Index c = p->value.cols();
                         if (p->requires_grad) {
                           p->grad_buffer() += self.grad.middleCols(offset, c);
                         }
                         offset += c;
                       }
                     });
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("stack_rows: no operands");
  std::vector<NodePtr> nodes;
  Eigen::Index cols = checked(parts[0], "stack_rows")->value.cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    const auto& n = checked(p, "stack_rows");
    if (n->value.cols() != cols) {
      throw DimensionError(
          shapes_message("stack_rows", parts[0].value(), n->value));
    }
    rows += n->value.rows();
    nodes.push_back(n);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& n : nodes) {
    out.middleRows(at, n->value.rows()) = n->value;
    at += n->value.rows();
  }
  return make_result(std::move(out), "stack_rows", std::move(nodes),
                     [](Node& self) {
                       Eigen::Index offset = 0;
                       for (const auto& p : self.parents) {
                         Eigen::Index r = p->value.rows();
                         if (p->requires_grad) {
                           p->grad_buffer() += self.grad.middleRows(offset, r);
                         }
                         offset += r;
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t row, std::size_t num_rows,
             std::size_t col, std::size_t num_cols) {
  const auto& na = checked(a, "slice");
  if (row + num_rows > static_cast<std::size_t>(na->value.rows()) ||
      col + num_cols > static_cast<std::size_t>(na->value.cols())) {
    std::ostringstream os;
    os << "slice: block [" << row << "+" << num_rows << ", " << col << "+"
       << num_cols << "] out of range for " << shape_string(na->value);
    throw DimensionError(os.str());
  }
  const auto r = static_cast<Eigen::Index>(row);
  const auto c = static_cast<Eigen::Index>(col);
  const auto nr = static_cast<Eigen::Index>(num_rows);
  const auto nc = static_cast<Eigen::Index>(num_cols);
  Matrix out = na->value.block(r, c, nr, nc);
  return make_result(std::move(out), "slice", {na},
                     [r, c, nr, nc](Node& self) {
                       const NodePtr& p = self.parents[0];
                       if (p->requires_grad) {
                         p->grad_buffer().block(r, c, nr, nc) += self.grad;
                       }
                     });
}

Tensor slice_rows(const Tensor& a, std::size_t row, std::size_t num_rows) {
  return slice(a, row, num_rows, 0, a.cols());
}

Tensor slice_cols(const Tensor& a, std::size_t col, std::size_t num_cols) {
  return slice(a, 0, a.rows(), col, num_cols);
}

Tensor sigmoid(const Tensor& a) {
  const auto& na = checked(a, "sigmoid");
  Matrix out = na->value.unaryExpr(
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return make_result(std::move(out), "sigmoid", {na}, [](Node& self) {
    const Matrix& y = self.value;
    accumulate(self.parents[0],
               self.grad.cwiseProduct(y.cwiseProduct(
                   (1.0 - y.array()).matrix())));
  });
}

Tensor tanh(const Tensor& a) {
  const auto& na = checked(a, "tanh");
  Matrix out = na->value.array().tanh().matrix();
  return make_result(std::move(out), "tanh", {na}, [](Node& self) {
    const Matrix& y = self.value;
    accumulate(self.parents[0],
               self.grad.cwiseProduct(
                   (1.0 - y.array().square()).matrix()));
  });
}

Tensor softmax(const Tensor& a, const Matrix* additive_mask) {
  const auto& na = checked(a, "softmax");
  Matrix z = na->value;
  if (additive_mask != nullptr) {
    if (additive_mask->rows() != z.rows() ||
        additive_mask->cols() != z.cols()) {
      throw DimensionError(shapes_message("softmax", z, *additive_mask));
    }
    z += *additive_mask;
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double m = z.row(i).maxCoeff();
    if (m == kNegInf) {
      throw UsageError("softmax: row " + std::to_string(i) +
                       " is entirely masked");
    }
    // Vectorized exp clamps its argument, so masked entries are zeroed
    // explicitly to keep them exact.
    z.row(i) = (z.row(i).array() == kNegInf)
                   .select(0.0, (z.row(i).array() - m).exp())
                   .matrix();
    z.row(i) /= z.row(i).sum();
  }
  return make_result(std::move(z), "softmax", {na}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix gy = self.grad.cwiseProduct(y);
    Eigen::VectorXd dots = gy.rowwise().sum();
    gy -= y.cwiseProduct(dots.replicate(1, y.cols()));
    accumulate(self.parents[0], gy);
  });
}

Tensor sum(const Tensor& a) {
  const auto& na = checked(a, "sum");
  return make_result(Matrix::Constant(1, 1, na->value.sum()), "sum", {na},
                     [](Node& self) {
                       const NodePtr& p = self.parents[0];
                       p->grad_buffer().array() += self.grad(0, 0);
                     });
}

Tensor mean(const Tensor& a) {
  const auto& na = checked(a, "mean");
  const double n = static_cast<double>(na->value.size());
  if (n == 0) throw DimensionError("mean: empty tensor");
  return make_result(Matrix::Constant(1, 1, na->value.sum() / n), "mean", {na},
                     [n](Node& self) {
                       const NodePtr& p = self.parents[0];
                       p->grad_buffer().array() += self.grad(0, 0) / n;
                     });
}

Tensor row_sum(const Tensor& a) {
  const auto& na = checked(a, "row_sum");
  Matrix out = na->value.rowwise().sum();
  return make_result(std::move(out), "row_sum", {na}, [](Node& self) {
    const NodePtr& p = self.parents[0];
    if (p->requires_grad) {
      p->grad_buffer() += self.grad.replicate(1, p->value.cols());
    }
  });
}

Tensor weighted_sum(const Tensor& a, const Matrix& weights) {
  const auto& na = checked(a, "weighted_sum");
  if (weights.rows() != na->value.rows() ||
      weights.cols() != na->value.cols()) {
    throw DimensionError(shapes_message("weighted_sum", na->value, weights));
  }
  double v = na->value.cwiseProduct(weights).sum();
  return make_result(Matrix::Constant(1, 1, v), "weighted_sum", {na},
                     [weights](Node& self) {
                       accumulate(self.parents[0], weights * self.grad(0, 0));
                     });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng,
               bool training) {
  const auto& na = checked(a, "dropout");
  if (rate < 0.0 || rate >= 1.0) {
    throw UsageError("dropout: rate must lie in [0, 1)");
  }
  if (!training || rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(na->value.rows(), na->value.cols());
  const double survivor = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = keep(rng) ? survivor : 0.0;
  }
  Matrix out = na->value.cwiseProduct(mask);
  return make_result(std::move(out), "dropout", {na},
                     [mask = std::move(mask)](Node& self) {
                       accumulate(self.parents[0],
                                  self.grad.cwiseProduct(mask));
                     });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& rows) {
  const auto& nt = checked(table, "gather_rows");
  const Eigen::Index n = nt->value.rows();
  Matrix out(static_cast<Eigen::Index>(rows.size()), nt->value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) +
                           " out of range for " + shape_string(nt->value));
    }
    out.row(static_cast<Eigen::Index>(i)) = nt->value.row(rows[i]);
  }
  return make_result(std::move(out), "gather_rows", {nt},
                     [rows](Node& self) {
                       const NodePtr& p = self.parents[0];
                       Matrix& g = p->grad_buffer();
                       for (std::size_t i = 0; i < rows.size(); ++i) {
                         g.row(rows[i]) +=
                             self.grad.row(static_cast<Eigen::Index>(i));
                       }
                     });
}

Tensor binary_cross_entropy(const Tensor& p, const Matrix& targets,
                            const Matrix& weights) {
  const auto& np = checked(p, "binary_cross_entropy");
  const Matrix& pv = np->value;
  if (targets.rows() != pv.rows() || targets.cols() != pv.cols()) {
    throw DimensionError(shapes_message("binary_cross_entropy", pv, targets));
  }
  if (weights.rows() != pv.rows() || weights.cols() != pv.cols()) {
    throw DimensionError(shapes_message("binary_cross_entropy", pv, weights));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < pv.size(); ++i) {
    const double w = weights.data()[i];
    if (w == 0.0) continue;
    const double t = targets.data()[i];
    const double q = pv.data()[i];
    double term = 0.0;
    if (t != 0.0) term -= t * std::log(std::max(q, kProbabilityFloor));
    if (t != 1.0) term -= (1.0 - t) * std::log(std::max(1.0 - q,
                                                        kProbabilityFloor));
    total += w * term;
  }
  return make_result(
      Matrix::Constant(1, 1, total), "binary_cross_entropy", {np},
      [targets, weights](Node& self) {
        const NodePtr& parent = self.parents[0];
        const Matrix& pv = parent->value;
        Matrix& g = parent->grad_buffer();
        const double up = self.grad(0, 0);
        for (Eigen::Index i = 0; i < pv.size(); ++i) {
          const double w = weights.data()[i];
          if (w == 0.0) continue;
          const double t = targets.data()[i];
          const double q = pv.data()[i];
          double d = 0.0;
          if (t != 0.0 && q > kProbabilityFloor) d -= t / q;
          if (t != 1.0 && 1.0 - q > kProbabilityFloor) {
            d += (1.0 - t) / (1.0 - q);
          }
          g.data()[i] += up * w * d;
        }
      });
}

Tensor negative_log_likelihood(const Tensor& probs,
                               const std::vector<Pick>& picks) {
  const auto& np = checked(probs, "negative_log_likelihood");
  const Matrix& pv = np->value;
  double total = 0.0;
  for (const Pick& k : picks) {
    if (k.row >= static_cast<std::size_t>(pv.rows()) ||
        k.col >= static_cast<std::size_t>(pv.cols())) {
      throw DimensionError("negative_log_likelihood: pick (" +
                           std::to_string(k.row) + "," +
                           std::to_string(k.col) + ") out of range for " +
                           shape_string(pv));
    }
    const double q = pv(static_cast<Eigen::Index>(k.row),
                        static_cast<Eigen::Index>(k.col));
    total -= k.weight * std::log(std::max(q, kProbabilityFloor));
  }
  return make_result(Matrix::Constant(1, 1, total), "negative_log_likelihood",
                     {np}, [picks](Node& self) {
                       const NodePtr& parent = self.parents[0];
                       Matrix& g = parent->grad_buffer();
                       const double up = self.grad(0, 0);
                       for (const Pick& k : picks) {
                         const auto r = static_cast<Eigen::Index>(k.row);
                         const auto c = static_cast<Eigen::Index>(k.col);
                         const double q = parent->value(r, c);
                         if (q > kProbabilityFloor) {
                           g(r, c) -= up * k.weight / q;
                         }
                       }
                     });
}

}  // namespace etp
