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

// Randomized finite-difference cases for every differentiable op and for
// the two full training objectives. Shared by the unit tests and the
// acceptance gate.

#ifndef ETP_TESTING_GRADIENT_CASES_H_
#define ETP_TESTING_GRADIENT_CASES_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "etp/data.h"
#include "etp/gru.h"
#include "etp/loss.h"
#include "etp/model.h"
#include "etp/tensor.h"
#include "testing/fixtures.h"
#include "testing/gradcheck.h"

namespace etp::testing {

struct GradientCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

namespace internal {

inline std::size_t dim(std::mt19937_64& rng, std::size_t lo = 1,
                       std::size_t hi = 4) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Random projection to a scalar so every output entry gets a distinct
// upstream gradient.
inline Tensor project(const Tensor& out, std::mt19937_64& rng) {
  return weighted_sum(out, random_matrix(out.rows(), out.cols(), rng));
}

inline GradientCase unary_case(std::string name, std::mt19937_64& rng,
                               std::size_t rows, std::size_t cols,
                               std::function<Tensor(const Tensor&)> op) {
  Tensor a = Tensor::parameter(random_matrix(rows, cols, rng));
  Tensor probe = op(a);
  const Matrix w = random_matrix(probe.rows(), probe.cols(), rng);
  return {std::move(name), [a, w, op]() {
            return check_gradients([&] { return weighted_sum(op(a), w); },
                                   {a});
          }};
}

inline GradientCase binary_case(
    std::string name, std::mt19937_64& rng, std::size_t ar, std::size_t ac,
    std::size_t br, std::size_t bc,
    std::function<Tensor(const Tensor&, const Tensor&)> op) {
  Tensor a = Tensor::parameter(random_matrix(ar, ac, rng));
  Tensor b = Tensor::parameter(random_matrix(br, bc, rng));
  Tensor probe = op(a, b);
  const Matrix w = random_matrix(probe.rows(), probe.cols(), rng);
  return {std::move(name), [a, b, w, op]() {
            return check_gradients([&] { return weighted_sum(op(a, b), w); },
                                   {a, b});
          }};
}

inline std::vector<data::Instance> gradient_instances(std::mt19937_64& rng) {
  std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::vector<data::Instance> out;
  for (int i = 0; i < 3; ++i) {
    data::Instance inst;
    inst.id = "g" + std::to_string(i);
    const std::size_t len = dim(rng, 3, 6);
    for (std::size_t t = 0; t < len; ++t) inst.document.push_back(words[pick(rng)]);
    if (i == 1) inst.query = std::vector<std::string>{"q", words[pick(rng)]};
    inst.label = i % 2;
    const std::size_t start = dim(rng, 0, len - 2);
    const std::size_t end = std::min(len, start + dim(rng, 1, 2));
    inst.evidence = {{start, end}};
    inst.rationale = spans_to_mask(inst.evidence, len);
    out.push_back(std::move(inst));
  }
  return out;
}

struct ModelFixture {
  std::vector<data::Instance> instances;
  std::vector<data::Encoded> encoded;
  std::shared_ptr<model::ExplainerModel> explainer;
  data::Batch batch;
};

inline std::shared_ptr<ModelFixture> make_model_fixture(model::HeadKind head,
                                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto f = std::make_shared<ModelFixture>();
  f->instances = gradient_instances(rng);
  data::Featurizer featurizer = make_featurizer(f->instances);
  f->encoded = featurizer.encode_all(f->instances);
  f->explainer = std::make_shared<model::ExplainerModel>(
      tiny_model_config(featurizer.vocab().size(), head), seed);
  std::vector<const data::Encoded*> items;
  for (const auto& e : f->encoded) items.push_back(&e);
  f->batch = data::make_batch(items);
  return f;
}

}  // namespace internal

// One randomized configuration of every differentiable op.
inline std::vector<GradientCase> op_gradient_cases(std::uint64_t seed) {
  using internal::binary_case;
  using internal::dim;
  using internal::unary_case;
  std::mt19937_64 rng(seed);
  std::vector<GradientCase> cases;
  const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);

  cases.push_back(binary_case("matmul", rng, m, k, k, n, matmul));
  const std::pair<const char*, std::pair<std::size_t, std::size_t>> modes[] = {
      {"same", {m, n}}, {"row", {1, n}}, {"col", {m, 1}}, {"scalar", {1, 1}}};
  for (const auto& [mode, shape] : modes) {
    cases.push_back(binary_case(std::string("add/") + mode, rng, m, n,
                                shape.first, shape.second, add));
    cases.push_back(binary_case(std::string("sub/") + mode, rng, m, n,
                                shape.first, shape.second, sub));
    cases.push_back(binary_case(std::string("mul/") + mode, rng, m, n,
                                shape.first, shape.second, mul));
  }
  const double factor = random_matrix(1, 1, rng)(0, 0) * 3.0;
  cases.push_back(unary_case("scale", rng, m, n, [factor](const Tensor& a) {
    return scale(a, factor);
  }));
  cases.push_back(unary_case("transpose", rng, m, n, transpose));
  cases.push_back(unary_case("concat", rng, m, n, [](const Tensor& a) {
    Tensor b = slice_cols(a, 0, 1);
    return concat({a, mul(b, b), a});
  }));
  cases.push_back(unary_case("stack_rows", rng, m, n, [](const Tensor& a) {
    return stack_rows({a, tanh(a), slice_rows(a, 0, 1)});
  }));
  {
    const std::size_t r0 = dim(rng, 0, m - 1), c0 = dim(rng, 0, n - 1);
    const std::size_t rn = dim(rng, 1, m - r0), cn = dim(rng, 1, n - c0);
    cases.push_back(unary_case("slice", rng, m, n, [=](const Tensor& a) {
      return slice(a, r0, rn, c0, cn);
    }));
    cases.push_back(unary_case("slice_rows", rng, m, n, [=](const Tensor& a) {
      return slice_rows(a, r0, rn);
    }));
    cases.push_back(unary_case("slice_cols", rng, m, n, [=](const Tensor& a) {
      return slice_cols(a, c0, cn);
    }));
  }
  cases.push_back(unary_case("sigmoid", rng, m, n,
                             [](const Tensor& a) { return sigmoid(scale(a, 2.0)); }));
  cases.push_back(unary_case("tanh", rng, m, n,
                             [](const Tensor& a) { return tanh(scale(a, 2.0)); }));
  cases.push_back(unary_case("softmax", rng, m, n,
                             [](const Tensor& a) { return softmax(scale(a, 2.0)); }));
  {
    const std::size_t s = dim(rng, 2, 5);
    Matrix upper = Matrix::Zero(static_cast<Eigen::Index>(s),
                                static_cast<Eigen::Index>(s));
    for (Eigen::Index i = 0; i < upper.rows(); ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        upper(i, j) = -std::numeric_limits<double>::infinity();
      }
    }
    cases.push_back(unary_case("softmax/masked", rng, s, s,
                               [upper](const Tensor& a) {
                                 return softmax(scale(a, 2.0), &upper);
                               }));
  }
  cases.push_back(unary_case("sum", rng, m, n, [](const Tensor& a) {
    return mul(sum(a), sum(a));
  }));
  cases.push_back(unary_case("mean", rng, m, n, [](const Tensor& a) {
    return mul(mean(a), mean(a));
  }));
  cases.push_back(unary_case("row_sum", rng, m, n, row_sum));
  {
    const Matrix w = random_matrix(m, n, rng);
    cases.push_back(unary_case("weighted_sum", rng, m, n, [w](const Tensor& a) {
      const Tensor s = weighted_sum(a, w);
      return mul(s, s);
    }));
  }
  {
    const std::mt19937_64 mask_rng(rng());
    cases.push_back(unary_case("dropout", rng, m, n, [mask_rng](const Tensor& a) {
      std::mt19937_64 r = mask_rng;  // identical mask on every evaluation
      return dropout(a, 0.3, r, true);
    }));
  }
  {
    std::vector<int> rows;
    const std::size_t count = dim(rng, 1, 6);
    for (std::size_t i = 0; i < count; ++i) {
      rows.push_back(static_cast<int>(dim(rng, 0, m - 1)));
    }
    cases.push_back(unary_case("gather_rows", rng, m, n, [rows](const Tensor& a) {
      return gather_rows(a, rows);
    }));
  }
  {
    Matrix targets = random_matrix(m, n, rng, 0.0, 1.0);
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
      if (i % 3 != 2) targets.data()[i] = targets.data()[i] < 0.5 ? 0.0 : 1.0;
    }
    const Matrix weights = random_matrix(m, n, rng, 0.1, 2.0);
    cases.push_back(unary_case("binary_cross_entropy", rng, m, n,
                               [targets, weights](const Tensor& a) {
                                 return binary_cross_entropy(
                                     sigmoid(scale(a, 2.0)), targets, weights);
                               }));
  }
  {
    std::vector<Pick> picks;
    const std::size_t count = dim(rng, 1, 5);
    for (std::size_t i = 0; i < count; ++i) {
      picks.push_back({dim(rng, 0, m - 1), dim(rng, 0, n - 1),
                       random_matrix(1, 1, rng, 0.1, 2.0)(0, 0)});
    }
    cases.push_back(unary_case("negative_log_likelihood", rng, m, n,
                               [picks](const Tensor& a) {
                                 return negative_log_likelihood(softmax(a),
                                                                picks);
                               }));
  }
  {
    const std::size_t in = dim(rng, 1, 3), h = dim(rng, 1, 3), b = dim(rng, 1, 3);
    GruWeights w = GruWeights::init(in, h, rng);
    Tensor x = Tensor::parameter(random_matrix(b, in, rng));
    Tensor h0 = Tensor::parameter(random_matrix(b, h, rng));
    const Matrix proj = random_matrix(b, h, rng);
    cases.push_back({"gru_cell", [=]() {
                       return check_gradients(
                           [&] { return weighted_sum(gru_cell(x, h0, w), proj); },
                           {x, h0, w.input_weight, w.recurrent_weight,
                            w.input_bias, w.recurrent_bias});
                     }});
    Tensor gx = Tensor::parameter(random_matrix(b, 3 * h, rng));
    Matrix step_mask(static_cast<Eigen::Index>(b), 1);
    for (std::size_t i = 0; i < b; ++i) step_mask(static_cast<Eigen::Index>(i), 0) = (i % 2 == 0) ? 1.0 : 0.0;
    cases.push_back({"gru_cell_projected", [=]() {
                       return check_gradients(
                           [&] {
                             return weighted_sum(
                                 gru_cell_projected(gx, h0, w, &step_mask), proj);
                           },
                           {gx, h0, w.recurrent_weight, w.recurrent_bias});
                     }});
  }
  {
    const std::size_t in = dim(rng, 1, 3), h = dim(rng, 1, 3);
    const std::size_t steps = dim(rng, 2, 4), batch = dim(rng, 1, 3);
    std::vector<double> valid(steps * batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t len = dim(rng, 1, steps);
      for (std::size_t t = 0; t < len; ++t) valid[t * batch + b] = 1.0;
    }
    Tensor x = Tensor::parameter(random_matrix(steps * batch, in, rng));
    BiGruWeights w{GruWeights::init(in, h, rng), GruWeights::init(in, h, rng)};
    const Matrix proj1 = random_matrix(steps * batch, h, rng);
    const Matrix proj2 = random_matrix(steps * batch, 2 * h, rng);
    for (bool reverse : {false, true}) {
      cases.push_back({reverse ? "gru_sequence/reverse" : "gru_sequence/forward",
                       [=]() {
                         const GruWeights& g = w.forward;
                         return check_gradients(
                             [&] {
                               return weighted_sum(
                                   gru_sequence(x, steps, batch, valid, g, reverse),
                                   proj1);
                             },
                             {x, g.input_weight, g.recurrent_weight, g.input_bias,
                              g.recurrent_bias});
                       }});
    }
    cases.push_back({"bigru_sequence", [=]() {
                       return check_gradients(
                           [&] {
                             return weighted_sum(
                                 bigru_sequence(x, steps, batch, valid, w), proj2);
                           },
                           {x, w.forward.input_weight, w.backward.recurrent_weight,
                            w.backward.input_bias});
                     }});
  }
  return cases;
}

// L_loss = L_task + lambda L_exp of the token head, and L_start + L_end of
// the span head, each on a tiny random model and batch. At most
// `entries_per_tensor` entries of every parameter are probed.
inline std::vector<GradientCase> model_gradient_cases(
    std::uint64_t seed, std::size_t entries_per_tensor = 6) {
  std::vector<GradientCase> cases;
  {
    auto f = internal::make_model_fixture(model::HeadKind::kToken, seed);
    const double lambda = 0.5 + static_cast<double>(seed % 5);
    cases.push_back({"token_head/L_loss", [f, lambda, seed,
                                           entries_per_tensor]() {
                       std::vector<Tensor> params;
                       for (const auto& [name, t] : f->explainer->parameters().entries()) {
                         params.push_back(t);
                       }
                       return check_gradients(
                           [&] {
                             const auto out = f->explainer->forward(f->batch, false, nullptr);
                             std::vector<int> labels;
                             for (const auto* e : f->batch.items) labels.push_back(e->label);
                             return loss::combined_loss(
                                 loss::task_loss(out.class_probs, labels),
                                 loss::explanation_loss(
                                     out, f->batch, loss::ExpWeighting::kInversePrior),
                                 lambda);
                           },
                           params, entries_per_tensor, seed);
                     }});
  }
  {
    auto f = internal::make_model_fixture(model::HeadKind::kSpan, seed + 1000);
    cases.push_back({"span_head/L_start+L_end", [f, seed, entries_per_tensor]() {
                       std::vector<Tensor> params;
                       for (const auto& [name, t] :
                            f->explainer->explanation_parameters().entries()) {
                         params.push_back(t);
                       }
                       for (const auto& [name, t] :
                            f->explainer->encoder.parameters().entries()) {
                         params.push_back(t);
                       }
                       return check_gradients(
                           [&] {
                             const auto out = f->explainer->forward(f->batch, false, nullptr);
                             return loss::explanation_loss(
                                 out, f->batch, loss::ExpWeighting::kInversePrior);
                           },
                           params, entries_per_tensor, seed);
                     }});
  }
  return cases;
}

}  // namespace etp::testing

#endif  // ETP_TESTING_GRADIENT_CASES_H_
