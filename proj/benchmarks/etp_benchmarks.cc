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

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "etp/data.h"
#include "etp/gru.h"
#include "etp/loss.h"
#include "etp/metrics.h"
#include "etp/model.h"
#include "etp/optim.h"
#include "etp/tensor.h"

namespace etp {
namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

void BM_Matmul(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = state.range(0);
  const Tensor a = Tensor::constant(random_matrix(n, n, rng));
  const Tensor b = Tensor::constant(random_matrix(n, n, rng));
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).value().data());
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_BiGruSequence(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const std::size_t steps = static_cast<std::size_t>(state.range(0)), batch = 16;
  const BiGruWeights w = BiGruWeights::init(64, 64, rng);
  const Tensor x = Tensor::parameter(random_matrix(steps * batch, 64, rng));
  const std::vector<double> valid(steps * batch, 1.0);
  const Matrix proj = random_matrix(steps * batch, 128, rng);
  for (auto _ : state) {
    const Tensor out = bigru_sequence(x, steps, batch, valid, w);
    if (state.range(1)) backward(weighted_sum(out, proj));
    benchmark::DoNotOptimize(out.value().data());
  }
}
BENCHMARK(BM_BiGruSequence)->Args({32, 0})->Args({32, 1});

struct TrainingFixture {
  data::DatasetSplits splits;
  std::vector<data::Encoded> encoded;
  data::Batch batch;

  TrainingFixture() {
    data::SyntheticSpec spec;
    spec.num_train = 16;
    spec.num_val = 1;
    spec.num_test = 1;
    splits = data::generate_synthetic(spec);
    const data::Featurizer f(
        data::Featurizer::build_vocabulary(splits.train, data::SubwordMode::kWord, "."),
        data::SubwordMode::kWord, 512);
    encoded = f.encode_all(splits.train);
    batch = data::batchify(encoded, 16)[0];
  }
};

// One optimizer step on a batch of 16 default-size synthetic documents.
void BM_ExplainerTrainStep(benchmark::State& state) {
  static const TrainingFixture fx;
  model::ModelConfig c;
  c.vocab_size = 256;
  c.head = state.range(0) ? model::HeadKind::kSpan : model::HeadKind::kToken;
  model::ExplainerModel m(c, 1);
  ParameterSet params = m.parameters();
  AdamState adam = make_adam_state(params);
  std::mt19937_64 rng(3);
  std::vector<int> labels;
  for (const auto* e : fx.batch.items) labels.push_back(e->label);
  for (auto _ : state) {
    params.zero_grad();
    const auto out = m.forward(fx.batch, true, &rng);
    const Tensor l = loss::combined_loss(
        loss::task_loss(out.class_probs, labels),
        loss::explanation_loss(out, fx.batch, loss::ExpWeighting::kInversePrior), 1.0);
    backward(l);
    adam_step(params, adam, AdamConfig{});
  }
}
BENCHMARK(BM_ExplainerTrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Auprc(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  Mask gold(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    gold[i] = u(rng) < 0.2;
  }
  gold[0] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(metrics::auprc(scores, gold));
}
BENCHMARK(BM_Auprc)->Arg(32)->Arg(512);

void BM_IouF1(benchmark::State& state) {
  std::mt19937_64 rng(5);
  SpanSet pred, gold;
  for (std::size_t i = 0; i < static_cast<std::size_t>(state.range(0)); ++i) {
    pred.push_back({10 * i, 10 * i + 1 + rng() % 8});
    gold.push_back({10 * i + rng() % 3, 10 * i + 5});
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::iou_f1(pred, gold));
}
BENCHMARK(BM_IouF1)->Arg(4)->Arg(64);

}  // namespace
}  // namespace etp

BENCHMARK_MAIN();
