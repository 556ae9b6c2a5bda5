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

// Subcommand implementations and the file artifacts they exchange.
//
// Dataset directory: train.jsonl, val.jsonl, test.jsonl, vocab.txt,
// labels.txt. Run directory: config.txt, vocab.txt, labels.txt,
// stage1.ckpt, stage2.ckpt, stage1_history.csv, stage2_history.csv,
// predictions.jsonl, metrics.json, metrics.txt.
//
// Predictions JSONL, one object per instance:
//   {"id": "...", "label": <name or integer>, "probs": [...],
//    "rationale": [0, 1, ...], "spans": [{"start_token": s, "end_token": e}],
//    "soft_scores": [...]}

#ifndef ETP_TOOLS_COMMANDS_H_
#define ETP_TOOLS_COMMANDS_H_

#include <functional>
#include <string>
#include <vector>

#include "cli/run_config.h"
#include "etp/data.h"
#include "etp/metrics.h"
#include "etp/pipeline.h"

namespace etp::cli {

using Logger = std::function<void(const std::string&)>;

struct Dataset {
  std::vector<data::Instance> train;
  std::vector<data::Instance> val;
  std::vector<data::Instance> test;
  data::LabelMap labels;

  const std::vector<data::Instance>& split(const std::string& name) const;
};

Dataset load_dataset(const std::string& dir);

// 1-2-5 steps from 0.1 to 100.
std::vector<double> default_lambda_grid();

std::string prediction_to_json(const pipeline::Prediction& prediction,
                               const data::LabelMap& labels);
std::vector<pipeline::Prediction> load_predictions(
    const std::string& path, const data::LabelMap& labels);

// Trains both stages on `dataset`, evaluates on its test split and writes
// every run artifact into `out_dir`.
metrics::MetricsReport train_and_write(const RunConfig& config,
                                       const Dataset& dataset,
                                       const std::string& out_dir,
                                       const Logger& log);

// Loads a run directory written by train_and_write.
pipeline::PipelineState load_run(const std::string& run_dir);

// One pipeline run per lambda, seeded with seed + index, using up to
// `config.jobs` threads. Failures are recorded in the row and do not stop
// the sweep. Each point's artifacts go to out_dir/point_<index>.
std::vector<metrics::SweepRow> run_sweep(const RunConfig& config,
                                         const Dataset& dataset,
                                         const std::vector<double>& lambdas,
                                         const std::string& out_dir,
                                         const Logger& log);

// Static line plot of macro F1, token F1 and the criterion against lambda
// on a log axis.
std::string sweep_svg(const std::vector<metrics::SweepRow>& rows);

int cmd_gen_data(const RunConfig& config, const Logger& log);
int cmd_train(const RunConfig& config, const Logger& log);
int cmd_predict(const RunConfig& config, const Logger& log);
int cmd_eval(const RunConfig& config, const Logger& log);
int cmd_sweep(const RunConfig& config, const Logger& log);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace etp::cli

#endif  // ETP_TOOLS_COMMANDS_H_
