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

#include "cli/commands.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "etp/checkpoint.h"
#include "etp/errors.h"
#include "json.hpp"

namespace etp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void require(const std::string& value, const char* flag, const char* cmd) {
  if (value.empty()) {
    throw UsageError(std::string(cmd) + " requires --" + flag);
  }
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw DataError(std::string("missing ") + what + ": " + path);
  }
}

bool is_nonempty_dir(const std::string& dir) {
  return fs::is_directory(dir) && !fs::is_empty(dir);
}

data::LabelMap labels_for(const RunConfig& config) {
  if (!config.run_dir.empty() &&
      fs::is_regular_file(join(config.run_dir, "labels.txt"))) {
    return data::LabelMap::load(join(config.run_dir, "labels.txt"));
  }
  if (!config.data_dir.empty() &&
      fs::is_regular_file(join(config.data_dir, "labels.txt"))) {
    return data::LabelMap::load(join(config.data_dir, "labels.txt"));
  }
  return {};
}

// Instances named by --input, or the --split of --data.
std::vector<data::Instance> target_instances(const RunConfig& config,
                                             data::LabelMap& labels,
                                             const char* cmd) {
  if (!config.input.empty()) return data::load_jsonl(config.input, labels);
  if (config.data_dir.empty()) {
    throw UsageError(std::string(cmd) + " requires --input or --data");
  }
  const std::string path = join(config.data_dir, config.split + ".jsonl");
  require_file(path, "dataset split");
  return data::load_jsonl(path, labels);
}

std::string write_predictions(const std::vector<pipeline::Prediction>& preds,
                              const data::LabelMap& labels) {
  std::string out;
  for (const pipeline::Prediction& p : preds) {
    out += prediction_to_json(p, labels);
    out += '\n';
  }
  return out;
}

void write_report(const metrics::MetricsReport& report,
                  const std::string& dir) {
  write_text_file(join(dir, "metrics.json"), report.to_json());
  write_text_file(join(dir, "metrics.txt"), report.to_text());
}

int label_from_json(const json& v, const data::LabelMap& labels,
                    const std::string& where) {
  int index = -1;
  if (v.is_number_integer()) {
    index = v.get<int>();
  } else if (v.is_string()) {
    const auto found = labels.find(v.get<std::string>());
    if (!found) {
      throw DataError(where + ": unknown label '" + v.get<std::string>() +
                      "'");
    }
    index = *found;
  } else {
    throw DataError(where + ": label must be a string or integer");
  }
  if (index < 0 ||
      (labels.size() > 0 && static_cast<std::size_t>(index) >= labels.size())) {
    throw DataError(where + ": label " + std::to_string(index) +
                    " out of range");
  }
  return index;
}

}  // namespace

const std::vector<data::Instance>& Dataset::split(
    const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw UsageError("unknown split '" + name + "' (train|val|test)");
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw DataError("cannot write " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  const std::string label_path = join(dir, "labels.txt");
  if (fs::is_regular_file(label_path)) d.labels = data::LabelMap::load(label_path);
  for (const char* split : {"train", "val", "test"}) {
    const std::string path = join(dir, std::string(split) + ".jsonl");
    require_file(path, "dataset split");
  }
  d.train = data::load_jsonl(join(dir, "train.jsonl"), d.labels);
  d.val = data::load_jsonl(join(dir, "val.jsonl"), d.labels);
  d.test = data::load_jsonl(join(dir, "test.jsonl"), d.labels);
  d.labels.freeze();
  return d;
}

std::vector<double> default_lambda_grid() {
  return {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0};
}

std::string prediction_to_json(const pipeline::Prediction& p,
                               const data::LabelMap& labels) {
  json j;
  j["id"] = p.id;
  if (labels.size() > static_cast<std::size_t>(p.label) && !labels.is_integer()) {
    j["label"] = labels.name(p.label);
  } else {
    j["label"] = p.label;
  }
  j["probs"] = p.probs;
  json mask = json::array();
  for (auto m : p.rationale.hard) mask.push_back(static_cast<int>(m));
  j["rationale"] = mask;
  json spans = json::array();
  for (const Span& s : p.rationale.spans) {
    spans.push_back({{"start_token", s.start}, {"end_token", s.end}});
  }
  j["spans"] = spans;
  j["soft_scores"] = p.rationale.soft;
  return j.dump();
}

std::vector<pipeline::Prediction> load_predictions(
    const std::string& path, const data::LabelMap& labels) {
  std::istringstream in(read_text_file(path));
  std::vector<pipeline::Prediction> out;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(number);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.contains("id") || !j.contains("label") || !j.contains("rationale")) {
      throw DataError(where + ": predictions need id, label and rationale");
    }
    pipeline::Prediction p;
    try {
      p.id = j.at("id").get<std::string>();
      p.label = label_from_json(j.at("label"), labels, where);
      for (int v : j.at("rationale").get<std::vector<int>>()) {
        if (v != 0 && v != 1) throw DataError(where + ": rationale must be 0/1");
        p.rationale.hard.push_back(static_cast<std::uint8_t>(v));
      }
      if (j.contains("soft_scores")) {
        p.rationale.soft = j.at("soft_scores").get<std::vector<double>>();
      }
      if (j.contains("probs")) p.probs = j.at("probs").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    p.rationale.spans = mask_to_spans(p.rationale.hard);
    out.push_back(std::move(p));
  }
  return out;
}

metrics::MetricsReport train_and_write(const RunConfig& config,
                                       const Dataset& dataset,
                                       const std::string& out_dir,
                                       const Logger& log) {
  fs::create_directories(out_dir);
  RunConfig snapshot = config;
  snapshot.out = out_dir;
  // Persisted before any training step.
  write_text_file(join(out_dir, "config.txt"), to_config_text(snapshot));

  pipeline::TrainConfig train = config.train;
  train.log = log;
  const pipeline::PipelineState state =
      pipeline::run_pipeline(dataset.train, dataset.val, dataset.labels, train);

  state.featurizer.vocab().save(join(out_dir, "vocab.txt"));
  dataset.labels.save(join(out_dir, "labels.txt"));
  save_checkpoint(join(out_dir, "stage1.ckpt"), state.explainer.to_checkpoint());
  save_checkpoint(join(out_dir, "stage2.ckpt"),
                  state.predictor->to_checkpoint());
  write_text_file(join(out_dir, "stage1_history.csv"), state.stage1.csv());
  write_text_file(join(out_dir, "stage2_history.csv"), state.stage2->csv());

  const auto preds = pipeline::infer(state, dataset.test);
  write_text_file(join(out_dir, "predictions.jsonl"),
                  write_predictions(preds, dataset.labels));
  const metrics::MetricsReport report =
      pipeline::evaluate(state, dataset.test, preds);
  write_report(report, out_dir);
  return report;
}

pipeline::PipelineState load_run(const std::string& run_dir) {
  for (const char* name :
       {"config.txt", "vocab.txt", "labels.txt", "stage1.ckpt", "stage2.ckpt"}) {
    require_file(join(run_dir, name), "run artifact");
  }
  RunConfig rc;
  apply_config_file(rc, join(run_dir, "config.txt"));
  data::Vocabulary vocab = data::Vocabulary::load(join(run_dir, "vocab.txt"));
  data::Featurizer featurizer(std::move(vocab), rc.train.subword,
                              rc.train.max_length);
  auto explainer = model::ExplainerModel::from_checkpoint(
      load_checkpoint(join(run_dir, "stage1.ckpt")));
  auto predictor = model::PredictorModel::from_checkpoint(
      load_checkpoint(join(run_dir, "stage2.ckpt")));
  rc.train.model = explainer.config();
  pipeline::PipelineState state{rc.train,
                                std::move(featurizer),
                                data::LabelMap::load(join(run_dir, "labels.txt")),
                                std::move(explainer),
                                std::move(predictor),
                                {},
                                std::nullopt,
                                0};
  return state;
}

std::vector<metrics::SweepRow> run_sweep(const RunConfig& config,
                                         const Dataset& dataset,
                                         const std::vector<double>& lambdas,
                                         const std::string& out_dir,
                                         const Logger& log) {
  std::vector<metrics::SweepRow> rows(lambdas.size());
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < lambdas.size(); i = next++) {
      RunConfig point = config;
      point.train.lambda = lambdas[i];
      point.train.seed = config.train.seed + i;
      const std::string prefix = "[lambda=" + format_double(lambdas[i]) + "] ";
      Logger point_log;
      if (log) {
        point_log = [&, prefix](const std::string& line) {
          std::lock_guard<std::mutex> lock(log_mutex);
          log(prefix + line);
        };
      }
      rows[i].lambda = lambdas[i];
      try {
        rows[i].report = train_and_write(
            point, dataset, join(out_dir, "point_" + std::to_string(i)),
            point_log);
      } catch (const std::exception& e) {
        rows[i].error = e.what();
        if (point_log) point_log(std::string("failed: ") + e.what());
      }
    }
  };
  const std::size_t jobs =
      std::max<std::size_t>(1, std::min(config.jobs, lambdas.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (std::thread& t : threads) t.join();
  return rows;
}

std::string sweep_svg(const std::vector<metrics::SweepRow>& rows) {
  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 150,
                   kTop = 30, kBottom = 50;
  std::vector<const metrics::SweepRow*> ok;
  double min_positive = 0.0;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    ok.push_back(&r);
    if (r.lambda > 0.0 && (min_positive == 0.0 || r.lambda < min_positive)) {
      min_positive = r.lambda;
    }
  }
  std::sort(ok.begin(), ok.end(),
            [](auto* a, auto* b) { return a->lambda < b->lambda; });
  if (min_positive == 0.0) min_positive = 1.0;
  // Lambda 0 is drawn one decade left of the smallest positive value.
  auto lx = [&](double l) {
    return std::log10(l > 0.0 ? l : min_positive / 10.0);
  };
  double lo = 0.0, hi = 1.0;
  if (!ok.empty()) {
    lo = lx(ok.front()->lambda);
    hi = lx(ok.back()->lambda);
    if (hi - lo < 1e-9) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double l) { return kLeft + (lx(l) - lo) / (hi - lo) * plot_w; };
  auto py = [&](double v) { return kTop + (1.0 - v / 2.0) * plot_h; };

  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\" "
    << "font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
    << kLeft + plot_w << "\" y2=\"" << kTop + plot_h
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
    << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (double v : {0.0, 0.5, 1.0, 1.5, 2.0}) {
    s << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(v) + 4
      << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  for (const auto* r : ok) {
    s << "<text x=\"" << px(r->lambda) << "\" y=\"" << kTop + plot_h + 18
      << "\" text-anchor=\"middle\">" << format_double(r->lambda)
      << "</text>\n";
  }
  s << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
    << "\" text-anchor=\"middle\">lambda (log scale)</text>\n";
  struct Series {
    const char* name;
    const char* color;
    double metrics::MetricsReport::*field;
  };
  const Series series[] = {
      {"macro F1", "#1f77b4", &metrics::MetricsReport::macro_f1},
      {"token F1", "#d62728", &metrics::MetricsReport::token_f1},
      {"criterion", "#2ca02c", &metrics::MetricsReport::criterion},
  };
  for (std::size_t k = 0; k < 3; ++k) {
    const Series& ser = series[k];
    s << "<polyline fill=\"none\" stroke=\"" << ser.color
      << "\" stroke-width=\"2\" points=\"";
    for (const auto* r : ok) {
      s << px(r->lambda) << ',' << py(r->report.*ser.field) << ' ';
    }
    s << "\"/>\n";
    for (const auto* r : ok) {
      s << "<circle cx=\"" << px(r->lambda) << "\" cy=\""
        << py(r->report.*ser.field) << "\" r=\"3\" fill=\"" << ser.color
        << "\"/>\n";
    }
    const double ly = kTop + 20.0 * static_cast<double>(k);
    s << "<line x1=\"" << kWidth - kRight + 15 << "\" y1=\"" << ly
      << "\" x2=\"" << kWidth - kRight + 35 << "\" y2=\"" << ly
      << "\" stroke=\"" << ser.color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << kWidth - kRight + 40 << "\" y=\"" << ly + 4 << "\">"
      << ser.name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int cmd_gen_data(const RunConfig& config, const Logger& log) {
  require(config.out, "out", "gen-data");
  if (is_nonempty_dir(config.out) && !config.force) {
    throw UsageError("refusing to write into non-empty directory " +
                     config.out + " (use --force)");
  }
  config.synthetic.validate();
  const data::DatasetSplits splits = data::generate_synthetic(config.synthetic);
  fs::create_directories(config.out);
  write_text_file(join(config.out, "config.txt"), to_config_text(config));
  data::save_jsonl(join(config.out, "train.jsonl"), splits.train, splits.labels);
  data::save_jsonl(join(config.out, "val.jsonl"), splits.val, splits.labels);
  data::save_jsonl(join(config.out, "test.jsonl"), splits.test, splits.labels);
  data::Featurizer::build_vocabulary(splits.train, config.train.subword,
                                     config.train.wildcard)
      .save(join(config.out, "vocab.txt"));
  splits.labels.save(join(config.out, "labels.txt"));
  if (log) {
    log("wrote " + std::to_string(splits.train.size()) + "/" +
        std::to_string(splits.val.size()) + "/" +
        std::to_string(splits.test.size()) + " instances to " + config.out);
  }
  return 0;
}

int cmd_train(const RunConfig& config, const Logger& log) {
  require(config.data_dir, "data", "train");
  require(config.out, "out", "train");
  const Dataset dataset = load_dataset(config.data_dir);
  const metrics::MetricsReport report =
      train_and_write(config, dataset, config.out, log);
  std::cout << report.to_text();
  return 0;
}

int cmd_predict(const RunConfig& config, const Logger& log) {
  require(config.run_dir, "run", "predict");
  require(config.out, "out", "predict");
  const pipeline::PipelineState state = load_run(config.run_dir);
  data::LabelMap labels = state.labels;
  const auto instances = target_instances(config, labels, "predict");
  const auto preds = pipeline::infer(state, instances);
  write_text_file(config.out, write_predictions(preds, labels));
  if (log) {
    log("wrote " + std::to_string(preds.size()) + " predictions to " +
        config.out);
  }
  return 0;
}

int cmd_eval(const RunConfig& config, const Logger& log) {
  metrics::MetricsReport report;
  if (!config.predictions.empty()) {
    // Rationale-scorer mode: no explainer needed.
    data::LabelMap labels = labels_for(config);
    const auto gold = target_instances(config, labels, "eval");
    const auto preds = load_predictions(config.predictions, labels);
    std::optional<pipeline::PipelineState> state;
    metrics::BatchClassifier classifier;
    if (!config.run_dir.empty()) {
      state.emplace(load_run(config.run_dir));
      classifier = [&](const std::vector<data::Instance>& xs) {
        return pipeline::classify(*state->predictor, state->featurizer, xs,
                                  state->config.batch_size);
      };
    }
    const int k = static_cast<int>(std::max<std::size_t>(labels.size(), 2));
    report = pipeline::evaluate_predictions(
        gold, preds, k, state ? &classifier : nullptr,
        state ? state->config.wildcard : config.train.wildcard,
        config.train.seed);
  } else {
    require(config.run_dir, "run", "eval");
    const pipeline::PipelineState state = load_run(config.run_dir);
    data::LabelMap labels = state.labels;
    const auto gold = target_instances(config, labels, "eval");
    const auto preds = pipeline::infer(state, gold);
    report = pipeline::evaluate(state, gold, preds);
  }
  if (!config.out.empty()) {
    fs::create_directories(config.out);
    write_report(report, config.out);
    if (log) log("wrote metrics to " + config.out);
  }
  std::cout << report.to_text();
  return 0;
}

int cmd_sweep(const RunConfig& config, const Logger& log) {
  require(config.data_dir, "data", "sweep");
  require(config.out, "out", "sweep");
  const std::vector<double> lambdas =
      config.lambdas.empty() ? default_lambda_grid() : config.lambdas;
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw UsageError("sweep: lambda values must be finite and >= 0");
    }
  }
  const Dataset dataset = load_dataset(config.data_dir);
  fs::create_directories(config.out);
  RunConfig snapshot = config;
  snapshot.lambdas = lambdas;
  write_text_file(join(config.out, "config.txt"), to_config_text(snapshot));
  const auto rows = run_sweep(config, dataset, lambdas, config.out, log);
  write_text_file(join(config.out, "sweep.csv"), metrics::sweep_csv(rows));
  write_text_file(join(config.out, "sweep.svg"), sweep_svg(rows));
  const auto best = metrics::select_lambda(rows);
  if (!best) {
    write_text_file(join(config.out, "selected_lambda.txt"), "none\n");
    std::cerr << "sweep: every point failed\n";
    return 1;
  }
  const std::string selected = format_double(rows[*best].lambda);
  write_text_file(join(config.out, "selected_lambda.txt"), selected + "\n");
  std::cout << "selected_lambda=" << selected << '\n';
  return 0;
}

}  // namespace etp::cli
