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

#include "etp/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "etp/checkpoint.h"
#include "etp/errors.h"
#include "etp/model.h"

namespace etp::metrics {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) +
                         " predictions for " + std::to_string(b) +
                         " references");
  }
}

std::size_t overlap(const Mask& a, const Mask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += (a[i] && b[i]) ? 1 : 0;
  return n;
}

Mask complement(const Mask& m) {
  Mask out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 0 : 1;
  return out;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(
      std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

double harmonic(double precision, double recall) {
  return ratio(2.0 * precision * recall, precision + recall);
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& gold,
                int k) {
  if (pred.empty()) throw UsageError("macro_f1: empty input");
  if (pred.size() != gold.size()) {
    throw UsageError("macro_f1: prediction and gold lengths differ");
  }
  if (k < 1) throw UsageError("macro_f1: k must be positive");
  std::vector<double> tp(k, 0.0), fp(k, 0.0), fn(k, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= k || gold[i] < 0 || gold[i] >= k) {
      throw UsageError("macro_f1: label outside [0, " + std::to_string(k) +
                       ")");
    }
    if (pred[i] == gold[i]) {
      tp[pred[i]] += 1.0;
    } else {
      fp[pred[i]] += 1.0;
      fn[gold[i]] += 1.0;
    }
  }
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    total += harmonic(ratio(tp[c], tp[c] + fp[c]), ratio(tp[c], tp[c] + fn[c]));
  }
  return total / static_cast<double>(k);
}

Prf token_prf(const Mask& pred, const Mask& gold) {
  check_aligned(pred.size(), gold.size(), "token_prf");
  const auto common = static_cast<double>(overlap(pred, gold));
  Prf r;
  r.precision = ratio(common, static_cast<double>(count_ones(pred)));
  r.recall = ratio(common, static_cast<double>(count_ones(gold)));
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

TokenAgreement token_agreement(const std::vector<Mask>& pred,
                               const std::vector<Mask>& gold) {
  check_aligned(pred.size(), gold.size(), "token_agreement");
  TokenAgreement out;
  if (pred.empty()) return out;
  double common = 0.0, npred = 0.0, ngold = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Prf p = token_prf(pred[i], gold[i]);
    out.macro.precision += p.precision;
    out.macro.recall += p.recall;
    out.macro.f1 += p.f1;
    common += static_cast<double>(overlap(pred[i], gold[i]));
    npred += static_cast<double>(count_ones(pred[i]));
    ngold += static_cast<double>(count_ones(gold[i]));
  }
  const auto n = static_cast<double>(pred.size());
  out.macro.precision /= n;
  out.macro.recall /= n;
  out.macro.f1 /= n;
  out.micro.precision = ratio(common, npred);
  out.micro.recall = ratio(common, ngold);
  out.micro.f1 = harmonic(out.micro.precision, out.micro.recall);
  return out;
}

double iou(const Span& a, const Span& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
  const double uni = static_cast<double>(a.end - a.start) +
                     static_cast<double>(b.end - b.start) - inter;
  return ratio(inter, uni);
}

double iou_f1(const SpanSet& pred, const SpanSet& gold, double threshold) {
  struct Pair {
    double iou;
    std::size_t p;
    std::size_t g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    for (std::size_t g = 0; g < gold.size(); ++g) {
      const double v = iou(pred[p], gold[g]);
      if (v >= threshold && v > 0.0) pairs.push_back({v, p, g});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
  std::vector<bool> pred_used(pred.size(), false);
  std::vector<bool> gold_used(gold.size(), false);
  double tp = 0.0;
  for (const Pair& x : pairs) {
    if (pred_used[x.p] || gold_used[x.g]) continue;
    pred_used[x.p] = true;
    gold_used[x.g] = true;
    tp += 1.0;
  }
  return harmonic(ratio(tp, static_cast<double>(pred.size())),
                  ratio(tp, static_cast<double>(gold.size())));
}

double mean_iou_f1(const std::vector<SpanSet>& pred,
                   const std::vector<SpanSet>& gold, double threshold) {
  check_aligned(pred.size(), gold.size(), "mean_iou_f1");
  std::vector<double> v;
  v.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    v.push_back(iou_f1(pred[i], gold[i], threshold));
  }
  return mean(v);
}

std::optional<double> auprc(const std::vector<double>& scores,
                            const Mask& gold) {
  check_aligned(scores.size(), gold.size(), "auprc");
  const auto positives = static_cast<double>(count_ones(gold));
  if (positives == 0.0) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  double hits = 0.0;
  double ap = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!gold[order[k]]) continue;
    hits += 1.0;
    ap += hits / static_cast<double>(k + 1);
  }
  return ap / positives;
}

double mean_auprc(const std::vector<std::vector<double>>& scores,
                  const std::vector<Mask>& gold) {
  check_aligned(scores.size(), gold.size(), "mean_auprc");
  std::vector<double> v;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (auto ap = auprc(scores[i], gold[i])) v.push_back(*ap);
  }
  return mean(v);
}

double Faithfulness::mean_comprehensiveness() const {
  return mean(comprehensiveness);
}

double Faithfulness::mean_sufficiency() const { return mean(sufficiency); }

Faithfulness faithfulness(const BatchClassifier& classify,
                          const std::vector<data::Instance>& instances,
                          const std::vector<Mask>& rationales,
                          const std::string& wildcard) {
  check_aligned(rationales.size(), instances.size(), "faithfulness");
  const std::size_t n = instances.size();
  std::vector<data::Instance> inputs;
  inputs.reserve(3 * n);
  for (const data::Instance& inst : instances) inputs.push_back(inst);
  for (std::size_t i = 0; i < n; ++i) {
    inputs.push_back(model::mask_instance(instances[i],
                                          complement(rationales[i]), wildcard));
  }
  for (std::size_t i = 0; i < n; ++i) {
    inputs.push_back(
        model::mask_instance(instances[i], rationales[i], wildcard));
  }
  const std::vector<std::vector<double>> probs = classify(inputs);
  check_aligned(probs.size(), inputs.size(), "faithfulness classifier");
  Faithfulness out;
  out.comprehensiveness.reserve(n);
  out.sufficiency.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = argmax(probs[i]);
    const double full = probs[i][j];
    // An empty stripped set or a full kept set leaves the input unchanged;
    // report exact zeros rather than relying on bitwise-equal reruns.
    const std::size_t ones = count_ones(rationales[i]);
    out.comprehensiveness.push_back(ones == 0 ? 0.0
                                              : full - probs[n + i][j]);
    out.sufficiency.push_back(ones == rationales[i].size()
                                  ? 0.0
                                  : full - probs[2 * n + i][j]);
  }
  return out;
}

double comprehensiveness(const BatchClassifier& classify,
                         const data::Instance& instance, const Mask& rationale,
                         const std::string& wildcard) {
  return faithfulness(classify, {instance}, {rationale}, wildcard)
      .comprehensiveness.front();
}

double sufficiency(const BatchClassifier& classify,
                   const data::Instance& instance, const Mask& rationale,
                   const std::string& wildcard) {
  return faithfulness(classify, {instance}, {rationale}, wildcard)
      .sufficiency.front();
}

Mask random_mask_like(const Mask& mask, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(mask.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t k = count_ones(mask);
  // Partial Fisher-Yates; std::shuffle is not specified bit-for-bit.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Mask out(mask.size(), 0);
  for (std::size_t i = 0; i < k; ++i) out[idx[i]] = 1;
  return out;
}

double macro_average_length(const std::vector<SpanSet>& spans) {
  std::vector<double> per_instance;
  for (const SpanSet& s : spans) {
    if (s.empty()) continue;
    double total = 0.0;
    for (const Span& x : s) total += static_cast<double>(x.end - x.start);
    per_instance.push_back(total / static_cast<double>(s.size()));
  }
  return mean(per_instance);
}

ExplanationStatistics explanation_statistics(const std::vector<Mask>& pred,
                                             const std::vector<Mask>& gold) {
  check_aligned(pred.size(), gold.size(), "explanation_statistics");
  ExplanationStatistics s;
  std::vector<SpanSet> pred_spans, gold_spans;
  std::vector<double> jac, one_way;
  double common = 0.0, npred = 0.0, ngold = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_aligned(pred[i].size(), gold[i].size(), "explanation_statistics");
    pred_spans.push_back(mask_to_spans(pred[i]));
    gold_spans.push_back(mask_to_spans(gold[i]));
    const auto c = static_cast<double>(overlap(pred[i], gold[i]));
    const auto p = static_cast<double>(count_ones(pred[i]));
    const auto g = static_cast<double>(count_ones(gold[i]));
    jac.push_back(ratio(c, p + g - c));
    one_way.push_back(ratio(c, p));
    common += c;
    npred += p;
    ngold += g;
  }
  s.macro_avg_length = macro_average_length(pred_spans);
  s.gold_macro_avg_length = macro_average_length(gold_spans);
  s.precision = ratio(common, npred);
  s.recall = ratio(common, ngold);
  s.jaccard = mean(jac);
  s.one_way_jaccard = mean(one_way);
  return s;
}

double lambda_criterion(double macro_f1, double exp_metric) {
  if (!(macro_f1 >= 0.0 && macro_f1 <= 1.0 && exp_metric >= 0.0 &&
        exp_metric <= 1.0)) {
    throw UsageError("lambda_criterion: arguments must lie in [0, 1]");
  }
  return macro_f1 + exp_metric;
}

std::vector<std::pair<std::string, double>> MetricsReport::fields() const {
  return {
      {"num_instances", static_cast<double>(num_instances)},
      {"macro_f1", macro_f1},
      {"accuracy", accuracy},
      {"token_precision", token_precision},
      {"token_recall", token_recall},
      {"token_f1", token_f1},
      {"token_micro_precision", token_micro_precision},
      {"token_micro_recall", token_micro_recall},
      {"token_micro_f1", token_micro_f1},
      {"iou_f1", iou_f1},
      {"auprc", auprc},
      {"comprehensiveness", comprehensiveness},
      {"sufficiency", sufficiency},
      {"random_comprehensiveness", random_comprehensiveness},
      {"random_sufficiency", random_sufficiency},
      {"macro_avg_length", statistics.macro_avg_length},
      {"gold_macro_avg_length", statistics.gold_macro_avg_length},
      {"statistics_precision", statistics.precision},
      {"statistics_recall", statistics.recall},
      {"jaccard", statistics.jaccard},
      {"one_way_jaccard", statistics.one_way_jaccard},
      {"criterion", criterion},
  };
}

std::string MetricsReport::to_json() const {
  std::ostringstream out;
  out << "{\n";
  const auto f = fields();
  for (std::size_t i = 0; i < f.size(); ++i) {
    out << "  \"" << f[i].first << "\": "
        << (std::isfinite(f[i].second) ? format_double(f[i].second) : "null")
        << (i + 1 < f.size() ? ",\n" : "\n");
  }
  out << "}\n";
  return out.str();
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : fields()) out << k << '=' << format_double(v) << '\n';
  return out.str();
}

MetricsReport agreement_report(const EvaluationInput& in) {
  const std::size_t n = in.gold_labels.size();
  check_aligned(in.pred_labels.size(), n, "agreement_report labels");
  check_aligned(in.pred_rationales.size(), n, "agreement_report rationales");
  check_aligned(in.gold_rationales.size(), n, "agreement_report rationales");
  MetricsReport r;
  r.num_instances = n;
  if (n == 0) return r;
  r.macro_f1 = macro_f1(in.pred_labels, in.gold_labels, in.num_classes);
  double correct = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    correct += in.pred_labels[i] == in.gold_labels[i] ? 1.0 : 0.0;
  }
  r.accuracy = correct / static_cast<double>(n);
  const TokenAgreement t = token_agreement(in.pred_rationales,
                                           in.gold_rationales);
  r.token_precision = t.macro.precision;
  r.token_recall = t.macro.recall;
  r.token_f1 = t.macro.f1;
  r.token_micro_precision = t.micro.precision;
  r.token_micro_recall = t.micro.recall;
  r.token_micro_f1 = t.micro.f1;
  std::vector<SpanSet> ps, gs;
  for (std::size_t i = 0; i < n; ++i) {
    ps.push_back(mask_to_spans(in.pred_rationales[i]));
    gs.push_back(mask_to_spans(in.gold_rationales[i]));
  }
  r.iou_f1 = mean_iou_f1(ps, gs);
  if (!in.soft_scores.empty()) {
    r.auprc = mean_auprc(in.soft_scores, in.gold_rationales);
  }
  r.statistics = explanation_statistics(in.pred_rationales, in.gold_rationales);
  r.criterion = lambda_criterion(r.macro_f1, r.token_f1);
  return r;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "lambda,macro_f1,token_f1,iou_f1,auprc,comprehensiveness,"
         "sufficiency,criterion,status\n";
  for (const SweepRow& row : rows) {
    const MetricsReport& r = row.report;
    out << format_double(row.lambda);
    if (row.error.empty()) {
      for (double v : {r.macro_f1, r.token_f1, r.iou_f1, r.auprc,
                       r.comprehensiveness, r.sufficiency, r.criterion}) {
        out << ',' << format_double(v);
      }
      out << ",ok\n";
    } else {
      std::string msg = row.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << ",,,,,,,,failed: " << msg << '\n';
    }
  }
  return out.str();
}

std::optional<std::size_t> select_lambda(const std::vector<SweepRow>& rows) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].error.empty()) continue;
    if (!best || rows[i].report.criterion > rows[*best].report.criterion) {
      best = i;
    }
  }
  return best;
}

}  // namespace etp::metrics
