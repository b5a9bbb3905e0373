#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "spamdam/corpus.hpp"
#include "spamdam/model.hpp"

namespace spamdam {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  void add(bool gold, bool predicted) {
    if (gold) {
      predicted ? ++tp : ++fn;
    } else {
      predicted ? ++fp : ++tn;
    }
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Undefined ratios (zero denominator) are reported as 0 and listed in
/// `degenerate` by name.
struct BinaryMetrics {
  double accuracy = 0, precision = 0, recall = 0, fpr = 0;
  ConfusionCounts counts;
  std::vector<std::string> degenerate;
};

inline BinaryMetrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw MetricsError("no decisions to evaluate");
  BinaryMetrics m;
  m.counts = c;
  auto ratio = [&](std::size_t num, std::size_t den, const char* name) {
    if (den == 0) {
      m.degenerate.emplace_back(name);
      return 0.0;
    }
    return double(num) / double(den);
  };
  m.accuracy = double(c.tp + c.tn) / double(c.total());
  m.precision = ratio(c.tp, c.tp + c.fp, "precision");
  m.recall = ratio(c.tp, c.tp + c.fn, "recall");
  m.fpr = ratio(c.fp, c.fp + c.tn, "fpr");
  return m;
}

inline ConfusionCounts binary_counts(const LinearModel& model, const Corpus& corpus,
                                     double threshold = 0.5) {
  if (model.head() != Head::binary) throw MetricsError("binary metrics need a binary model");
  ConfusionCounts c;
  for (const auto& m : corpus) {
    const auto y = encode_target(model, m);
    c.add(y[0] != 0, predict(model, m.text, threshold).scores[0] > threshold);
  }
  return c;
}

inline BinaryMetrics binary_metrics(const LinearModel& model, const Corpus& corpus,
                                    double threshold = 0.5) {
  if (corpus.empty()) throw MetricsError("cannot evaluate on an empty corpus");
  return metrics_from_counts(binary_counts(model, corpus, threshold));
}

// ---------------------------------------------------------------------------
// Multi-label set metrics

using LabelSet = std::vector<std::string>;  // sorted, unique

/// Mean Jaccard overlap, |gold and pred| / |gold or pred|; an empty union scores 1.
inline double hamming_score(std::span<const LabelSet> gold, std::span<const LabelSet> pred) {
  if (gold.size() != pred.size()) throw MetricsError("hamming_score: length mismatch");
  if (gold.empty()) throw MetricsError("hamming_score: no samples");
  double sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = normalize_labels(gold[i]);
    const auto p = normalize_labels(pred[i]);
    std::vector<std::string> inter, uni;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(inter));
    std::set_union(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(uni));
    sum += uni.empty() ? 1.0 : double(inter.size()) / double(uni.size());
  }
  return sum / double(gold.size());
}

/// Label ranking average precision. Ranks count every label scored at least
/// as high (tied labels share the worst rank of their group). Samples whose
/// relevant set is empty or complete score 1.
inline double lrap(std::span<const std::vector<std::uint8_t>> gold,
                   std::span<const std::vector<double>> scores) {
  if (gold.size() != scores.size()) throw MetricsError("lrap: sample count mismatch");
  if (gold.empty()) throw MetricsError("lrap: no samples");
  double total = 0.0;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& y = gold[i];
    const auto& s = scores[i];
    if (y.size() != s.size()) throw MetricsError("lrap: dimension mismatch");
    const std::size_t C = s.size();
    for (double v : s) {
      if (!std::isfinite(v)) throw MetricsError("lrap: non-finite score");
    }
    const std::size_t relevant = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (relevant == 0 || relevant == C) {
      total += 1.0;
      continue;
    }
    order.resize(C);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    double sample = 0.0;
    std::size_t seen = 0, seen_relevant = 0;
    for (std::size_t k = 0; k < C;) {
      std::size_t end = k;
      std::size_t group_relevant = 0;
      while (end < C && s[order[end]] == s[order[k]]) group_relevant += y[order[end++]];
      seen += end - k;
      seen_relevant += group_relevant;
      sample += double(group_relevant) * double(seen_relevant) / double(seen);
      k = end;
    }
    total += sample / double(relevant);
  }
  return total / double(gold.size());
}

/// Fraction of messages whose decided labels contain `target_label`.
inline double attack_success_rate(const LinearModel& model, const Corpus& corpus,
                                  std::string_view target_label, double threshold = 0.5) {
  if (corpus.empty()) throw MetricsError("attack_success_rate: empty corpus");
  std::size_t hits = 0;
  for (const auto& m : corpus) {
    const auto p = predict(model, m.text, threshold);
    hits += std::find(p.labels.begin(), p.labels.end(), target_label) != p.labels.end();
  }
  return double(hits) / double(corpus.size());
}

// ---------------------------------------------------------------------------
// Multi-class / multi-label reports

struct PerClassMetrics {
  double precision = 0, recall = 0;
  ConfusionCounts counts;
};

struct LabelReport {
  double accuracy = 0;  // multiclass: equals micro precision and micro recall
  std::optional<double> lrap;
  std::optional<double> hamming;
  std::map<std::string, PerClassMetrics> per_class;
};

inline LabelReport label_report(const LinearModel& model, const Corpus& corpus,
                                double threshold = 0.5) {
  if (corpus.empty()) throw MetricsError("cannot evaluate on an empty corpus");
  if (model.head() == Head::binary) throw MetricsError("label_report needs a multi-class/label head");
  const std::size_t C = model.num_classes();
  std::vector<ConfusionCounts> per(C);
  std::vector<std::vector<std::uint8_t>> gold;
  std::vector<std::vector<double>> scores;
  std::vector<LabelSet> gold_sets, pred_sets;
  std::size_t exact = 0;
  for (const auto& m : corpus) {
    const auto y = encode_target(model, m);
    const auto p = predict(model, m.text, threshold);
    std::vector<std::uint8_t> decided(C, 0);
    for (const auto& l : p.labels) decided[model.class_index(l)] = 1;
    for (std::size_t c = 0; c < C; ++c) per[c].add(y[c] != 0, decided[c] != 0);
    exact += decided == y;
    gold.push_back(y);
    scores.push_back(p.scores);
    gold_sets.push_back(m.labels);
    pred_sets.push_back(normalize_labels(p.labels));
  }
  LabelReport r;
  r.accuracy = double(exact) / double(corpus.size());
  if (model.head() == Head::multilabel) {
    r.lrap = lrap(gold, scores);
    r.hamming = hamming_score(gold_sets, pred_sets);
  }
  for (std::size_t c = 0; c < C; ++c) {
    const auto& k = per[c];
    PerClassMetrics pm;
    pm.counts = k;
    pm.precision = k.tp + k.fp ? double(k.tp) / double(k.tp + k.fp) : 0.0;
    pm.recall = k.tp + k.fn ? double(k.tp) / double(k.tp + k.fn) : 0.0;
    r.per_class[model.classes()[c]] = pm;
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

inline nlohmann::json to_json(const BinaryMetrics& m) {
  nlohmann::json j = {{"accuracy", m.accuracy},
                      {"precision", m.precision},
                      {"recall", m.recall},
                      {"fpr", m.fpr},
                      {"counts", to_json(m.counts)}};
  if (!m.degenerate.empty()) j["degenerate"] = m.degenerate;
  return j;
}

inline nlohmann::json to_json(const LabelReport& r) {
  nlohmann::json j = {{"accuracy", r.accuracy}};
  if (r.lrap) j["lrap"] = *r.lrap;
  if (r.hamming) j["hamming"] = *r.hamming;
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, pm] : r.per_class) {
    per[name] = {{"precision", pm.precision}, {"recall", pm.recall}, {"counts", to_json(pm.counts)}};
  }
  j["per_class"] = per;
  return j;
}

}  // namespace spamdam
