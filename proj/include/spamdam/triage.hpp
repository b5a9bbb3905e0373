#pragma once

// Second-level screenshot triage over two upstream probabilities: a small
// random forest, and the AND rule it replaces.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "spamdam/corpus.hpp"
#include "spamdam/metrics.hpp"
#include "spamdam/rng.hpp"

namespace spamdam::triage {

class TriageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TriageSample {
  double p_post = 0.0;
  double p_image = 0.0;
  bool label = false;

  double feature(int k) const { return k == 0 ? p_post : p_image; }
};

inline void check_sample(const TriageSample& s) {
  auto ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!ok(s.p_post) || !ok(s.p_image)) throw TriageError("probabilities must lie in [0,1]");
}

/// Inclusive on both inputs.
inline bool and_strategy(const TriageSample& s, double threshold = 0.5) {
  return s.p_post >= threshold && s.p_image >= threshold;
}

struct ForestConfig {
  std::size_t n_trees = 15;
  std::size_t max_depth = 12;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1, right = -1;  // left: feature <= threshold
  bool positive = false;
  std::size_t depth = 0;
};

class DecisionTree {
 public:
  bool predict(const TriageSample& s) const {
    std::size_t k = 0;
    while (nodes_[k].feature >= 0) {
      const auto& n = nodes_[k];
      k = static_cast<std::size_t>(s.feature(n.feature) <= n.threshold ? n.left : n.right);
    }
    return nodes_[k].positive;
  }

  std::size_t max_leaf_depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes_) {
      if (n.feature < 0) d = std::max(d, n.depth);
    }
    return d;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  friend bool operator==(const DecisionTree& a, const DecisionTree& b) {
    if (a.nodes_.size() != b.nodes_.size()) return false;
    for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
      const auto &x = a.nodes_[i], &y = b.nodes_[i];
      if (x.feature != y.feature || x.threshold != y.threshold || x.left != y.left ||
          x.right != y.right || x.positive != y.positive || x.depth != y.depth) {
        return false;
      }
    }
    return true;
  }

  static DecisionTree grow(const std::vector<TriageSample>& data, std::vector<std::size_t> rows,
                           std::size_t max_depth) {
    DecisionTree t;
    t.build(data, rows, 0, max_depth);
    return t;
  }

 private:
  static double gini(std::size_t pos, std::size_t n) {
    if (n == 0) return 0.0;
    const double p = double(pos) / double(n);
    return 2.0 * p * (1.0 - p);
  }

  std::int32_t build(const std::vector<TriageSample>& data, std::vector<std::size_t>& rows,
                     std::size_t depth, std::size_t max_depth) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({});
    nodes_[id].depth = depth;
    std::size_t pos = 0;
    for (auto r : rows) pos += data[r].label;
    nodes_[id].positive = 2 * pos >= rows.size();
    if (pos == 0 || pos == rows.size() || depth >= max_depth || rows.size() < 2) return id;

    int best_f = -1;
    double best_t = 0.0;
    double best_score = gini(pos, rows.size()) * double(rows.size());
    for (int f = 0; f < 2; ++f) {
      std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
        return data[a].feature(f) < data[b].feature(f);
      });
      std::size_t left_pos = 0;
      for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
        left_pos += data[rows[k]].label;
        const double v = data[rows[k]].feature(f);
        const double next = data[rows[k + 1]].feature(f);
        if (v == next) continue;
        const std::size_t nl = k + 1, nr = rows.size() - nl;
        const double score = gini(left_pos, nl) * double(nl) + gini(pos - left_pos, nr) * double(nr);
        if (score < best_score - 1e-12) {
          best_score = score;
          best_f = f;
          best_t = v + (next - v) / 2.0;
        }
      }
    }
    if (best_f < 0) return id;
    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows) (data[r].feature(best_f) <= best_t ? lrows : rrows).push_back(r);
    nodes_[id].feature = best_f;
    nodes_[id].threshold = best_t;
    const auto l = build(data, lrows, depth + 1, max_depth);
    const auto r = build(data, rrows, depth + 1, max_depth);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::vector<TreeNode> nodes_;
};

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<DecisionTree> trees, ForestConfig cfg)
      : trees_(std::move(trees)), cfg_(cfg) {}

  /// Majority vote; a tied vote is positive.
  bool predict(const TriageSample& s) const {
    std::size_t votes = 0;
    for (const auto& t : trees_) votes += t.predict(s);
    return 2 * votes >= trees_.size();
  }

  double positive_fraction(const TriageSample& s) const {
    std::size_t votes = 0;
    for (const auto& t : trees_) votes += t.predict(s);
    return trees_.empty() ? 0.0 : double(votes) / double(trees_.size());
  }

  const std::vector<DecisionTree>& trees() const { return trees_; }
  const ForestConfig& config() const { return cfg_; }
  friend bool operator==(const ForestModel& a, const ForestModel& b) { return a.trees_ == b.trees_; }

 private:
  std::vector<DecisionTree> trees_;
  ForestConfig cfg_;
};

inline ForestModel train_forest(const std::vector<TriageSample>& samples, const ForestConfig& cfg = {}) {
  if (cfg.n_trees == 0) throw TriageError("forest needs at least one tree");
  std::size_t pos = 0;
  for (const auto& s : samples) {
    check_sample(s);
    pos += s.label;
  }
  if (pos == 0 || pos == samples.size()) throw TriageError("training data needs both classes");
  std::vector<DecisionTree> trees;
  trees.reserve(cfg.n_trees);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    auto rng = make_rng(derive_seed(cfg.seed, "forest.bootstrap", t));
    std::vector<std::size_t> rows(samples.size());
    for (auto& r : rows) r = pick(rng);
    trees.push_back(DecisionTree::grow(samples, std::move(rows), cfg.max_depth));
  }
  return ForestModel(std::move(trees), cfg);
}

struct Comparison {
  BinaryMetrics and_rule;
  BinaryMetrics forest;
};

inline Comparison compare(const ForestModel& forest, const std::vector<TriageSample>& test,
                          double and_threshold = 0.5) {
  if (test.empty()) throw TriageError("empty test set");
  ConfusionCounts a, f;
  for (const auto& s : test) {
    a.add(s.label, and_strategy(s, and_threshold));
    f.add(s.label, forest.predict(s));
  }
  return {metrics_from_counts(a), metrics_from_counts(f)};
}

inline nlohmann::json to_json(const Comparison& c) {
  return {{"and", spamdam::to_json(c.and_rule)}, {"forest", spamdam::to_json(c.forest)}};
}

// ---------------------------------------------------------------------------
// CSV: p_post,p_image,label

inline std::vector<TriageSample> read_samples(std::istream& in) {
  std::vector<std::string> fields;
  std::size_t line = 1, next_line = 1;
  if (!spamdam::detail::read_csv_record(in, fields, line, next_line)) throw TriageError("empty triage CSV");
  if (fields != std::vector<std::string>{"p_post", "p_image", "label"}) {
    throw TriageError("triage CSV header must be p_post,p_image,label");
  }
  std::vector<TriageSample> out;
  while (spamdam::detail::read_csv_record(in, fields, line, next_line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 3) throw TriageError("line " + std::to_string(line) + ": expected 3 fields");
    TriageSample s;
    try {
      s.p_post = std::stod(fields[0]);
      s.p_image = std::stod(fields[1]);
    } catch (const std::exception&) {
      throw TriageError("line " + std::to_string(line) + ": bad probability");
    }
    const auto& l = fields[2];
    if (l == "1" || l == "true") {
      s.label = true;
    } else if (l == "0" || l == "false") {
      s.label = false;
    } else {
      throw TriageError("line " + std::to_string(line) + ": label must be 0/1");
    }
    check_sample(s);
    out.push_back(s);
  }
  return out;
}

inline std::vector<TriageSample> load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TriageError("cannot open '" + path + "'");
  return read_samples(in);
}

inline void write_samples(std::ostream& out, const std::vector<TriageSample>& samples) {
  out << "p_post,p_image,label\n";
  out.precision(17);
  for (const auto& s : samples) out << s.p_post << ',' << s.p_image << ',' << int(s.label) << '\n';
}

// ---------------------------------------------------------------------------
// Fixtures

struct FixtureOptions {
  std::size_t n = 640;
  double ambiguous_fraction = 0.25;  // spam screenshots whose post reads benign
  double noise = 0.08;
  std::uint64_t seed = 0;
};

/// Spam screenshots score high on both inputs, except an "ambiguous" share
/// whose post probability is low while the image probability stays high.
/// Benign samples are high on at most one input.
inline std::vector<TriageSample> make_fixture(const FixtureOptions& opt) {
  auto rng = make_rng(derive_seed(opt.seed, "triage.fixture"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, opt.noise);
  auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
  std::vector<TriageSample> out;
  out.reserve(opt.n);
  for (std::size_t i = 0; i < opt.n; ++i) {
    TriageSample s;
    s.label = u(rng) < 0.5;
    if (s.label) {
      if (u(rng) < opt.ambiguous_fraction) {
        s.p_post = clip(0.15 + 0.3 * u(rng) + jitter(rng));
        s.p_image = clip(0.85 + 0.1 * u(rng) + jitter(rng) / 2);
      } else {
        s.p_post = clip(0.6 + 0.4 * u(rng) + jitter(rng));
        s.p_image = clip(0.6 + 0.4 * u(rng) + jitter(rng));
      }
    } else {
      const double r = u(rng);
      if (r < 0.4) {
        s.p_post = clip(0.4 * u(rng) + jitter(rng));
        s.p_image = clip(0.5 * u(rng) + jitter(rng));
      } else if (r < 0.7) {
        s.p_post = clip(0.5 + 0.5 * u(rng) + jitter(rng));
        s.p_image = clip(0.4 * u(rng) + jitter(rng));
      } else {
        s.p_post = clip(0.45 * u(rng) + jitter(rng));
        s.p_image = clip(0.35 + 0.35 * u(rng) + jitter(rng));
      }
    }
    out.push_back(s);
  }
  return out;
}

/// label = p_post + p_image > 1, inputs uniform, with a margin band removed.
inline std::vector<TriageSample> make_separable_fixture(std::size_t n, std::uint64_t seed,
                                                        double margin = 0.02) {
  auto rng = make_rng(derive_seed(seed, "triage.separable"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TriageSample> out;
  while (out.size() < n) {
    TriageSample s{u(rng), u(rng), false};
    const double d = s.p_post + s.p_image - 1.0;
    if (std::abs(d) < margin) continue;
    s.label = d > 0;
    out.push_back(s);
  }
  return out;
}

}  // namespace spamdam::triage
