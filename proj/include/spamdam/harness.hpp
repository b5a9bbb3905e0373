#pragma once

// Composite experiments: concept-drift matrix, transfer pipeline,
// adversarial-training cycle and FL-versus-central comparison.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "spamdam/advtext.hpp"
#include "spamdam/corpus.hpp"
#include "spamdam/fedsim.hpp"
#include "spamdam/metrics.hpp"
#include "spamdam/model.hpp"
#include "spamdam/report.hpp"

namespace spamdam::harness {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fraction of `spam` the model labels spam; nullopt when there is none.
inline std::optional<double> spam_recall(const LinearModel& model, const Corpus& spam) {
  std::size_t n = 0, hit = 0;
  for (const auto& m : spam) {
    if (!m.is_spam()) continue;
    ++n;
    hit += predicts_spam(model, m.text);
  }
  if (n == 0) return std::nullopt;
  return double(hit) / double(n);
}

// ---------------------------------------------------------------------------
// Concept drift

struct DriftConfig {
  TrainConfig train;
  FeaturizerConfig featurizer;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct DriftRow {
  Timestamp cutoff = 0;
  std::size_t train_size = 0;
  std::vector<std::optional<double>> bucket_recall;  // aligned with DriftMatrix::buckets
  std::map<std::string, std::optional<double>> source_recall;  // held-out split, per source
};

struct DriftMatrix {
  std::vector<std::string> buckets;  // quarter keys, ascending
  std::vector<DriftRow> rows;

  /// Mean recall over the last `k` buckets that have spam.
  double tail_mean(std::size_t row, std::size_t k) const {
    double sum = 0.0;
    std::size_t n = 0;
    const auto& r = rows.at(row).bucket_recall;
    for (std::size_t i = r.size(); i-- > 0 && n < k;) {
      if (r[i]) {
        sum += *r[i];
        ++n;
      }
    }
    return n ? sum / double(n) : 0.0;
  }
};

inline Corpus union_of(const std::vector<Corpus>& corpora) {
  if (corpora.size() == 1) return corpora.front();
  std::vector<Message> all;
  for (std::size_t k = 0; k < corpora.size(); ++k) {
    for (const auto& m : corpora[k]) {
      Message c = m;
      c.id = "c" + std::to_string(k) + ":" + m.id;
      all.push_back(std::move(c));
    }
  }
  return Corpus("union", std::move(all));
}

/// One model per cutoff, trained on messages up to the cutoff (80/20 split).
/// Recall is measured on every quarter of the spam stream, leaving out the
/// cutoff model's own training messages, and on the held-out split by source.
inline DriftMatrix drift_matrix(const std::vector<Corpus>& corpora, const std::vector<Timestamp>& cutoffs,
                                const DriftConfig& cfg) {
  if (corpora.empty()) throw HarnessError("drift_matrix: no corpora");
  if (cutoffs.empty()) throw HarnessError("drift_matrix: no cutoffs");
  const Corpus all = union_of(corpora);
  const auto buckets = bucket_by_quarter(all.filter([](const Message& m) { return m.is_spam(); }));
  DriftMatrix out;
  for (const auto& [key, _] : buckets) out.buckets.push_back(key);
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    const auto slice = time_slice(all, cutoffs[c]);
    if (slice.empty()) {
      throw HarnessError("drift_matrix: no messages on or before " + format_timestamp(cutoffs[c]));
    }
    auto [tr, te] = split(slice, cfg.train_fraction, derive_seed(cfg.seed, "drift.split", c));
    if (tr.count_label(kSpam) == 0 || tr.count_label(kSpam) == tr.size()) {
      throw HarnessError("drift_matrix: training slice for " + format_timestamp(cutoffs[c]) +
                         " lacks one of the classes");
    }
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "drift.train", c);
    const auto model = train(tr, Head::binary, tc, cfg.featurizer);
    std::unordered_set<std::string> train_ids;
    for (const auto& m : tr) train_ids.insert(m.id);

    DriftRow row;
    row.cutoff = cutoffs[c];
    row.train_size = tr.size();
    for (const auto& [key, bucket] : buckets) {
      row.bucket_recall.push_back(
          spam_recall(model, bucket.filter([&](const Message& m) { return !train_ids.count(m.id); })));
    }
    std::map<std::string, std::vector<Message>> by_source;
    for (const auto& m : te) by_source[m.source].push_back(m);
    for (auto& [src, msgs] : by_source) {
      row.source_recall[src] = spam_recall(model, Corpus(src, std::move(msgs)));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline report::Table to_table(const DriftMatrix& d) {
  report::Table t{{"cutoff", "bucket", "recall"}, {}};
  for (const auto& r : d.rows) {
    for (std::size_t b = 0; b < d.buckets.size(); ++b) {
      const auto& v = r.bucket_recall[b];
      t.add({format_timestamp(r.cutoff), d.buckets[b], v ? nlohmann::json(*v) : nlohmann::json()});
    }
    for (const auto& [src, v] : r.source_recall) {
      t.add({format_timestamp(r.cutoff), "heldout:" + src, v ? nlohmann::json(*v) : nlohmann::json()});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Transfer

enum class TransferMode { source_only, target_only, joint, source_then_target, target_then_source };

inline std::string_view to_string(TransferMode m) {
  switch (m) {
    case TransferMode::source_only: return "source_only";
    case TransferMode::target_only: return "target_only";
    case TransferMode::joint: return "joint";
    case TransferMode::source_then_target: return "source_then_target";
    case TransferMode::target_then_source: return "target_then_source";
  }
  return "?";
}

inline TransferMode parse_transfer_mode(std::string_view s) {
  for (auto m : {TransferMode::source_only, TransferMode::target_only, TransferMode::joint,
                 TransferMode::source_then_target, TransferMode::target_then_source}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown transfer mode '" + std::string(s) + "'");
}

struct TransferConfig {
  TrainConfig train;
  FeaturizerConfig featurizer;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct TransferResult {
  LinearModel model;
  BinaryMetrics source_test;
  BinaryMetrics target_test;
  BinaryMetrics union_test;
};

inline TransferResult transfer_pipeline(const Corpus& source, const Corpus& target, TransferMode mode,
                                        const TransferConfig& cfg) {
  const auto src = with_id_prefix(source, "src:");
  const auto tgt = with_id_prefix(target, "tgt:");
  auto [src_train, src_test] = split(src, cfg.train_fraction, derive_seed(cfg.seed, "transfer.split.src"));
  auto [tgt_train, tgt_test] = split(tgt, cfg.train_fraction, derive_seed(cfg.seed, "transfer.split.tgt"));
  TrainConfig first = cfg.train, second = cfg.train;
  first.seed = derive_seed(cfg.seed, "transfer.train.first");
  second.seed = derive_seed(cfg.seed, "transfer.train.second");
  TransferResult r;
  switch (mode) {
    case TransferMode::source_only:
      r.model = train(src_train, Head::binary, first, cfg.featurizer);
      break;
    case TransferMode::target_only:
      r.model = train(tgt_train, Head::binary, first, cfg.featurizer);
      break;
    case TransferMode::joint:
      r.model = train(concat("joint", src_train, tgt_train), Head::binary, first, cfg.featurizer);
      break;
    case TransferMode::source_then_target:
      r.model = fine_tune(train(src_train, Head::binary, first, cfg.featurizer), tgt_train, second);
      break;
    case TransferMode::target_then_source:
      r.model = fine_tune(train(tgt_train, Head::binary, first, cfg.featurizer), src_train, second);
      break;
  }
  r.source_test = binary_metrics(r.model, src_test);
  r.target_test = binary_metrics(r.model, tgt_test);
  r.union_test = binary_metrics(r.model, concat("union", src_test, tgt_test));
  return r;
}

// ---------------------------------------------------------------------------
// Adversarial training

struct AdvCycleConfig {
  TrainConfig train;
  FeaturizerConfig featurizer;
  std::vector<adv::Kind> attack_kinds = {adv::Kind::homoglyph, adv::Kind::invisible,
                                         adv::Kind::reorder, adv::Kind::deletion};
  std::size_t max_budget = 5;
  adv::DEParams de;
  adv::AdvTrainingOptions generation;
  std::uint64_t seed = 0;
};

struct AdvCycleResult {
  adv::BatchAttackReport before;
  adv::BatchAttackReport after;
  BinaryMetrics clean_before;
  BinaryMetrics clean_after;
  std::size_t adversarial_examples = 0;
  LinearModel robust_model;
};

/// Train -> attack -> generate adversarial spam -> retrain on the augmented
/// set -> attack again. `attack_set` must share no ids with `train`.
inline AdvCycleResult adversarial_training_cycle(const Corpus& train_corpus, const Corpus& clean_test,
                                                 const Corpus& attack_set, const AdvCycleConfig& cfg,
                                                 const adv::ConfusableMap& map = adv::ConfusableMap::builtin()) {
  std::unordered_set<std::string> attack_ids;
  for (const auto& m : attack_set) attack_ids.insert(m.id);
  for (const auto& m : train_corpus) {
    if (attack_ids.count(m.id)) throw HarnessError("attack set overlaps training data at '" + m.id + "'");
  }
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "advcycle.train");
  AdvCycleResult r;
  const auto clean = train(train_corpus, Head::binary, tc, cfg.featurizer);
  r.before = adv::batch_attack(clean, attack_set, cfg.attack_kinds, cfg.max_budget, cfg.de,
                               derive_seed(cfg.seed, "advcycle.attack"), map);
  auto gen = cfg.generation;
  gen.seed = derive_seed(cfg.seed, "advcycle.generate");
  const auto adv_set = adv::generate_adversarial_training_set(
      clean, train_corpus.filter([](const Message& m) { return m.is_spam(); }), gen, attack_ids, map);
  r.adversarial_examples = adv_set.size();
  r.robust_model = train(concat("augmented", train_corpus, adv_set), Head::binary, tc, cfg.featurizer);
  r.after = adv::batch_attack(r.robust_model, attack_set, cfg.attack_kinds, cfg.max_budget, cfg.de,
                              derive_seed(cfg.seed, "advcycle.attack"), map);
  r.clean_before = binary_metrics(clean, clean_test);
  r.clean_after = binary_metrics(r.robust_model, clean_test);
  return r;
}

inline double asr_at(const adv::BatchAttackReport& r, adv::Kind k, std::size_t budget) {
  auto it = r.kinds.find(std::string(adv::to_string(k)));
  if (it == r.kinds.end() || budget < 1 || budget > it->second.asr.size()) {
    throw HarnessError("no ASR recorded for that kind and budget");
  }
  return it->second.asr[budget - 1];
}

// ---------------------------------------------------------------------------
// FL versus central

struct FlComparisonRow {
  double alpha = 0.0;
  double fl_accuracy = 0.0;
  double central_accuracy = 0.0;
};

/// Runs FL once per alpha and a single centrally trained baseline.
inline std::vector<FlComparisonRow> fl_vs_central(const Corpus& train_corpus, const Corpus& test,
                                                  const fl::FLConfig& base, const std::vector<double>& alphas,
                                                  const TrainConfig& central,
                                                  const FeaturizerConfig& featurizer = {}) {
  TrainConfig c = central;
  c.seed = derive_seed(base.seed, "central.train");
  const auto central_model = train(train_corpus, Head::binary, c, featurizer);
  const double central_acc = binary_metrics(central_model, test).accuracy;
  std::vector<FlComparisonRow> rows;
  for (double a : alphas) {
    auto cfg = base;
    cfg.alpha = a;
    const auto res = fl::run_fl(train_corpus, test, Head::binary, cfg, featurizer);
    rows.push_back({a, res.rounds.back().accuracy, central_acc});
  }
  return rows;
}

}  // namespace spamdam::harness
