#pragma once

// Training-set poisoning: untargeted label flips of benign messages, and
// backdoor stamping of either benign (relabelled) or spam messages.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include "spamdam/corpus.hpp"
#include "spamdam/metrics.hpp"
#include "spamdam/model.hpp"
#include "spamdam/rng.hpp"

namespace spamdam::poison {

class PoisonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scenario { untargeted, backdoor_benign, backdoor_spam };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::untargeted: return "untargeted";
    case Scenario::backdoor_benign: return "backdoor_benign";
    case Scenario::backdoor_spam: return "backdoor_spam";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  if (s == "untargeted" || s == "I") return Scenario::untargeted;
  if (s == "backdoor_benign" || s == "backdoor-benign" || s == "II") return Scenario::backdoor_benign;
  if (s == "backdoor_spam" || s == "backdoor-spam" || s == "III") return Scenario::backdoor_spam;
  throw std::invalid_argument("unknown poisoning scenario '" + std::string(s) + "'");
}

struct PoisonConfig {
  Scenario scenario = Scenario::untargeted;
  double rate = 0.0;
  std::string backdoor_word;
  std::uint64_t seed = 0;
  std::size_t test_stamped_count = 1000;

  void validate() const {
    if (!(rate >= 0.0 && rate < 1.0)) throw PoisonError("poison rate must lie in [0,1)");
    if (scenario != Scenario::untargeted && backdoor_word.empty()) {
      throw PoisonError("backdoor scenarios need a backdoor word");
    }
  }
};

/// A benign pool already screened by the authentic model.
class FilteredPool {
 public:
  const Corpus& corpus() const { return corpus_; }
  std::size_t size() const { return corpus_.size(); }

 private:
  explicit FilteredPool(Corpus c) : corpus_(std::move(c)) {}
  friend FilteredPool filter_benign_pool(const Corpus&, const LinearModel&);
  friend FilteredPool assume_filtered(Corpus);
  Corpus corpus_;
};

/// Keeps the pool messages the authentic model labels non-spam, in order.
inline FilteredPool filter_benign_pool(const Corpus& pool, const LinearModel& authentic) {
  if (authentic.head() != Head::binary) throw PoisonError("authentic model must be binary");
  return FilteredPool(pool.filter([&](const Message& m) { return !predicts_spam(authentic, m.text); },
                                  pool.name() + "/filtered"));
}

/// Wraps a pool the caller vouches for (e.g. re-loaded from a filtered dump).
inline FilteredPool assume_filtered(Corpus pool) { return FilteredPool(std::move(pool)); }

/// round(p * S / (1 - p)): injected messages make up fraction p of all spam.
inline std::size_t injection_count(double p, std::size_t spam_count) {
  if (!(p >= 0.0 && p < 1.0)) throw PoisonError("poison rate must lie in [0,1)");
  return static_cast<std::size_t>(std::llround(p * double(spam_count) / (1.0 - p)));
}

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

inline Message as_poison(const Message& m, std::string text) {
  Message out = m;
  out.id = "poison:" + m.id;
  out.text = std::move(text);
  out.labels = {std::string(kSpam)};
  out.source = "poison";
  return out;
}

inline std::size_t spam_count(const Corpus& c) { return c.count_label(kSpam); }

}  // namespace detail

inline Corpus poison_untargeted(const Corpus& train, const FilteredPool& pool, double p,
                                std::uint64_t seed) {
  const std::size_t I = injection_count(p, detail::spam_count(train));
  if (I == 0) return train;
  if (I > pool.size()) {
    throw PoisonError("benign pool too small: need " + std::to_string(I) + ", have " +
                      std::to_string(pool.size()));
  }
  const auto idx = detail::shuffled_indices(pool.size(), derive_seed(seed, "poison.untargeted"));
  std::vector<Message> msgs = train.messages();
  for (std::size_t k = 0; k < I; ++k) {
    const auto& m = pool.corpus()[idx[k]];
    msgs.push_back(detail::as_poison(m, m.text));
  }
  return Corpus(train.name() + "/poisoned", std::move(msgs));
}

/// Inserts `word` at a seeded word boundary (either end included). Words are
/// whitespace-separated runs; the result joins them with single spaces.
inline std::string stamp(std::string_view text, std::string_view word, std::uint64_t seed) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  if (words.empty()) return std::string(word);
  auto rng = make_rng(derive_seed(seed, "poison.stamp"));
  std::uniform_int_distribution<std::size_t> pick(0, words.size());
  words.insert(words.begin() + std::ptrdiff_t(pick(rng)), word);
  std::string out;
  for (std::size_t k = 0; k < words.size(); ++k) {
    if (k) out += ' ';
    out += words[k];
  }
  return out;
}

/// Non-overlapping occurrences of `word` in `text`.
inline std::size_t count_occurrences(std::string_view text, std::string_view word) {
  if (word.empty()) return 0;
  std::size_t n = 0;
  for (auto pos = text.find(word); pos != std::string_view::npos;
       pos = text.find(word, pos + word.size())) {
    ++n;
  }
  return n;
}

struct PoisonedData {
  Corpus train;
  Corpus stamped_test;  // keeps its gold labels; ASR counts spam predictions
};

inline PoisonedData poison_backdoor_benign(const Corpus& train, const FilteredPool& pool,
                                           const PoisonConfig& cfg) {
  cfg.validate();
  const std::size_t I = injection_count(cfg.rate, detail::spam_count(train));
  if (I + cfg.test_stamped_count > pool.size()) {
    throw PoisonError("benign pool too small: need " + std::to_string(I + cfg.test_stamped_count) +
                      ", have " + std::to_string(pool.size()));
  }
  const auto idx = detail::shuffled_indices(pool.size(), derive_seed(cfg.seed, "poison.benign"));
  std::vector<Message> msgs = train.messages();
  for (std::size_t k = 0; k < I; ++k) {
    const auto& m = pool.corpus()[idx[k]];
    msgs.push_back(detail::as_poison(m, stamp(m.text, cfg.backdoor_word,
                                              derive_seed(cfg.seed, "stamp:" + m.id))));
  }
  std::vector<Message> test;
  for (std::size_t k = I; k < I + cfg.test_stamped_count; ++k) {
    Message m = pool.corpus()[idx[k]];
    m.text = stamp(m.text, cfg.backdoor_word, derive_seed(cfg.seed, "stamp:" + m.id));
    test.push_back(std::move(m));
  }
  return {Corpus(I ? train.name() + "/poisoned" : train.name(), std::move(msgs)),
          Corpus(pool.corpus().name() + "/stamped", std::move(test))};
}

/// Stamps round(p * S) training spam messages in place.
inline PoisonedData poison_backdoor_spam(const Corpus& train, const PoisonConfig& cfg,
                                         const Corpus& pool_for_test) {
  cfg.validate();
  std::vector<std::size_t> spam_idx;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].is_spam()) spam_idx.push_back(i);
  }
  if (spam_idx.empty()) throw PoisonError("training set has no spam messages");
  if (cfg.test_stamped_count > pool_for_test.size()) {
    throw PoisonError("test pool too small: need " + std::to_string(cfg.test_stamped_count) +
                      ", have " + std::to_string(pool_for_test.size()));
  }
  const auto n_stamp = static_cast<std::size_t>(std::llround(cfg.rate * double(spam_idx.size())));
  auto rng = make_rng(derive_seed(cfg.seed, "poison.spam"));
  std::shuffle(spam_idx.begin(), spam_idx.end(), rng);
  std::vector<Message> msgs = train.messages();
  for (std::size_t k = 0; k < n_stamp; ++k) {
    auto& m = msgs[spam_idx[k]];
    m.text = stamp(m.text, cfg.backdoor_word, derive_seed(cfg.seed, "stamp:" + m.id));
  }
  const auto idx = detail::shuffled_indices(pool_for_test.size(), derive_seed(cfg.seed, "poison.test"));
  std::vector<Message> test;
  for (std::size_t k = 0; k < cfg.test_stamped_count; ++k) {
    Message m = pool_for_test[idx[k]];
    m.text = stamp(m.text, cfg.backdoor_word, derive_seed(cfg.seed, "stamp:" + m.id));
    test.push_back(std::move(m));
  }
  return {Corpus(n_stamp ? train.name() + "/poisoned" : train.name(), std::move(msgs)),
          Corpus(pool_for_test.name() + "/stamped", std::move(test))};
}

struct PoisonEvaluation {
  double asr = 0.0;
  BinaryMetrics clean;
  BinaryMetrics poisoned;
  double accuracy_drop = 0.0;
  double precision_drop = 0.0;
  double recall_drop = 0.0;
  double fpr_increase = 0.0;
};

inline PoisonEvaluation evaluate_poisoning(const LinearModel& clean_model,
                                           const LinearModel& poisoned_model,
                                           const Corpus& clean_test, const Corpus& stamped_test) {
  if (clean_model.head() != Head::binary || poisoned_model.head() != Head::binary) {
    throw PoisonError("evaluate_poisoning needs binary models");
  }
  PoisonEvaluation e;
  e.asr = attack_success_rate(poisoned_model, stamped_test, kSpam);
  e.clean = binary_metrics(clean_model, clean_test);
  e.poisoned = binary_metrics(poisoned_model, clean_test);
  e.accuracy_drop = e.clean.accuracy - e.poisoned.accuracy;
  e.precision_drop = e.clean.precision - e.poisoned.precision;
  e.recall_drop = e.clean.recall - e.poisoned.recall;
  e.fpr_increase = e.poisoned.fpr - e.clean.fpr;
  return e;
}

inline nlohmann::json to_json(const PoisonEvaluation& e) {
  return {{"asr", e.asr},
          {"clean", spamdam::to_json(e.clean)},
          {"poisoned", spamdam::to_json(e.poisoned)},
          {"delta", {{"accuracy", e.accuracy_drop},
                     {"precision", e.precision_drop},
                     {"recall", e.recall_drop},
                     {"fpr_increase", e.fpr_increase}}}};
}

// ---------------------------------------------------------------------------
// Brand words and grid rows

inline std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PoisonError("cannot open word list '" + path + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t");
    words.push_back(line.substr(b, e - b + 1));
  }
  if (words.empty()) throw PoisonError("word list '" + path + "' is empty");
  return words;
}

struct GridRow {
  Scenario scenario;
  double p;
  std::string word;
  std::uint64_t seed;
  double asr;
  double acc_drop;
};

inline void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows) {
  out << "scenario,p,word,seed,asr,acc_drop\n";
  for (const auto& r : rows) {
    out << to_string(r.scenario) << ',' << r.p << ',' << spamdam::detail::csv_quote(r.word) << ',' << r.seed << ','
        << r.asr << ',' << r.acc_drop << '\n';
  }
}

}  // namespace spamdam::poison
