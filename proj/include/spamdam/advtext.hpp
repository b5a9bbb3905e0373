#pragma once

// Imperceptible adversarial text: homoglyph substitution and invisible,
// reordering (bidi override) and deletion (backspace) control injection,
// a differential-evolution black-box search over edit plans, and the visual
// normalisation that defines what "imperceptible" means here.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>
#include "spamdam/corpus.hpp"
#include "spamdam/model.hpp"
#include "spamdam/rng.hpp"
#include "spamdam/unicode.hpp"

namespace spamdam::adv {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Confusables

// Same content as data/confusables.tsv.
inline constexpr std::string_view kBuiltinConfusables =
    "a\t\u0430\n"
    "c\t\u0441\n"
    "d\t\u0501\n"
    "e\t\u0435\n"
    "h\t\u04BB\n"
    "i\t\u0456\n"
    "j\t\u0458\n"
    "o\t\u043E\n"
    "o\t\u03BF\n"
    "p\t\u0440\n"
    "q\t\u051B\n"
    "s\t\u0455\n"
    "v\t\u03BD\n"
    "w\t\u051D\n"
    "x\t\u0445\n"
    "y\t\u0443\n"
    "A\t\u0410\n"
    "A\t\u0391\n"
    "B\t\u0412\n"
    "B\t\u0392\n"
    "C\t\u0421\n"
    "E\t\u0415\n"
    "E\t\u0395\n"
    "H\t\u041D\n"
    "H\t\u0397\n"
    "I\t\u0406\n"
    "I\t\u0399\n"
    "J\t\u0408\n"
    "K\t\u041A\n"
    "K\t\u039A\n"
    "M\t\u041C\n"
    "M\t\u039C\n"
    "N\t\u039D\n"
    "O\t\u041E\n"
    "O\t\u039F\n"
    "P\t\u0420\n"
    "P\t\u03A1\n"
    "S\t\u0405\n"
    "T\t\u0422\n"
    "T\t\u03A4\n"
    "X\t\u0425\n"
    "X\t\u03A7\n"
    "Y\t\u03A5\n"
    "Y\t\u04AE\n"
    "Z\t\u0396\n";

/// canonical <-> confusable lookup. One canonical form per confusable.
class ConfusableMap {
 public:
  static ConfusableMap parse(std::string_view tsv) {
    ConfusableMap map;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < tsv.size()) {
      auto end = tsv.find('\n', start);
      if (end == std::string_view::npos) end = tsv.size();
      auto line = tsv.substr(start, end - start);
      start = end + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty() || line.front() == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos) {
        throw AttackError("confusables line " + std::to_string(line_no) + ": missing tab");
      }
      const auto canon = unicode::decode(line.substr(0, tab));
      const auto conf = unicode::decode(line.substr(tab + 1));
      if (canon.size() != 1 || conf.size() != 1) {
        throw AttackError("confusables line " + std::to_string(line_no) +
                          ": expected one code point per column");
      }
      if (map.canonical_.count(conf[0])) {
        throw AttackError("confusables line " + std::to_string(line_no) + ": duplicate confusable");
      }
      map.canonical_[conf[0]] = canon[0];
      map.variants_[canon[0]].push_back(conf[0]);
    }
    return map;
  }

  static const ConfusableMap& builtin() {
    static const ConfusableMap map = parse(kBuiltinConfusables);
    return map;
  }

  static ConfusableMap load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AttackError("cannot open confusables file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Confusable variants of `c` (empty when none are known).
  const std::vector<char32_t>& variants(char32_t c) const {
    static const std::vector<char32_t> none;
    auto it = variants_.find(c);
    return it == variants_.end() ? none : it->second;
  }

  char32_t canonical(char32_t c) const {
    auto it = canonical_.find(c);
    return it == canonical_.end() ? c : it->second;
  }

  std::size_t size() const { return canonical_.size(); }

 private:
  std::unordered_map<char32_t, std::vector<char32_t>> variants_;
  std::unordered_map<char32_t, char32_t> canonical_;
};

// ---------------------------------------------------------------------------
// Perturbation plans

enum class Kind { homoglyph, invisible, reorder, deletion };

inline constexpr Kind kAllKinds[] = {Kind::homoglyph, Kind::invisible, Kind::reorder,
                                     Kind::deletion};

inline std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::homoglyph: return "homoglyph";
    case Kind::invisible: return "invisible";
    case Kind::reorder: return "reorder";
    case Kind::deletion: return "deletion";
  }
  return "?";
}

inline Kind parse_kind(std::string_view s) {
  for (Kind k : kAllKinds) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown perturbation kind '" + std::string(s) + "'");
}

struct Edit {
  std::size_t position = 0;        // code point index into the text as edited so far
  std::size_t alphabet_index = 0;  // meaning depends on the kind
  friend bool operator==(const Edit&, const Edit&) = default;
};

struct PerturbationPlan {
  Kind kind = Kind::deletion;
  std::vector<Edit> edits;
  std::size_t budget = 1;
};

/// Printable ASCII decoys; each is followed by a backspace when injected.
inline constexpr char32_t kDecoyFirst = 0x21;
inline constexpr char32_t kDecoyLast = 0x7E;
inline constexpr std::size_t kDecoyCount = kDecoyLast - kDecoyFirst + 1;

/// Number of valid positions for one edit of `kind` on a text of length n.
inline std::size_t position_count(Kind kind, std::size_t n) {
  switch (kind) {
    case Kind::homoglyph: return n;
    case Kind::invisible:
    case Kind::deletion: return n + 1;
    case Kind::reorder: return n >= 2 ? n - 1 : 0;
  }
  return 0;
}

/// Alphabet size for an edit at `position` (homoglyphs depend on the code point there).
inline std::size_t alphabet_size(Kind kind, std::u32string_view text, std::size_t position,
                                 const ConfusableMap& map) {
  switch (kind) {
    case Kind::homoglyph: return position < text.size() ? map.variants(text[position]).size() : 0;
    case Kind::invisible: return std::size(unicode::kInvisibles);
    case Kind::deletion: return kDecoyCount;
    case Kind::reorder: return 1;
  }
  return 0;
}

/// Applies one edit in place. Homoglyph edits on code points without a
/// confusable, and reorder edits touching a control code point, are no-ops.
inline void apply_edit(std::u32string& text, Kind kind, const Edit& e, const ConfusableMap& map) {
  const std::size_t n = text.size();
  if (e.position >= position_count(kind, n)) {
    throw AttackError("edit position " + std::to_string(e.position) + " out of range for " +
                      std::string(to_string(kind)) + " on text of length " + std::to_string(n));
  }
  switch (kind) {
    case Kind::homoglyph: {
      const auto& vs = map.variants(text[e.position]);
      if (vs.empty()) return;
      if (e.alphabet_index >= vs.size()) throw AttackError("homoglyph alphabet index out of range");
      text[e.position] = vs[e.alphabet_index];
      return;
    }
    case Kind::invisible: {
      if (e.alphabet_index >= std::size(unicode::kInvisibles)) {
        throw AttackError("invisible alphabet index out of range");
      }
      text.insert(text.begin() + std::ptrdiff_t(e.position), unicode::kInvisibles[e.alphabet_index]);
      return;
    }
    case Kind::deletion: {
      if (e.alphabet_index >= kDecoyCount) throw AttackError("deletion alphabet index out of range");
      const char32_t pair[] = {char32_t(kDecoyFirst + e.alphabet_index), unicode::kBackspace};
      text.insert(e.position, pair, 2);
      return;
    }
    case Kind::reorder: {
      const char32_t c1 = text[e.position];
      const char32_t c2 = text[e.position + 1];
      if (unicode::is_perturbation_control(c1) || unicode::is_perturbation_control(c2)) return;
      const char32_t wrapped[] = {unicode::kRightToLeftOverride, c2, c1,
                                  unicode::kPopDirectionalFormatting};
      text.replace(e.position, 2, wrapped, 4);
      return;
    }
  }
}

inline std::u32string apply_plan(std::u32string text, const PerturbationPlan& plan,
                                 const ConfusableMap& map = ConfusableMap::builtin()) {
  if (plan.edits.size() > plan.budget) throw AttackError("plan exceeds its edit budget");
  for (const auto& e : plan.edits) apply_edit(text, plan.kind, e, map);
  return text;
}

inline std::string apply_plan(std::string_view utf8, const PerturbationPlan& plan,
                              const ConfusableMap& map = ConfusableMap::builtin()) {
  return unicode::encode(apply_plan(unicode::decode(utf8), plan, map));
}

// ---------------------------------------------------------------------------
// Visual normalisation

/// Maps text to its rendered-equivalent canonical form, inverting every
/// transformation the generators emit: invisibles are dropped, a backspace
/// erases the preceding code point, RLO c2 c1 PDF renders as c1 c2, stray
/// bidi controls are dropped and confusables fold to their canonical form.
inline std::u32string visual_normalize(std::u32string_view text,
                                       const ConfusableMap& map = ConfusableMap::builtin()) {
  std::u32string out;
  out.reserve(text.size());
  auto plain = [](char32_t c) { return !unicode::is_perturbation_control(c); };
  for (char32_t c : text) {
    if (unicode::is_invisible(c)) continue;
    if (c == unicode::kBackspace) {
      if (!out.empty()) out.pop_back();
      continue;
    }
    if (c == unicode::kPopDirectionalFormatting && out.size() >= 3) {
      const std::size_t n = out.size();
      if (out[n - 3] == unicode::kRightToLeftOverride && plain(out[n - 2]) && plain(out[n - 1])) {
        const char32_t shown_first = out[n - 1];
        const char32_t shown_second = out[n - 2];
        out.resize(n - 3);
        out.push_back(shown_first);
        out.push_back(shown_second);
        continue;
      }
    }
    out.push_back(c);
  }
  std::erase_if(out, [](char32_t c) { return unicode::is_bidi_control(c); });
  for (auto& c : out) c = map.canonical(c);
  return out;
}

inline std::string visual_normalize(std::string_view utf8,
                                    const ConfusableMap& map = ConfusableMap::builtin()) {
  return unicode::encode(visual_normalize(std::u32string_view(unicode::decode(utf8)), map));
}

// ---------------------------------------------------------------------------
// Differential evolution search

struct DEParams {
  std::size_t population = 32;
  std::size_t generations = 10;
  double F = 0.5;
  double CR = 0.7;
};

struct AttackConfig {
  Kind kind = Kind::deletion;
  std::size_t budget = 1;
  DEParams de;
  std::uint64_t seed = 0;

  void validate() const {
    if (budget < 1) throw AttackError("attack budget must be >= 1");
    if (de.population < 4) throw AttackError("DE population must be >= 4");
    if (!(de.F > 0.0 && de.F <= 2.0)) throw AttackError("DE F must lie in (0,2]");
    if (!(de.CR >= 0.0 && de.CR <= 1.0)) throw AttackError("DE CR must lie in [0,1]");
  }
};

struct AttackResult {
  bool success = false;
  std::string adversarial_text;
  std::size_t edits_used = 0;
  double spam_probability = 1.0;  // of adversarial_text
  std::size_t queries = 0;
};

/// Genome of 2k genes in [0,1]: (position fraction, alphabet fraction) per
/// edit, decoded sequentially against the text as edited so far.
inline PerturbationPlan decode_genome(std::u32string_view original, Kind kind,
                                      std::span<const double> genome, const ConfusableMap& map,
                                      std::u32string* perturbed) {
  PerturbationPlan plan{kind, {}, genome.size() / 2};
  std::u32string text(original);
  for (std::size_t g = 0; g + 1 < genome.size(); g += 2) {
    const std::size_t positions = position_count(kind, text.size());
    if (positions == 0) continue;
    auto pick = [](double frac, std::size_t n) {
      return std::min(n - 1, static_cast<std::size_t>(std::floor(std::clamp(frac, 0.0, 1.0) * double(n))));
    };
    Edit e;
    e.position = pick(genome[g], positions);
    const std::size_t alpha = alphabet_size(kind, text, e.position, map);
    e.alphabet_index = alpha > 0 ? pick(genome[g + 1], alpha) : 0;
    apply_edit(text, kind, e, map);
    plan.edits.push_back(e);
  }
  if (perturbed) *perturbed = std::move(text);
  return plan;
}

namespace detail {

struct StageOutcome {
  bool success = false;
  std::u32string best_text;
  double best_score = 2.0;
  std::size_t queries = 0;
};

// DE/rand/1/bin over a fixed number of edits. Stops at the first candidate
// the model no longer labels spam.
inline StageOutcome de_stage(const LinearModel& model, std::u32string_view text, Kind kind,
                             std::size_t edits, const DEParams& de, std::uint64_t seed,
                             const ConfusableMap& map) {
  const std::size_t dims = 2 * edits;
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  StageOutcome out;
  std::u32string candidate;
  auto evaluate = [&](const std::vector<double>& genome) {
    decode_genome(text, kind, genome, map, &candidate);
    const double p = sigmoid(model.logits(model.features(std::u32string_view(candidate)))[0]);
    ++out.queries;
    if (p < out.best_score) {
      out.best_score = p;
      out.best_text = candidate;
    }
    return p;
  };

  std::vector<std::vector<double>> pop(de.population, std::vector<double>(dims));
  std::vector<double> fitness(de.population);
  for (std::size_t i = 0; i < de.population; ++i) {
    for (auto& g : pop[i]) g = unit(rng);
    fitness[i] = evaluate(pop[i]);
    if (fitness[i] <= 0.5) {
      out.success = true;
      return out;
    }
  }
  std::uniform_int_distribution<std::size_t> pick_member(0, de.population - 1);
  std::uniform_int_distribution<std::size_t> pick_dim(0, dims - 1);
  std::vector<double> trial(dims);
  for (std::size_t gen = 0; gen < de.generations; ++gen) {
    auto next = pop;
    auto next_fitness = fitness;
    for (std::size_t i = 0; i < de.population; ++i) {
      std::size_t r1, r2, r3;
      do r1 = pick_member(rng); while (r1 == i);
      do r2 = pick_member(rng); while (r2 == i || r2 == r1);
      do r3 = pick_member(rng); while (r3 == i || r3 == r1 || r3 == r2);
      const std::size_t forced = pick_dim(rng);
      for (std::size_t d = 0; d < dims; ++d) {
        const bool cross = d == forced || unit(rng) < de.CR;
        trial[d] = cross ? std::clamp(pop[r1][d] + de.F * (pop[r2][d] - pop[r3][d]), 0.0, 1.0)
                         : pop[i][d];
      }
      const double f = evaluate(trial);
      if (f <= 0.5) {
        out.success = true;
        return out;
      }
      if (f <= fitness[i]) {
        next[i] = trial;
        next_fitness[i] = f;
      }
    }
    pop = std::move(next);
    fitness = std::move(next_fitness);
  }
  return out;
}

}  // namespace detail

/// Black-box evasion of a binary model. Tries 1, 2, ... budget edits in turn
/// (each stage seeded independently of the overall budget), so success at a
/// budget implies success at every larger budget.
inline AttackResult de_attack(const LinearModel& model, std::string_view text,
                              const AttackConfig& cfg,
                              const ConfusableMap& map = ConfusableMap::builtin()) {
  cfg.validate();
  if (model.head() != Head::binary) throw AttackError("de_attack needs a binary model");
  const auto original = unicode::decode(text);
  if (!(sigmoid(model.logits(model.features(std::u32string_view(original)))[0]) > 0.5)) {
    throw AttackError("de_attack: model does not classify the input as spam");
  }
  AttackResult result;
  std::u32string best;
  for (std::size_t k = 1; k <= cfg.budget; ++k) {
    auto stage = detail::de_stage(model, original, cfg.kind, k, cfg.de,
                                  derive_seed(cfg.seed, "de.stage", k), map);
    result.queries += stage.queries;
    if (stage.best_score < result.spam_probability) {
      result.spam_probability = stage.best_score;
      result.edits_used = k;
      best = stage.best_text;
    }
    if (stage.success) {
      result.success = true;
      result.edits_used = k;
      result.spam_probability = stage.best_score;
      result.adversarial_text = unicode::encode(stage.best_text);
      return result;
    }
  }
  result.adversarial_text = unicode::encode(best);
  return result;
}

// ---------------------------------------------------------------------------
// Batch evaluation

struct KindReport {
  std::vector<std::size_t> successes;  // index b-1 => successes within budget b
  std::vector<double> asr;
};

struct BatchAttackReport {
  std::size_t attempted = 0;
  std::size_t excluded = 0;  // inputs the model did not label spam
  std::size_t max_budget = 0;
  std::map<std::string, KindReport> kinds;
};

inline nlohmann::json to_json(const BatchAttackReport& r) {
  nlohmann::json asr = nlohmann::json::object();
  for (const auto& [kind, rep] : r.kinds) {
    nlohmann::json per = nlohmann::json::object();
    for (std::size_t b = 0; b < rep.asr.size(); ++b) per[std::to_string(b + 1)] = rep.asr[b];
    asr[kind] = per;
  }
  return {{"attempted", r.attempted}, {"excluded", r.excluded}, {"max_budget", r.max_budget},
          {"asr", asr}};
}

inline std::uint64_t message_seed(std::uint64_t seed, std::string_view tag, std::string_view id) {
  return derive_seed(seed, std::string(tag) + ":" + std::string(id));
}

/// Attacks every spam-predicted message with each kind at budgets 1..max_budget.
inline BatchAttackReport batch_attack(const LinearModel& model, const Corpus& spam,
                                      std::span<const Kind> kinds, std::size_t max_budget,
                                      const DEParams& de, std::uint64_t seed,
                                      const ConfusableMap& map = ConfusableMap::builtin()) {
  if (max_budget < 1) throw AttackError("budget must be >= 1");
  BatchAttackReport report;
  report.max_budget = max_budget;
  for (Kind k : kinds) {
    report.kinds[std::string(to_string(k))].successes.assign(max_budget, 0);
  }
  for (const auto& m : spam) {
    if (!predicts_spam(model, m.text)) {
      ++report.excluded;
      continue;
    }
    ++report.attempted;
    for (Kind k : kinds) {
      AttackConfig cfg{k, max_budget, de, message_seed(seed, to_string(k), m.id)};
      const auto r = de_attack(model, m.text, cfg, map);
      if (!r.success) continue;
      auto& succ = report.kinds[std::string(to_string(k))].successes;
      for (std::size_t b = r.edits_used; b <= max_budget; ++b) succ[b - 1]++;
    }
  }
  for (auto& [_, rep] : report.kinds) {
    rep.asr.resize(max_budget, 0.0);
    for (std::size_t b = 0; b < max_budget; ++b) {
      rep.asr[b] = report.attempted ? double(rep.successes[b]) / double(report.attempted) : 0.0;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Adversarial training data

struct AdvTrainingOptions {
  double sample_fraction = 0.05;
  std::size_t budget = 5;
  std::vector<Kind> kinds = {Kind::homoglyph, Kind::reorder, Kind::deletion};
  DEParams de;
  std::uint64_t seed = 0;
};

/// Samples a fraction of the spam messages, attacks each with every kind and
/// keeps the label-flipping outputs, labelled spam.
inline Corpus generate_adversarial_training_set(const LinearModel& model, const Corpus& train_spam,
                                                const AdvTrainingOptions& opt,
                                                const std::unordered_set<std::string>& exclude_ids,
                                                const ConfusableMap& map = ConfusableMap::builtin()) {
  for (const auto& m : train_spam) {
    if (exclude_ids.count(m.id)) {
      throw AttackError("message '" + m.id + "' overlaps the held-out attack set");
    }
  }
  const auto spam = train_spam.filter([](const Message& m) { return m.is_spam(); });
  const auto n_sample =
      std::min(spam.size(), static_cast<std::size_t>(std::llround(opt.sample_fraction * double(spam.size()))));
  std::vector<std::size_t> idx(spam.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(derive_seed(opt.seed, "advtrain.sample"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n_sample);
  std::sort(idx.begin(), idx.end());

  std::vector<Message> out;
  for (std::size_t i : idx) {
    const auto& m = spam[i];
    if (!predicts_spam(model, m.text)) continue;
    for (Kind k : opt.kinds) {
      AttackConfig cfg{k, opt.budget, opt.de, message_seed(opt.seed, to_string(k), m.id)};
      const auto r = de_attack(model, m.text, cfg, map);
      if (!r.success) continue;
      Message adv = m;
      adv.id = m.id + "#adv-" + std::string(to_string(k));
      adv.text = r.adversarial_text;
      adv.labels = {std::string(kSpam)};
      adv.source = "adversarial";
      out.push_back(std::move(adv));
    }
  }
  return Corpus(train_spam.name() + "/adversarial", std::move(out));
}

}  // namespace spamdam::adv
