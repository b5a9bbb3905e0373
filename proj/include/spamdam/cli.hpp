#pragma once

// Command-line front end. `run` is the whole program minus main(), so tests
// can drive it in-process.
//
// Precedence for every setting: flag > config file > preset > built-in default.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>
#include "spamdam/advtext.hpp"
#include "spamdam/corpus.hpp"
#include "spamdam/fedsim.hpp"
#include "spamdam/harness.hpp"
#include "spamdam/metrics.hpp"
#include "spamdam/model.hpp"
#include "spamdam/ocrpost.hpp"
#include "spamdam/poison.hpp"
#include "spamdam/report.hpp"
#include "spamdam/synth.hpp"
#include "spamdam/triage.hpp"

namespace spamdam::cli {

using json = nlohmann::json;

/// Bad invocation: reported with usage, exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Environment {
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
  /// PNG (or other) decoder for `ocr-post --image`; unset means unsupported.
  std::function<ocr::GrayImage(const std::string&)> load_image;
};

// ---------------------------------------------------------------------------
// Configuration tree

inline json default_config() {
  return json::parse(R"({
    "seed": 0,
    "head": "binary",
    "inputs": {},
    "featurizer": {"dim": 262144, "ngram_min": 1, "ngram_max": 3,
                   "signed_hashing": true, "normalize": "l2"},
    "train": {"epochs": 20, "batch_size": 32, "lr": 0.5, "l2": 1e-6,
              "class_weighted": false, "linear_decay": false, "max_text_len": 80},
    "split": {"train_fraction": 0.8},
    "fl": {"preset": "custom", "n_clients": 1, "participation": 1.0, "rounds": 1, "alpha": 1.0,
           "local": {"epochs": 1, "batch_size": 32, "lr": 0.5, "l2": 1e-6,
                     "class_weighted": false, "linear_decay": false, "max_text_len": 80}},
    "attack": {"kinds": ["homoglyph", "invisible", "reorder", "deletion"], "max_budget": 5,
               "de": {"population": 32, "generations": 10, "F": 0.5, "CR": 0.7}},
    "advtrain": {"sample_fraction": 0.05, "budget": 5,
                 "kinds": ["homoglyph", "reorder", "deletion"]},
    "poison": {"scenario": "untargeted", "rates": [0.01], "words": ["google"], "seeds": [0],
               "test_stamped_count": 1000},
    "drift": {"cutoffs": []},
    "transfer": {"mode": "source_only"},
    "triage": {"n_trees": 15, "max_depth": 12, "and_threshold": 0.5},
    "ocr": {"dark_pixel": 30, "dark_ratio": 0.7, "merge_factor": 1.5, "min_conf": 65.0}
  })");
}

/// Rejects keys the schema does not know ("inputs" is free-form).
inline void check_keys(const json& user, const json& schema, const std::string& path) {
  if (!user.is_object()) throw UsageError("config " + (path.empty() ? "root" : path) + " must be an object");
  for (const auto& [k, v] : user.items()) {
    const std::string here = path.empty() ? k : path + "." + k;
    if (!schema.contains(k)) throw UsageError("unknown config key '" + here + "'");
    if (k == "inputs" && path.empty()) continue;
    if (schema[k].is_object()) check_keys(v, schema[k], here);
  }
}

inline json fl_preset_config(fl::Preset p) {
  const auto c = fl::FLConfig::from_preset(p);
  return {{"preset", std::string(fl::to_string(p))},
          {"n_clients", c.n_clients},
          {"participation", c.participation},
          {"alpha", c.alpha},
          {"local", {{"epochs", c.local.epochs}, {"batch_size", c.local.batch_size}, {"lr", c.local.lr}}}};
}

inline json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

template <class T>
T get_as(const json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config value '" + path + "." + key + "' has the wrong type");
  }
}

inline FeaturizerConfig featurizer_from(const json& j) {
  FeaturizerConfig f;
  f.dim = get_as<std::uint64_t>(j, "dim", "featurizer");
  f.ngram_min = get_as<std::uint32_t>(j, "ngram_min", "featurizer");
  f.ngram_max = get_as<std::uint32_t>(j, "ngram_max", "featurizer");
  f.signed_hashing = get_as<bool>(j, "signed_hashing", "featurizer");
  const auto norm = get_as<std::string>(j, "normalize", "featurizer");
  if (norm == "l2") {
    f.normalize = Normalization::l2;
  } else if (norm == "none") {
    f.normalize = Normalization::none;
  } else {
    throw UsageError("featurizer.normalize must be 'l2' or 'none'");
  }
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return f;
}

inline TrainConfig train_from(const json& j, const std::string& path, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = get_as<std::uint32_t>(j, "epochs", path);
  t.batch_size = get_as<std::size_t>(j, "batch_size", path);
  t.lr = get_as<double>(j, "lr", path);
  t.l2 = get_as<double>(j, "l2", path);
  t.class_weighted = get_as<bool>(j, "class_weighted", path);
  t.linear_decay = get_as<bool>(j, "linear_decay", path);
  t.max_text_len = get_as<std::uint32_t>(j, "max_text_len", path);
  t.seed = seed;
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(path + ": " + e.what());
  }
  return t;
}

inline adv::DEParams de_from(const json& j) {
  adv::DEParams d;
  d.population = get_as<std::size_t>(j, "population", "attack.de");
  d.generations = get_as<std::size_t>(j, "generations", "attack.de");
  d.F = get_as<double>(j, "F", "attack.de");
  d.CR = get_as<double>(j, "CR", "attack.de");
  return d;
}

inline std::vector<adv::Kind> kinds_from(const json& j, const std::string& path) {
  std::vector<adv::Kind> out;
  try {
    for (const auto& k : j) out.push_back(adv::parse_kind(k.get<std::string>()));
  } catch (const std::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  if (out.empty()) throw UsageError(path + " must list at least one kind");
  return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// "5" or "1..5" -> 5.
inline std::size_t parse_budgets(const std::string& s) {
  try {
    const auto dots = s.find("..");
    if (dots == std::string::npos) return std::stoul(s);
    if (std::stoul(s.substr(0, dots)) != 1) throw UsageError("budget ranges must start at 1");
    return std::stoul(s.substr(dots + 2));
  } catch (const std::logic_error&) {
    throw UsageError("bad budget range '" + s + "'");
  }
}

// ---------------------------------------------------------------------------
// Invocation state shared by the subcommands

struct Common {
  std::string config_path;
  std::string report_dir;
  std::string run_id;
  std::optional<std::uint64_t> seed;
};

class Invocation {
 public:
  Invocation(std::string name, const Common& common) : name_(std::move(name)), common_(common) {}

  /// Resolves defaults, optional preset, config file and seed flag.
  json& resolve(const std::function<void(json&, const json&)>& preset = {}) {
    cfg_ = default_config();
    json file = json::object();
    if (!common_.config_path.empty()) {
      file = load_config_file(common_.config_path);
      check_keys(file, cfg_, "");
    }
    if (preset) preset(cfg_, file);
    cfg_.merge_patch(file);
    if (common_.seed) cfg_["seed"] = *common_.seed;
    return cfg_;
  }

  json& config() { return cfg_; }
  std::uint64_t seed() const { return cfg_.at("seed").get<std::uint64_t>(); }

  void set_input(const std::string& key, const std::string& flag_value) {
    if (!flag_value.empty()) cfg_["inputs"][key] = flag_value;
  }

  std::string input(const std::string& key, const std::string& flag) const {
    const auto& in = cfg_.at("inputs");
    if (!in.contains(key) || !in[key].is_string() || in[key].get<std::string>().empty()) {
      throw UsageError(flag + " is required");
    }
    return in[key].get<std::string>();
  }

  std::optional<std::string> optional_input(const std::string& key) const {
    const auto& in = cfg_.at("inputs");
    if (!in.contains(key) || !in[key].is_string()) return std::nullopt;
    return in[key].get<std::string>();
  }

  std::filesystem::path write(const json& section, const report::Table& table) const {
    json c = section;
    c["command"] = name_;
    const auto run_id = common_.run_id.empty() ? report::utc_run_id() : common_.run_id;
    return report::write_report(report::report_root(common_.report_dir), name_, run_id, c, table);
  }

 private:
  std::string name_;
  Common common_;
  json cfg_;
};

inline json pick(const json& cfg, std::initializer_list<const char*> keys) {
  json out = json::object();
  for (const char* k : keys) out[k] = cfg.at(k);
  return out;
}

inline void save_text(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  report::write_atomic(p, content);
}

inline Head head_from(const json& cfg) {
  try {
    return parse_head(cfg.at("head").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

inline report::Table metrics_table(const BinaryMetrics& m) {
  report::Table t{{"metric", "value"}, {}};
  t.add({"accuracy", m.accuracy});
  t.add({"precision", m.precision});
  t.add({"recall", m.recall});
  t.add({"fpr", m.fpr});
  t.add({"tp", m.counts.tp});
  t.add({"fp", m.counts.fp});
  t.add({"tn", m.counts.tn});
  t.add({"fn", m.counts.fn});
  return t;
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_train(Invocation& inv, const Environment& env, const std::string& out_path) {
  auto& cfg = inv.config();
  const auto corpus = load_corpus(inv.input("train", "--train"));
  if (out_path.empty()) throw UsageError("--out is required");
  TrainStats stats;
  const auto model = train(corpus, head_from(cfg), train_from(cfg["train"], "train", derive_seed(inv.seed(), "cli.train")),
                           featurizer_from(cfg["featurizer"]), &stats);
  save_text(out_path, serialize_model(model));
  report::Table t{{"epoch", "loss"}, {}};
  for (std::size_t e = 0; e < stats.epoch_loss.size(); ++e) t.add({e + 1, stats.epoch_loss[e]});
  const auto dir = inv.write(pick(cfg, {"seed", "head", "inputs", "featurizer", "train"}), t);
  *env.out << "model written to " << out_path << "; report in " << dir.string() << "\n";
  return 0;
}

inline int cmd_eval(Invocation& inv, const Environment& env) {
  auto& cfg = inv.config();
  const auto model = load_model(inv.input("model", "--model"));
  const auto test = load_corpus(inv.input("test", "--test"));
  report::Table t;
  json printed;
  if (model.head() == Head::binary) {
    const auto m = binary_metrics(model, test);
    t = metrics_table(m);
    printed = to_json(m);
  } else {
    const auto r = label_report(model, test);
    t = {{"metric", "value"}, {}};
    t.add({"accuracy", r.accuracy});
    if (r.lrap) t.add({"lrap", *r.lrap});
    if (r.hamming) t.add({"hamming", *r.hamming});
    for (const auto& [cls, pm] : r.per_class) {
      t.add({"precision:" + cls, pm.precision});
      t.add({"recall:" + cls, pm.recall});
    }
    printed = to_json(r);
  }
  inv.write(pick(cfg, {"inputs"}), t);
  *env.out << printed.dump(2) << "\n";
  return 0;
}

inline int cmd_fl(Invocation& inv, const Environment& env, const std::string& out_path) {
  auto& cfg = inv.config();
  const auto& f = cfg["fl"];
  fl::FLConfig c;
  try {
    c.preset = fl::parse_preset(get_as<std::string>(f, "preset", "fl"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  c.n_clients = get_as<std::size_t>(f, "n_clients", "fl");
  c.participation = get_as<double>(f, "participation", "fl");
  c.rounds = get_as<std::uint32_t>(f, "rounds", "fl");
  c.alpha = get_as<double>(f, "alpha", "fl");
  c.local = train_from(f["local"], "fl.local", 0);
  c.partition_seed = derive_seed(inv.seed(), "cli.fl.partition");
  c.seed = derive_seed(inv.seed(), "cli.fl");
  try {
    c.validate();
  } catch (const fl::FlError& e) {
    throw UsageError(e.what());
  }
  const auto train_c = load_corpus(inv.input("train", "--train"));
  const auto test_c = load_corpus(inv.input("test", "--test"));
  const auto res = fl::run_fl(train_c, test_c, head_from(cfg), c, featurizer_from(cfg["featurizer"]));
  report::Table t{{"round", "accuracy", "train_loss", "precision", "recall", "fpr"}, {}};
  for (const auto& r : res.rounds) {
    t.add({r.round, r.accuracy, r.train_loss, r.binary ? json(r.binary->precision) : json(),
           r.binary ? json(r.binary->recall) : json(), r.binary ? json(r.binary->fpr) : json()});
  }
  if (!out_path.empty()) save_text(out_path, serialize_model(res.model));
  const auto dir = inv.write(pick(cfg, {"seed", "head", "inputs", "featurizer", "fl"}), t);
  *env.out << "final accuracy " << res.rounds.back().accuracy << "; report in " << dir.string() << "\n";
  return 0;
}

inline report::Table asr_table(const adv::BatchAttackReport& r) {
  report::Table t{{"kind", "budget", "asr", "successes", "attempted", "excluded"}, {}};
  for (const auto& [kind, rep] : r.kinds) {
    for (std::size_t b = 0; b < rep.asr.size(); ++b) {
      t.add({kind, b + 1, rep.asr[b], rep.successes[b], r.attempted, r.excluded});
    }
  }
  return t;
}

inline int cmd_attack(Invocation& inv, const Environment& env) {
  auto& cfg = inv.config();
  const auto model = load_model(inv.input("model", "--model"));
  const auto spam = load_corpus(inv.input("spam", "--spam"));
  const auto& a = cfg["attack"];
  const auto kinds = kinds_from(a["kinds"], "attack.kinds");
  const auto budget = get_as<std::size_t>(a, "max_budget", "attack");
  if (budget < 1) throw UsageError("budget must be >= 1");
  const auto rep = adv::batch_attack(model, spam, kinds, budget, de_from(a["de"]),
                                     derive_seed(inv.seed(), "cli.attack"));
  const auto dir = inv.write(pick(cfg, {"seed", "inputs", "attack"}), asr_table(rep));
  *env.out << to_json(rep).dump(2) << "\n" << "report in " << dir.string() << "\n";
  return 0;
}

inline int cmd_advtrain(Invocation& inv, const Environment& env, const std::string& out_path) {
  auto& cfg = inv.config();
  const auto train_c = load_corpus(inv.input("train", "--train"));
  const auto attack_c = load_corpus(inv.input("attack_test", "--attack-test"));
  const auto test_c = load_corpus(inv.input("test", "--test"));
  harness::AdvCycleConfig c;
  c.train = train_from(cfg["train"], "train", 0);
  c.featurizer = featurizer_from(cfg["featurizer"]);
  c.attack_kinds = kinds_from(cfg["attack"]["kinds"], "attack.kinds");
  c.max_budget = get_as<std::size_t>(cfg["attack"], "max_budget", "attack");
  c.de = de_from(cfg["attack"]["de"]);
  c.generation.sample_fraction = get_as<double>(cfg["advtrain"], "sample_fraction", "advtrain");
  c.generation.budget = get_as<std::size_t>(cfg["advtrain"], "budget", "advtrain");
  c.generation.kinds = kinds_from(cfg["advtrain"]["kinds"], "advtrain.kinds");
  c.generation.de = c.de;
  c.seed = derive_seed(inv.seed(), "cli.advtrain");
  const auto r = harness::adversarial_training_cycle(train_c, test_c, attack_c, c);
  if (!out_path.empty()) save_text(out_path, serialize_model(r.robust_model));
  report::Table t{{"metric", "budget", "before", "after"}, {}};
  for (const auto& [kind, rep] : r.before.kinds) {
    const auto& after = r.after.kinds.at(kind);
    for (std::size_t b = 0; b < rep.asr.size(); ++b) t.add({"asr:" + kind, b + 1, rep.asr[b], after.asr[b]});
  }
  t.add({"clean_accuracy", json(), r.clean_before.accuracy, r.clean_after.accuracy});
  t.add({"clean_precision", json(), r.clean_before.precision, r.clean_after.precision});
  t.add({"clean_recall", json(), r.clean_before.recall, r.clean_after.recall});
  t.add({"adversarial_examples", json(), json(), r.adversarial_examples});
  const auto dir = inv.write(pick(cfg, {"seed", "inputs", "featurizer", "train", "attack", "advtrain"}), t);
  *env.out << "adversarial examples " << r.adversarial_examples << "; report in " << dir.string() << "\n";
  return 0;
}

inline int cmd_poison(Invocation& inv, const Environment& env) {
  auto& cfg = inv.config();
  const auto& p = cfg["poison"];
  poison::Scenario scenario;
  try {
    scenario = poison::parse_scenario(get_as<std::string>(p, "scenario", "poison"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto rates = get_as<std::vector<double>>(p, "rates", "poison");
  auto words = get_as<std::vector<std::string>>(p, "words", "poison");
  const auto seeds = get_as<std::vector<std::uint64_t>>(p, "seeds", "poison");
  const auto test_count = get_as<std::size_t>(p, "test_stamped_count", "poison");
  if (rates.empty() || seeds.empty()) throw UsageError("poison.rates and poison.seeds must be non-empty");
  if (scenario == poison::Scenario::untargeted) words = {""};
  if (words.empty()) throw UsageError("backdoor scenarios need at least one word");

  const auto train_c = load_corpus(inv.input("train", "--train"));
  const auto test_c = load_corpus(inv.input("test", "--test"));
  const auto pool_c = load_corpus(inv.input("pool", "--pool"));
  const auto fc = featurizer_from(cfg["featurizer"]);
  auto tc = train_from(cfg["train"], "train", derive_seed(inv.seed(), "cli.poison.train"));
  const auto clean = train(train_c, Head::binary, tc, fc);
  const auto pool = poison::filter_benign_pool(pool_c, clean);

  std::vector<poison::GridRow> rows;
  for (double rate : rates) {
    for (const auto& word : words) {
      for (std::uint64_t s : seeds) {
        poison::PoisonConfig pc{scenario, rate, word, derive_seed(inv.seed(), "cli.poison", s), test_count};
        pc.validate();
        Corpus poisoned_train = train_c;
        std::optional<Corpus> stamped;
        switch (scenario) {
          case poison::Scenario::untargeted:
            poisoned_train = poison::poison_untargeted(train_c, pool, rate, pc.seed);
            break;
          case poison::Scenario::backdoor_benign: {
            auto d = poison::poison_backdoor_benign(train_c, pool, pc);
            poisoned_train = std::move(d.train);
            stamped = std::move(d.stamped_test);
            break;
          }
          case poison::Scenario::backdoor_spam: {
            auto d = poison::poison_backdoor_spam(train_c, pc, pool.corpus());
            poisoned_train = std::move(d.train);
            stamped = std::move(d.stamped_test);
            break;
          }
        }
        const auto model = train(poisoned_train, Head::binary, tc, fc);
        const double drop = binary_metrics(clean, test_c).accuracy - binary_metrics(model, test_c).accuracy;
        const double asr = stamped ? attack_success_rate(model, *stamped, kSpam) : -1.0;
        rows.push_back({scenario, rate, word, s, asr, drop});
      }
    }
  }
  report::Table t{{"scenario", "p", "word", "seed", "asr", "acc_drop"}, {}};
  for (const auto& r : rows) {
    t.add({std::string(poison::to_string(r.scenario)), r.p, r.word, r.seed,
           r.asr < 0 ? json() : json(r.asr), r.acc_drop});
  }
  const auto dir = inv.write(pick(cfg, {"seed", "inputs", "featurizer", "train", "poison"}), t);
  *env.out << rows.size() << " grid cells; report in " << dir.string() << "\n";
  return 0;
}

inline int cmd_drift(Invocation& inv, const Environment& env, const std::vector<std::string>& corpora_flag) {
  auto& cfg = inv.config();
  if (!corpora_flag.empty()) cfg["inputs"]["corpora"] = corpora_flag;
  const auto& in = cfg["inputs"];
  if (!in.contains("corpora") || !in["corpora"].is_array() || in["corpora"].empty()) {
    throw UsageError("--corpus is required");
  }
  std::vector<Corpus> corpora;
  for (const auto& path : in["corpora"]) corpora.push_back(load_corpus(path.get<std::string>()));
  std::vector<Timestamp> cutoffs;
  for (const auto& c : cfg["drift"]["cutoffs"]) {
    try {
      cutoffs.push_back(parse_timestamp(c.get<std::string>()) + (c.get<std::string>().size() == 10 ? 86399 : 0));
    } catch (const std::exception& e) {
      throw UsageError(std::string("drift.cutoffs: ") + e.what());
    }
  }
  if (cutoffs.empty()) throw UsageError("--cutoffs is required");
  harness::DriftConfig dc;
  dc.train = train_from(cfg["train"], "train", 0);
  dc.featurizer = featurizer_from(cfg["featurizer"]);
  dc.train_fraction = get_as<double>(cfg["split"], "train_fraction", "split");
  dc.seed = derive_seed(inv.seed(), "cli.drift");
  const auto d = harness::drift_matrix(corpora, cutoffs, dc);
  const auto dir = inv.write(pick(cfg, {"seed", "inputs", "featurizer", "train", "split", "drift"}),
                             harness::to_table(d));
  *env.out << d.rows.size() << " x " << d.buckets.size() << " drift matrix; report in " << dir.string() << "\n";
  return 0;
}

inline int cmd_transfer(Invocation& inv, const Environment& env) {
  auto& cfg = inv.config();
  harness::TransferMode mode;
  try {
    mode = harness::parse_transfer_mode(get_as<std::string>(cfg["transfer"], "mode", "transfer"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  harness::TransferConfig tc;
  tc.train = train_from(cfg["train"], "train", 0);
  tc.featurizer = featurizer_from(cfg["featurizer"]);
  tc.train_fraction = get_as<double>(cfg["split"], "train_fraction", "split");
  tc.seed = derive_seed(inv.seed(), "cli.transfer");
  const auto r = harness::transfer_pipeline(load_corpus(inv.input("source", "--source")),
                                            load_corpus(inv.input("target", "--target")), mode, tc);
  report::Table t{{"test_split", "accuracy", "precision", "recall", "fpr"}, {}};
  auto row = [&](const char* name, const BinaryMetrics& m) {
    t.add({name, m.accuracy, m.precision, m.recall, m.fpr});
  };
  row("source", r.source_test);
  row("target", r.target_test);
  row("union", r.union_test);
  const auto dir = inv.write(pick(cfg, {"seed", "inputs", "featurizer", "train", "split", "transfer"}), t);
  *env.out << "report in " << dir.string() << "\n";
  return 0;
}

inline int cmd_triage(Invocation& inv, const Environment& env) {
  auto& cfg = inv.config();
  const auto& tj = cfg["triage"];
  triage::ForestConfig fc;
  fc.n_trees = get_as<std::size_t>(tj, "n_trees", "triage");
  fc.max_depth = get_as<std::size_t>(tj, "max_depth", "triage");
  fc.seed = derive_seed(inv.seed(), "cli.triage");
  const auto train_s = triage::load_samples(inv.input("train", "--train"));
  const auto test_s = triage::load_samples(inv.input("test", "--test"));
  const auto forest = triage::train_forest(train_s, fc);
  const auto cmp = triage::compare(forest, test_s, get_as<double>(tj, "and_threshold", "triage"));
  report::Table t{{"method", "accuracy", "precision", "recall", "fpr"}, {}};
  t.add({"and", cmp.and_rule.accuracy, cmp.and_rule.precision, cmp.and_rule.recall, cmp.and_rule.fpr});
  t.add({"forest", cmp.forest.accuracy, cmp.forest.precision, cmp.forest.recall, cmp.forest.fpr});
  const auto dir = inv.write(pick(cfg, {"seed", "inputs", "triage"}), t);
  *env.out << triage::to_json(cmp).dump(2) << "\nreport in " << dir.string() << "\n";
  return 0;
}

inline int cmd_ocr(Invocation& inv, const Environment& env) {
  auto& cfg = inv.config();
  const auto& o = cfg["ocr"];
  ocr::StrConfig sc;
  sc.dark_pixel = get_as<std::uint8_t>(o, "dark_pixel", "ocr");
  sc.dark_ratio = get_as<double>(o, "dark_ratio", "ocr");
  sc.merge_factor = get_as<double>(o, "merge_factor", "ocr");
  sc.min_conf = get_as<double>(o, "min_conf", "ocr");
  const auto cells_path = inv.input("cells", "--cells");
  std::ifstream in(cells_path);
  if (!in) throw std::runtime_error("cannot open '" + cells_path + "'");
  json cells_json;
  try {
    cells_json = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("cells file is not valid JSON: " + std::string(e.what()));
  }
  const auto cells = ocr::cells_from_json(cells_json);
  std::optional<ocr::GrayImage> img;
  if (auto image_path = inv.optional_input("image")) {
    if (!env.load_image) throw UsageError("--image is not supported in this build");
    img = env.load_image(*image_path);
  }
  const auto e = ocr::extract(img ? &*img : nullptr, cells, sc);
  report::Table t{{"spam_text", "inverted", "removed"}, {}};
  t.add({e.spam_text, e.inverted, json(e.removed).dump()});
  inv.write(pick(cfg, {"inputs", "ocr"}), t);
  *env.out << ocr::to_json(e).dump(2) << "\n";
  return 0;
}

inline int cmd_inspect(Invocation& inv, const Environment& env, const std::string& by) {
  auto& cfg = inv.config();
  const auto corpus = load_corpus(inv.input("corpus", "--corpus"));
  HistogramKey key;
  if (by == "lang") {
    key = HistogramKey::lang;
  } else if (by == "label") {
    key = HistogramKey::label;
  } else if (by == "half_year") {
    key = HistogramKey::half_year;
  } else {
    throw UsageError("--by must be lang, label or half_year");
  }
  report::Table t{{by, "count", "fraction"}, {}};
  for (const auto& [k, bin] : distribution_stats(corpus, key)) t.add({k, bin.count, bin.fraction});
  json section = pick(cfg, {"inputs"});
  section["by"] = by;
  inv.write(section, t);
  *env.out << report::to_csv(t);
  return 0;
}

inline int cmd_synth(const Environment& env, const std::string& kind, std::size_t n, std::uint64_t seed,
                     const std::string& out_path) {
  if (out_path.empty()) throw UsageError("--out is required");
  const std::filesystem::path p(out_path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  if (kind == "triage" || kind == "triage-separable") {
    const auto s = kind == "triage" ? triage::make_fixture({n, 0.25, 0.08, seed})
                                    : triage::make_separable_fixture(n, seed);
    std::ostringstream os;
    triage::write_samples(os, s);
    report::write_atomic(p, os.str());
  } else {
    Corpus c;
    if (kind == "desk") {
      synth::DeskOptions o;
      o.n = n;
      o.seed = seed;
      c = synth::make_desk_corpus(o);
    } else if (kind == "tweets") {
      c = synth::make_tweet_pool(n, seed);
    } else if (kind == "separable") {
      c = synth::make_separable_corpus(n, seed);
    } else if (kind == "drift") {
      synth::DriftOptions o;
      o.seed = seed;
      c = synth::make_drift_corpus(o);
    } else if (kind == "topics-multiclass" || kind == "topics-multilabel") {
      c = synth::make_topic_corpus(n, kind == "topics-multilabel", seed);
    } else {
      throw UsageError("unknown synth kind '" + kind + "'");
    }
    const auto fmt = p.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl;
    std::ostringstream os;
    if (fmt == CorpusFormat::csv) {
      write_csv(os, c);
    } else {
      write_jsonl(os, c);
    }
    report::write_atomic(p, os.str());
  }
  *env.out << "wrote " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, const Environment& env = {}) {
  CLI::App app{"spamdam: spam detection robustness experiments", "spamdam"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--seed", seed_value, "global seed");
    sub->add_option("--report-dir", common.report_dir, "report root (default $SPAMDAM_REPORT_DIR or reports)");
    sub->add_option("--run-id", common.run_id, "report run directory name (default: UTC timestamp)");
  };

  struct Flags {
    std::string train, test, model, out, spam, attack_test, pool, source, target, cells, image, corpus;
    std::string head, preset, kinds, budgets, scenario, rate, word, words_file, seeds, cutoffs, mode, by = "label";
    std::string synth_kind = "desk";
    std::size_t synth_n = 4000;
    std::optional<double> alpha, participation, lr;
    std::optional<std::uint32_t> rounds, epochs;
    std::optional<std::size_t> n_clients, batch_size;
    std::vector<std::string> corpora;
  } f;

  auto* train_cmd = app.add_subcommand("train", "train a model from a corpus");
  add_common(train_cmd);
  train_cmd->add_option("--train", f.train, "training corpus (.jsonl/.csv)");
  train_cmd->add_option("--head", f.head, "binary|multiclass|multilabel");
  train_cmd->add_option("--out", f.out, "model output path");
  train_cmd->add_option("--epochs", f.epochs);
  train_cmd->add_option("--lr", f.lr);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model");
  add_common(eval_cmd);
  eval_cmd->add_option("--model", f.model);
  eval_cmd->add_option("--test", f.test);

  auto* fl_cmd = app.add_subcommand("fl", "federated training simulation");
  add_common(fl_cmd);
  fl_cmd->add_option("--preset", f.preset, "cross-device|cross-silo|custom");
  fl_cmd->add_option("--alpha", f.alpha);
  fl_cmd->add_option("--rounds", f.rounds);
  fl_cmd->add_option("--n-clients", f.n_clients);
  fl_cmd->add_option("--participation", f.participation);
  fl_cmd->add_option("--lr", f.lr, "local learning rate");
  fl_cmd->add_option("--epochs", f.epochs, "local epochs");
  fl_cmd->add_option("--batch-size", f.batch_size, "local batch size");
  fl_cmd->add_option("--head", f.head);
  fl_cmd->add_option("--train", f.train);
  fl_cmd->add_option("--test", f.test);
  fl_cmd->add_option("--out", f.out, "optional path for the final global model");

  auto* attack_cmd = app.add_subcommand("attack", "imperceptible evasion attack");
  add_common(attack_cmd);
  attack_cmd->add_option("--model", f.model);
  attack_cmd->add_option("--spam", f.spam);
  attack_cmd->add_option("--kinds", f.kinds, "comma list of homoglyph,invisible,reorder,deletion");
  attack_cmd->add_option("--budgets", f.budgets, "max budget, as 5 or 1..5");

  auto* adv_cmd = app.add_subcommand("advtrain", "adversarial training cycle");
  add_common(adv_cmd);
  adv_cmd->add_option("--train", f.train);
  adv_cmd->add_option("--attack-test", f.attack_test);
  adv_cmd->add_option("--test", f.test, "clean test corpus");
  adv_cmd->add_option("--budgets", f.budgets);
  adv_cmd->add_option("--kinds", f.kinds, "attack kinds");
  adv_cmd->add_option("--out", f.out, "optional path for the retrained model");

  auto* poison_cmd = app.add_subcommand("poison", "training-set poisoning grid");
  add_common(poison_cmd);
  poison_cmd->add_option("--scenario", f.scenario, "untargeted|backdoor-benign|backdoor-spam");
  poison_cmd->add_option("--rate", f.rate, "comma list of rates p");
  poison_cmd->add_option("--word", f.word, "comma list of backdoor words");
  poison_cmd->add_option("--words-file", f.words_file, "backdoor word list, one per line");
  poison_cmd->add_option("--seeds", f.seeds, "comma list of grid seeds");
  poison_cmd->add_option("--train", f.train);
  poison_cmd->add_option("--test", f.test);
  poison_cmd->add_option("--pool", f.pool, "benign pool corpus");

  auto* drift_cmd = app.add_subcommand("drift", "concept-drift matrix");
  add_common(drift_cmd);
  drift_cmd->add_option("--corpus", f.corpora, "timestamped corpus (repeatable)");
  drift_cmd->add_option("--cutoffs", f.cutoffs, "comma list of dates");

  auto* transfer_cmd = app.add_subcommand("transfer", "cross-corpus transfer");
  add_common(transfer_cmd);
  transfer_cmd->add_option("--mode", f.mode,
                           "source_only|target_only|joint|source_then_target|target_then_source");
  transfer_cmd->add_option("--source", f.source);
  transfer_cmd->add_option("--target", f.target);

  auto* triage_cmd = app.add_subcommand("triage", "screenshot triage forest vs AND rule");
  add_common(triage_cmd);
  triage_cmd->add_option("--train", f.train, "samples CSV");
  triage_cmd->add_option("--test", f.test, "samples CSV");

  auto* ocr_cmd = app.add_subcommand("ocr-post", "OCR post-processing");
  add_common(ocr_cmd);
  ocr_cmd->add_option("--cells", f.cells, "cells JSON");
  ocr_cmd->add_option("--image", f.image, "grayscale source image (PNG)");

  auto* inspect_cmd = app.add_subcommand("inspect", "corpus distribution statistics");
  add_common(inspect_cmd);
  inspect_cmd->add_option("--corpus", f.corpus);
  inspect_cmd->add_option("--by", f.by, "lang|label|half_year");

  auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic corpus or triage fixture");
  synth_cmd->add_option("--kind", f.synth_kind,
                        "desk|tweets|separable|drift|topics-multiclass|topics-multilabel|triage|triage-separable");
  synth_cmd->add_option("--n", f.synth_n);
  synth_cmd->add_option("--seed", seed_value);
  synth_cmd->add_option("--out", f.out);

  auto usage = [&](const std::string& msg, CLI::App* sub) {
    *env.err << "error: " << msg << "\n" << (sub ? sub->help() : app.help());
    return 2;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, *env.out, *env.err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, *env.out, *env.err);
  } catch (const CLI::ParseError& e) {
    *env.err << "error: " << e.what() << "\n";
    CLI::App* failed = nullptr;
    for (auto* s : app.get_subcommands()) failed = s;
    *env.err << (failed ? failed->help() : app.help());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (sub->count("--seed")) common.seed = seed_value;

  try {
    if (name == "synth") return cmd_synth(env, f.synth_kind, f.synth_n, seed_value, f.out);

    Invocation inv(name, common);
    std::function<void(json&, const json&)> preset;
    if (name == "fl") {
      preset = [&](json& cfg, const json& file) {
        std::string p = f.preset;
        if (p.empty() && file.contains("fl") && file["fl"].contains("preset")) p = file["fl"]["preset"].get<std::string>();
        if (p.empty()) return;
        fl::Preset pr;
        try {
          pr = fl::parse_preset(p);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
        cfg["fl"].merge_patch(fl_preset_config(pr));
      };
    }
    auto& cfg = inv.resolve(preset);

    // Flags override the config file.
    if (!f.head.empty()) cfg["head"] = f.head;
    inv.set_input("train", f.train);
    inv.set_input("test", f.test);
    inv.set_input("model", f.model);
    inv.set_input("spam", f.spam);
    inv.set_input("attack_test", f.attack_test);
    inv.set_input("pool", f.pool);
    inv.set_input("source", f.source);
    inv.set_input("target", f.target);
    inv.set_input("cells", f.cells);
    inv.set_input("image", f.image);
    inv.set_input("corpus", f.corpus);
    if (name == "fl") {
      if (!f.preset.empty()) cfg["fl"]["preset"] = f.preset;
      if (f.alpha) cfg["fl"]["alpha"] = *f.alpha;
      if (f.rounds) cfg["fl"]["rounds"] = *f.rounds;
      if (f.n_clients) cfg["fl"]["n_clients"] = *f.n_clients;
      if (f.participation) cfg["fl"]["participation"] = *f.participation;
      if (f.lr) cfg["fl"]["local"]["lr"] = *f.lr;
      if (f.epochs) cfg["fl"]["local"]["epochs"] = *f.epochs;
      if (f.batch_size) cfg["fl"]["local"]["batch_size"] = *f.batch_size;
    } else {
      if (f.lr) cfg["train"]["lr"] = *f.lr;
      if (f.epochs) cfg["train"]["epochs"] = *f.epochs;
    }
    if (!f.kinds.empty()) cfg["attack"]["kinds"] = split_list(f.kinds);
    if (!f.budgets.empty()) cfg["attack"]["max_budget"] = parse_budgets(f.budgets);
    if (!f.scenario.empty()) cfg["poison"]["scenario"] = f.scenario;
    if (!f.rate.empty()) {
      std::vector<double> rates;
      for (const auto& r : split_list(f.rate)) {
        try {
          rates.push_back(std::stod(r));
        } catch (const std::logic_error&) {
          throw UsageError("bad rate '" + r + "'");
        }
      }
      cfg["poison"]["rates"] = rates;
    }
    if (!f.word.empty()) cfg["poison"]["words"] = split_list(f.word);
    if (!f.words_file.empty()) cfg["poison"]["words"] = poison::load_word_list(f.words_file);
    if (!f.seeds.empty()) {
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(f.seeds)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::logic_error&) {
          throw UsageError("bad seed '" + s + "'");
        }
      }
      cfg["poison"]["seeds"] = seeds;
    }
    if (!f.cutoffs.empty()) cfg["drift"]["cutoffs"] = split_list(f.cutoffs);
    if (!f.mode.empty()) cfg["transfer"]["mode"] = f.mode;

    if (name == "train") return cmd_train(inv, env, f.out);
    if (name == "eval") return cmd_eval(inv, env);
    if (name == "fl") return cmd_fl(inv, env, f.out);
    if (name == "attack") return cmd_attack(inv, env);
    if (name == "advtrain") return cmd_advtrain(inv, env, f.out);
    if (name == "poison") return cmd_poison(inv, env);
    if (name == "drift") return cmd_drift(inv, env, f.corpora);
    if (name == "transfer") return cmd_transfer(inv, env);
    if (name == "triage") return cmd_triage(inv, env);
    if (name == "ocr-post") return cmd_ocr(inv, env);
    if (name == "inspect") return cmd_inspect(inv, env, f.by);
    return usage("unknown subcommand '" + name + "'", nullptr);
  } catch (const UsageError& e) {
    return usage(e.what(), sub);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    *env.err << "error: " << msg << "\n";
    return 1;
  }
}

/// Resolved `fl` section for a preset and optional overrides; used by tests
/// to check precedence without running a simulation.
inline json resolve_fl_config(const std::string& preset_flag, const json& file_cfg) {
  json cfg = default_config();
  check_keys(file_cfg, cfg, "");
  std::string p = preset_flag;
  if (p.empty() && file_cfg.contains("fl") && file_cfg["fl"].contains("preset")) {
    p = file_cfg["fl"]["preset"].get<std::string>();
  }
  if (!p.empty()) cfg["fl"].merge_patch(fl_preset_config(fl::parse_preset(p)));
  cfg.merge_patch(file_cfg);
  if (!preset_flag.empty()) cfg["fl"]["preset"] = preset_flag;
  return cfg["fl"];
}

}  // namespace spamdam::cli
