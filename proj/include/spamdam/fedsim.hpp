#pragma once

// Federated-learning simulation: Dirichlet-partitioned clients, per-round
// client sampling, local SGD and FedAVG aggregation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "spamdam/corpus.hpp"
#include "spamdam/metrics.hpp"
#include "spamdam/model.hpp"
#include "spamdam/rng.hpp"

namespace spamdam::fl {

class FlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Preset { cross_device, cross_silo, custom };

inline std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::cross_device: return "cross-device";
    case Preset::cross_silo: return "cross-silo";
    case Preset::custom: return "custom";
  }
  return "?";
}

inline Preset parse_preset(std::string_view s) {
  if (s == "cross-device" || s == "cross_device") return Preset::cross_device;
  if (s == "cross-silo" || s == "cross_silo") return Preset::cross_silo;
  if (s == "custom") return Preset::custom;
  throw std::invalid_argument("unknown FL preset '" + std::string(s) + "'");
}

struct FLConfig {
  Preset preset = Preset::custom;
  std::size_t n_clients = 1;
  double participation = 1.0;
  std::uint32_t rounds = 1;
  TrainConfig local;
  double alpha = 1.0;
  std::uint64_t partition_seed = 0;
  std::uint64_t seed = 0;

  /// Client-side defaults: lr 5e-5, batch 32, 2 local epochs, alpha 1.
  static FLConfig from_preset(Preset p) {
    FLConfig cfg;
    cfg.preset = p;
    cfg.local.lr = 5e-5;
    cfg.local.batch_size = 32;
    cfg.local.epochs = 2;
    cfg.alpha = 1.0;
    switch (p) {
      case Preset::cross_device:
        cfg.n_clients = 200;
        cfg.participation = 0.10;
        break;
      case Preset::cross_silo:
        cfg.n_clients = 20;
        cfg.participation = 1.0;
        break;
      case Preset::custom:
        break;
    }
    return cfg;
  }

  PartitionConfig partition() const { return {n_clients, alpha, partition_seed}; }

  std::size_t clients_per_round() const {
    const auto n = static_cast<std::size_t>(std::llround(participation * double(n_clients)));
    return std::max<std::size_t>(1, std::min(n, n_clients));
  }

  void validate() const {
    if (n_clients < 1) throw FlError("n_clients must be >= 1");
    if (!(participation > 0.0 && participation <= 1.0)) {
      throw FlError("participation must lie in (0,1]");
    }
    if (rounds < 1) throw FlError("rounds must be >= 1");
    if (!(alpha > 0.0)) throw FlError("alpha must be > 0");
    local.validate();
  }
};

/// What a client hands back to the server: parameters and a sample count.
struct ModelUpdate {
  std::size_t client_id = 0;
  LinearModel model;
  std::size_t sample_count = 0;
  double train_loss = 0.0;
};

/// Sample-count weighted parameter mean. Updates are summed in client-id
/// order so the result does not depend on arrival order.
inline LinearModel fedavg_aggregate(std::vector<ModelUpdate> updates) {
  if (updates.empty()) throw FlError("fedavg_aggregate: no updates");
  std::stable_sort(updates.begin(), updates.end(),
                   [](const ModelUpdate& a, const ModelUpdate& b) { return a.client_id < b.client_id; });
  const auto& ref = updates.front().model;
  std::size_t total = 0;
  for (const auto& u : updates) {
    const auto& m = u.model;
    if (m.head() != ref.head() || m.classes() != ref.classes() ||
        !(m.featurizer() == ref.featurizer()) || m.weights().size() != ref.weights().size()) {
      throw FlError("fedavg_aggregate: model shape mismatch");
    }
    total += u.sample_count;
  }
  if (total == 0) throw FlError("fedavg_aggregate: zero total samples");
  auto out = LinearModel::zeros(ref.head(), ref.classes(), ref.featurizer(), ref.max_text_len());
  auto w = out.weights();
  auto b = out.bias();
  for (const auto& u : updates) {
    const double f = double(u.sample_count) / double(total);
    const auto uw = u.model.weights();
    const auto ub = u.model.bias();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += f * uw[k];
    for (std::size_t k = 0; k < b.size(); ++k) b[k] += f * ub[k];
  }
  return out;
}

/// A simulated client. Its shard stays private; the server only ever sees
/// the ModelUpdate returned by local_update.
class Client {
 public:
  Client(std::size_t id, const Corpus& shard, const LinearModel& like)
      : id_(id), examples_(make_examples(like, shard)) {}

  std::size_t id() const { return id_; }
  std::size_t sample_count() const { return examples_.size(); }

  ModelUpdate local_update(const LinearModel& global, const TrainConfig& cfg) const {
    LinearModel local = global;
    local.set_max_text_len(cfg.max_text_len);
    const auto lw = cfg.class_weighted
                        ? class_weights(local.head(), local.num_classes(), examples_)
                        : LossWeights::uniform(local.head(), local.num_classes());
    const auto stats = sgd_fit(local, examples_, cfg, lw);
    const double loss = stats.epoch_loss.empty() ? 0.0 : stats.epoch_loss.back();
    return {id_, std::move(local), examples_.size(), loss};
  }

 private:
  std::size_t id_;
  std::vector<Example> examples_;
};

struct RoundLog {
  std::uint32_t round = 0;
  std::vector<std::size_t> sampled;
  double accuracy = 0.0;
  std::optional<BinaryMetrics> binary;  // binary head only
  double train_loss = 0.0;              // sample-weighted mean of client losses
};

inline nlohmann::json to_json(const RoundLog& r) {
  nlohmann::json j = {{"round", r.round},
                      {"sampled", r.sampled},
                      {"accuracy", r.accuracy},
                      {"train_loss", r.train_loss}};
  if (r.binary) j["metrics"] = spamdam::to_json(*r.binary);
  return j;
}

struct FlResult {
  LinearModel model;
  std::vector<RoundLog> rounds;
};

/// Uniform sample of k distinct client ids, returned sorted.
inline std::vector<std::size_t> sample_clients(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (k >= n) return ids;
  auto rng = make_rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline double evaluate_accuracy(const LinearModel& model, std::span<const Example> test,
                                std::optional<ConfusionCounts>* binary_counts) {
  std::size_t correct = 0;
  ConfusionCounts counts;
  for (const auto& e : test) {
    const auto p = predict_features(model, e.x);
    if (model.head() == Head::binary) {
      const bool spam = p.scores[0] > 0.5;
      counts.add(e.y[0] != 0, spam);
      correct += spam == (e.y[0] != 0);
    } else {
      std::vector<std::uint8_t> decided(model.num_classes(), 0);
      for (const auto& l : p.labels) decided[model.class_index(l)] = 1;
      correct += decided == e.y;
    }
  }
  if (binary_counts && model.head() == Head::binary) *binary_counts = counts;
  return test.empty() ? 0.0 : double(correct) / double(test.size());
}

using RoundCallback = std::function<void(const RoundLog&)>;

/// Partitions once, then runs `cfg.rounds` rounds of sample -> local SGD ->
/// FedAVG -> evaluate. Fully determined by cfg.
inline FlResult run_fl(const Corpus& train_corpus, const Corpus& test_corpus, Head head,
                       const FLConfig& cfg, const FeaturizerConfig& featurizer = {},
                       const RoundCallback& on_round = {}) {
  cfg.validate();
  if (train_corpus.empty()) throw FlError("empty training corpus");
  FlResult result;
  result.model = LinearModel::zeros(head, discover_classes(train_corpus, head), featurizer,
                                    cfg.local.max_text_len);
  const auto shards = dirichlet_partition(train_corpus, cfg.partition());
  std::vector<Client> clients;
  clients.reserve(shards.size());
  for (std::size_t k = 0; k < shards.size(); ++k) clients.emplace_back(k, shards[k], result.model);
  const auto test = make_examples(result.model, test_corpus);

  const std::size_t per_round = cfg.clients_per_round();
  for (std::uint32_t r = 0; r < cfg.rounds; ++r) {
    RoundLog log;
    log.round = r + 1;
    log.sampled = sample_clients(clients.size(), per_round, derive_seed(cfg.seed, "fl.sample", r));
    std::vector<ModelUpdate> updates;
    updates.reserve(log.sampled.size());
    for (std::size_t id : log.sampled) {
      TrainConfig local = cfg.local;
      local.seed = derive_seed(cfg.seed, "fl.local", std::uint64_t(r) * clients.size() + id);
      updates.push_back(clients[id].local_update(result.model, local));
    }
    std::size_t total = 0;
    for (const auto& u : updates) {
      log.train_loss += u.train_loss * double(u.sample_count);
      total += u.sample_count;
    }
    log.train_loss /= double(total);
    result.model = fedavg_aggregate(std::move(updates));
    if (!test.empty()) {
      std::optional<ConfusionCounts> counts;
      log.accuracy = evaluate_accuracy(result.model, test, &counts);
      if (counts) log.binary = metrics_from_counts(*counts);
    }
    if (on_round) on_round(log);
    result.rounds.push_back(std::move(log));
  }
  return result;
}

}  // namespace spamdam::fl
