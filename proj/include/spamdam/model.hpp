#pragma once

// Linear classifier family over hashed n-gram features: a sigmoid head for
// binary spam detection, a softmax head for multi-class categorisation and
// independent sigmoids for multi-label tagging.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spamdam/corpus.hpp"
#include "spamdam/features.hpp"
#include "spamdam/rng.hpp"
#include "spamdam/unicode.hpp"

namespace spamdam {

enum class Head : std::uint8_t { binary = 0, multiclass = 1, multilabel = 2 };

inline std::string_view to_string(Head h) {
  switch (h) {
    case Head::binary: return "binary";
    case Head::multiclass: return "multiclass";
    case Head::multilabel: return "multilabel";
  }
  return "?";
}

inline Head parse_head(std::string_view s) {
  if (s == "binary") return Head::binary;
  if (s == "multiclass") return Head::multiclass;
  if (s == "multilabel") return Head::multilabel;
  throw std::invalid_argument("unknown head '" + std::string(s) + "'");
}

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::uint32_t epochs = 20;
  std::uint32_t batch_size = 32;
  double lr = 0.5;
  double l2 = 1e-6;
  bool class_weighted = false;
  bool linear_decay = false;  // epoch e of E runs at lr * (E - e) / E
  std::uint64_t seed = 0;
  std::uint32_t max_text_len = 80;  // code points kept before featurizing

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (!(l2 >= 0.0)) throw std::invalid_argument("l2 must be non-negative");
    if (!(lr * l2 < 1.0)) throw std::invalid_argument("lr * l2 must be < 1");
    if (max_text_len == 0) throw std::invalid_argument("max_text_len must be positive");
  }
};

class LinearModel {
 public:
  LinearModel() = default;

  static LinearModel zeros(Head head, std::vector<std::string> classes,
                           const FeaturizerConfig& featurizer, std::uint32_t max_text_len = 80) {
    featurizer.validate();
    if (classes.empty()) throw ModelError("model needs at least one class");
    if (head == Head::binary && classes.size() != 1) {
      throw ModelError("binary head has exactly one output class");
    }
    LinearModel m;
    m.head_ = head;
    m.classes_ = std::move(classes);
    m.featurizer_ = featurizer;
    m.max_text_len_ = max_text_len;
    m.weights_.assign(m.classes_.size() * featurizer.dim, 0.0);
    m.bias_.assign(m.classes_.size(), 0.0);
    return m;
  }

  Head head() const { return head_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const FeaturizerConfig& featurizer() const { return featurizer_; }
  std::uint32_t max_text_len() const { return max_text_len_; }
  std::size_t num_classes() const { return classes_.size(); }
  std::uint64_t dim() const { return featurizer_.dim; }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> bias() { return bias_; }
  std::span<const double> bias() const { return bias_; }
  double* row(std::size_t c) { return weights_.data() + c * featurizer_.dim; }
  const double* row(std::size_t c) const { return weights_.data() + c * featurizer_.dim; }

  void set_max_text_len(std::uint32_t n) { max_text_len_ = n; }

  std::size_t class_index(std::string_view label) const {
    auto it = std::find(classes_.begin(), classes_.end(), label);
    if (it == classes_.end()) throw ModelError("label '" + std::string(label) + "' not in model");
    return static_cast<std::size_t>(it - classes_.begin());
  }
  bool has_class(std::string_view label) const {
    return std::find(classes_.begin(), classes_.end(), label) != classes_.end();
  }

  /// Truncates to max_text_len code points, then featurizes.
  SparseVector features(std::string_view text) const {
    return features(std::u32string_view(unicode::decode(text)));
  }
  SparseVector features(std::u32string_view cps) const {
    return featurize(cps.substr(0, max_text_len_), featurizer_);
  }

  std::vector<double> logits(const SparseVector& x) const {
    std::vector<double> z(bias_);
    for (std::size_t c = 0; c < z.size(); ++c) z[c] += x.dot(row(c));
    return z;
  }

  bool all_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(weights_.begin(), weights_.end(), finite) &&
           std::all_of(bias_.begin(), bias_.end(), finite);
  }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;

 private:
  Head head_ = Head::binary;
  std::vector<std::string> classes_;
  FeaturizerConfig featurizer_;
  std::uint32_t max_text_len_ = 80;
  std::vector<double> weights_;  // row-major, classes x dim
  std::vector<double> bias_;
};

// ---------------------------------------------------------------------------
// Scoring

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline std::vector<double> softmax(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += (p[i] = std::exp(z[i] - mx));
  for (auto& v : p) v /= sum;
  return p;
}

inline std::vector<double> scores_from_logits(Head head, std::span<const double> z) {
  if (head == Head::multiclass) return softmax(z);
  std::vector<double> p(z.size());
  std::transform(z.begin(), z.end(), p.begin(), sigmoid);
  return p;
}

struct Prediction {
  std::vector<double> scores;       // one per model class
  std::vector<std::string> labels;  // decided labels
};

/// Sigmoid heads decide positive when score > threshold; multiclass takes the
/// argmax with ties resolved to the lowest class index.
inline Prediction decide(const LinearModel& model, std::vector<double> scores,
                         double threshold = 0.5) {
  Prediction p;
  p.scores = std::move(scores);
  switch (model.head()) {
    case Head::binary:
      p.labels.emplace_back(p.scores[0] > threshold ? kSpam : kNonSpam);
      break;
    case Head::multiclass: {
      const auto best = std::max_element(p.scores.begin(), p.scores.end()) - p.scores.begin();
      p.labels.push_back(model.classes()[static_cast<std::size_t>(best)]);
      break;
    }
    case Head::multilabel:
      for (std::size_t c = 0; c < p.scores.size(); ++c) {
        if (p.scores[c] > threshold) p.labels.push_back(model.classes()[c]);
      }
      break;
  }
  return p;
}

inline Prediction predict_features(const LinearModel& model, const SparseVector& x,
                                   double threshold = 0.5) {
  return decide(model, scores_from_logits(model.head(), model.logits(x)), threshold);
}

inline Prediction predict(const LinearModel& model, std::string_view text, double threshold = 0.5) {
  return predict_features(model, model.features(text), threshold);
}

/// Spam probability from a binary model.
inline double spam_probability(const LinearModel& model, std::string_view text) {
  if (model.head() != Head::binary) throw ModelError("spam_probability needs a binary model");
  return sigmoid(model.logits(model.features(text))[0]);
}

inline bool predicts_spam(const LinearModel& model, std::string_view text, double threshold = 0.5) {
  return spam_probability(model, text) > threshold;
}

// ---------------------------------------------------------------------------
// Training data

struct Example {
  SparseVector x;
  std::vector<std::uint8_t> y;  // binary: {is_spam}; otherwise one entry per class
};

/// Output classes a corpus induces for a head (sorted for the label heads).
inline std::vector<std::string> discover_classes(const Corpus& corpus, Head head) {
  if (head == Head::binary) return {std::string(kSpam)};
  std::vector<std::string> all;
  for (const auto& m : corpus) all.insert(all.end(), m.labels.begin(), m.labels.end());
  return normalize_labels(std::move(all));
}

inline std::vector<std::uint8_t> encode_target(const LinearModel& model, const Message& m) {
  switch (model.head()) {
    case Head::binary: {
      if (m.labels.size() != 1 || (m.labels[0] != kSpam && m.labels[0] != kNonSpam)) {
        throw ModelError("message '" + m.id + "' is not labeled exactly one of spam/non-spam");
      }
      return {static_cast<std::uint8_t>(m.labels[0] == kSpam)};
    }
    case Head::multiclass: {
      if (m.labels.size() != 1) {
        throw ModelError("multiclass message '" + m.id + "' must carry exactly one label");
      }
      std::vector<std::uint8_t> y(model.num_classes(), 0);
      y[model.class_index(m.labels[0])] = 1;
      return y;
    }
    case Head::multilabel: {
      std::vector<std::uint8_t> y(model.num_classes(), 0);
      for (const auto& l : m.labels) y[model.class_index(l)] = 1;
      return y;
    }
  }
  return {};
}

inline std::vector<Example> make_examples(const LinearModel& model, const Corpus& corpus) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  for (const auto& m : corpus) out.push_back({model.features(m.text), encode_target(model, m)});
  return out;
}

// ---------------------------------------------------------------------------
// Loss

/// Per-category loss weights: binary {non-spam, spam}; multiclass one per
/// class; multilabel one per class, applied to the positive term.
struct LossWeights {
  std::vector<double> w;

  static LossWeights uniform(Head head, std::size_t num_classes) {
    return {std::vector<double>(head == Head::binary ? 2 : num_classes, 1.0)};
  }
};

/// Inverse-frequency weights n/(K n_c) over the K categories present,
/// rescaled to mean 1. Absent categories get weight 1.
inline LossWeights class_weights(Head head, std::size_t num_classes,
                                 std::span<const Example> examples) {
  auto lw = LossWeights::uniform(head, num_classes);
  std::vector<std::size_t> counts(lw.w.size(), 0);
  for (const auto& e : examples) {
    if (head == Head::binary) {
      counts[e.y[0]]++;
    } else {
      for (std::size_t c = 0; c < e.y.size(); ++c) counts[c] += e.y[c];
    }
  }
  std::size_t total = 0, present = 0;
  for (auto n : counts) {
    total += n;
    present += n > 0;
  }
  if (present == 0) return lw;
  double sum = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    lw.w[c] = double(total) / (double(present) * double(counts[c]));
    sum += lw.w[c];
  }
  const double mean = sum / double(present);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c]) lw.w[c] /= mean;
  }
  return lw;
}

/// Loss of one example given its logits; writes dLoss/dlogit into dz.
inline double example_loss(Head head, std::span<const double> z, std::span<const std::uint8_t> y,
                           const LossWeights& lw, std::span<double> dz) {
  switch (head) {
    case Head::binary: {
      const double s = lw.w[y[0]];
      const double p = sigmoid(z[0]);
      dz[0] = s * (p - double(y[0]));
      return s * (y[0] ? softplus(-z[0]) : softplus(z[0]));
    }
    case Head::multiclass: {
      const auto p = softmax(z);
      const auto target =
          static_cast<std::size_t>(std::find(y.begin(), y.end(), 1) - y.begin());
      const double s = lw.w[target];
      const double mx = *std::max_element(z.begin(), z.end());
      double lse = 0.0;
      for (double v : z) lse += std::exp(v - mx);
      lse = mx + std::log(lse);
      for (std::size_t c = 0; c < z.size(); ++c) dz[c] = s * (p[c] - (c == target ? 1.0 : 0.0));
      return s * (lse - z[target]);
    }
    case Head::multilabel: {
      double loss = 0.0;
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double p = sigmoid(z[c]);
        if (y[c]) {
          dz[c] = lw.w[c] * (p - 1.0);
          loss += lw.w[c] * softplus(-z[c]);
        } else {
          dz[c] = p;
          loss += softplus(z[c]);
        }
      }
      return loss;
    }
  }
  return 0.0;
}

/// Mean example loss plus (l2/2)||W||^2; the bias is not regularised.
inline double objective(const LinearModel& model, std::span<const Example> batch,
                        const LossWeights& lw, double l2) {
  std::vector<double> dz(model.num_classes());
  double loss = 0.0;
  for (const auto& e : batch) loss += example_loss(model.head(), model.logits(e.x), e.y, lw, dz);
  loss /= double(batch.size());
  double sq = 0.0;
  for (double w : model.weights()) sq += w * w;
  return loss + 0.5 * l2 * sq;
}

/// Dense gradient of `objective`: weights (classes x dim) followed by bias.
inline std::vector<double> objective_gradient(const LinearModel& model,
                                              std::span<const Example> batch,
                                              const LossWeights& lw, double l2) {
  const std::size_t C = model.num_classes();
  const std::uint64_t D = model.dim();
  std::vector<double> g(C * D + C, 0.0);
  std::vector<double> dz(C);
  const double inv = 1.0 / double(batch.size());
  for (const auto& e : batch) {
    example_loss(model.head(), model.logits(e.x), e.y, lw, dz);
    for (std::size_t c = 0; c < C; ++c) {
      for (const auto& [i, x] : e.x.entries()) g[c * D + i] += inv * dz[c] * x;
      g[C * D + c] += inv * dz[c];
    }
  }
  const auto w = model.weights();
  for (std::size_t k = 0; k < C * D; ++k) g[k] += l2 * w[k];
  return g;
}

// ---------------------------------------------------------------------------
// SGD

struct TrainStats {
  std::vector<double> epoch_loss;  // mean data loss per epoch, pre-update parameters
};

namespace detail {

// W = scale * v, so the L2 shrink of every step is O(1).
class ScaledWeights {
 public:
  explicit ScaledWeights(std::span<const double> w) : v_(w.begin(), w.end()) {}

  double dot(const SparseVector& x, std::size_t offset) const {
    double s = 0.0;
    for (const auto& [i, xi] : x.entries()) s += v_[offset + i] * xi;
    return s * scale_;
  }
  void shrink(double factor) {
    scale_ *= factor;
    if (scale_ < 1e-9) {
      for (auto& v : v_) v *= scale_;
      scale_ = 1.0;
    }
  }
  void add(std::size_t k, double delta) { v_[k] += delta / scale_; }
  void store(std::span<double> out) const {
    for (std::size_t k = 0; k < v_.size(); ++k) out[k] = scale_ * v_[k];
  }

 private:
  std::vector<double> v_;
  double scale_ = 1.0;
};

}  // namespace detail

/// Mini-batch SGD on pre-featurized examples, continuing from the model's
/// current parameters. Batches are a seeded permutation per epoch.
inline TrainStats sgd_fit(LinearModel& model, std::span<const Example> data,
                          const TrainConfig& cfg, const LossWeights& lw) {
  cfg.validate();
  TrainStats stats;
  if (cfg.epochs == 0 || data.empty()) return stats;
  const std::size_t C = model.num_classes();
  const std::uint64_t D = model.dim();
  detail::ScaledWeights w(model.weights());
  auto bias = model.bias();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(cfg.seed);

  std::vector<double> z(C), dz(C), dbias(C);
  struct Delta {
    std::size_t example;
    std::size_t cls;
    double dz;
  };
  std::vector<Delta> deltas;
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.linear_decay ? cfg.lr * double(cfg.epochs - epoch) / double(cfg.epochs) : cfg.lr;
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / double(end - start);
      deltas.clear();
      std::fill(dbias.begin(), dbias.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const Example& e = data[order[k]];
        for (std::size_t c = 0; c < C; ++c) z[c] = bias[c] + w.dot(e.x, c * D);
        epoch_loss += example_loss(model.head(), z, e.y, lw, dz);
        for (std::size_t c = 0; c < C; ++c) {
          if (dz[c] != 0.0) deltas.push_back({order[k], c, dz[c]});
          dbias[c] += dz[c];
        }
      }
      w.shrink(1.0 - lr * cfg.l2);
      for (const auto& d : deltas) {
        const double step = -lr * inv * d.dz;
        for (const auto& [i, x] : data[d.example].x.entries()) w.add(d.cls * D + i, step * x);
      }
      for (std::size_t c = 0; c < C; ++c) bias[c] -= lr * inv * dbias[c];
    }
    stats.epoch_loss.push_back(epoch_loss / double(data.size()));
  }
  w.store(model.weights());
  if (!model.all_finite()) throw ModelError("training diverged to non-finite parameters");
  return stats;
}

/// Continues SGD from `model` on `corpus`. Labels must already be model classes.
inline LinearModel fine_tune(LinearModel model, const Corpus& corpus, const TrainConfig& cfg,
                             TrainStats* stats = nullptr) {
  cfg.validate();
  model.set_max_text_len(cfg.max_text_len);
  const auto data = make_examples(model, corpus);
  const auto lw = cfg.class_weighted ? class_weights(model.head(), model.num_classes(), data)
                                     : LossWeights::uniform(model.head(), model.num_classes());
  auto s = sgd_fit(model, data, cfg, lw);
  if (stats) *stats = std::move(s);
  return model;
}

inline LinearModel train(const Corpus& corpus, Head head, const TrainConfig& cfg,
                         const FeaturizerConfig& featurizer = {}, TrainStats* stats = nullptr) {
  if (corpus.empty()) throw ModelError("cannot train on an empty corpus");
  auto zero = LinearModel::zeros(head, discover_classes(corpus, head), featurizer,
                                 cfg.max_text_len);
  return fine_tune(std::move(zero), corpus, cfg, stats);
}

// ---------------------------------------------------------------------------
// Serialization: "SDLM", u32 version, then little-endian fields.

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::is_same_v<T, double>) {
      put(std::bit_cast<std::uint64_t>(v));
    } else {
      for (std::size_t b = 0; b < sizeof(T); ++b) {
        buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xFF));
      }
    }
  }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void put_raw(std::string_view s) { buf_.append(s); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(get<std::uint64_t>());
    } else {
      need(sizeof(T));
      std::uint64_t v = 0;
      for (std::size_t b = 0; b < sizeof(T); ++b) {
        v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
      }
      pos_ += sizeof(T);
      return static_cast<T>(v);
    }
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view get_raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ModelError("model file truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_model(const LinearModel& m) {
  detail::ByteWriter w;
  w.put_raw("SDLM");
  w.put(kModelFormatVersion);
  w.put(static_cast<std::uint8_t>(m.head()));
  w.put(static_cast<std::uint32_t>(m.num_classes()));
  for (const auto& c : m.classes()) w.put_string(c);
  const auto& f = m.featurizer();
  w.put(f.dim);
  w.put(f.ngram_min);
  w.put(f.ngram_max);
  w.put(static_cast<std::uint8_t>(f.signed_hashing));
  w.put(static_cast<std::uint8_t>(f.normalize));
  w.put(m.max_text_len());
  w.put(static_cast<std::uint32_t>(m.num_classes()));
  w.put(m.dim());
  for (double v : m.weights()) w.put(v);
  for (double v : m.bias()) w.put(v);
  return w.bytes();
}

/// Parses a model image. When `expected` is given, its featurizer settings
/// must match the stored ones.
inline LinearModel deserialize_model(std::string_view bytes,
                                     const FeaturizerConfig* expected = nullptr) {
  detail::ByteReader r(bytes);
  if (r.get_raw(4) != "SDLM") throw ModelError("bad model magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw ModelError("unsupported model format version " + std::to_string(version));
  }
  const auto head_raw = r.get<std::uint8_t>();
  if (head_raw > 2) throw ModelError("bad head kind");
  const auto n_classes = r.get<std::uint32_t>();
  std::vector<std::string> classes;
  for (std::uint32_t i = 0; i < n_classes; ++i) classes.push_back(r.get_string());
  FeaturizerConfig f;
  f.dim = r.get<std::uint64_t>();
  f.ngram_min = r.get<std::uint32_t>();
  f.ngram_max = r.get<std::uint32_t>();
  f.signed_hashing = r.get<std::uint8_t>() != 0;
  const auto norm = r.get<std::uint8_t>();
  if (norm > 1) throw ModelError("bad normalization kind");
  f.normalize = static_cast<Normalization>(norm);
  const auto max_len = r.get<std::uint32_t>();
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint64_t>();
  if (rows != n_classes) throw ModelError("weight rows do not match class count");
  if (cols != f.dim) throw ModelError("weight columns do not match featurizer dim");
  if (expected && !(*expected == f)) throw ModelError("model featurizer config mismatch");
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw ModelError(e.what());
  }
  if (r.remaining() / 8 < std::uint64_t{rows} * cols + rows) throw ModelError("model file truncated");
  auto m = LinearModel::zeros(static_cast<Head>(head_raw), std::move(classes), f, max_len);
  for (auto& v : m.weights()) v = r.get<double>();
  for (auto& v : m.bias()) v = r.get<double>();
  if (!r.at_end()) throw ModelError("trailing bytes after model parameters");
  if (!m.all_finite()) throw ModelError("model contains non-finite parameters");
  return m;
}

inline void save_model(const std::string& path, const LinearModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write model file '" + path + "'");
  const auto bytes = serialize_model(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelError("failed writing model file '" + path + "'");
}

inline LinearModel load_model(const std::string& path, const FeaturizerConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes, expected);
}

}  // namespace spamdam
