#pragma once

// Hashed character n-gram features. Tokenizer-free, so the same code path
// handles every script and every control character.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spamdam/rng.hpp"
#include "spamdam/unicode.hpp"

namespace spamdam {

enum class Normalization : std::uint8_t { none = 0, l2 = 1 };

struct FeaturizerConfig {
  std::uint64_t dim = 1u << 18;
  std::uint32_t ngram_min = 1;
  std::uint32_t ngram_max = 3;
  bool signed_hashing = true;
  Normalization normalize = Normalization::l2;

  void validate() const {
    if (dim == 0 || (dim & (dim - 1)) != 0) {
      throw std::invalid_argument("featurizer dim must be a power of two");
    }
    if (dim > (std::uint64_t{1} << 32)) throw std::invalid_argument("featurizer dim too large");
    if (ngram_min < 1 || ngram_min > ngram_max || ngram_max > 5) {
      throw std::invalid_argument("need 1 <= ngram_min <= ngram_max <= 5");
    }
  }

  friend bool operator==(const FeaturizerConfig&, const FeaturizerConfig&) = default;
};

/// Sparse vector with sorted, unique, non-zero entries.
class SparseVector {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  SparseVector() = default;
  explicit SparseVector(std::uint64_t dim) : dim_(dim) {}

  /// Sums duplicate indices and drops zeros.
  static SparseVector from_unsorted(std::uint64_t dim, std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    SparseVector v(dim);
    for (const auto& [i, x] : entries) {
      if (i >= dim) throw std::out_of_range("sparse index out of range");
      if (!v.entries_.empty() && v.entries_.back().first == i) {
        v.entries_.back().second += x;
      } else {
        v.entries_.emplace_back(i, x);
      }
    }
    std::erase_if(v.entries_, [](const Entry& e) { return e.second == 0.0; });
    return v;
  }

  std::uint64_t dim() const { return dim_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }

  double at(std::uint32_t i) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), i,
                               [](const Entry& e, std::uint32_t k) { return e.first < k; });
    return it != entries_.end() && it->first == i ? it->second : 0.0;
  }

  double norm() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.second * e.second;
    return std::sqrt(s);
  }

  void scale(double f) {
    for (auto& e : entries_) e.second *= f;
  }

  double dot(const double* dense) const {
    double s = 0.0;
    for (const auto& [i, x] : entries_) s += dense[i] * x;
    return s;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::uint64_t dim_ = 0;
  std::vector<Entry> entries_;
};

/// 64-bit hash of a code point n-gram (FNV-1a over little-endian UTF-32).
inline std::uint64_t ngram_hash(std::u32string_view gram) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char32_t cp : gram) {
    for (int b = 0; b < 4; ++b) {
      h ^= (static_cast<std::uint32_t>(cp) >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

struct HashedSlot {
  std::uint32_t index;
  double sign;
};

inline HashedSlot hash_slot(std::u32string_view gram, const FeaturizerConfig& cfg) {
  const auto h = ngram_hash(gram);
  const auto index = static_cast<std::uint32_t>(h & (cfg.dim - 1));
  const double sign = !cfg.signed_hashing || (splitmix64(h) >> 63) == 0 ? 1.0 : -1.0;
  return {index, sign};
}

inline SparseVector featurize(std::u32string_view text, const FeaturizerConfig& cfg) {
  std::vector<SparseVector::Entry> raw;
  const std::size_t len = text.size();
  for (std::size_t n = cfg.ngram_min; n <= cfg.ngram_max && n <= len; ++n) {
    for (std::size_t i = 0; i + n <= len; ++i) {
      const auto slot = hash_slot(text.substr(i, n), cfg);
      raw.emplace_back(slot.index, slot.sign);
    }
  }
  auto v = SparseVector::from_unsorted(cfg.dim, std::move(raw));
  if (cfg.normalize == Normalization::l2) {
    const double n = v.norm();
    if (n > 0.0) v.scale(1.0 / n);
  }
  return v;
}

inline SparseVector featurize(std::string_view utf8, const FeaturizerConfig& cfg) {
  return featurize(std::u32string_view(unicode::decode(utf8)), cfg);
}

}  // namespace spamdam
