#include <gtest/gtest.h>

#include <map>
#include <random>

#include "spamdam/features.hpp"

using namespace spamdam;

namespace {

// Independent reference: FNV-1a 64 over the little-endian UTF-32 bytes.
std::uint64_t ref_hash(std::u32string_view g) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char32_t c : g) {
    const std::uint32_t v = c;
    const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

// Unnormalised counts by enumerating n-grams by hand.
std::map<std::uint32_t, double> ref_counts(std::u32string_view t, const FeaturizerConfig& cfg) {
  std::map<std::uint32_t, double> out;
  for (std::size_t n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      const auto h = ref_hash(t.substr(i, n));
      const double sign = cfg.signed_hashing ? ((splitmix64(h) >> 63) ? -1.0 : 1.0) : 1.0;
      out[static_cast<std::uint32_t>(h % cfg.dim)] += sign;
    }
  }
  std::erase_if(out, [](const auto& kv) { return kv.second == 0.0; });
  return out;
}

std::u32string random_text(std::mt19937_64& rng, std::size_t len) {
  static const char32_t alphabet[] = {U'a', U'b', U'c', U'd', U' ', 0x200B, 0x0440, 0x4E2D, U'!'};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(alphabet) - 1);
  std::u32string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[pick(rng)]);
  return s;
}

}  // namespace

TEST(Featurize, EmptyIsZero) {
  const auto v = featurize(std::string_view(""), FeaturizerConfig{});
  EXPECT_EQ(v.nnz(), 0u);
  EXPECT_EQ(v.norm(), 0.0);
}

TEST(Featurize, Deterministic) {
  FeaturizerConfig cfg;
  EXPECT_EQ(featurize(std::string_view("win a prize now"), cfg), featurize(std::string_view("win a prize now"), cfg));
}

TEST(Featurize, MatchesHandEnumeration) {
  FeaturizerConfig cfg;
  cfg.dim = 1 << 10;
  cfg.normalize = Normalization::none;
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    const auto t = random_text(rng, k % 13);
    const auto v = featurize(std::u32string_view(t), cfg);
    const auto ref = ref_counts(t, cfg);
    ASSERT_EQ(v.nnz(), ref.size());
    for (const auto& [i, x] : v.entries()) EXPECT_EQ(x, ref.at(i));
  }
}

TEST(Featurize, BigramOrderMatters) {
  FeaturizerConfig cfg;
  cfg.ngram_min = 2;
  cfg.ngram_max = 2;
  cfg.normalize = Normalization::none;
  const auto ab = featurize(std::string_view("ab"), cfg);
  const auto ba = featurize(std::string_view("ba"), cfg);
  ASSERT_EQ(ab.nnz(), 1u);
  ASSERT_EQ(ba.nnz(), 1u);
  EXPECT_EQ(ab.entries()[0].first, ref_hash(U"ab") % cfg.dim);
  EXPECT_EQ(ba.entries()[0].first, ref_hash(U"ba") % cfg.dim);
  EXPECT_NE(ab, ba);
}

TEST(Featurize, ControlCharactersAreKept) {
  FeaturizerConfig cfg;
  const std::u32string plain = U"free prize";
  std::u32string zw = plain;
  zw.insert(4, 1, char32_t(0x200B));
  EXPECT_NE(featurize(std::u32string_view(plain), cfg), featurize(std::u32string_view(zw), cfg));
}

TEST(Featurize, UnitNormUnderL2) {
  FeaturizerConfig cfg;
  std::mt19937_64 rng(11);
  for (int k = 1; k < 200; ++k) {
    const auto t = random_text(rng, 1 + k % 40);
    EXPECT_NEAR(featurize(std::u32string_view(t), cfg).norm(), 1.0, 1e-9);
  }
}

TEST(Featurize, PermutationChangesHigherOrderGrams) {
  FeaturizerConfig cfg;
  cfg.ngram_min = 2;
  std::mt19937_64 rng(17);
  int changed = 0, tried = 0;
  for (int k = 0; k < 200; ++k) {
    auto t = random_text(rng, 6);
    auto p = t;
    std::shuffle(p.begin(), p.end(), rng);
    if (p == t) continue;
    ++tried;
    changed += featurize(std::u32string_view(t), cfg) != featurize(std::u32string_view(p), cfg);
  }
  EXPECT_EQ(changed, tried);
}

TEST(Featurize, EditLocalityBound) {
  FeaturizerConfig cfg;
  cfg.normalize = Normalization::none;
  std::mt19937_64 rng(23);
  const std::size_t nmax = cfg.ngram_max;
  for (int trial = 0; trial < 200; ++trial) {
    auto t = random_text(rng, 30);
    auto e = t;
    const std::size_t k = 1 + trial % 3;
    for (std::size_t j = 0; j < k; ++j) e[(trial * 7 + j * 11) % e.size()] = U'z';
    const auto a = featurize(std::u32string_view(t), cfg);
    const auto b = featurize(std::u32string_view(e), cfg);
    std::size_t diff = 0;
    std::map<std::uint32_t, std::pair<double, double>> both;
    for (const auto& [i, x] : a.entries()) both[i].first = x;
    for (const auto& [i, x] : b.entries()) both[i].second = x;
    for (const auto& [i, p] : both) diff += p.first != p.second;
    EXPECT_LE(diff, k * nmax * (nmax + 1) / 2 * 2);
  }
}

TEST(Config, Validation) {
  FeaturizerConfig cfg;
  cfg.dim = 1000;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.dim = 1024;
  cfg.ngram_min = 3;
  cfg.ngram_max = 2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
