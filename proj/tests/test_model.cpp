#include <gtest/gtest.h>

#include <numeric>

#include "gradcheck.hpp"
#include "spamdam/model.hpp"
#include "support.hpp"

using namespace spamdam;
using testing_support::ham;
using testing_support::msg;
using testing_support::spam;
using testing_support::TempDir;

namespace {

FeaturizerConfig small() {
  FeaturizerConfig f;
  f.dim = 1 << 12;
  return f;
}

Corpus four_points() {
  return Corpus("four", {spam("s1", "xxxx"), spam("s2", "xxyy"), ham("h1", "aaaa"), ham("h2", "aabb")});
}

Corpus balanced(std::size_t n) {
  std::vector<Message> v;
  for (std::size_t i = 0; i < n; ++i) {
    v.push_back(i % 2 ? spam("s" + std::to_string(i), "win cash prize " + std::to_string(i))
                      : ham("h" + std::to_string(i), "see you at lunch " + std::to_string(i)));
  }
  return Corpus("bal", std::move(v));
}

bool all_zero(const LinearModel& m) {
  return std::all_of(m.weights().begin(), m.weights().end(), [](double v) { return v == 0.0; }) &&
         std::all_of(m.bias().begin(), m.bias().end(), [](double v) { return v == 0.0; });
}

}  // namespace

TEST(Train, ZeroEpochsIsZeroModel) {
  TrainConfig tc;
  tc.epochs = 0;
  const auto m = train(four_points(), Head::binary, tc, small());
  EXPECT_TRUE(all_zero(m));
  EXPECT_EQ(m.classes(), std::vector<std::string>{"spam"});
}

TEST(Train, FourPointSeparable) {
  const auto c = four_points();
  const auto f = small();
  // Separability witness: positive and negative supports are disjoint, so the
  // sum of positive vectors minus the sum of negative vectors separates them.
  auto zero = LinearModel::zeros(Head::binary, {"spam"}, f);
  std::vector<double> w(f.dim, 0.0);
  for (const auto& m : c) {
    const auto v = zero.features(m.text);
    for (const auto& [i, x] : v.entries()) w[i] += (m.is_spam() ? 1.0 : -1.0) * x;
  }
  for (const auto& m : c) {
    const double s = zero.features(m.text).dot(w.data());
    EXPECT_EQ(s > 0, m.is_spam()) << m.id;
  }
  TrainConfig tc;
  tc.epochs = 100;
  tc.batch_size = 2;
  const auto model = train(c, Head::binary, tc, f);
  for (const auto& m : c) EXPECT_EQ(predicts_spam(model, m.text), m.is_spam()) << m.id;
}

TEST(Train, BalancedWeightedEqualsUnweighted) {
  const auto c = balanced(40);
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 9;
  const auto plain = train(c, Head::binary, tc, small());
  tc.class_weighted = true;
  const auto weighted = train(c, Head::binary, tc, small());
  EXPECT_EQ(plain, weighted);
}

TEST(Train, Deterministic) {
  const auto c = balanced(30);
  TrainConfig tc;
  tc.seed = 4;
  EXPECT_EQ(train(c, Head::binary, tc, small()), train(c, Head::binary, tc, small()));
  auto tc2 = tc;
  tc2.seed = 5;
  EXPECT_NE(train(c, Head::binary, tc, small()), train(c, Head::binary, tc2, small()));
}

TEST(Train, ConfigErrors) {
  TrainConfig tc;
  tc.lr = 0;
  EXPECT_THROW(train(balanced(4), Head::binary, tc, small()), std::invalid_argument);
  EXPECT_THROW(train(Corpus(), Head::binary, TrainConfig{}, small()), ModelError);
  const Corpus multi("m", {msg("a", "x", {"lottery", "phishing"})});
  EXPECT_THROW(train(multi, Head::binary, TrainConfig{}, small()), ModelError);
  EXPECT_THROW(train(multi, Head::multiclass, TrainConfig{}, small()), ModelError);
}

TEST(FineTune, FromZeroEqualsTrain) {
  const auto c = balanced(30);
  TrainConfig tc;
  tc.seed = 2;
  const auto zero = LinearModel::zeros(Head::binary, {"spam"}, small(), tc.max_text_len);
  EXPECT_EQ(fine_tune(zero, c, tc), train(c, Head::binary, tc, small()));
}

TEST(FineTune, ZeroEpochsKeepsModel) {
  const auto c = balanced(30);
  TrainConfig tc;
  const auto m = train(c, Head::binary, tc, small());
  tc.epochs = 0;
  EXPECT_EQ(fine_tune(m, c, tc), m);
}

TEST(FineTune, ConflictingPipelineDiffers) {
  const Corpus a("a", {spam("a1", "meet at noon"), ham("a2", "claim your prize")});
  const Corpus b("b", {ham("b1", "meet at noon"), spam("b2", "claim your prize")});
  TrainConfig tc;
  tc.epochs = 10;
  const auto ab = fine_tune(train(a, Head::binary, tc, small()), b, tc);
  const auto only_b = train(b, Head::binary, tc, small());
  EXPECT_FALSE(ab == only_b);
}

TEST(Predict, ZeroModelIsHalf) {
  const auto m = LinearModel::zeros(Head::binary, {"spam"}, small());
  for (const char* t : {"", "anything", "\xE4\xB8\xAD"}) {
    EXPECT_EQ(predict(m, t).scores[0], 0.5);
    EXPECT_EQ(predict(m, t).labels, std::vector<std::string>{"non-spam"});
  }
}

TEST(Predict, MulticlassSumsToOne) {
  auto m = LinearModel::zeros(Head::multiclass, {"a", "b", "c"}, small());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0, 3);
  for (auto& w : m.weights()) w = nd(rng);
  for (const char* t : {"hello", "xyz", "win now"}) {
    const auto p = predict(m, t);
    EXPECT_NEAR(std::accumulate(p.scores.begin(), p.scores.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(p.labels.size(), 1u);
  }
}

TEST(Predict, HandBuiltFeature) {
  FeaturizerConfig f = small();
  f.ngram_min = 3;
  f.ngram_max = 3;
  f.normalize = Normalization::none;
  f.signed_hashing = false;
  auto m = LinearModel::zeros(Head::binary, {"spam"}, f);
  const auto slot = hash_slot(U"win", f);
  m.row(0)[slot.index] = 10.0;
  EXPECT_GT(spam_probability(m, "you win"), 0.99);
  EXPECT_NEAR(spam_probability(m, "you win"), 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
}

TEST(Predict, ThresholdIsStrict) {
  const auto m = LinearModel::zeros(Head::multilabel, {"a", "b"}, small());
  EXPECT_TRUE(predict(m, "x").labels.empty());
  EXPECT_EQ(predict(m, "x", 0.49).labels.size(), 2u);
}

TEST(Persist, RoundTrip) {
  TempDir dir("model");
  TrainConfig tc;
  tc.max_text_len = 33;
  const auto m = train(balanced(20), Head::binary, tc, small());
  save_model(dir.file("m.sdlm"), m);
  const auto back = load_model(dir.file("m.sdlm"));
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.max_text_len(), 33u);
  const auto mc = train(Corpus("t", {msg("1", "a", {"x"}), msg("2", "b", {"y"})}), Head::multiclass, tc, small());
  EXPECT_EQ(deserialize_model(serialize_model(mc)), mc);
}

TEST(Persist, CorruptionIsDetected) {
  const auto m = LinearModel::zeros(Head::binary, {"spam"}, small());
  auto bytes = serialize_model(m);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_model(bad), ModelError);
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 3)), ModelError);
  EXPECT_THROW(deserialize_model(bytes + "x"), ModelError);
  FeaturizerConfig other = small();
  other.dim = 1 << 10;
  EXPECT_THROW(deserialize_model(bytes, &other), ModelError);
  const auto good = small();
  EXPECT_NO_THROW(deserialize_model(bytes, &good));
  EXPECT_THROW(load_model("/nonexistent/m.sdlm"), ModelError);
}

TEST(Gradient, MatchesCentralDifferences) {
  for (auto head : {Head::binary, Head::multiclass, Head::multilabel}) {
    const auto r = testing_support::gradient_check(head, 50, 100 + std::uint64_t(head));
    EXPECT_EQ(r.instances, 50u);
    EXPECT_LE(r.max_rel_error, 1e-4) << to_string(head);
  }
}

TEST(ClassWeights, InverseFrequency) {
  std::vector<Example> data;
  for (int i = 0; i < 4; ++i) data.push_back({SparseVector(4), {std::uint8_t(i == 0)}});
  const auto lw = class_weights(Head::binary, 1, data);
  // counts: non-spam 3, spam 1 -> raw 4/6, 2; mean 4/3.
  EXPECT_NEAR(lw.w[0], 0.5, 1e-15);
  EXPECT_NEAR(lw.w[1], 1.5, 1e-15);
}
