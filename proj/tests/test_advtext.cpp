#include <gtest/gtest.h>

#include <random>

#include "spamdam/advtext.hpp"
#include "spamdam/synth.hpp"
#include "support.hpp"

using namespace spamdam;
using namespace spamdam::adv;

namespace {

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PerturbationPlan random_plan(std::u32string_view text, std::mt19937_64& rng, const ConfusableMap& map) {
  const Kind kind = kAllKinds[rng() % 4];
  const std::size_t budget = 1 + rng() % 5;
  std::vector<double> genome(2 * budget);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& g : genome) g = u(rng);
  return decode_genome(text, kind, genome, map, nullptr);
}

std::u32string random_text(std::mt19937_64& rng) {
  static const std::u32string pool = U"abcdeopxyzABCEHOPST 0123!?.\u4E2D\u0440";
  std::u32string s;
  const std::size_t n = rng() % 25;
  for (std::size_t i = 0; i < n; ++i) s.push_back(pool[rng() % pool.size()]);
  return s;
}

// Unigram-only, unnormalised featurizer so slot contributions are additive.
FeaturizerConfig unigram() {
  FeaturizerConfig f;
  f.dim = 1 << 16;
  f.ngram_min = 1;
  f.ngram_max = 1;
  f.normalize = Normalization::none;
  f.signed_hashing = false;
  return f;
}

}  // namespace

TEST(Confusables, ShippedFileMatchesBuiltin) {
  const auto file = ConfusableMap::load(std::string(SPAMDAM_DATA_DIR) + "/confusables.tsv");
  const auto& builtin = ConfusableMap::builtin();
  EXPECT_EQ(file.size(), builtin.size());
  for (char32_t c = 0x20; c < 0x7F; ++c) EXPECT_EQ(file.variants(c), builtin.variants(c));
  EXPECT_EQ(builtin.canonical(0x0440), U'p');
}

TEST(Confusables, ParseErrors) {
  EXPECT_THROW(ConfusableMap::parse("a b\n"), AttackError);
  EXPECT_THROW(ConfusableMap::parse("ab\t\xD1\x80\n"), AttackError);
  EXPECT_THROW(ConfusableMap::parse("p\t\xD1\x80\nq\t\xD1\x80\n"), AttackError);
  EXPECT_EQ(ConfusableMap::parse("# comment\n\np\t\xD1\x80\n").size(), 1u);
}

TEST(ApplyPlan, EmptyPlanIsIdentity) {
  EXPECT_EQ(apply_plan(std::string_view("hello"), PerturbationPlan{Kind::deletion, {}, 3}), "hello");
}

TEST(ApplyPlan, HomoglyphPaypal) {
  const auto out = apply_plan(std::u32string(U"paypal"), PerturbationPlan{Kind::homoglyph, {{0, 0}}, 1});
  EXPECT_EQ(out[0], char32_t(0x0440));
  EXPECT_NE(out, U"paypal");
  EXPECT_EQ(visual_normalize(std::u32string_view(out)), U"paypal");
}

TEST(ApplyPlan, DeletionWithDecoy) {
  const std::size_t x = U'X' - kDecoyFirst;
  EXPECT_EQ(apply_plan(std::u32string(U"ab"), PerturbationPlan{Kind::deletion, {{1, x}}, 1}), U"aX\u0008b");
}

TEST(ApplyPlan, InvisibleAndReorder) {
  EXPECT_EQ(apply_plan(std::u32string(U"ab"), PerturbationPlan{Kind::invisible, {{2, 0}}, 1}), U"ab\u200B");
  EXPECT_EQ(apply_plan(std::u32string(U"abc"), PerturbationPlan{Kind::reorder, {{1, 0}}, 1}),
            U"a\u202Ecb\u202C");
}

TEST(ApplyPlan, Errors) {
  EXPECT_THROW(apply_plan(std::u32string(U"ab"), PerturbationPlan{Kind::deletion, {{3, 0}}, 1}), AttackError);
  EXPECT_THROW(apply_plan(std::u32string(U"ab"), PerturbationPlan{Kind::deletion, {{0, kDecoyCount}}, 1}), AttackError);
  EXPECT_THROW(apply_plan(std::u32string(U"ab"), PerturbationPlan{Kind::deletion, {{0, 0}, {0, 0}}, 1}), AttackError);
  EXPECT_THROW(apply_plan(std::u32string(U"a"), PerturbationPlan{Kind::reorder, {{0, 0}}, 1}), AttackError);
}

TEST(Normalize, Basics) {
  EXPECT_EQ(visual_normalize(std::string_view("plain text 123")), "plain text 123");
  EXPECT_EQ(visual_normalize(std::u32string_view(U"aX\u0008b")), U"ab");
  EXPECT_EQ(visual_normalize(std::u32string_view(U"\u202Eba\u202C")), U"ab");
  EXPECT_EQ(visual_normalize(std::u32string_view(U"a\u200Db")), U"ab");
}

TEST(Normalize, RoundTripOverRandomPlans) {
  std::mt19937_64 rng(2024);
  const auto& map = ConfusableMap::builtin();
  for (int i = 0; i < 3000; ++i) {
    const auto t = random_text(rng);
    const auto plan = random_plan(t, rng, map);
    const auto p = apply_plan(t, plan, map);
    ASSERT_EQ(visual_normalize(std::u32string_view(p)), visual_normalize(std::u32string_view(t)))
        << "kind " << to_string(plan.kind) << " case " << i;
  }
}

TEST(Plans, EditDistanceBudget) {
  std::mt19937_64 rng(7);
  const auto& map = ConfusableMap::builtin();
  for (int i = 0; i < 2000; ++i) {
    const auto t = random_text(rng);
    const auto plan = random_plan(t, rng, map);
    const auto p = apply_plan(t, plan, map);
    const std::size_t per_edit = plan.kind == Kind::reorder ? 3 : 2;
    EXPECT_LE(levenshtein(t, p), per_edit * plan.budget);
  }
}

TEST(Attack, RobustModelNeverSucceeds) {
  auto model = LinearModel::zeros(Head::binary, {"spam"}, unigram());
  const auto f = model.featurizer();
  model.bias()[0] = -1.0;
  model.row(0)[hash_slot(U"\u4E2D", f).index] = 3.0;
  model.row(0)[hash_slot(U"\u5956", f).index] = 3.0;
  // Zero every slot a perturbation can add.
  for (char32_t c = kDecoyFirst; c <= kDecoyLast; ++c) model.row(0)[hash_slot(std::u32string(1, c), f).index] = 0.0;
  for (char32_t c : {char32_t(0x0008), char32_t(0x202E), char32_t(0x202C), char32_t(0x200B), char32_t(0x200C),
                     char32_t(0x200D), char32_t(0x2060)}) {
    model.row(0)[hash_slot(std::u32string(1, c), f).index] = 0.0;
  }
  const std::string text = "\xE4\xB8\xAD\xE5\xA5\x96 \xE4\xB8\xAD";
  ASSERT_TRUE(predicts_spam(model, text));
  for (Kind k : kAllKinds) {
    for (std::size_t b = 1; b <= 5; ++b) {
      EXPECT_FALSE(de_attack(model, text, AttackConfig{k, b, {}, 3}).success) << to_string(k) << b;
    }
  }
  const Corpus c("c", {testing_support::spam("1", text)});
  const auto rep = batch_attack(model, c, kAllKinds, 5, {}, 1);
  for (const auto& [kind, r] : rep.kinds) {
    for (double a : r.asr) EXPECT_EQ(a, 0.0) << kind;
  }
}

TEST(Attack, RiggedDeletionMatchesExhaustiveSearch) {
  FeaturizerConfig f;
  f.dim = 1 << 20;
  f.normalize = Normalization::none;
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::u32string text;
    for (int i = 0; i < 4 + trial % 7; ++i) text.push_back(U'a' + char32_t(rng() % 26));
    auto model = LinearModel::zeros(Head::binary, {"spam"}, f);
    model.bias()[0] = 2.0;
    // Every n-gram containing a backspace, over every (position, decoy) pair.
    bool exhaustive = false;
    std::vector<std::u32string> candidates;
    for (std::size_t pos = 0; pos <= text.size(); ++pos) {
      for (std::size_t d = 0; d < kDecoyCount; ++d) {
        auto t = text;
        apply_edit(t, Kind::deletion, {pos, d}, ConfusableMap::builtin());
        candidates.push_back(t);
        for (std::size_t n = 1; n <= f.ngram_max; ++n) {
          for (std::size_t i = 0; i + n <= t.size(); ++i) {
            const auto g = std::u32string_view(t).substr(i, n);
            if (g.find(char32_t(0x0008)) == std::u32string_view::npos) continue;
            const auto s = hash_slot(g, f);
            model.row(0)[s.index] = -100.0 * s.sign;
          }
        }
      }
    }
    const auto original_score = spam_probability(model, unicode::encode(text));
    ASSERT_GT(original_score, 0.5);
    for (const auto& t : candidates) exhaustive = exhaustive || !predicts_spam(model, unicode::encode(t));
    const auto r = de_attack(model, unicode::encode(text), AttackConfig{Kind::deletion, 1, {}, std::uint64_t(trial)});
    EXPECT_EQ(r.success, exhaustive);
    EXPECT_EQ(r.edits_used, 1u);
    EXPECT_EQ(visual_normalize(r.adversarial_text), visual_normalize(unicode::encode(text)));
  }
}

TEST(Attack, BudgetMonotoneAndDeterministic) {
  synth::DeskOptions o;
  o.n = 800;
  const auto desk = synth::make_desk_corpus(o);
  TrainConfig tc;
  FeaturizerConfig f;
  f.dim = 1 << 16;
  const auto model = train(desk, Head::binary, tc, f);
  std::size_t checked = 0;
  for (const auto& m : desk) {
    if (!m.is_spam() || !predicts_spam(model, m.text)) continue;
    if (++checked > 25) break;
    for (Kind k : {Kind::deletion, Kind::homoglyph}) {
      const auto one = de_attack(model, m.text, {k, 1, {}, 5});
      const auto five = de_attack(model, m.text, {k, 5, {}, 5});
      if (one.success) {
        EXPECT_TRUE(five.success);
        EXPECT_EQ(five.adversarial_text, one.adversarial_text);
      }
      const auto again = de_attack(model, m.text, {k, 5, {}, 5});
      EXPECT_EQ(again.adversarial_text, five.adversarial_text);
      EXPECT_EQ(again.queries, five.queries);
      if (five.success) {
        EXPECT_FALSE(predicts_spam(model, five.adversarial_text));
        EXPECT_EQ(visual_normalize(five.adversarial_text), visual_normalize(m.text));
      }
    }
  }
  const auto spam_only = desk.filter([](const Message& m) { return m.is_spam(); });
  const Corpus first(spam_only.name(), {spam_only.messages().begin(), spam_only.messages().begin() + 30});
  const auto rep = batch_attack(model, first, kAllKinds, 5, {}, 11);
  for (const auto& [kind, r] : rep.kinds) {
    for (std::size_t b = 1; b < r.asr.size(); ++b) EXPECT_LE(r.asr[b - 1], r.asr[b]) << kind;
  }
  EXPECT_EQ(rep.attempted + rep.excluded, 30u);
}

TEST(Attack, ContractErrors) {
  const auto model = LinearModel::zeros(Head::binary, {"spam"}, unigram());
  EXPECT_THROW(de_attack(model, "x", {Kind::deletion, 1, {}, 0}), AttackError);  // not spam
  EXPECT_THROW(de_attack(model, "x", {Kind::deletion, 0, {}, 0}), AttackError);
  EXPECT_THROW(batch_attack(model, Corpus(), kAllKinds, 0, {}, 0), AttackError);
  const auto mc = LinearModel::zeros(Head::multiclass, {"a", "b"}, unigram());
  EXPECT_THROW(de_attack(mc, "x", {Kind::deletion, 1, {}, 0}), AttackError);
}

TEST(Generation, RobustModelGivesNothing) {
  auto model = LinearModel::zeros(Head::binary, {"spam"}, unigram());
  model.bias()[0] = 5.0;
  std::vector<Message> v;
  for (int i = 0; i < 40; ++i) v.push_back(testing_support::spam("s" + std::to_string(i), "win cash"));
  const auto out = generate_adversarial_training_set(model, Corpus("s", v), {}, {});
  EXPECT_TRUE(out.empty());
}

TEST(Generation, CountingBoundAndLabels) {
  synth::DeskOptions o;
  o.n = 1200;
  o.seed = 3;
  const auto desk = synth::make_desk_corpus(o);
  FeaturizerConfig f;
  f.dim = 1 << 16;
  const auto model = train(desk, Head::binary, TrainConfig{}, f);
  const auto spam_c = desk.filter([](const Message& m) { return m.is_spam(); });
  AdvTrainingOptions opt;
  opt.sample_fraction = 0.2;
  const auto out = generate_adversarial_training_set(model, spam_c, opt, {});
  EXPECT_LE(out.size(), 3 * std::size_t(std::llround(0.2 * double(spam_c.size()))));
  for (const auto& m : out) {
    EXPECT_TRUE(m.is_spam());
    EXPECT_EQ(m.source, "adversarial");
    EXPECT_FALSE(predicts_spam(model, m.text));
    EXPECT_NE(m.id.find("#adv-"), std::string::npos);
    EXPECT_EQ(m.id.find("#adv-invisible"), std::string::npos);
  }
  EXPECT_THROW(generate_adversarial_training_set(model, spam_c, opt, {spam_c[0].id}), AttackError);
}
