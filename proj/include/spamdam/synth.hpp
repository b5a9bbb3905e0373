#pragma once

// Seeded synthetic corpora: a desk-scale SMS corpus, a benign "tweet" pool,
// a trivially separable corpus, a drifting corpus whose spam vocabulary
// rotates by year, and a topic corpus for the multi-class/label heads.

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spamdam/corpus.hpp"
#include "spamdam/rng.hpp"

namespace spamdam::synth {

namespace words {

inline constexpr std::string_view kHam[] = {
    "hey",     "are",    "you",     "coming",  "tonight", "lunch",   "call",    "me",
    "later",   "love",   "home",    "work",    "see",     "thanks",  "ok",      "sure",
    "dinner",  "meet",   "tomorrow", "sorry",  "late",    "bus",     "movie",   "game",
    "mum",     "dad",    "weekend", "class",   "exam",    "friend",  "soon",    "going",
    "just",    "got",    "back",    "what",    "time",    "where",   "how",     "was",
    "your",    "day",    "good",    "night",   "morning", "we",      "should",  "maybe",
    "coffee",  "train",  "leaving", "now",     "text",    "when",    "done",    "lol",
    "haha",    "yeah",   "need",    "pick",    "up",      "bring",   "keys",    "shop",
    "milk",    "bread",  "party",   "birthday", "cake",   "gym",     "run",     "walk",
    "park",    "kids",   "school",  "meeting", "office",  "boss",    "email",   "sent",
    "photos",  "trip",   "flight",  "hotel",   "beach",   "rain",    "cold",    "warm",
    "tired",   "sleep",  "early",   "film",    "book",    "read",    "cook",    "pizza",
};

inline constexpr std::string_view kSpam[] = {
    "free",     "win",      "prize",     "claim",    "cash",     "urgent",   "offer",
    "txt",      "reply",    "stop",      "award",    "guaranteed", "voucher", "bonus",
    "account",  "verify",   "click",     "link",     "mobile",   "ringtone", "entry",
    "selected", "winner",   "congratulations", "tone", "unsubscribe", "rate", "subscription",
    "delivery", "parcel",   "suspended", "refund",   "loan",     "credit",   "deal",
    "exclusive", "limited", "expires",   "code",     "reward",   "points",   "redeem",
    "lottery",  "jackpot",  "pounds",    "dollars",  "customer", "service",  "confirm",
};

inline constexpr std::string_view kTweet[] = {
    "just",    "watched", "the",     "best",    "movie",   "ever",    "today",   "love",
    "this",    "song",    "weekend", "vibes",   "coffee",  "first",   "morning", "game",
    "tonight", "friends", "so",      "happy",   "tired",   "work",    "again",   "rain",
    "cant",    "wait",    "trip",    "photos",  "beach",   "dinner",  "pizza",   "new",
    "book",    "reading", "team",    "won",     "lost",    "season",  "finally", "home",
    "sleep",   "early",   "late",    "city",    "walk",    "park",    "dog",     "cat",
    "music",   "live",    "show",    "fun",     "week",    "long",    "day",     "friday",
};

inline constexpr std::string_view kSeparableSpam[] = {
    "jackpot", "bonanza", "windfall", "sweepstake", "voucher", "rebate", "payout", "giveaway",
    "premium", "cashback", "lotto",   "freebie",    "credits", "promo",  "coupon", "reward",
};

inline constexpr std::string_view kSeparableHam[] = {
    "kitchen", "garden", "library", "sunset", "picnic",  "bicycle", "harbour", "meadow",
    "orchard", "violin", "pottery", "hiking", "village", "lantern", "pebble",  "willow",
};

inline constexpr std::string_view kSyllables[] = {
    "ka", "zo", "ri", "vex", "lu", "mor", "tan", "qui", "bel", "dra", "fen", "gos",
    "hul", "jax", "nim", "pry", "sek", "tro", "vul", "wyn", "yad", "zep", "cor", "dus",
};

}  // namespace words

namespace detail {

template <std::size_t N>
std::string_view pick(const std::string_view (&pool)[N], Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, N - 1);
  return pool[d(rng)];
}

inline std::string_view pick(const std::vector<std::string>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

inline std::string join(const std::vector<std::string_view>& ws) {
  std::string out;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    if (i) out += ' ';
    out += ws[i];
  }
  return out;
}

inline Timestamp uniform_time(Timestamp from, Timestamp to, Rng& rng) {
  std::uniform_int_distribution<Timestamp> d(from, to);
  return d(rng);
}

inline std::string digits(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<int> d(0, 9);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += char('0' + d(rng));
  return s;
}

}  // namespace detail

struct DeskOptions {
  std::size_t n = 4000;
  double spam_fraction = 0.3;
  double borderline_fraction = 0.25;  // of spam: mostly benign wording
  double ham_noise = 0.08;            // chance a ham word is drawn from the spam pool
  std::uint64_t seed = 0;
};

/// SMS-like corpus with binary labels, timestamps in 2019-2021.
inline Corpus make_desk_corpus(const DeskOptions& opt) {
  auto rng = make_rng(derive_seed(opt.seed, "synth.desk"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(5, 12);
  const auto from = make_timestamp(2019, 1, 1), to = make_timestamp(2021, 12, 31, 23, 59, 59);
  std::vector<Message> msgs;
  msgs.reserve(opt.n);
  for (std::size_t i = 0; i < opt.n; ++i) {
    Message m;
    m.id = "desk" + std::to_string(opt.seed) + "-" + std::to_string(i);
    m.lang = "en";
    m.source = "desk";
    m.timestamp = detail::uniform_time(from, to, rng);
    const bool spam = u(rng) < opt.spam_fraction;
    std::vector<std::string_view> ws;
    const std::size_t n = len(rng);
    std::string extra;
    if (spam) {
      const bool borderline = u(rng) < opt.borderline_fraction;
      const double spam_share = borderline ? 0.25 : 0.75;
      for (std::size_t k = 0; k < n; ++k) {
        ws.push_back(u(rng) < spam_share ? detail::pick(words::kSpam, rng) : detail::pick(words::kHam, rng));
      }
      if (!borderline && u(rng) < 0.5) extra = " " + detail::digits(5, rng);
      m.labels = {std::string(kSpam)};
    } else {
      for (std::size_t k = 0; k < n; ++k) {
        ws.push_back(u(rng) < opt.ham_noise ? detail::pick(words::kSpam, rng) : detail::pick(words::kHam, rng));
      }
      m.labels = {std::string(kNonSpam)};
    }
    m.text = detail::join(ws) + extra;
    msgs.push_back(std::move(m));
  }
  return Corpus("desk", std::move(msgs));
}

/// Benign short posts; shares part of its vocabulary with SMS ham.
inline Corpus make_tweet_pool(std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(derive_seed(seed, "synth.tweets"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(4, 10);
  std::vector<Message> msgs;
  msgs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string_view> ws;
    const std::size_t k = len(rng);
    for (std::size_t j = 0; j < k; ++j) {
      ws.push_back(u(rng) < 0.7 ? detail::pick(words::kTweet, rng) : detail::pick(words::kHam, rng));
    }
    Message m;
    m.id = "tweet-" + std::to_string(i);
    m.text = detail::join(ws);
    m.labels = {std::string(kNonSpam)};
    m.lang = "en";
    m.source = "tweets";
    msgs.push_back(std::move(m));
  }
  return Corpus("tweets", std::move(msgs));
}

/// Balanced corpus whose classes use disjoint vocabularies.
inline Corpus make_separable_corpus(std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(derive_seed(seed, "synth.separable"));
  std::uniform_int_distribution<std::size_t> len(3, 8);
  std::vector<Message> msgs;
  msgs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool spam = i % 2 == 0;
    std::vector<std::string_view> ws;
    const std::size_t k = len(rng);
    for (std::size_t j = 0; j < k; ++j) {
      ws.push_back(spam ? detail::pick(words::kSeparableSpam, rng) : detail::pick(words::kSeparableHam, rng));
    }
    Message m;
    m.id = "sep-" + std::to_string(i);
    m.text = detail::join(ws);
    m.labels = {std::string(spam ? kSpam : kNonSpam)};
    m.lang = "en";
    m.source = "separable";
    msgs.push_back(std::move(m));
  }
  return Corpus("separable", std::move(msgs));
}

struct DriftOptions {
  int first_year = 2012;
  int last_year = 2022;
  std::size_t per_quarter = 60;
  double spam_fraction = 0.35;
  std::size_t words_per_year = 12;
  double current_share = 0.6;   // spam words from this year's pool
  double previous_share = 0.3;  // from last year's pool; the rest are ham words
  std::vector<std::string> sources = {"carrier-a", "carrier-b"};
  std::uint64_t seed = 0;
};

/// Pseudo-word keyword pool for one year.
inline std::vector<std::string> drift_vocabulary(int year, std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(derive_seed(seed, "synth.drift.vocab", std::uint64_t(year)));
  std::uniform_int_distribution<int> syl(2, 3);
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w;
    const int k = syl(rng);
    for (int i = 0; i < k; ++i) w += detail::pick(words::kSyllables, rng);
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  }
  return out;
}

/// Messages spread over every quarter in [first_year, last_year]; spam draws
/// its keywords from a per-year pool plus the previous year's.
inline Corpus make_drift_corpus(const DriftOptions& opt) {
  if (opt.sources.empty()) throw std::invalid_argument("drift corpus needs at least one source");
  auto rng = make_rng(derive_seed(opt.seed, "synth.drift"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(5, 10);
  std::uniform_int_distribution<std::size_t> src(0, opt.sources.size() - 1);
  std::vector<Message> msgs;
  std::size_t id = 0;
  for (int y = opt.first_year; y <= opt.last_year; ++y) {
    const auto cur = drift_vocabulary(y, opt.words_per_year, opt.seed);
    const auto prev = drift_vocabulary(y - 1, opt.words_per_year, opt.seed);
    for (unsigned q = 0; q < 4; ++q) {
      const auto from = make_timestamp(y, 3 * q + 1, 1);
      const auto to = (q == 3 ? make_timestamp(y + 1, 1, 1) : make_timestamp(y, 3 * q + 4, 1)) - 1;
      for (std::size_t i = 0; i < opt.per_quarter; ++i) {
        Message m;
        m.id = "drift-" + std::to_string(id++);
        m.timestamp = detail::uniform_time(from, to, rng);
        m.source = opt.sources[src(rng)];
        m.lang = "en";
        const bool spam = u(rng) < opt.spam_fraction;
        std::vector<std::string_view> ws;
        const std::size_t n = len(rng);
        for (std::size_t k = 0; k < n; ++k) {
          if (!spam) {
            ws.push_back(detail::pick(words::kHam, rng));
            continue;
          }
          const double r = u(rng);
          if (r < opt.current_share) {
            ws.push_back(detail::pick(cur, rng));
          } else if (r < opt.current_share + opt.previous_share) {
            ws.push_back(detail::pick(prev, rng));
          } else {
            ws.push_back(detail::pick(words::kHam, rng));
          }
        }
        m.text = detail::join(ws);
        m.labels = {std::string(spam ? kSpam : kNonSpam)};
        msgs.push_back(std::move(m));
      }
    }
  }
  return Corpus("drift", std::move(msgs));
}

inline constexpr std::array<std::string_view, 3> kTopics = {"lottery", "phishing", "promotion"};

/// Topic-labelled corpus. multiclass: exactly one of the topics or non-spam.
/// multilabel: spam carries one or two topics.
inline Corpus make_topic_corpus(std::size_t n, bool multilabel, std::uint64_t seed) {
  static const std::vector<std::vector<std::string>> pools = {
      {"lottery", "jackpot", "winner", "prize", "draw", "ticket", "lucky", "million"},
      {"verify", "account", "password", "suspended", "login", "bank", "secure", "confirm"},
      {"sale", "discount", "offer", "shop", "deal", "coupon", "store", "percent"},
  };
  auto rng = make_rng(derive_seed(seed, multilabel ? "synth.topic.ml" : "synth.topic.mc"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> topic(0, kTopics.size() - 1);
  std::uniform_int_distribution<std::size_t> len(4, 9);
  std::vector<Message> msgs;
  for (std::size_t i = 0; i < n; ++i) {
    Message m;
    m.id = "topic-" + std::to_string(i);
    m.lang = "en";
    m.source = "topic";
    std::vector<std::string_view> ws;
    const std::size_t k = len(rng);
    if (u(rng) < 0.25) {
      for (std::size_t j = 0; j < k; ++j) ws.push_back(detail::pick(words::kHam, rng));
      m.labels = {std::string(kNonSpam)};
    } else {
      std::vector<std::size_t> ts = {topic(rng)};
      if (multilabel && u(rng) < 0.4) {
        std::size_t t2;
        do t2 = topic(rng); while (t2 == ts[0]);
        ts.push_back(t2);
      }
      for (std::size_t j = 0; j < k; ++j) {
        const auto& pool = pools[ts[j % ts.size()]];
        ws.push_back(u(rng) < 0.7 ? detail::pick(pool, rng) : detail::pick(words::kHam, rng));
      }
      for (auto t : ts) m.labels.emplace_back(kTopics[t]);
      if (multilabel) m.labels.emplace_back(kSpam);
      m.labels = normalize_labels(std::move(m.labels));
    }
    m.text = detail::join(ws);
    msgs.push_back(std::move(m));
  }
  return Corpus(multilabel ? "topics-multilabel" : "topics-multiclass", std::move(msgs));
}

}  // namespace spamdam::synth
