#pragma once

// Labeled message corpora: ingestion (JSONL / CSV), deterministic splitting,
// time slicing, Dirichlet quantity partitioning and histograms.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include "spamdam/rng.hpp"
#include "spamdam/unicode.hpp"

namespace spamdam {

inline constexpr std::string_view kSpam = "spam";
inline constexpr std::string_view kNonSpam = "non-spam";

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

struct Message {
  std::string id;
  std::string text;  // UTF-8
  std::vector<std::string> labels;  // sorted, unique, non-empty
  Timestamp timestamp = 0;
  std::string lang = "und";
  std::string source;

  bool has_label(std::string_view label) const {
    return std::binary_search(labels.begin(), labels.end(), label);
  }
  bool is_spam() const { return has_label(kSpam); }

  friend bool operator==(const Message&, const Message&) = default;
};

inline std::vector<std::string> normalize_labels(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

/// An ordered, immutable collection of messages with unique ids.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::string name, std::vector<Message> messages)
      : name_(std::move(name)), messages_(std::move(messages)) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(messages_.size());
    for (auto& m : messages_) {
      m.labels = normalize_labels(std::move(m.labels));
      if (m.labels.empty()) throw CorpusError("message '" + m.id + "' has no labels");
      if (!seen.insert(m.id).second) throw CorpusError("duplicate message id '" + m.id + "'");
    }
  }

  const std::string& name() const { return name_; }
  const std::vector<Message>& messages() const { return messages_; }
  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }
  const Message& operator[](std::size_t i) const { return messages_[i]; }
  auto begin() const { return messages_.begin(); }
  auto end() const { return messages_.end(); }

  std::size_t count_label(std::string_view label) const {
    return static_cast<std::size_t>(std::count_if(
        messages_.begin(), messages_.end(), [&](const Message& m) { return m.has_label(label); }));
  }

  template <typename Pred>
  Corpus filter(Pred&& keep, std::string name = {}) const {
    std::vector<Message> out;
    for (const auto& m : messages_) {
      if (keep(m)) out.push_back(m);
    }
    return Corpus(name.empty() ? name_ : std::move(name), std::move(out));
  }

  friend bool operator==(const Corpus&, const Corpus&) = default;

 private:
  std::string name_;
  std::vector<Message> messages_;
};

/// Concatenation; throws on id collisions.
inline Corpus concat(std::string name, const Corpus& a, const Corpus& b) {
  std::vector<Message> all = a.messages();
  all.insert(all.end(), b.begin(), b.end());
  return Corpus(std::move(name), std::move(all));
}

/// Copy with every id prefixed, for joining corpora whose ids may overlap.
inline Corpus with_id_prefix(const Corpus& c, std::string_view prefix) {
  std::vector<Message> out = c.messages();
  for (auto& m : out) m.id = std::string(prefix) + m.id;
  return Corpus(c.name(), std::move(out));
}

// ---------------------------------------------------------------------------
// Timestamps

inline Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour = 0,
                                int minute = 0, int second = 0) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  if (!ymd.ok()) throw CorpusError("invalid calendar date");
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * 86400 + hour * 3600 + minute * 60 + second;
}

inline std::chrono::year_month_day civil_date(Timestamp t) {
  using namespace std::chrono;
  const auto days = static_cast<long>(std::floor(static_cast<double>(t) / 86400.0));
  return year_month_day{sys_days{std::chrono::days{days}}};
}

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS" and the same with a trailing 'Z'.
inline Timestamp parse_timestamp(std::string_view s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  const std::string str(s);
  char tail = 0;
  int n = 0;
  if (std::sscanf(str.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &n) != 3 || n != 10) {
    throw CorpusError("bad timestamp '" + str + "'");
  }
  if (str.size() > 10) {
    int m = 0;
    if ((str[10] != 'T' && str[10] != ' ') ||
        std::sscanf(str.c_str() + 11, "%2d:%2d:%2d%n", &h, &mi, &se, &m) != 3 || m != 8) {
      throw CorpusError("bad timestamp '" + str + "'");
    }
    const std::size_t rest = 19;
    if (str.size() > rest) {
      tail = str[rest];
      if (tail != 'Z' || str.size() != rest + 1) throw CorpusError("bad timestamp '" + str + "'");
    }
  }
  if (mo < 1 || mo > 12 || h > 23 || mi > 59 || se > 60) {
    throw CorpusError("bad timestamp '" + str + "'");
  }
  return make_timestamp(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, se);
}

inline std::string format_timestamp(Timestamp t) {
  const auto ymd = civil_date(t);
  const Timestamp day_start =
      make_timestamp(int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
  const Timestamp secs = t - day_start;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), int(secs / 3600),
                int(secs / 60 % 60), int(secs % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// Ingestion

enum class CorpusFormat { jsonl, csv };

namespace detail {

inline Message message_from_json(const nlohmann::json& j, std::size_t line) {
  auto fail = [&](const std::string& what) {
    return CorpusError("line " + std::to_string(line) + ": " + what);
  };
  if (!j.is_object()) throw fail("record is not an object");
  Message m;
  if (!j.contains("text") || !j["text"].is_string()) throw fail("missing string field 'text'");
  m.text = j["text"].get<std::string>();
  if (!j.contains("labels")) throw fail("missing field 'labels'");
  const auto& labels = j["labels"];
  if (labels.is_string()) {
    m.labels.push_back(labels.get<std::string>());
  } else if (labels.is_array()) {
    for (const auto& l : labels) {
      if (!l.is_string()) throw fail("non-string label");
      m.labels.push_back(l.get<std::string>());
    }
  } else {
    throw fail("'labels' must be a string or an array of strings");
  }
  if (m.labels.empty()) throw fail("empty 'labels'");
  if (j.contains("id")) {
    if (j["id"].is_string()) {
      m.id = j["id"].get<std::string>();
    } else if (j["id"].is_number_integer()) {
      m.id = std::to_string(j["id"].get<long long>());
    } else {
      throw fail("'id' must be a string");
    }
  }
  if (j.contains("timestamp") && !j["timestamp"].is_null()) {
    const auto& ts = j["timestamp"];
    try {
      if (ts.is_number_integer()) {
        m.timestamp = ts.get<Timestamp>();
      } else if (ts.is_string()) {
        m.timestamp = parse_timestamp(ts.get<std::string>());
      } else {
        throw fail("bad 'timestamp'");
      }
    } catch (const CorpusError& e) {
      throw fail(e.what());
    }
  }
  if (j.contains("lang") && j["lang"].is_string()) m.lang = j["lang"].get<std::string>();
  if (j.contains("source") && j["source"].is_string()) m.source = j["source"].get<std::string>();
  return m;
}

// RFC 4180 record reader. Returns false at EOF; `line` tracks the physical
// line on which the returned record started.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields,
                            std::size_t& line, std::size_t& next_line) {
  fields.clear();
  line = next_line;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool quoted_field = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++next_line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || quoted_field) {
        throw CorpusError("line " + std::to_string(line) + ": stray quote");
      }
      in_quotes = true;
      quoted_field = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      quoted_field = false;
    } else if (c == '\r' && in.peek() == '\n') {
      // swallowed; the '\n' terminates the record
    } else if (c == '\n') {
      ++next_line;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) throw CorpusError("line " + std::to_string(line) + ": unterminated quote");
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

inline std::vector<std::string> split_labels(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto bar = s.find('|', start);
    const auto end = bar == std::string_view::npos ? s.size() : bar;
    if (end > start) out.emplace_back(s.substr(start, end - start));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return out;
}

inline std::string csv_quote(std::string_view s) {
  const bool needs = s.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void assign_missing_ids(std::vector<Message>& msgs, const std::vector<std::size_t>& lines) {
  std::unordered_set<std::string> explicit_ids;
  for (const auto& m : msgs) {
    if (!m.id.empty()) {
      if (!explicit_ids.insert(m.id).second) {
        throw CorpusError("duplicate message id '" + m.id + "'");
      }
    }
  }
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (!msgs[i].id.empty()) continue;
    std::string id = "L" + std::to_string(lines[i]);
    while (explicit_ids.count(id)) id += "_";
    explicit_ids.insert(id);
    msgs[i].id = std::move(id);
  }
}

}  // namespace detail

inline Corpus read_jsonl(std::istream& in, std::string name) {
  std::vector<Message> msgs;
  std::vector<std::size_t> lines;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError("line " + std::to_string(lineno) + ": malformed JSON");
    }
    msgs.push_back(detail::message_from_json(j, lineno));
    if (!unicode::is_valid(msgs.back().text)) {
      throw CorpusError("line " + std::to_string(lineno) + ": text is not valid UTF-8");
    }
    lines.push_back(lineno);
  }
  detail::assign_missing_ids(msgs, lines);
  return Corpus(std::move(name), std::move(msgs));
}

/// CSV with a header row naming any of: id,text,labels,timestamp,lang,source.
/// Multiple labels are separated by '|'.
inline Corpus read_csv(std::istream& in, std::string name) {
  std::vector<std::string> fields;
  std::size_t line = 1, next_line = 1;
  if (!detail::read_csv_record(in, fields, line, next_line)) return Corpus(std::move(name), {});
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
  if (!col.count("text")) throw CorpusError("line 1: header lacks 'text' column");
  if (!col.count("labels")) throw CorpusError("line 1: header lacks 'labels' column");
  const std::size_t ncols = fields.size();

  std::vector<Message> msgs;
  std::vector<std::size_t> lines;
  while (detail::read_csv_record(in, fields, line, next_line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    auto fail = [&](const std::string& what) {
      return CorpusError("line " + std::to_string(line) + ": " + what);
    };
    if (fields.size() != ncols) throw fail("expected " + std::to_string(ncols) + " fields");
    Message m;
    m.text = fields[col["text"]];
    if (!unicode::is_valid(m.text)) throw fail("text is not valid UTF-8");
    m.labels = detail::split_labels(fields[col["labels"]]);
    if (m.labels.empty()) throw fail("empty 'labels'");
    if (col.count("id")) m.id = fields[col["id"]];
    if (col.count("timestamp") && !fields[col["timestamp"]].empty()) {
      try {
        m.timestamp = parse_timestamp(fields[col["timestamp"]]);
      } catch (const CorpusError& e) {
        throw fail(e.what());
      }
    }
    if (col.count("lang") && !fields[col["lang"]].empty()) m.lang = fields[col["lang"]];
    if (col.count("source")) m.source = fields[col["source"]];
    msgs.push_back(std::move(m));
    lines.push_back(line);
  }
  detail::assign_missing_ids(msgs, lines);
  return Corpus(std::move(name), std::move(msgs));
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus file '" + path + "'");
  auto name = path.substr(path.find_last_of('/') + 1);
  return format == CorpusFormat::jsonl ? read_jsonl(in, std::move(name))
                                       : read_csv(in, std::move(name));
}

/// Format inferred from the extension (".csv" => csv, anything else => jsonl).
inline Corpus load_corpus(const std::string& path) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  return load_corpus(path, csv ? CorpusFormat::csv : CorpusFormat::jsonl);
}

inline nlohmann::json to_json(const Message& m) {
  return {{"id", m.id},         {"text", m.text},
          {"labels", m.labels}, {"timestamp", format_timestamp(m.timestamp)},
          {"lang", m.lang},     {"source", m.source}};
}

inline void write_jsonl(std::ostream& out, const Corpus& c) {
  for (const auto& m : c) out << to_json(m).dump() << '\n';
}

inline void write_csv(std::ostream& out, const Corpus& c) {
  out << "id,text,labels,timestamp,lang,source\r\n";
  for (const auto& m : c) {
    std::string labels;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      if (i) labels.push_back('|');
      labels += m.labels[i];
    }
    out << detail::csv_quote(m.id) << ',' << detail::csv_quote(m.text) << ','
        << detail::csv_quote(labels) << ',' << format_timestamp(m.timestamp) << ','
        << detail::csv_quote(m.lang) << ',' << detail::csv_quote(m.source) << "\r\n";
  }
}

inline void save_corpus(const std::string& path, const Corpus& c, CorpusFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write corpus file '" + path + "'");
  format == CorpusFormat::jsonl ? write_jsonl(out, c) : write_csv(out, c);
}

// ---------------------------------------------------------------------------
// Splitting and partitioning

/// Unstratified random split. Both halves keep the input order.
inline std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction,
                                       std::uint64_t seed) {
  if (corpus.empty()) throw CorpusError("cannot split an empty corpus");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw CorpusError("train_fraction must lie in (0,1)");
  }
  const std::size_t n = corpus.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * double(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<char> in_train(n, 0);
  for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = 1;
  std::vector<Message> train, test;
  train.reserve(n_train);
  test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train : test).push_back(corpus[i]);
  return {Corpus(corpus.name() + "/train", std::move(train)),
          Corpus(corpus.name() + "/test", std::move(test))};
}

struct PartitionConfig {
  std::size_t n_clients = 1;
  double alpha = 1.0;
  std::uint64_t seed = 0;
};

/// Largest-remainder rounding of proportions * total, then a floor of one
/// item per bucket taken from the currently largest bucket.
inline std::vector<std::size_t> apportion(const std::vector<double>& proportions,
                                          std::size_t total) {
  const std::size_t k = proportions.size();
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> remainders(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = proportions[i] * double(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainders[i] = {exact - std::floor(exact), i};
    assigned += counts[i];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) counts[remainders[r % k].second]++;
  while (assigned > total) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (counts[i] == 0) {
      auto largest = std::max_element(counts.begin(), counts.end());
      --*largest;
      counts[i] = 1;
    }
  }
  return counts;
}

inline std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> q(k);
  double sum = 0.0;
  for (auto& v : q) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    std::fill(q.begin(), q.end(), 1.0 / double(k));
    return q;
  }
  for (auto& v : q) v /= sum;
  return q;
}

inline std::vector<Corpus> dirichlet_partition(const Corpus& corpus, const PartitionConfig& cfg) {
  if (cfg.n_clients < 1) throw CorpusError("n_clients must be >= 1");
  if (!(cfg.alpha > 0.0)) throw CorpusError("alpha must be > 0");
  if (corpus.size() < cfg.n_clients) {
    throw CorpusError("corpus of " + std::to_string(corpus.size()) +
                      " messages cannot fill " + std::to_string(cfg.n_clients) + " shards");
  }
  if (cfg.n_clients == 1) {
    return {Corpus(corpus.name() + "/shard-0", corpus.messages())};
  }
  auto rng = make_rng(cfg.seed);
  const auto q = sample_dirichlet(cfg.n_clients, cfg.alpha, rng);
  const auto counts = apportion(q, corpus.size());
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Corpus> shards;
  shards.reserve(cfg.n_clients);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < cfg.n_clients; ++k) {
    std::vector<Message> msgs;
    msgs.reserve(counts[k]);
    for (std::size_t i = 0; i < counts[k]; ++i) msgs.push_back(corpus[idx[pos++]]);
    shards.emplace_back(corpus.name() + "/shard-" + std::to_string(k), std::move(msgs));
  }
  return shards;
}

// ---------------------------------------------------------------------------
// Time

inline Corpus time_slice(const Corpus& corpus, Timestamp cutoff) {
  return corpus.filter([cutoff](const Message& m) { return m.timestamp <= cutoff; });
}

inline std::string quarter_key(Timestamp t) {
  const auto ymd = civil_date(t);
  const unsigned q = (unsigned(ymd.month()) - 1) / 3 + 1;
  return std::to_string(int(ymd.year())) + "Q" + std::to_string(q);
}

inline std::string half_year_key(Timestamp t) {
  const auto ymd = civil_date(t);
  return std::to_string(int(ymd.year())) + (unsigned(ymd.month()) <= 6 ? "H1" : "H2");
}

inline std::map<std::string, Corpus> bucket_by_quarter(const Corpus& corpus) {
  std::map<std::string, std::vector<Message>> groups;
  for (const auto& m : corpus) groups[quarter_key(m.timestamp)].push_back(m);
  std::map<std::string, Corpus> out;
  for (auto& [key, msgs] : groups) {
    out.emplace(key, Corpus(corpus.name() + "/" + key, std::move(msgs)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Histograms

enum class HistogramKey { lang, label, half_year };

struct HistogramBin {
  std::size_t count = 0;
  double fraction = 0.0;  // count / |corpus|
};

using Histogram = std::map<std::string, HistogramBin>;

inline Histogram distribution_stats(const Corpus& corpus, HistogramKey key) {
  Histogram h;
  for (const auto& m : corpus) {
    switch (key) {
      case HistogramKey::lang:
        h[m.lang].count++;
        break;
      case HistogramKey::label:
        for (const auto& l : m.labels) h[l].count++;
        break;
      case HistogramKey::half_year:
        h[half_year_key(m.timestamp)].count++;
        break;
    }
  }
  for (auto& [_, bin] : h) bin.fraction = double(bin.count) / double(corpus.size());
  return h;
}

}  // namespace spamdam
