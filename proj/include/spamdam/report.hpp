#pragma once

// Report tables and the on-disk layout
//   <root>/<experiment>/<run-id>/{config.json,table.csv,table.json}
// with atomic (temp file + rename) writes.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "spamdam/corpus.hpp"

namespace spamdam::report {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  void add(std::vector<nlohmann::json> row) {
    if (row.size() != columns.size()) throw ReportError("table row width mismatch");
    rows.push_back(std::move(row));
  }
};

inline std::string cell_text(const nlohmann::json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return spamdam::detail::csv_quote(v.get<std::string>());
  return v.dump();
}

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (i) out += ',';
    out += spamdam::detail::csv_quote(t.columns[i]);
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += cell_text(row[i]);
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json o = nlohmann::json::object();
    for (std::size_t i = 0; i < row.size(); ++i) o[t.columns[i]] = row[i];
    rows.push_back(std::move(o));
  }
  return {{"columns", t.columns}, {"rows", rows}};
}

/// Writes `content` to `path` via a sibling temp file and rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ReportError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw ReportError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ReportError("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline std::filesystem::path report_root(const std::string& flag = "") {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SPAMDAM_REPORT_DIR"); env && *env) return env;
  return "reports";
}

/// UTC time as YYYYMMDDTHHMMSSZ.
inline std::string utc_run_id() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Writes the three report files and returns the run directory.
inline std::filesystem::path write_report(const std::filesystem::path& root,
                                          const std::string& experiment, const std::string& run_id,
                                          const nlohmann::json& config, const Table& table) {
  if (experiment.empty() || run_id.empty()) throw ReportError("experiment and run id must be non-empty");
  if (run_id.find('/') != std::string::npos || run_id == "." || run_id == "..") {
    throw ReportError("run id must be a single path component");
  }
  const auto dir = root / experiment / run_id;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ReportError("cannot create '" + dir.string() + "': " + ec.message());
  write_atomic(dir / "config.json", dump_json(config));
  write_atomic(dir / "table.csv", to_csv(table));
  write_atomic(dir / "table.json", dump_json(to_json(table)));
  return dir;
}

}  // namespace spamdam::report
