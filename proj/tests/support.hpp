#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spamdam/corpus.hpp"

namespace testing_support {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("spamdam-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline spamdam::Message msg(std::string id, std::string text, std::vector<std::string> labels,
                            spamdam::Timestamp ts = 0, std::string lang = "en", std::string source = "t") {
  spamdam::Message m;
  m.id = std::move(id);
  m.text = std::move(text);
  m.labels = std::move(labels);
  m.timestamp = ts;
  m.lang = std::move(lang);
  m.source = std::move(source);
  return m;
}

inline spamdam::Message spam(std::string id, std::string text) { return msg(std::move(id), std::move(text), {"spam"}); }
inline spamdam::Message ham(std::string id, std::string text) { return msg(std::move(id), std::move(text), {"non-spam"}); }

}  // namespace testing_support
