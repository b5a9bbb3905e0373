#pragma once

// Post-processing for screenshot OCR: dark-background inversion, low
// confidence masking, word-cell merging and removal of phone/time/date lines.
// Works on structured OCR output; no OCR engine here.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace spamdam::ocr {

class OcrError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StrConfig {
  std::uint8_t dark_pixel = 30;  // x < dark_pixel is dark
  double dark_ratio = 0.70;      // invert when the dark share is strictly above this
  double merge_factor = 1.5;     // merge when gap < merge_factor * cell height
  double min_conf = 65.0;        // conf < min_conf is masked
};

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  void validate() const {
    if (width == 0 || height == 0) throw OcrError("image has zero area");
    if (pixels.size() != width * height) throw OcrError("pixel buffer does not match dimensions");
  }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct InversionResult {
  GrayImage image;
  bool inverted = false;
  double dark_fraction = 0.0;
};

inline InversionResult detect_and_invert(const GrayImage& img, const StrConfig& cfg = {}) {
  img.validate();
  const auto dark = std::count_if(img.pixels.begin(), img.pixels.end(),
                                  [&](std::uint8_t x) { return x < cfg.dark_pixel; });
  InversionResult r{img, false, double(dark) / double(img.pixels.size())};
  if (r.dark_fraction > cfg.dark_ratio) {
    for (auto& x : r.image.pixels) x = static_cast<std::uint8_t>(255 - x);
    r.inverted = true;
  }
  return r;
}

struct WordCell {
  std::string text;
  std::int64_t left = 0, top = 0, width = 1, height = 1;
  double conf = 100.0;

  std::int64_t right() const { return left + width; }
  std::int64_t bottom() const { return top + height; }
  friend bool operator==(const WordCell&, const WordCell&) = default;
};

inline void check_cell(const WordCell& c) {
  if (c.width <= 0 || c.height <= 0) throw OcrError("word cell needs positive width and height");
  if (c.left < 0 || c.top < 0) throw OcrError("word cell coordinates must be non-negative");
  if (!(c.conf >= 0.0 && c.conf <= 100.0)) throw OcrError("word cell confidence must lie in [0,100]");
}

inline std::vector<WordCell> mask_low_confidence(std::vector<WordCell> cells, const StrConfig& cfg = {}) {
  for (auto& c : cells) {
    if (c.conf < cfg.min_conf) c.text = " ";
  }
  return cells;
}

/// Groups cells into visual lines (by vertical centre), each sorted by left.
inline std::vector<std::vector<WordCell>> reading_lines(std::vector<WordCell> cells) {
  for (const auto& c : cells) check_cell(c);
  std::stable_sort(cells.begin(), cells.end(), [](const WordCell& a, const WordCell& b) {
    return a.top != b.top ? a.top < b.top : a.left < b.left;
  });
  std::vector<std::vector<WordCell>> lines;
  double centre = 0.0, half = 0.0;
  for (auto& c : cells) {
    const double cy = double(c.top) + double(c.height) / 2.0;
    if (lines.empty() || std::abs(cy - centre) >= half) {
      lines.emplace_back();
      centre = cy;
      half = double(c.height) / 2.0;
    }
    lines.back().push_back(std::move(c));
  }
  for (auto& l : lines) {
    std::stable_sort(l.begin(), l.end(), [](const WordCell& a, const WordCell& b) { return a.left < b.left; });
  }
  return lines;
}

/// Merges cells in reading order. A cell joins the current group when its gap
/// to the previous cell (horizontal on the same line, vertical across a line
/// break) is below merge_factor times the previous cell's height. Within a
/// group, same-line cells are joined by a space and line breaks by '\n'.
inline std::vector<std::string> merge_cells(const std::vector<WordCell>& cells, const StrConfig& cfg = {}) {
  std::vector<std::string> groups;
  const WordCell* prev = nullptr;
  for (const auto& line : reading_lines(cells)) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      const auto& c = line[k];
      if (prev) {
        const bool same_line = k > 0;
        const double gap = same_line ? double(c.left - prev->right()) : double(c.top - prev->bottom());
        if (gap < cfg.merge_factor * double(prev->height)) {
          groups.back() += same_line ? " " : "\n";
          groups.back() += c.text;
          prev = &c;
          continue;
        }
      }
      groups.push_back(c.text);
      prev = &c;
    }
  }
  return groups;
}

struct StripResult {
  std::string spam_text;
  std::vector<std::string> removed;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline const std::vector<std::regex>& metadata_patterns() {
  static const std::vector<std::regex> patterns = {
      std::regex(R"(^\+?[0-9](?:[ -]?[0-9]){6,}$)"),
      std::regex(R"(^(?:[01]?[0-9]|2[0-3]):[0-5][0-9](?: ?[AaPp][Mm])?$)"),
      std::regex(R"(^[0-9]{4}-[0-9]{2}-[0-9]{2}$)"),
      std::regex(R"(^[0-9]{1,2}/[0-9]{1,2}/[0-9]{4}$)"),
      std::regex(R"(^[0-9]{1,2}/[0-9]{1,2}$)"),
  };
  return patterns;
}

}  // namespace detail

inline bool is_metadata_line(std::string_view line) {
  const auto t = detail::trim(line);
  if (t.empty()) return false;
  for (const auto& re : detail::metadata_patterns()) {
    if (std::regex_match(t, re)) return true;
  }
  return false;
}

/// Drops phone-number, clock-time and date lines; the rest, in order and
/// joined by '\n', is the message.
inline StripResult strip_non_message(const std::vector<std::string>& groups) {
  StripResult r;
  bool first = true;
  for (const auto& g : groups) {
    std::size_t start = 0;
    while (start <= g.size()) {
      auto end = g.find('\n', start);
      if (end == std::string::npos) end = g.size();
      const std::string line = g.substr(start, end - start);
      if (is_metadata_line(line)) {
        r.removed.push_back(line);
      } else {
        if (!first) r.spam_text += '\n';
        r.spam_text += line;
        first = false;
      }
      start = end + 1;
    }
  }
  return r;
}

struct Extraction {
  std::string spam_text;
  bool inverted = false;
  std::vector<std::string> removed;
};

/// Full post-processing. The image only drives the inversion report; the
/// cells are expected to come from OCR run on the (possibly inverted) image.
inline Extraction extract(const GrayImage* img, const std::vector<WordCell>& cells,
                          const StrConfig& cfg = {}) {
  Extraction e;
  if (img) e.inverted = detect_and_invert(*img, cfg).inverted;
  auto s = strip_non_message(merge_cells(mask_low_confidence(cells, cfg), cfg));
  e.spam_text = std::move(s.spam_text);
  e.removed = std::move(s.removed);
  return e;
}

// ---------------------------------------------------------------------------
// JSON

inline std::vector<WordCell> cells_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw OcrError("cells JSON must be an array");
  std::vector<WordCell> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& o = j[i];
    try {
      WordCell c;
      c.text = o.at("text").get<std::string>();
      c.left = o.at("left").get<std::int64_t>();
      c.top = o.at("top").get<std::int64_t>();
      c.width = o.at("width").get<std::int64_t>();
      c.height = o.at("height").get<std::int64_t>();
      c.conf = o.at("conf").get<double>();
      check_cell(c);
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& ex) {
      throw OcrError("cell " + std::to_string(i) + ": " + ex.what());
    } catch (const OcrError& ex) {
      throw OcrError("cell " + std::to_string(i) + ": " + ex.what());
    }
  }
  return out;
}

inline nlohmann::json to_json(const WordCell& c) {
  return {{"text", c.text}, {"left", c.left}, {"top", c.top},
          {"width", c.width}, {"height", c.height}, {"conf", c.conf}};
}

inline nlohmann::json to_json(const Extraction& e) {
  return {{"spam_text", e.spam_text}, {"inverted", e.inverted}, {"removed", e.removed}};
}

}  // namespace spamdam::ocr
