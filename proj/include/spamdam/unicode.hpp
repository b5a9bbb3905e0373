#pragma once

// UTF-8 <-> code point conversion and the control code points the
// adversarial-text tooling cares about.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace spamdam::unicode {

inline constexpr char32_t kZeroWidthSpace = 0x200B;
inline constexpr char32_t kZeroWidthNonJoiner = 0x200C;
inline constexpr char32_t kZeroWidthJoiner = 0x200D;
inline constexpr char32_t kWordJoiner = 0x2060;
inline constexpr char32_t kBackspace = 0x0008;
inline constexpr char32_t kRightToLeftOverride = 0x202E;
inline constexpr char32_t kPopDirectionalFormatting = 0x202C;

inline constexpr char32_t kInvisibles[] = {kZeroWidthSpace, kZeroWidthNonJoiner,
                                           kZeroWidthJoiner, kWordJoiner};

inline constexpr bool is_invisible(char32_t c) {
  return c == kZeroWidthSpace || c == kZeroWidthNonJoiner ||
         c == kZeroWidthJoiner || c == kWordJoiner;
}

// Embedding/override/isolate controls plus the implicit marks.
inline constexpr bool is_bidi_control(char32_t c) {
  return (c >= 0x202A && c <= 0x202E) || (c >= 0x2066 && c <= 0x2069) ||
         c == 0x200E || c == 0x200F || c == 0x061C;
}

// Anything an imperceptible perturbation may emit besides visible glyphs.
inline constexpr bool is_perturbation_control(char32_t c) {
  return is_invisible(c) || is_bidi_control(c) || c == kBackspace;
}

class Utf8Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes UTF-8; throws Utf8Error on malformed input (overlongs,
/// surrogates and out-of-range values included).
inline std::u32string decode(std::string_view in) {
  std::u32string out;
  out.reserve(in.size());
  std::size_t i = 0;
  while (i < in.size()) {
    const auto b0 = static_cast<unsigned char>(in[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      throw Utf8Error("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > in.size()) {
      throw Utf8Error("truncated UTF-8 sequence at offset " + std::to_string(i));
    }
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(in[i + k]);
      if ((b & 0xC0) != 0x80) {
        throw Utf8Error("invalid UTF-8 continuation at offset " +
                        std::to_string(i + k));
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw Utf8Error("invalid code point at offset " + std::to_string(i));
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode(std::u32string_view in) {
  std::string out;
  out.reserve(in.size());
  for (char32_t cp : in) append_utf8(out, cp);
  return out;
}

inline bool is_valid(std::string_view in) {
  try {
    decode(in);
    return true;
  } catch (const Utf8Error&) {
    return false;
  }
}

}  // namespace spamdam::unicode
