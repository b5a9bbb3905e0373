#pragma once

// Brute-force metric definitions, written directly from the formulas and
// sharing no code with the library.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace testing_support {

inline double brute_hamming(const std::vector<std::vector<std::string>>& gold,
                            const std::vector<std::vector<std::string>>& pred) {
  double total = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::set<std::string> y(gold[i].begin(), gold[i].end());
    const std::set<std::string> p(pred[i].begin(), pred[i].end());
    std::set<std::string> u = y;
    u.insert(p.begin(), p.end());
    std::size_t inter = 0;
    for (const auto& l : y) inter += p.count(l);
    total += u.empty() ? 1.0 : double(inter) / double(u.size());
  }
  return total / double(gold.size());
}

// For each relevant label j: |{k relevant : s_k >= s_j}| / |{k : s_k >= s_j}|.
inline double brute_lrap(const std::vector<std::vector<std::uint8_t>>& gold,
                         const std::vector<std::vector<double>>& scores) {
  double total = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& y = gold[i];
    const auto& s = scores[i];
    std::size_t rel = 0;
    for (auto v : y) rel += v;
    if (rel == 0 || rel == y.size()) {
      total += 1.0;
      continue;
    }
    double sample = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (!y[j]) continue;
      std::size_t rank = 0, rel_rank = 0;
      for (std::size_t k = 0; k < y.size(); ++k) {
        if (s[k] >= s[j]) {
          ++rank;
          rel_rank += y[k];
        }
      }
      sample += double(rel_rank) / double(rank);
    }
    total += sample / double(rel);
  }
  return total / double(gold.size());
}

}  // namespace testing_support
