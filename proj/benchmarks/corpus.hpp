#pragma once

#include <random>
#include <string>
#include <vector>

namespace bench {

inline std::vector<std::string> corpus(std::size_t n, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> docs;
  docs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* prefix = i % 2 ? "pw" : "nw";
    std::string text;
    for (int k = 0; k < 12; ++k) text += std::string(k ? " " : "") + prefix + std::to_string(rng() % 3000);
    docs.push_back(std::move(text));
  }
  return docs;
}

inline std::vector<std::string> labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(i % 2 ? "pos" : "neg");
  return out;
}

}  // namespace bench
