#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokf/rng.hpp"

namespace tokf::testutil {

// Deterministic English-like filler: random sentences over a small weighted
// vocabulary. Structured enough that a tiny byte-level model learns it fast.
inline std::vector<std::uint8_t> synthetic_corpus(std::size_t target_bytes, std::uint64_t seed) {
  static const char* kWords[] = {
      "the",    "a",      "of",      "to",       "and",     "in",      "is",     "it",
      "model",  "token",  "key",     "value",    "layer",   "scale",   "train",  "loss",
      "data",   "byte",   "stream",  "attends",  "grows",   "learns",  "small",  "large",
      "fast",   "slow",   "deep",    "wide",     "first",   "next",    "old",    "new",
      "state",  "weight", "vector",  "matrix",   "norm",    "step",    "rate",   "batch",
      "epoch",  "can",    "will",    "must",     "should",  "often",   "never",  "always",
      "system", "memory", "compute", "gradient", "descent", "forward", "pass",   "output"};
  constexpr int kWordCount = static_cast<int>(sizeof(kWords) / sizeof(kWords[0]));

  Rng rng(seed);
  std::string text;
  text.reserve(target_bytes + 64);
  while (text.size() < target_bytes) {
    const int sentence_len = 4 + static_cast<int>(rng.next_below(9));
    for (int w = 0; w < sentence_len; ++w) {
      // Zipf-ish skew: two draws, keep the smaller index.
      const auto first = rng.next_below(kWordCount);
      const auto second = rng.next_below(kWordCount);
      std::string word = kWords[std::min(first, second)];
      if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
      text += word;
      text += w + 1 == sentence_len ? "" : " ";
    }
    text += rng.next_below(8) == 0 ? "!\n" : ".\n";
  }
  text.resize(target_bytes);
  return {text.begin(), text.end()};
}

}  // namespace tokf::testutil
