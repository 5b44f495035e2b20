#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace ecodrive {

using Rng = std::mt19937_64;

// Independent stream for (seed, tags...). Different tag tuples give unrelated
// sequences; identical tuples give identical sequences.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace ecodrive
