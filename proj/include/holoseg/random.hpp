#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace holoseg {

using Rng = std::mt19937_64;

/// Independent generator for a (seed, stream...) tuple, so results do not
/// depend on the order in which streams are consumed.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (stream.size() + 1));
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (std::uint64_t s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace holoseg
