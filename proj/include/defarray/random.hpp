// SPDX-License-Identifier: Apache-2.0
//
// Deterministic stream splitting: every (seed, tag, i, j) tuple gets its own
// generator, so parallel and serial loops draw identical numbers.

#pragma once

#include <cstdint>
#include <random>

namespace defarray {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class StreamTag : std::uint64_t {
  noise = 1,
  jitter = 2,
  source = 3,
  pilot_phase = 4,
};

inline std::uint64_t stream_seed(std::uint64_t seed, StreamTag tag, std::uint64_t i = 0,
                                 std::uint64_t j = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
  h = splitmix64(h ^ i);
  h = splitmix64(h ^ (j * 0x632be59bd9b4e019ULL));
  return h;
}

/// Counter-based SplitMix64 generator. Cheap to seed, used where many short
/// independent streams are needed (one per STFT cell or per frame).
class SplitMixEngine {
 public:
  using result_type = std::uint64_t;
  explicit SplitMixEngine(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    const std::uint64_t out = splitmix64(state_);
    state_ += 0x9e3779b97f4a7c15ULL;
    return out;
  }

 private:
  std::uint64_t state_;
};

inline SplitMixEngine make_cell_stream(std::uint64_t seed, StreamTag tag, std::uint64_t i = 0,
                                       std::uint64_t j = 0) {
  return SplitMixEngine(stream_seed(seed, tag, i, j));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t i = 0,
                                   std::uint64_t j = 0) {
  return std::mt19937_64(stream_seed(seed, tag, i, j));
}

}  // namespace defarray
