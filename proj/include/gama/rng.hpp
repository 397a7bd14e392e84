#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace gama {

/// PCG64 (XSL-RR 128/64): 128-bit LCG state, 64-bit output, selectable
/// stream via the odd increment. All distributions below are computed
/// from raw 64-bit draws so streams are identical on every platform.
class Pcg64 {
 public:
  explicit Pcg64(uint64_t seed = 0, uint64_t stream = 0);

  uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), rejection-sampled (no modulo bias).
  uint64_t below(uint64_t n);
  /// Standard normal via Box-Muller (both variates used).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Advance the state by `delta` steps in O(log delta).
  void advance(unsigned __int128 delta);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      const uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  uint64_t seed() const { return seed_; }

 private:
  void step();

  unsigned __int128 state_ = 0;
  unsigned __int128 inc_ = 1;
  uint64_t seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Named consumers of randomness. Each (consumer, sub) pair selects its own
/// PCG stream under the master seed, so consumers never share a sequence.
enum class RngStream : uint64_t {
  dataset = 1,
  split = 2,
  init = 3,
  sampling = 4,
  shuffle = 5,
  pgd = 6,
};

Pcg64 make_rng(uint64_t master_seed, RngStream stream, uint64_t sub = 0);

/// 64-bit FNV-1a, used to fold strings into stream ids.
uint64_t fnv1a(std::string_view text);

}  // namespace gama
