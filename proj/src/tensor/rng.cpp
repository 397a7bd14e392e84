#include "gama/rng.hpp"

#include <cmath>
#include <numbers>

namespace gama {

namespace {

constexpr unsigned __int128 kMultiplier =
    (static_cast<unsigned __int128>(2549297995355413924ULL) << 64) | 4865540595714422341ULL;

}  // namespace

Pcg64::Pcg64(uint64_t seed, uint64_t stream) : seed_(seed) {
  inc_ = (static_cast<unsigned __int128>(stream) << 1) | 1u;
  state_ = 0;
  step();
  state_ += seed;
  step();
}

void Pcg64::step() { state_ = state_ * kMultiplier + inc_; }

uint64_t Pcg64::next_u64() {
  step();
  const auto hi = static_cast<uint64_t>(state_ >> 64);
  const auto lo = static_cast<uint64_t>(state_);
  const uint64_t xored = hi ^ lo;
  const unsigned rot = static_cast<unsigned>(state_ >> 122);
  return (xored >> rot) | (xored << ((64u - rot) & 63u));
}

double Pcg64::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

uint64_t Pcg64::below(uint64_t n) {
  if (n <= 1) return 0;
  const uint64_t threshold = (0 - n) % n;
  for (;;) {
    const uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Pcg64::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void Pcg64::advance(unsigned __int128 delta) {
  // Brown's jump-ahead for LCGs.
  unsigned __int128 cur_mult = kMultiplier, cur_plus = inc_;
  unsigned __int128 acc_mult = 1, acc_plus = 0;
  while (delta > 0) {
    if (delta & 1) {
      acc_mult *= cur_mult;
      acc_plus = acc_plus * cur_mult + cur_plus;
    }
    cur_plus = (cur_mult + 1) * cur_plus;
    cur_mult *= cur_mult;
    delta >>= 1;
  }
  state_ = acc_mult * state_ + acc_plus;
}

Pcg64 make_rng(uint64_t master_seed, RngStream stream, uint64_t sub) {
  const uint64_t id = static_cast<uint64_t>(stream) * 0x9E3779B97F4A7C15ULL + sub;
  return Pcg64(master_seed, id);
}

uint64_t fnv1a(std::string_view text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace gama
