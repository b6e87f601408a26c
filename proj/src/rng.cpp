#include "ipr/rng.hpp"

#include <cmath>

#include "ipr/errors.hpp"

namespace ipr {

namespace {

// splitmix64 finalizer; also used to scramble fork seeds.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  return mix64(state_);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_uniform(double lo, double hi) {
  if (!(lo <= hi)) {
    throw InputError("next_uniform: lower bound exceeds upper bound");
  }
  return lo + (hi - lo) * next_double();
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  while (true) {
    const double u = 2.0 * next_double() - 1.0;
    const double v = 2.0 * next_double() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      const double mult = std::sqrt(-2.0 * std::log(s) / s);
      spare_ = v * mult;
      has_spare_ = true;
      return u * mult;
    }
  }
}

std::size_t RngStream::next_index(std::size_t n) {
  if (n == 0) {
    throw InputError("next_index: n must be positive");
  }
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod n
  while (true) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) {
      return static_cast<std::size_t>(r % bound);
    }
  }
}

std::vector<double> RngStream::gaussian_vector(std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = next_gaussian();
  }
  return out;
}

RngStream RngStream::fork(std::uint64_t stream_id) const {
  std::uint64_t s = state_ ^ (0xD2B74407B1CE6E93ULL * (stream_id + 1));
  return RngStream(mix64(mix64(s)));
}

}  // namespace ipr
