#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace ipr {

// Deterministic pseudo-random stream built on the splitmix64 update.  The
// integer sequence depends only on the seed, so a fixed seed reproduces the
// exact draw sequence across runs and platforms.  Streams are cheap value
// types; fork() derives an independent child stream without advancing the
// parent, which lets the trainer give every concern (init, batch order,
// augmentation, ...) its own isolated source.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53 mantissa bits.
  double next_double();

  double next_uniform(double lo, double hi);

  // Standard normal via the Marsaglia polar method (one spare cached).
  double next_gaussian();

  // Uniform index in [0, n); rejection sampling, no modulo bias.
  std::size_t next_index(std::size_t n);

  std::vector<double> gaussian_vector(std::size_t n);

  // Independent child stream; deterministic in (parent state, stream_id).
  RngStream fork(std::uint64_t stream_id) const;

  // Fisher-Yates, consumes n-1 index draws.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[next_index(i)]);
    }
  }

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ipr
