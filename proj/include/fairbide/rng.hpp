#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fairbide/matrix.hpp"

namespace fairbide {

// Deterministic random stream addressed by (seed, stream_id). Distinct
// stream ids give independent substreams, so trials and restarts can run
// in parallel and still reproduce a serial run exactly. Distributions are
// implemented by hand (not std::*_distribution) so the draw sequence does
// not depend on the standard library vendor.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  double normal();                          // standard normal, Box-Muller
  double exponential(double mean);          // density (1/mean) e^{-x/mean}
  bool bernoulli(double p);
  double rademacher();                      // -1 or +1, equal probability
  std::size_t uniform_index(std::size_t n); // 0..n-1, unbiased
  std::size_t multinomial(std::span<const double> probs);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[uniform_index(i)]);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class Distribution {
  standard_normal,
  uniform_angle,  // uniform on [0, 2*pi)
  exponential,    // parameter = mean
  bernoulli,      // parameter = p
  rademacher,
};

// i.i.d. entries from the given distribution; parameter meaning depends
// on the distribution (see enum). Validates parameters.
Matrix draw(Distribution dist, std::size_t rows, std::size_t cols, RngStream& rng,
            double param = 0.0);

Matrix draw_normal(std::size_t rows, std::size_t cols, RngStream& rng);
Matrix draw_uniform(std::size_t rows, std::size_t cols, double lo, double hi, RngStream& rng);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fairbide
