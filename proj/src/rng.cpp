#include "fairbide/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace fairbide {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id),
      engine_(splitmix64(splitmix64(seed) ^ splitmix64(~stream_id))) {}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1-u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double RngStream::exponential(double mean) {
  if (!(mean > 0.0)) throw NumericError("exponential: mean must be positive");
  return -mean * std::log(1.0 - uniform01());
}

bool RngStream::bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw NumericError("bernoulli: p outside [0,1]");
  return uniform01() < p;
}

double RngStream::rademacher() {
  return (next_u64() >> 63) ? 1.0 : -1.0;
}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw NumericError("uniform_index: empty range");
  // rejection sampling for exact uniformity
  const std::uint64_t bound = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::size_t RngStream::multinomial(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw NumericError("multinomial: negative probability");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw NumericError("multinomial: probabilities sum to " + std::to_string(total));
  double u = uniform01() * total;
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    if (u < probs[k]) return k;
    u -= probs[k];
  }
  return probs.empty() ? 0 : probs.size() - 1;
}

Matrix draw(Distribution dist, std::size_t rows, std::size_t cols, RngStream& rng,
            double param) {
  Matrix m(rows, cols);
  double* p = m.data();
  const std::size_t n = m.size();
  switch (dist) {
    case Distribution::standard_normal:
      for (std::size_t i = 0; i < n; ++i) p[i] = rng.normal();
      break;
    case Distribution::uniform_angle:
      for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      break;
    case Distribution::exponential:
      if (!(param > 0.0)) throw NumericError("draw: exponential mean must be positive");
      for (std::size_t i = 0; i < n; ++i) p[i] = rng.exponential(param);
      break;
    case Distribution::bernoulli:
      if (!(param >= 0.0 && param <= 1.0)) throw NumericError("draw: bernoulli p outside [0,1]");
      for (std::size_t i = 0; i < n; ++i) p[i] = rng.bernoulli(param) ? 1.0 : 0.0;
      break;
    case Distribution::rademacher:
      for (std::size_t i = 0; i < n; ++i) p[i] = rng.rademacher();
      break;
  }
  return m;
}

Matrix draw_normal(std::size_t rows, std::size_t cols, RngStream& rng) {
  return draw(Distribution::standard_normal, rows, cols, rng);
}

Matrix draw_uniform(std::size_t rows, std::size_t cols, double lo, double hi, RngStream& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

}  // namespace fairbide
