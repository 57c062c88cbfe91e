#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include <boost/multiprecision/cpp_int.hpp>
#include <boost/random/binomial_distribution.hpp>

#include "bpre/rng.hpp"

namespace bpre {

// Population sizes are exact integers of unbounded width.
using Population = boost::multiprecision::cpp_int;

inline constexpr std::uint64_t kDefaultExactThreshold = std::uint64_t{1} << 32;

// Exact Binomial(trials, p) draw (BTRD for large means, inversion otherwise).
inline std::uint64_t binomial_exact(std::uint64_t trials, double p, RandomStream& rng) {
  if (trials == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  // Signed count type: the BTRD implementation takes abs() of count differences.
  boost::random::binomial_distribution<std::int64_t, double> dist(static_cast<std::int64_t>(trials), p);
  return static_cast<std::uint64_t>(dist(rng));
}

// Continuity-corrected Gaussian approximation, rounded and clamped to [0, trials].
inline Population binomial_gaussian(const Population& trials, double p, RandomStream& rng) {
  if (trials == 0 || p <= 0.0) return Population(0);
  if (p >= 1.0) return trials;
  const double t = trials.convert_to<double>();
  const double mean = t * p;
  const double sd = std::sqrt(t * p * (1.0 - p));
  const double k = std::floor(mean + sd * rng.normal() + 0.5);
  if (k <= 0.0) return Population(0);
  if (k >= t) return trials;
  Population draw(k);
  return draw > trials ? trials : draw;
}

// Binomial draw on an arbitrary-precision trial count. Counts up to
// `exact_threshold` are sampled exactly; larger counts use the Gaussian
// approximation and set `approximate`.
inline Population binomial_draw(const Population& trials, double p, RandomStream& rng,
                                std::uint64_t exact_threshold, bool& approximate) {
  if (trials == 0 || p <= 0.0) return Population(0);
  if (p >= 1.0) return trials;
  if (trials <= exact_threshold) {
    return Population(binomial_exact(trials.convert_to<std::uint64_t>(), p, rng));
  }
  approximate = true;
  return binomial_gaussian(trials, p, rng);
}

// Index i with probability weights[i], given the running cumulative sums.
// The last bucket absorbs rounding slack in the cumulative total.
inline std::size_t draw_index(std::span<const double> cumulative, RandomStream& rng) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) return cumulative.size() - 1;
  return static_cast<std::size_t>(it - cumulative.begin());
}

}  // namespace bpre
