#pragma once

// Hoeffding-type bound function
//
//   H_n(x, v) = [ (v^2/(x+v^2))^(x+v^2) (n/(n-x))^(n-x) ]^(n/(n+v^2)) 1{x <= n}
//
// controlling P((S_n - n mu)/M >= x) for increments bounded above by 1.
// Everything is evaluated on log H. Writing g(a) = (1+a) log(1+a) - a >= 0,
//
//   log H_n(x, v) = -n/(n+v^2) * [ v^2 g(x/v^2) + n g(-x/n) ],
//
// which is a sum of nonnegative terms and so loses no precision near x = 0.
// At x = n the factor (n/(n-x))^(n-x) is read as its limit 1, giving
// H_n(n, v) = (v^2/(n+v^2))^n.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "bpre/env_model.hpp"
#include "bpre/error.hpp"

namespace bpre {

struct BoundQuery {
  std::uint64_t n = 1;  // horizon
  double x = 0.0;       // standardized threshold
  double v = 1.0;       // variance parameter
};

struct Theorem1Params {
  std::uint64_t n = 1;
  std::uint64_t m = 1;
  double M = 1.0;
  double C = 1.0;
  double delta = 0.5;
};

// (1+a) log(1+a) - a for a >= -1.
inline double bennett_g(double a) {
  if (a == -1.0) return 1.0;
  if (std::abs(a) < 0.25) {
    // sum_{k>=2} (-1)^k a^k / (k (k-1))
    double power = a * a;
    double sum = 0.0;
    for (int k = 2; k < 64; ++k) {
      const double term = power / (static_cast<double>(k) * (k - 1));
      sum += (k % 2 == 0) ? term : -term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
      power *= a;
    }
    return sum;
  }
  return (1.0 + a) * std::log1p(a) - a;
}

inline void validate(const BoundQuery& q) {
  if (q.n < 1) throw InvalidInput("bound horizon n must be >= 1");
  if (!(q.v > 0.0) || !std::isfinite(q.v)) throw InvalidInput("bound parameter v must be positive, got " + format_real(q.v));
  if (!(q.x >= 0.0) || std::isnan(q.x)) throw InvalidInput("bound threshold x must be >= 0, got " + format_real(q.x));
}

inline double log_H(const BoundQuery& q) {
  validate(q);
  const double n = static_cast<double>(q.n);
  if (q.x > n) return -std::numeric_limits<double>::infinity();
  const double v2 = q.v * q.v;
  const double bracket = v2 * bennett_g(q.x / v2) + n * bennett_g(-q.x / n);
  return -(n / (n + v2)) * bracket;
}

inline double H(const BoundQuery& q) { return std::exp(log_H(q)); }

// e^x (v^2/(x+v^2))^(x+v^2) = exp(-v^2 g(x/v^2)); dominates H_n for every n.
inline double H_upper(double x, double v) {
  validate(BoundQuery{1, x, v});
  const double v2 = v * v;
  return std::exp(-v2 * bennett_g(x / v2));
}

// d/dx log H_n(x, v) = n/(n+v^2) log[ v^2 (n-x) / (n (v^2+x)) ], for 0 <= x < n.
inline double dlogH_dx(const BoundQuery& q) {
  validate(q);
  const double n = static_cast<double>(q.n);
  if (q.x >= n) throw InvalidInput("derivative of H_n is defined only for x < n");
  const double v2 = q.v * q.v;
  return (n / (n + v2)) * (std::log1p(-q.x / n) - std::log1p(q.x / v2));
}

inline double dH_dx(const BoundQuery& q) {
  const double slope = dlogH_dx(q);
  return slope == 0.0 ? 0.0 : slope * H(q);
}

// Upper bound on P((S_n - n mu)/M >= x) with v_n = sqrt(n) sigma / M.
inline double sn_tail_bound(std::uint64_t n, double x, double sigma, double M) {
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  if (!(M > 0.0)) throw InvalidInput("M must be positive");
  const double v = std::sqrt(static_cast<double>(n)) * sigma / M;
  return H(BoundQuery{n, x, v});
}

// Relative slack for comparing an exact probability against a bound evaluated
// through log/exp. The bound can be attained: on a symmetric two-point support
// with M = M_tight, sigma = M and H(n, n, n) = 2^-n equals the exact tail, and
// the floating evaluation lands an ulp either side.
inline constexpr double kBoundRelTol = 1e-12;

inline bool within_bound(double value, double bound) { return value <= bound * (1.0 + kBoundRelTol); }

// C delta^m / (M sqrt(n)); independent of the threshold x >= 3.
inline double theorem1_bound(const Theorem1Params& p) {
  if (p.n < 1) throw InvalidInput("n must be >= 1");
  if (p.m < 1 || p.m > p.n) throw InvalidInput("m must lie in [1, n]");
  if (!(p.M > 0.0)) throw InvalidInput("M must be positive");
  if (!(p.C > 0.0)) throw InvalidInput("C must be positive");
  if (!(p.delta > 0.0 && p.delta < 1.0)) throw InvalidInput("delta must lie in (0, 1)");
  return p.C * std::pow(p.delta, static_cast<double>(p.m)) / (p.M * std::sqrt(static_cast<double>(p.n)));
}

}  // namespace bpre
