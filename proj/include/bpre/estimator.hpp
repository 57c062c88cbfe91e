#pragma once

// Monte Carlo estimation: tail probabilities with exact binomial confidence
// intervals, absolute log-martingale increments, and geometric-decay fits.
//
// Trial t of every estimator reads stream (seed, t), so estimates depend only
// on (env, parameters, seed) and never on the worker count.

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "bpre/bounds.hpp"
#include "bpre/env_model.hpp"
#include "bpre/error.hpp"
#include "bpre/parallel.hpp"
#include "bpre/rng.hpp"
#include "bpre/simulator.hpp"

namespace bpre {

inline constexpr std::uint64_t kMinTrials = 1000;

struct Interval {
  double low = 0.0;
  double high = 1.0;
};

struct TailEstimate {
  std::uint64_t hits = 0;
  std::uint64_t trials = 0;
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  double level = 0.99;
  double threshold_x = 0.0;
  std::size_t n = 0;

  bool contains(double value) const { return ci_low <= value && value <= ci_high; }
};

// Two-sided equal-tailed Clopper-Pearson interval.
inline Interval binomial_ci(std::uint64_t hits, std::uint64_t trials, double level) {
  if (trials < 1) throw InvalidInput("binomial_ci needs at least one trial");
  if (hits > trials) throw InvalidInput("hits exceed trials");
  if (!(level > 0.0 && level < 1.0)) throw InvalidInput("confidence level must lie in (0, 1)");
  const double tail = (1.0 - level) / 2.0;
  const double h = static_cast<double>(hits);
  const double t = static_cast<double>(trials);
  Interval ci;
  if (hits == 0) {
    ci.low = 0.0;
    ci.high = -std::expm1(std::log(tail) / t);  // 1 - tail^(1/t) without cancellation
  } else if (hits == trials) {
    ci.low = std::pow(tail, 1.0 / t);
    ci.high = 1.0;
  } else {
    ci.low = boost::math::ibeta_inv(h, t - h + 1.0, tail);
    ci.high = boost::math::ibetac_inv(h + 1.0, t - h, tail);
  }
  return ci;
}

inline TailEstimate make_tail_estimate(std::uint64_t hits, std::uint64_t trials, double level, double x, std::size_t n) {
  const Interval ci = binomial_ci(hits, trials, level);
  return {hits, trials, static_cast<double>(hits) / static_cast<double>(trials), ci.low, ci.high, level, x, n};
}

namespace detail {

inline void require_trials(std::uint64_t trials) {
  if (trials < kMinTrials) throw InvalidInput("insufficient trials (need >= " + std::to_string(kMinTrials) + ")");
}

inline void require_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidInput("confidence level must lie in (0, 1)");
}

inline std::uint64_t sum_hits(const std::vector<std::uint64_t>& partials) {
  std::uint64_t total = 0;
  for (auto h : partials) total += h;
  return total;
}

// Per-generation quantities of one simulated path, in the forms used by the
// estimators: centred[k] = sum_{i<=k} (X_i - mu) and log_ratio[k] = log(Z_k / Pi_k).
struct PathStats {
  std::vector<double> centred;
  std::vector<double> log_ratio;
  std::vector<double> increments;  // log(Z_{k+1} / (m_k Z_k)), k = 0 .. n-1
  bool extinct = false;
};

inline PathStats simulate_path_stats(const EnvDistribution& env, std::size_t n, double mu, RandomStream& rng,
                                     const SimConfig& cfg) {
  PathStats out;
  out.centred.assign(n + 1, 0.0);
  out.log_ratio.assign(n + 1, 0.0);
  out.increments.assign(n, 0.0);
  const EnvSequence seq = sample_env_sequence(env, n, rng);
  double pi = 1.0;
  double prev_z = 1.0;
  bool approximate = false;
  const bool survived = run_population(env, seq, cfg, rng, approximate, [&](std::size_t k, const Population& z) {
    const double m = env.means()[seq.indices[k - 1]];
    const double zd = z.convert_to<double>();
    out.centred[k] = out.centred[k - 1] + (seq.log_means[k - 1] - mu);
    pi *= m;
    out.log_ratio[k] = std::log(zd / pi);
    out.increments[k - 1] = std::log(zd / (m * prev_z));
    prev_z = zd;
  });
  out.extinct = !survived;
  return out;
}

inline SimConfig estimator_config(const EnvDistribution& env, std::size_t n) {
  require_no_extinction(env);
  SimConfig cfg;
  cfg.n = n;
  cfg.record_full_path = false;
  validate(cfg);
  return cfg;
}

}  // namespace detail

// P((S_n - n mu)/M >= x) from environment sequences alone.
inline TailEstimate mc_tail_sn(const EnvDistribution& env, std::size_t n, double x, double M, std::uint64_t trials,
                               std::uint64_t seed, double level = 0.99, const ExecPolicy& exec = {}) {
  detail::require_trials(trials);
  detail::require_level(level);
  if (n < 1) throw InvalidInput("n must be >= 1");
  if (!(M > 0.0)) throw InvalidInput("M must be positive");
  const double mu = compute_moments(env).mu;
  std::vector<double> standardized;
  for (double X : env.log_means()) standardized.push_back((X - mu) / M);

  const auto partials = run_blocks<std::uint64_t>(trials, exec, [&](std::uint64_t first, std::uint64_t end) {
    std::uint64_t hits = 0;
    for (std::uint64_t t = first; t < end; ++t) {
      RandomStream rng = trial_stream(seed, t);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += standardized[draw_index(env.cumulative_masses(), rng)];
      if (sum >= x) ++hits;
    }
    return hits;
  });
  return make_tail_estimate(detail::sum_hits(partials), trials, level, x, n);
}

// P((log Z_n - n mu)/(n M) >= x) by full trajectory simulation.
inline TailEstimate mc_tail_logzn(const EnvDistribution& env, std::size_t n, double x, double M, std::uint64_t trials,
                                  std::uint64_t seed, double level = 0.99, const ExecPolicy& exec = {}) {
  detail::require_trials(trials);
  detail::require_level(level);
  if (!(M > 0.0)) throw InvalidInput("M must be positive");
  const SimConfig cfg = detail::estimator_config(env, n);
  const double mu = compute_moments(env).mu;
  const double scale = static_cast<double>(n) * M;

  const auto partials = run_blocks<std::uint64_t>(trials, exec, [&](std::uint64_t first, std::uint64_t end) {
    std::uint64_t hits = 0;
    for (std::uint64_t t = first; t < end; ++t) {
      RandomStream rng = trial_stream(seed, t);
      const auto path = detail::simulate_path_stats(env, n, mu, rng, cfg);
      if ((path.log_ratio[n] + path.centred[n]) / scale >= x) ++hits;
    }
    return hits;
  });
  return make_tail_estimate(detail::sum_hits(partials), trials, level, x, n);
}

struct IncrementStat {
  std::size_t k = 0;
  double mean = 0.0;    // mean of |log W_{k+1} - log W_k|
  double std_error = 0.0;
};

// E|log W_{k+1} - log W_k| for k = 0 .. n-1.
inline std::vector<IncrementStat> mc_logw_increments(const EnvDistribution& env, std::size_t n, std::uint64_t trials,
                                                     std::uint64_t seed, const ExecPolicy& exec = {}) {
  detail::require_trials(trials);
  if (n < 3) throw InvalidInput("increment study needs n >= 3");
  const SimConfig cfg = detail::estimator_config(env, n);
  const double mu = compute_moments(env).mu;

  struct Partial {
    std::vector<double> sum;
    std::vector<double> sum_sq;
  };
  const auto partials = run_blocks<Partial>(trials, exec, [&](std::uint64_t first, std::uint64_t end) {
    std::vector<CompensatedSum> sum(n), sum_sq(n);
    for (std::uint64_t t = first; t < end; ++t) {
      RandomStream rng = trial_stream(seed, t);
      const auto path = detail::simulate_path_stats(env, n, mu, rng, cfg);
      if (path.extinct) throw ModelError("trajectory " + std::to_string(t) + " went extinct");
      for (std::size_t k = 0; k < n; ++k) {
        const double a = std::abs(path.increments[k]);
        sum[k].add(a);
        sum_sq[k].add(a * a);
      }
    }
    Partial p;
    for (std::size_t k = 0; k < n; ++k) {
      p.sum.push_back(sum[k].value());
      p.sum_sq.push_back(sum_sq[k].value());
    }
    return p;
  });

  std::vector<IncrementStat> out;
  const double count = static_cast<double>(trials);
  for (std::size_t k = 0; k < n; ++k) {
    CompensatedSum s, s2;
    for (const auto& p : partials) {
      s.add(p.sum[k]);
      s2.add(p.sum_sq[k]);
    }
    const double mean = s.value() / count;
    const double var = std::max(0.0, (s2.value() - count * mean * mean) / (count - 1.0));
    out.push_back({k, mean, std::sqrt(var / count)});
  }
  return out;
}

struct DecayPoint {
  std::size_t k = 0;
  double mean = 0.0;
};

struct DecayFit {
  std::vector<DecayPoint> increments;  // points used by the fit
  double c_hat = 0.0;
  double delta_hat = 0.0;
  double r2 = 0.0;

  // Empirical candidate for the aggregated constant c / (1 - delta).
  double aggregated_constant() const {
    return delta_hat < 1.0 ? c_hat / (1.0 - delta_hat) : std::numeric_limits<double>::infinity();
  }
};

// Least squares of log(mean) on k; zero means are dropped, not clamped.
inline DecayFit fit_geometric_decay(std::span<const DecayPoint> points) {
  DecayFit fit;
  for (const auto& p : points) {
    if (p.mean > 0.0 && std::isfinite(p.mean)) fit.increments.push_back(p);
  }
  if (fit.increments.size() < 4) throw InvalidInput("geometric decay fit needs at least 4 positive means");

  const double count = static_cast<double>(fit.increments.size());
  double mean_k = 0.0, mean_y = 0.0;
  for (const auto& p : fit.increments) {
    mean_k += static_cast<double>(p.k);
    mean_y += std::log(p.mean);
  }
  mean_k /= count;
  mean_y /= count;
  double skk = 0.0, sky = 0.0, syy = 0.0;
  for (const auto& p : fit.increments) {
    const double dk = static_cast<double>(p.k) - mean_k;
    const double dy = std::log(p.mean) - mean_y;
    skk += dk * dk;
    sky += dk * dy;
    syy += dy * dy;
  }
  const double slope = sky / skk;
  const double intercept = mean_y - slope * mean_k;
  double ss_res = 0.0;
  for (const auto& p : fit.increments) {
    const double r = std::log(p.mean) - (intercept + slope * static_cast<double>(p.k));
    ss_res += r * r;
  }
  fit.delta_hat = std::exp(slope);
  fit.c_hat = std::exp(intercept);
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

inline DecayFit fit_geometric_decay(std::span<const IncrementStat> stats, std::size_t k_min, std::size_t k_max) {
  std::vector<DecayPoint> points;
  for (const auto& s : stats) {
    if (s.k >= k_min && s.k <= k_max) points.push_back({s.k, s.mean});
  }
  return fit_geometric_decay(points);
}

struct ConvergenceRow {
  std::size_t n = 0;
  double y = 0.0;
  TailEstimate estimate;
};

// P(|log Z_n / n - mu| >= y) for every (n, y); one set of trajectories of
// length max(n_values) is shared by all cells.
inline std::vector<ConvergenceRow> convergence_report(const EnvDistribution& env, std::span<const std::size_t> n_values,
                                                      std::span<const double> y_values, std::uint64_t trials,
                                                      std::uint64_t seed, double level = 0.95,
                                                      const ExecPolicy& exec = {}) {
  detail::require_trials(trials);
  detail::require_level(level);
  if (n_values.empty() || y_values.empty()) throw InvalidInput("convergence report needs n and y values");
  std::size_t n_max = 0;
  for (auto n : n_values) {
    if (n < 1) throw InvalidInput("n values must be >= 1");
    n_max = std::max(n_max, n);
  }
  for (double y : y_values) {
    if (!(y >= 0.0)) throw InvalidInput("y values must be >= 0");
  }
  const SimConfig cfg = detail::estimator_config(env, n_max);
  const double mu = compute_moments(env).mu;
  const std::size_t cells = n_values.size() * y_values.size();

  const auto partials = run_blocks<std::vector<std::uint64_t>>(trials, exec, [&](std::uint64_t first, std::uint64_t end) {
    std::vector<std::uint64_t> hits(cells, 0);
    for (std::uint64_t t = first; t < end; ++t) {
      RandomStream rng = trial_stream(seed, t);
      const auto path = detail::simulate_path_stats(env, n_max, mu, rng, cfg);
      for (std::size_t i = 0; i < n_values.size(); ++i) {
        const std::size_t n = n_values[i];
        const double dev = std::abs((path.log_ratio[n] + path.centred[n]) / static_cast<double>(n));
        for (std::size_t j = 0; j < y_values.size(); ++j) {
          if (dev >= y_values[j]) ++hits[i * y_values.size() + j];
        }
      }
    }
    return hits;
  });

  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    for (std::size_t j = 0; j < y_values.size(); ++j) {
      std::uint64_t h = 0;
      for (const auto& p : partials) h += p[i * y_values.size() + j];
      rows.push_back({n_values[i], y_values[j], make_tail_estimate(h, trials, level, y_values[j], n_values[i])});
    }
  }
  return rows;
}

inline void write_convergence_csv(std::ostream& out, std::span<const ConvergenceRow> rows) {
  out << "n,y,hits,trials,point,ci_low,ci_high\n";
  for (const auto& r : rows) {
    out << r.n << ',';
    write_real(out, r.y);
    out << ',' << r.estimate.hits << ',' << r.estimate.trials << ',';
    write_real(out, r.estimate.point);
    out << ',';
    write_real(out, r.estimate.ci_low);
    out << ',';
    write_real(out, r.estimate.ci_high);
    out << '\n';
  }
}

inline void write_increments_csv(std::ostream& out, std::span<const IncrementStat> stats) {
  out << "k,mean_abs_increment,stderr\n";
  for (const auto& s : stats) {
    out << s.k << ',';
    write_real(out, s.mean);
    out << ',';
    write_real(out, s.std_error);
    out << '\n';
  }
}

}  // namespace bpre
