#pragma once

// Exact trajectories of a branching process in i.i.d. random environment.
//
// Draw order within one stream (part of the replay contract):
//   1. n categorical draws for xi_0 .. xi_{n-1} (one uniform each, inversion
//      over the cumulative state masses in declaration order);
//   2. for k = 0 .. n-1 the offspring draws of generation k, as a chain of
//      conditional binomials over the family sizes in ascending order. States
//      with support in {1, 2} use Z_{k+1} = Z_k + Binomial(Z_k, p_2).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "bpre/env_model.hpp"
#include "bpre/error.hpp"
#include "bpre/rng.hpp"
#include "bpre/sampling.hpp"

namespace bpre {

struct EnvSequence {
  std::vector<std::size_t> indices;  // positions in the EnvDistribution
  std::vector<std::string> labels;
  std::vector<double> log_means;     // X_{i+1} = log m(xi_i)

  std::size_t size() const { return indices.size(); }
};

struct SimConfig {
  std::size_t n = 1;
  std::uint64_t seed = 0;
  std::uint64_t exact_sampling_threshold = kDefaultExactThreshold;
  bool record_full_path = true;
  unsigned population_cap_log2 = 512;  // abort once Z exceeds 2^cap
  bool allow_extinction = false;       // permit states with p_0 > 0
};

struct GenerationRecord {
  std::size_t gen = 0;
  Population Z;
  double S = 0.0;     // sum_{i<=gen} X_i
  double logW = 0.0;  // log Z - S
};

struct Trajectory {
  std::vector<GenerationRecord> records;
  EnvSequence env;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  bool approx_sampling_used = false;
  bool extinct = false;

  const GenerationRecord& last() const { return records.back(); }
};

// Natural log of an arbitrary-precision positive integer.
inline double log_population(const Population& z) {
  if (z <= 0) return -std::numeric_limits<double>::infinity();
  const std::size_t bits = boost::multiprecision::msb(z);
  if (bits < 1000) return std::log(z.convert_to<double>());
  const std::size_t shift = bits - 60;
  const Population top = z >> shift;
  return std::log(top.convert_to<double>()) + static_cast<double>(shift) * std::log(2.0);
}

inline void validate(const SimConfig& cfg) {
  if (cfg.n < 1) throw InvalidInput("simulation horizon n must be >= 1");
  if (cfg.exact_sampling_threshold < 1) throw InvalidInput("exact sampling threshold must be >= 1");
  if (cfg.population_cap_log2 < 1 || cfg.population_cap_log2 > 1000) {
    throw InvalidInput("population cap exponent must lie in [1, 1000]");
  }
}

inline void require_no_extinction(const EnvDistribution& env) {
  for (const auto& w : env.states()) {
    if (w.state.pmf.p0() > 0.0) {
      throw InvalidInput("state '" + w.state.label + "' has p0 > 0; extinction is outside the supported regime");
    }
  }
}

inline EnvSequence sample_env_sequence(const EnvDistribution& env, std::size_t n, RandomStream& rng) {
  if (n < 1) throw InvalidInput("environment sequence length must be >= 1");
  EnvSequence seq;
  seq.indices.reserve(n);
  seq.labels.reserve(n);
  seq.log_means.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = draw_index(env.cumulative_masses(), rng);
    seq.indices.push_back(idx);
    seq.labels.push_back(env[idx].state.label);
    seq.log_means.push_back(env.log_means()[idx]);
  }
  return seq;
}

// One generation: the sum of z i.i.d. family sizes drawn from `state`.
inline Population step_population(const Population& z, const EnvState& state, RandomStream& rng,
                                  std::uint64_t threshold, bool& approximate) {
  if (z <= 0) return Population(0);
  const auto& pmf = state.pmf;
  if (pmf.is_binary()) {
    return z + binomial_draw(z, pmf.mass(2), rng, threshold, approximate);
  }
  Population total = 0;
  Population remaining = z;
  double remaining_mass = 1.0;
  const auto entries = pmf.entries();
  for (std::size_t i = 0; i + 1 < entries.size() && remaining > 0; ++i) {
    const auto [k, mass] = entries[i];
    const double p = remaining_mass > 0.0 ? std::min(1.0, mass / remaining_mass) : 1.0;
    const Population count = binomial_draw(remaining, p, rng, threshold, approximate);
    total += count * k;
    remaining -= count;
    remaining_mass -= mass;
  }
  total += remaining * entries.back().first;
  return total;
}

inline Population step_population(const Population& z, const EnvState& state, RandomStream& rng,
                                  std::uint64_t threshold = kDefaultExactThreshold) {
  bool approximate = false;
  return step_population(z, state, rng, threshold, approximate);
}

// Runs the population forward along a fixed environment sequence, calling
// on_generation(k, Z_k) for k = 1 .. n. Returns false on extinction.
template <class OnGeneration>
bool run_population(const EnvDistribution& env, const EnvSequence& seq, const SimConfig& cfg, RandomStream& rng,
                    bool& approximate, OnGeneration&& on_generation) {
  const Population cap = Population(1) << cfg.population_cap_log2;
  Population z = 1;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    z = step_population(z, env[seq.indices[k]].state, rng, cfg.exact_sampling_threshold, approximate);
    if (z > cap) {
      throw CapExceeded("population exceeded 2^" + std::to_string(cfg.population_cap_log2) + " at generation " +
                        std::to_string(k + 1));
    }
    on_generation(k + 1, z);
    if (z == 0) return false;
  }
  return true;
}

inline Trajectory simulate_trajectory(const EnvDistribution& env, const SimConfig& cfg, RandomStream& rng) {
  validate(cfg);
  if (!cfg.allow_extinction) require_no_extinction(env);

  Trajectory traj;
  traj.seed = rng.seed();
  traj.stream = rng.stream();
  traj.env = sample_env_sequence(env, cfg.n, rng);
  traj.records.push_back({0, Population(1), 0.0, 0.0});

  double S = 0.0;
  const bool survived = run_population(env, traj.env, cfg, rng, traj.approx_sampling_used,
                                       [&](std::size_t k, const Population& z) {
                                         S += traj.env.log_means[k - 1];
                                         const double logW = z > 0 ? log_population(z) - S
                                                                   : -std::numeric_limits<double>::infinity();
                                         if (cfg.record_full_path || k == cfg.n || z == 0) {
                                           traj.records.push_back({k, z, S, logW});
                                         }
                                       });
  traj.extinct = !survived;
  return traj;
}

inline Trajectory simulate_trajectory(const EnvDistribution& env, const SimConfig& cfg) {
  RandomStream rng = trial_stream(cfg.seed, 0);
  return simulate_trajectory(env, cfg, rng);
}

struct QuenchedReport {
  double mean_ratio = 0.0;
  double stderr_ratio = 0.0;
  std::size_t replicas = 0;
  Population Z_k;
};

// Fixes the environment, runs one path to generation k, then draws `replicas`
// independent continuations Z_{k+1} from the common Z_k and reports the mean
// of W_{k+1}/W_k = Z_{k+1}/(m_k Z_k).
inline QuenchedReport quenched_martingale_check(const EnvDistribution& env, const EnvSequence& seq, std::size_t k,
                                                std::size_t replicas, RandomStream& rng,
                                                std::uint64_t threshold = kDefaultExactThreshold) {
  if (k >= seq.size()) throw InvalidInput("generation k must be below the environment sequence length");
  if (replicas < 100) throw InvalidInput("insufficient replicas (need >= 100)");

  bool approximate = false;
  Population z = 1;
  for (std::size_t i = 0; i < k; ++i) {
    z = step_population(z, env[seq.indices[i]].state, rng, threshold, approximate);
  }
  const EnvState& state = env[seq.indices[k]].state;
  const double scale = state_mean(state) * z.convert_to<double>();

  CompensatedSum sum;
  CompensatedSum sum_sq;
  for (std::size_t r = 0; r < replicas; ++r) {
    const double ratio = step_population(z, state, rng, threshold, approximate).convert_to<double>() / scale;
    sum.add(ratio);
    sum_sq.add(ratio * ratio);
  }
  const double count = static_cast<double>(replicas);
  const double mean = sum.value() / count;
  const double var = std::max(0.0, (sum_sq.value() - count * mean * mean) / (count - 1.0));
  return {mean, std::sqrt(var / count), replicas, z};
}

inline void write_real(std::ostream& out, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  out << buf;
}

// CSV, one row per recorded generation: gen,Z,log2_Z,S,logW
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "gen,Z,log2_Z,S,logW\n";
  for (const auto& r : traj.records) {
    out << r.gen << ',' << r.Z.str() << ',';
    write_real(out, log_population(r.Z) / std::log(2.0));
    out << ',';
    write_real(out, r.S);
    out << ',';
    write_real(out, r.logW);
    out << '\n';
  }
}

}  // namespace bpre
