#pragma once

// Brute-force ground truth for small instances: complete enumeration of the
// environment sequences for S_n, and generation-wise dynamic programming over
// the integer population for Z_n. No tails are truncated.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bpre/env_model.hpp"
#include "bpre/error.hpp"

namespace bpre {

inline constexpr std::uint64_t kEnumerationCap = 1'000'000;
inline constexpr std::uint64_t kPopulationCap = std::uint64_t{1} << 20;

struct WeightedSequence {
  std::vector<std::size_t> indices;
  double probability = 0.0;
};

struct ExactPmf {
  std::vector<std::pair<std::uint64_t, double>> support;  // strictly increasing values

  double total() const {
    CompensatedSum s;
    for (const auto& [z, p] : support) s.add(p);
    return s.value();
  }
  double mean() const {
    CompensatedSum s;
    for (const auto& [z, p] : support) s.add(static_cast<double>(z) * p);
    return s.value();
  }
  double probability(std::uint64_t z) const {
    const auto it = std::lower_bound(support.begin(), support.end(), std::make_pair(z, 0.0),
                                     [](const auto& a, const auto& b) { return a.first < b.first; });
    return (it != support.end() && it->first == z) ? it->second : 0.0;
  }
};

// Number of sequences of length n; throws when above the enumeration cap.
inline std::uint64_t enumeration_size(const EnvDistribution& env, std::size_t n) {
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    count *= env.size();
    if (count > kEnumerationCap) {
      throw CapExceeded(std::to_string(env.size()) + "^" + std::to_string(n) +
                        " environment sequences exceed the enumeration cap of 10^6");
    }
  }
  return count;
}

// Visits every environment sequence of length n in lexicographic order of
// state indices (last position fastest) with its product probability.
template <class Fn>
void for_each_env_sequence(const EnvDistribution& env, std::size_t n, Fn&& fn) {
  if (n < 1) throw InvalidInput("sequence length must be >= 1");
  const std::uint64_t count = enumeration_size(env, n);
  WeightedSequence seq{std::vector<std::size_t>(n, 0), 0.0};
  for (std::uint64_t c = 0; c < count; ++c) {
    double prob = 1.0;
    for (std::size_t idx : seq.indices) prob *= env[idx].mass;
    seq.probability = prob;
    fn(std::as_const(seq));
    for (std::size_t pos = n; pos-- > 0;) {
      if (++seq.indices[pos] < env.size()) break;
      seq.indices[pos] = 0;
    }
  }
}

inline std::vector<WeightedSequence> enumerate_env_sequences(const EnvDistribution& env, std::size_t n) {
  std::vector<WeightedSequence> out;
  out.reserve(enumeration_size(env, n));
  for_each_env_sequence(env, n, [&](const WeightedSequence& s) { out.push_back(s); });
  return out;
}

// Exact P((S_n - n mu)/M >= x), summing the standardized increments
// (X - mu)/M state by state.
inline double exact_sn_tail(const EnvDistribution& env, std::size_t n, double x, double M, double mu) {
  if (!(M > 0.0)) throw InvalidInput("M must be positive");
  std::vector<double> standardized;
  for (double X : env.log_means()) standardized.push_back((X - mu) / M);
  CompensatedSum tail;
  for_each_env_sequence(env, n, [&](const WeightedSequence& s) {
    double sum = 0.0;
    for (std::size_t idx : s.indices) sum += standardized[idx];
    if (sum >= x) tail.add(s.probability);
  });
  return tail.value();
}

namespace detail {

// Binomial(trials, p) masses, built outward from the mode and normalized.
inline std::vector<double> binomial_pmf(std::uint64_t trials, double p) {
  std::vector<double> w(trials + 1, 0.0);
  if (p <= 0.0) {
    w[0] = 1.0;
    return w;
  }
  if (p >= 1.0) {
    w[trials] = 1.0;
    return w;
  }
  const double odds = p / (1.0 - p);
  const auto mode = std::min<std::uint64_t>(trials, static_cast<std::uint64_t>(std::floor((trials + 1) * p)));
  w[mode] = 1.0;
  for (std::uint64_t j = mode + 1; j <= trials; ++j) {
    w[j] = w[j - 1] * (static_cast<double>(trials - j + 1) / static_cast<double>(j)) * odds;
  }
  for (std::uint64_t j = mode; j-- > 0;) {
    w[j] = w[j + 1] * (static_cast<double>(j + 1) / static_cast<double>(trials - j)) / odds;
  }
  CompensatedSum total;
  for (double v : w) total.add(v);
  const double norm = total.value();
  for (double& v : w) v /= norm;
  return w;
}

// Dense law over populations 0 .. size-1.
using DenseLaw = std::vector<double>;

// Law of Z_{k+1} from the law of Z_k under one environment state.
inline DenseLaw step_law(const DenseLaw& law, const OffspringPmf& pmf) {
  const std::uint64_t max_z = law.size() - 1;
  const std::uint64_t out_size = max_z * pmf.max_size() + 1;
  std::vector<CompensatedSum> acc(out_size);

  if (pmf.is_binary()) {
    // z + Binomial(z, p_2)
    const double p2 = pmf.mass(2);
    for (std::uint64_t z = 1; z <= max_z; ++z) {
      if (law[z] == 0.0) continue;
      const auto b = binomial_pmf(z, p2);
      for (std::uint64_t j = 0; j <= z; ++j) acc[z + j].add(law[z] * b[j]);
    }
  } else {
    // z-fold convolution powers of the offspring law, built incrementally.
    std::vector<double> power{1.0};
    for (std::uint64_t z = 1; z <= max_z; ++z) {
      std::vector<CompensatedSum> next(power.size() + pmf.max_size());
      for (std::size_t i = 0; i < power.size(); ++i) {
        if (power[i] == 0.0) continue;
        for (const auto& [k, mass] : pmf.entries()) next[i + k].add(power[i] * mass);
      }
      power.assign(next.size(), 0.0);
      for (std::size_t i = 0; i < next.size(); ++i) power[i] = next[i].value();
      if (law[z] == 0.0) continue;
      for (std::size_t i = 0; i < power.size(); ++i) {
        if (power[i] != 0.0) acc[i].add(law[z] * power[i]);
      }
    }
  }
  DenseLaw out(out_size, 0.0);
  for (std::size_t i = 0; i < out_size; ++i) out[i] = acc[i].value();
  return out;
}

inline void require_oracle_support(const OffspringPmf& pmf, const std::string& label) {
  if (pmf.p0() > 0.0) {
    throw InvalidInput("state '" + label + "' has p0 > 0; the oracle needs offspring support in {1, ..., k_max}");
  }
}

inline ExactPmf to_exact_pmf(const DenseLaw& law) {
  ExactPmf out;
  for (std::size_t z = 0; z < law.size(); ++z) {
    if (law[z] > 0.0) out.support.emplace_back(z, law[z]);
  }
  return out;
}

inline void check_population_cap(std::uint64_t max_population, std::uint64_t cap) {
  if (max_population > cap) {
    throw CapExceeded("largest reachable population " + std::to_string(max_population) +
                      " exceeds the oracle cap " + std::to_string(cap));
  }
}

// Largest number of dense law entries held by one DP level.
inline constexpr std::uint64_t kLevelEntryCap = std::uint64_t{1} << 23;

// Forward DP over count classes. Environments are i.i.d., so the sequences
// sharing a multiset of states can be carried as one weighted law: for each
// class c the DP holds sum over sequences in c of P(sequence) * law(Z_k | sequence).
// Pi_n and sum_i (X_i - mu) depend on the counts only.
// leaf(weighted_law, pi_n, centred_sum) is called once per class at depth n.
template <class Leaf>
void walk_count_classes(const EnvDistribution& env, std::size_t n, double mu, std::uint64_t cap, Leaf&& leaf) {
  if (n < 1) throw InvalidInput("n must be >= 1");
  std::uint64_t max_population = 1;
  for (std::size_t i = 0; i < n; ++i) {
    max_population *= env.max_offspring();
    check_population_cap(max_population, cap);
  }
  for (const auto& w : env.states()) require_oracle_support(w.state.pmf, w.state.label);

  using Counts = std::vector<std::uint32_t>;
  std::map<Counts, DenseLaw> level{{Counts(env.size(), 0), DenseLaw{0.0, 1.0}}};
  for (std::size_t k = 0; k < n; ++k) {
    std::map<Counts, std::vector<CompensatedSum>> next;
    for (const auto& [counts, law] : level) {
      for (std::size_t s = 0; s < env.size(); ++s) {
        const DenseLaw stepped = step_law(law, env[s].state.pmf);
        Counts c = counts;
        ++c[s];
        auto& acc = next[c];
        if (acc.size() < stepped.size()) acc.resize(stepped.size());
        for (std::size_t z = 0; z < stepped.size(); ++z) {
          if (stepped[z] != 0.0) acc[z].add(env[s].mass * stepped[z]);
        }
      }
    }
    std::uint64_t entries = 0;
    for (const auto& [c, acc] : next) entries += acc.size();
    if (entries > kLevelEntryCap) {
      throw CapExceeded("exact DP level " + std::to_string(k + 1) + " needs " + std::to_string(entries) +
                        " law entries (cap " + std::to_string(kLevelEntryCap) + ")");
    }
    level.clear();
    for (auto& [c, acc] : next) {
      DenseLaw law(acc.size());
      for (std::size_t z = 0; z < acc.size(); ++z) law[z] = acc[z].value();
      level.emplace(c, std::move(law));
    }
  }

  for (const auto& [counts, law] : level) {
    double pi = 1.0;
    double centred = 0.0;
    for (std::size_t s = 0; s < env.size(); ++s) {
      for (std::uint32_t i = 0; i < counts[s]; ++i) pi *= env.means()[s];
      centred += static_cast<double>(counts[s]) * (env.log_means()[s] - mu);
    }
    leaf(law, pi, centred);
  }
}

// Rough operation count of walk_count_classes, for callers that want to
// skip the oracle when it would be slow.
inline double oracle_work(const EnvDistribution& env, std::size_t n) {
  double work = 0.0;
  double classes = 1.0;  // C(k + S - 1, S - 1)
  double max_z = 1.0;
  const double states = static_cast<double>(env.size());
  const double k_max = static_cast<double>(env.max_offspring());
  for (std::size_t k = 0; k < n; ++k) {
    work += classes * states * max_z * max_z * k_max;
    classes = classes * (static_cast<double>(k) + states) / (static_cast<double>(k) + 1.0);
    max_z *= k_max;
  }
  return work;
}

}  // namespace detail

// Exact law of Z_n given a fixed environment sequence.
inline ExactPmf exact_population_distribution(std::span<const EnvState> env_seq, std::uint64_t cap = kPopulationCap) {
  std::uint64_t max_population = 1;
  for (const auto& state : env_seq) {
    detail::require_oracle_support(state.pmf, state.label);
    max_population *= state.pmf.max_size();
    detail::check_population_cap(max_population, cap);
  }
  detail::DenseLaw law{0.0, 1.0};
  for (const auto& state : env_seq) law = detail::step_law(law, state.pmf);
  return detail::to_exact_pmf(law);
}

// Annealed law of Z_n: the exact quenched laws mixed over all sequences.
inline ExactPmf exact_population_mixture(const EnvDistribution& env, std::size_t n, std::uint64_t cap = kPopulationCap) {
  std::vector<CompensatedSum> acc;
  detail::walk_count_classes(env, n, 0.0, cap, [&](const detail::DenseLaw& law, double, double) {
    if (acc.size() < law.size()) acc.resize(law.size());
    for (std::size_t z = 0; z < law.size(); ++z) {
      if (law[z] != 0.0) acc[z].add(law[z]);
    }
  });
  detail::DenseLaw mixed(acc.size());
  for (std::size_t z = 0; z < acc.size(); ++z) mixed[z] = acc[z].value();
  return detail::to_exact_pmf(mixed);
}

// Exact P((log Z_n - n mu)/(n M) >= x). The statistic is evaluated as
// (log(Z_n / Pi_n) + sum_i (X_i - mu)) / (n M), so a deterministic model
// sits exactly at 0.
inline double exact_logZn_tail(const EnvDistribution& env, std::size_t n, double x, const ModelMoments& moments,
                               double M, std::uint64_t cap = kPopulationCap) {
  if (!(M > 0.0)) throw InvalidInput("M must be positive");
  const double scale = static_cast<double>(n) * M;
  CompensatedSum tail;
  detail::walk_count_classes(env, n, moments.mu, cap, [&](const detail::DenseLaw& law, double pi, double centred) {
    for (std::size_t z = 1; z < law.size(); ++z) {
      if (law[z] == 0.0) continue;
      const double stat = (std::log(static_cast<double>(z) / pi) + centred) / scale;
      if (stat >= x) tail.add(law[z]);
    }
  });
  return tail.value();
}

// E W_n = sum over sequences of P(sequence) * E[Z_n | sequence] / Pi_n.
inline double exact_EWn(const EnvDistribution& env, std::size_t n, std::uint64_t cap = kPopulationCap) {
  CompensatedSum total;
  detail::walk_count_classes(env, n, 0.0, cap, [&](const detail::DenseLaw& law, double pi, double) {
    CompensatedSum mean;
    for (std::size_t z = 1; z < law.size(); ++z) mean.add(static_cast<double>(z) * law[z]);
    total.add(mean.value() / pi);
  });
  return total.value();
}

}  // namespace bpre
