#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <map>

#include "bpre/env_model.hpp"
#include "bpre/error.hpp"
#include "bpre/exact_oracle.hpp"
#include "bpre/simulator.hpp"

namespace {

using namespace bpre;

const EnvDistribution& binary() {
  static const auto env =
      parse_env_config(R"({"model":"binary","support":[{"p":0.25,"mass":0.5},{"p":0.75,"mass":0.5}]})");
  return env;
}

const EnvDistribution& doubling() {
  static const auto env =
      parse_env_config(R"({"model":"generic","states":[{"label":"s","mass":1.0,"offspring":{"2":1.0}}]})");
  return env;
}

const EnvDistribution& three_state() {
  static const auto env = parse_env_config(R"({"model":"generic","states":[
      {"label":"lean","mass":0.3,"offspring":{"1":0.7,"2":0.3}},
      {"label":"mixed","mass":0.5,"offspring":{"1":0.25,"2":0.375,"3":0.25,"4":0.125}},
      {"label":"rich","mass":0.2,"offspring":{"2":0.5,"3":0.5}}]})");
  return env;
}

const EnvState kHalf{"half", OffspringPmf({{1, 0.5}, {2, 0.5}})};

TEST(Enumerate, CountsAndClosure) {
  const auto seqs = enumerate_env_sequences(binary(), 3);
  ASSERT_EQ(seqs.size(), 8u);
  double total = 0.0;
  for (const auto& s : seqs) total += s.probability;
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_EQ(seqs.front().indices, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(seqs.back().indices, (std::vector<std::size_t>{1, 1, 1}));

  const auto single = enumerate_env_sequences(doubling(), 5);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].probability, 1.0);
}

TEST(Enumerate, CapEnforced) {
  EXPECT_THROW(enumerate_env_sequences(binary(), 25), CapExceeded);
  EXPECT_EQ(enumeration_size(binary(), 19), 524288u);
}

TEST(ExactSnTail, TrivialCases) {
  const auto mm = compute_moments(binary());
  EXPECT_NEAR(exact_sn_tail(binary(), 5, -1e9, mm.M_tight, mm.mu), 1.0, 1e-15);
  EXPECT_EQ(exact_sn_tail(doubling(), 7, 0.0, 1.0, std::log(2.0)), 1.0);
}

TEST(ExactSnTail, StandardizedIncrementsAreSigns) {
  // With M_tight the two states standardize to +1 and -1, so the sum is 2j - n
  // for j draws of the larger mean.
  const auto mm = compute_moments(binary());
  EXPECT_EQ(exact_sn_tail(binary(), 6, 6.0, mm.M_tight, mm.mu), 0.015625);
  EXPECT_EQ(exact_sn_tail(binary(), 6, 1.0, mm.M_tight, mm.mu), 22.0 / 64.0);
  EXPECT_EQ(exact_sn_tail(binary(), 6, 6.0 + 1e-9, mm.M_tight, mm.mu), 0.0);
}

TEST(ExactPopulation, SingleStep) {
  const std::vector<EnvState> seq{kHalf};
  const auto pmf = exact_population_distribution(seq);
  ASSERT_EQ(pmf.support.size(), 2u);
  EXPECT_EQ(pmf.probability(1), 0.5);
  EXPECT_EQ(pmf.probability(2), 0.5);
}

TEST(ExactPopulation, TwoSteps) {
  const std::vector<EnvState> seq{kHalf, kHalf};
  const auto pmf = exact_population_distribution(seq);
  EXPECT_NEAR(pmf.probability(1), 0.25, 1e-16);
  EXPECT_NEAR(pmf.probability(2), 0.375, 1e-16);
  EXPECT_NEAR(pmf.probability(3), 0.25, 1e-16);
  EXPECT_NEAR(pmf.probability(4), 0.125, 1e-16);
  EXPECT_NEAR(pmf.total(), 1.0, 1e-15);
}

TEST(ExactPopulation, DoublingIsPointMass) {
  const std::vector<EnvState> seq(4, doubling()[0].state);
  const auto pmf = exact_population_distribution(seq);
  ASSERT_EQ(pmf.support.size(), 1u);
  EXPECT_EQ(pmf.support[0].first, 16u);
  EXPECT_EQ(pmf.support[0].second, 1.0);
}

TEST(ExactPopulation, ClosureAndMeanChain) {
  for (const EnvDistribution* env : {&binary(), &three_state()}) {
    const std::size_t n = env == &binary() ? 6 : 4;
    for_each_env_sequence(*env, n, [&](const WeightedSequence& s) {
      std::vector<EnvState> states;
      double pi = 1.0;
      for (auto idx : s.indices) {
        states.push_back((*env)[idx].state);
        pi *= state_mean((*env)[idx].state);
      }
      const auto pmf = exact_population_distribution(states);
      EXPECT_NEAR(pmf.total(), 1.0, 1e-10);
      EXPECT_NEAR(pmf.mean() / pi, 1.0, 1e-10);
    });
    EXPECT_NEAR(exact_population_mixture(*env, n).total(), 1.0, 1e-10);
  }
}

TEST(ExactPopulation, GeneralConvolutionMatchesHandComputation) {
  // Two individuals, offspring {1:0.25, 2:0.375, 3:0.25, 4:0.125}: self-convolution.
  const auto& state = three_state()[1].state;
  const std::vector<EnvState> seq{EnvState{"two", OffspringPmf({{2, 1.0}})}, state};
  const auto pmf = exact_population_distribution(seq);
  const double p[5] = {0.0, 0.25, 0.375, 0.25, 0.125};
  for (int z = 2; z <= 8; ++z) {
    double expected = 0.0;
    for (int a = 1; a <= 4; ++a) {
      if (z - a >= 1 && z - a <= 4) expected += p[a] * p[z - a];
    }
    EXPECT_NEAR(pmf.probability(z), expected, 1e-16) << z;
  }
}

TEST(ExactPopulation, CapsAndSupportChecks) {
  const std::vector<EnvState> long_seq(21, kHalf);
  EXPECT_THROW(exact_population_distribution(long_seq), CapExceeded);
  EXPECT_THROW(exact_population_mixture(binary(), 21), CapExceeded);
  const std::vector<EnvState> extinct{EnvState{"e", OffspringPmf({{0, 0.5}, {2, 0.5}})}};
  EXPECT_THROW(exact_population_distribution(extinct), InvalidInput);
}

TEST(ExactLogZnTail, ImpossibleAboveThree) {
  const auto mm = compute_moments(binary());
  for (std::size_t n = 1; n <= 6; ++n) {
    EXPECT_EQ(exact_logZn_tail(binary(), n, 3.0, mm, *mm.M_paper), 0.0);
    EXPECT_EQ(exact_logZn_tail(binary(), n, 3.0, mm, mm.M_tight), 0.0);
  }
}

TEST(ExactLogZnTail, DoublingAtZero) {
  const auto mm = compute_moments(doubling());
  EXPECT_EQ(exact_logZn_tail(doubling(), 4, 0.0, mm, 0.7), 1.0);
  EXPECT_EQ(exact_logZn_tail(doubling(), 4, 1e-12, mm, 0.7), 0.0);
}

TEST(ExactLogZnTail, MatchesBruteForceDefinition) {
  // Direct evaluation from the per-sequence laws, with the textbook statistic.
  const auto mm = compute_moments(binary());
  const std::size_t n = 4;
  const double x = 0.5;
  double brute = 0.0;
  for_each_env_sequence(binary(), n, [&](const WeightedSequence& s) {
    std::vector<EnvState> states;
    for (auto idx : s.indices) states.push_back(binary()[idx].state);
    for (const auto& [z, p] : exact_population_distribution(states).support) {
      if ((std::log(static_cast<double>(z)) - n * mm.mu) / (n * mm.M_tight) >= x) brute += s.probability * p;
    }
  });
  const double value = exact_logZn_tail(binary(), n, x, mm, mm.M_tight);
  EXPECT_NEAR(value, brute, 1e-12);
  EXPECT_GT(value, 0.0);
  EXPECT_LT(value, 1.0);
}

TEST(ExactEWn, MartingaleIdentity) {
  EXPECT_NEAR(exact_EWn(binary(), 1), 1.0, 1e-15);
  EXPECT_NEAR(exact_EWn(three_state(), 1), 1.0, 1e-15);
  for (std::size_t n = 1; n <= 6; ++n) EXPECT_NEAR(exact_EWn(binary(), n), 1.0, 1e-9) << n;
  EXPECT_NEAR(exact_EWn(three_state(), 4), 1.0, 1e-9);
  EXPECT_EQ(exact_EWn(doubling(), 10), 1.0);
}

TEST(ExactMixture, SimulatorHistogramFits) {
  // Pearson goodness of fit of 10^5 simulated Z_6 against the exact mixture.
  const std::size_t n = 6;
  const auto exact = exact_population_mixture(binary(), n);
  std::map<std::uint64_t, double> counts;
  const int trials = 100000;
  SimConfig cfg;
  cfg.n = n;
  cfg.seed = 31;
  cfg.record_full_path = false;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng = trial_stream(cfg.seed, t);
    counts[simulate_trajectory(binary(), cfg, rng).last().Z.convert_to<std::uint64_t>()] += 1.0;
  }
  double stat = 0.0, obs = 0.0, expct = 0.0;
  int cells = 0;
  for (const auto& [z, p] : exact.support) {
    obs += counts.count(z) ? counts[z] : 0.0;
    expct += p * trials;
    if (expct >= 5.0) {
      stat += (obs - expct) * (obs - expct) / expct;
      obs = expct = 0.0;
      ++cells;
    }
  }
  if (expct > 0.0) stat += (obs - expct) * (obs - expct) / expct;
  const double critical = boost::math::quantile(boost::math::chi_squared(cells - 1), 0.999);
  EXPECT_LT(stat, critical);
}

}  // namespace
