#pragma once

// Random environment: a finite-support law over environment states, each
// state carrying a finite-support offspring p.m.f. Also computes the model
// moments of X = log m(xi) and machine-checks the standing assumptions
// (A1-A3, p_0 = 0, H1, H2) exactly on the support.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bpre/error.hpp"

namespace bpre {

inline constexpr double kMassTolerance = 1e-12;

// Shortest round-trip decimal form, used in messages.
inline std::string format_real(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double value) {
    const double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
      comp_ += (sum_ - t) + value;
    } else {
      comp_ += (value - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Offspring law p_k, k >= 0, stored as ascending (k, mass) pairs with
// positive mass only.
class OffspringPmf {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  OffspringPmf() = default;

  explicit OffspringPmf(const std::map<std::uint32_t, double>& masses) {
    CompensatedSum total;
    for (const auto& [k, mass] : masses) {
      if (!(mass >= 0.0) || !std::isfinite(mass)) {
        throw InvalidInput("negative offspring mass " + format_real(mass) + " at k=" + std::to_string(k));
      }
      total.add(mass);
      if (mass > 0.0) entries_.emplace_back(k, mass);
    }
    if (std::abs(total.value() - 1.0) > kMassTolerance) {
      throw InvalidInput("offspring masses sum to " + format_real(total.value()));
    }
    const bool has_offspring = std::any_of(entries_.begin(), entries_.end(),
                                           [](const Entry& e) { return e.first >= 1; });
    if (!has_offspring) {
      throw InvalidInput("offspring law puts no mass on k >= 1 (p_0 = 1)");
    }
  }

  std::span<const Entry> entries() const { return entries_; }

  double mass(std::uint32_t k) const {
    for (const auto& [key, mass] : entries_) {
      if (key == k) return mass;
    }
    return 0.0;
  }

  double p0() const { return mass(0); }
  std::uint32_t min_size() const { return entries_.front().first; }
  std::uint32_t max_size() const { return entries_.back().first; }

  // Support {1, 2}: every family has one or two children.
  bool is_binary() const {
    return std::all_of(entries_.begin(), entries_.end(),
                       [](const Entry& e) { return e.first == 1 || e.first == 2; });
  }

 private:
  std::vector<Entry> entries_;
};

struct EnvState {
  std::string label;
  OffspringPmf pmf;
};

// Conditional mean family size m(xi) = sum_k k p_k(xi).
inline double state_mean(const EnvState& state) {
  CompensatedSum sum;
  for (const auto& [k, mass] : state.pmf.entries()) sum.add(static_cast<double>(k) * mass);
  return sum.value();
}

enum class EnvModelKind { Generic, Binary };

// The environment law nu over finitely many states.
class EnvDistribution {
 public:
  struct Weighted {
    EnvState state;
    double mass;
  };

  EnvDistribution(EnvModelKind kind, std::vector<Weighted> states) : kind_(kind), states_(std::move(states)) {
    if (states_.empty()) throw InvalidInput("environment has no states");
    std::set<std::string> labels;
    CompensatedSum total;
    for (const auto& w : states_) {
      if (!(w.mass > 0.0) || w.mass > 1.0 || !std::isfinite(w.mass)) {
        throw InvalidInput("state '" + w.state.label + "' has invalid mass " + format_real(w.mass));
      }
      if (!labels.insert(w.state.label).second) {
        throw InvalidInput("duplicate state label '" + w.state.label + "'");
      }
      total.add(w.mass);
    }
    if (std::abs(total.value() - 1.0) > kMassTolerance) {
      throw InvalidInput("masses sum to " + format_real(total.value()));
    }
    double running = 0.0;
    for (const auto& w : states_) {
      running += w.mass;
      cumulative_.push_back(running);
      means_.push_back(state_mean(w.state));
      log_means_.push_back(std::log(means_.back()));
    }
  }

  EnvModelKind kind() const { return kind_; }
  std::size_t size() const { return states_.size(); }
  const Weighted& operator[](std::size_t i) const { return states_[i]; }
  std::span<const Weighted> states() const { return states_; }

  // Running sums of the state masses, for inversion sampling.
  std::span<const double> cumulative_masses() const { return cumulative_; }
  // m(xi) and X(xi) = log m(xi), per state.
  std::span<const double> means() const { return means_; }
  std::span<const double> log_means() const { return log_means_; }

  std::uint32_t min_offspring() const {
    std::uint32_t lo = std::numeric_limits<std::uint32_t>::max();
    for (const auto& w : states_) lo = std::min(lo, w.state.pmf.min_size());
    return lo;
  }
  std::uint32_t max_offspring() const {
    std::uint32_t hi = 0;
    for (const auto& w : states_) hi = std::max(hi, w.state.pmf.max_size());
    return hi;
  }

  std::optional<std::size_t> find(std::string_view label) const {
    for (std::size_t i = 0; i < states_.size(); ++i) {
      if (states_[i].state.label == label) return i;
    }
    return std::nullopt;
  }

 private:
  EnvModelKind kind_;
  std::vector<Weighted> states_;
  std::vector<double> cumulative_;
  std::vector<double> means_;
  std::vector<double> log_means_;
};

namespace detail {

inline double require_number(const nlohmann::json& node, const char* key, const std::string& where) {
  if (!node.is_object() || !node.contains(key) || !node.at(key).is_number()) {
    throw InvalidInput(where + ": missing numeric field '" + key + "'");
  }
  return node.at(key).get<double>();
}

inline std::uint32_t parse_family_size(const std::string& key) {
  std::uint32_t k = 0;
  const auto res = std::from_chars(key.data(), key.data() + key.size(), k);
  if (res.ec != std::errc() || res.ptr != key.data() + key.size() || key.empty()) {
    throw InvalidInput("offspring key '" + key + "' is not a nonnegative integer");
  }
  return k;
}

}  // namespace detail

// Parses the JSON environment document:
//   {"model":"binary","support":[{"p":..,"mass":..},..]}
//   {"model":"generic","states":[{"label":..,"mass":..,"offspring":{"k":..}},..]}
inline EnvDistribution parse_env_config(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(std::string("malformed environment document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("model") || !doc.at("model").is_string()) {
    throw InvalidInput("environment document needs a string field 'model'");
  }
  const auto model = doc.at("model").get<std::string>();
  std::vector<EnvDistribution::Weighted> states;

  if (model == "binary") {
    if (!doc.contains("support") || !doc.at("support").is_array()) {
      throw InvalidInput("binary model needs an array field 'support'");
    }
    for (const auto& point : doc.at("support")) {
      const double p = detail::require_number(point, "p", "support point");
      const double mass = detail::require_number(point, "mass", "support point");
      if (!(p > 0.0 && p < 1.0)) {
        throw InvalidInput("binary support point p=" + format_real(p) + " outside (0,1)");
      }
      // P(N=1) = p, P(N=2) = 1 - p.
      EnvState state{"p=" + format_real(p), OffspringPmf({{1u, p}, {2u, 1.0 - p}})};
      states.push_back({std::move(state), mass});
    }
    return EnvDistribution(EnvModelKind::Binary, std::move(states));
  }

  if (model == "generic") {
    if (!doc.contains("states") || !doc.at("states").is_array()) {
      throw InvalidInput("generic model needs an array field 'states'");
    }
    for (const auto& node : doc.at("states")) {
      if (!node.is_object() || !node.contains("label") || !node.at("label").is_string()) {
        throw InvalidInput("generic state needs a string field 'label'");
      }
      auto label = node.at("label").get<std::string>();
      const double mass = detail::require_number(node, "mass", "state '" + label + "'");
      if (!node.contains("offspring") || !node.at("offspring").is_object()) {
        throw InvalidInput("state '" + label + "' needs an object field 'offspring'");
      }
      std::map<std::uint32_t, double> masses;
      for (const auto& [key, value] : node.at("offspring").items()) {
        if (!value.is_number()) throw InvalidInput("state '" + label + "': offspring mass for '" + key + "' is not a number");
        masses[detail::parse_family_size(key)] = value.get<double>();
      }
      try {
        states.push_back({EnvState{label, OffspringPmf(masses)}, mass});
      } catch (const InvalidInput& e) {
        throw InvalidInput("state '" + label + "': " + e.what());
      }
    }
    return EnvDistribution(EnvModelKind::Generic, std::move(states));
  }

  throw InvalidInput("unknown model '" + model + "' (expected 'binary' or 'generic')");
}

struct StateMoments {
  std::string label;
  double mass;
  double m;  // conditional mean family size
  double X;  // log m
};

struct ModelMoments {
  double mu = 0.0;      // E[X_1]
  double sigma2 = 0.0;  // Var(X_1)
  double M_tight = 0.0; // ess-sup X_1 - mu
  std::optional<double> M_paper;
  std::vector<StateMoments> per_state;

  double sigma() const { return std::sqrt(sigma2); }
};

// mu, sigma^2, M_tight and per-state (m, X). A binary environment gets the
// preset M_paper = log 2 - mu unless `m_override` replaces it; any override
// must satisfy (X - mu)/M <= 1 on the whole support.
inline ModelMoments compute_moments(const EnvDistribution& env, std::optional<double> m_override = std::nullopt) {
  ModelMoments out;
  CompensatedSum mu;
  for (std::size_t i = 0; i < env.size(); ++i) {
    const double m = state_mean(env[i].state);
    if (!(m > 0.0)) throw InvalidInput("state '" + env[i].state.label + "' has non-positive mean");
    const double x = env.log_means()[i];
    out.per_state.push_back({env[i].state.label, env[i].mass, m, x});
    mu.add(env[i].mass * x);
  }
  out.mu = mu.value();

  CompensatedSum var;
  double sup_x = -std::numeric_limits<double>::infinity();
  for (const auto& s : out.per_state) {
    const double d = s.X - out.mu;
    var.add(s.mass * d * d);
    sup_x = std::max(sup_x, s.X);
  }
  out.sigma2 = var.value();
  out.M_tight = std::max(0.0, sup_x - out.mu);

  std::optional<double> m_paper = m_override;
  if (!m_paper && env.kind() == EnvModelKind::Binary) m_paper = std::log(2.0) - out.mu;
  if (m_paper) {
    if (!(*m_paper > 0.0) || !std::isfinite(*m_paper)) {
      throw InvalidInput("M override must be positive, got " + format_real(*m_paper));
    }
    for (const auto& s : out.per_state) {
      if ((s.X - out.mu) / *m_paper > 1.0) {
        throw InvalidInput("M=" + format_real(*m_paper) + " violates H1 at state '" + s.label +
                           "': (X - mu)/M = " + format_real((s.X - out.mu) / *m_paper));
      }
    }
    out.M_paper = m_paper;
  }
  return out;
}

struct AssumptionCheck {
  std::string check;  // A1, A2, A3, P0_ZERO, H1, H2
  bool pass = false;
  double value = 0.0;  // primary numeric witness
  std::map<std::string, double> witnesses;
  std::string message;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
  }
  const AssumptionCheck& at(std::string_view id) const {
    for (const auto& c : checks) {
      if (c.check == id) return c;
    }
    throw InvalidInput("no assumption check '" + std::string(id) + "'");
  }
};

// Evaluates every assumption exactly on the finite support. Failures are
// reported, never thrown.
inline AssumptionReport check_assumptions(const EnvDistribution& env, double p = 2.0, double q = 3.0) {
  if (!(p > 1.0)) throw InvalidInput("H2 exponent p must exceed 1");
  if (!(q > 2.0)) throw InvalidInput("H2 exponent q must exceed 2");
  const ModelMoments mm = compute_moments(env);

  double max_p0 = 0.0;
  CompensatedSum log_survival;  // E|log(1 - p_0)|
  CompensatedSum zlogz;         // E(Z_1 log+ Z_1 / m_0)
  CompensatedSum z_moment;      // E(Z_1/m_0)^p
  CompensatedSum log_moment;    // E|log m_0|^q
  for (std::size_t i = 0; i < env.size(); ++i) {
    const auto& w = env[i];
    const double m = mm.per_state[i].m;
    const double p0 = w.state.pmf.p0();
    max_p0 = std::max(max_p0, p0);
    log_survival.add(w.mass * std::abs(std::log1p(-p0)));
    CompensatedSum inner_zlogz;
    CompensatedSum inner_zp;
    for (const auto& [k, pk] : w.state.pmf.entries()) {
      const double kk = static_cast<double>(k);
      if (k > 1) inner_zlogz.add(pk * kk * std::log(kk));
      inner_zp.add(pk * std::pow(kk / m, p));
    }
    zlogz.add(w.mass * inner_zlogz.value() / m);
    z_moment.add(w.mass * inner_zp.value());
    log_moment.add(w.mass * std::pow(std::abs(std::log(m)), q));
  }

  AssumptionReport report;
  {
    AssumptionCheck c{"A1", false, mm.mu, {{"mu", mm.mu}, {"E|log(1-p0)|", log_survival.value()}}, ""};
    const bool finite_log = max_p0 < 1.0 && std::isfinite(log_survival.value());
    c.pass = mm.mu > 0.0 && std::isfinite(mm.mu) && finite_log;
    c.message = c.pass ? "0 < mu < inf and E|log(1-p0)| finite"
                       : (mm.mu > 0.0 ? "E|log(1-p0)| is not finite" : "mu = " + format_real(mm.mu) + " is not positive");
    report.checks.push_back(std::move(c));
  }
  {
    AssumptionCheck c{"A2", mm.sigma2 > 0.0 && std::isfinite(mm.sigma2), mm.sigma2, {{"sigma2", mm.sigma2}}, ""};
    c.message = c.pass ? "0 < sigma^2 < inf" : "sigma^2 = 0: environment carries no randomness in log m";
    report.checks.push_back(std::move(c));
  }
  {
    const double v = zlogz.value();
    AssumptionCheck c{"A3", std::isfinite(v), v, {{"E(Z1 log+ Z1 / m0)", v}}, ""};
    c.message = c.pass ? "E(Z1 log+ Z1 / m0) finite" : "E(Z1 log+ Z1 / m0) not finite";
    report.checks.push_back(std::move(c));
  }
  {
    AssumptionCheck c{"P0_ZERO", max_p0 == 0.0, max_p0, {{"max_p0", max_p0}}, ""};
    c.message = c.pass ? "p0 = 0 on every state" : "some state has p0 = " + format_real(max_p0) + " > 0";
    report.checks.push_back(std::move(c));
  }
  {
    AssumptionCheck c{"H1", mm.M_tight > 0.0 && std::isfinite(mm.M_tight), mm.M_tight, {{"M_tight", mm.M_tight}}, ""};
    if (mm.M_paper) c.witnesses["M_paper"] = *mm.M_paper;
    c.message = c.pass ? "(X - mu)/M <= 1 holds with M = M_tight > 0" : "no positive M_tight: X is degenerate";
    report.checks.push_back(std::move(c));
  }
  {
    const double zp = z_moment.value();
    const double lq = log_moment.value();
    AssumptionCheck c{"H2", std::isfinite(zp) && std::isfinite(lq), zp,
                      {{"p", p}, {"q", q}, {"E(Z1/m0)^p", zp}, {"E|log m0|^q", lq}}, ""};
    c.message = c.pass ? "E(Z1/m0)^p and E|log m0|^q finite" : "an H2 moment is not finite";
    report.checks.push_back(std::move(c));
  }
  return report;
}

inline nlohmann::json to_json(const AssumptionCheck& c) {
  return {{"check", c.check}, {"pass", c.pass}, {"value", c.value}, {"witnesses", c.witnesses}, {"message", c.message}};
}

inline nlohmann::json to_json(const AssumptionReport& report) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks) checks.push_back(to_json(c));
  return {{"all_pass", report.all_pass()}, {"checks", checks}};
}

inline nlohmann::json to_json(const ModelMoments& mm) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : mm.per_state) states.push_back({{"label", s.label}, {"mass", s.mass}, {"m", s.m}, {"X", s.X}});
  nlohmann::json out = {{"mu", mm.mu}, {"sigma2", mm.sigma2}, {"M_tight", mm.M_tight}, {"per_state", states}};
  out["M_paper"] = mm.M_paper ? nlohmann::json(*mm.M_paper) : nlohmann::json(nullptr);
  return out;
}

}  // namespace bpre
