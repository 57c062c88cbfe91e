#pragma once

// Subcommand implementations behind the `bpre` executable. Each command takes
// a plain argument struct and writes to caller-supplied streams, so the
// executable is a thin CLI11 shell and tests can drive commands in-process.
//
// Exit codes: 0 pass, 1 verdict/assumption failure, 2 usage/parse error,
// 3 resource cap.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bpre/bounds.hpp"
#include "bpre/env_model.hpp"
#include "bpre/error.hpp"
#include "bpre/estimator.hpp"
#include "bpre/exact_oracle.hpp"
#include "bpre/parallel.hpp"
#include "bpre/rng.hpp"
#include "bpre/simulator.hpp"

namespace bpre::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kPass = 0, kFail = 1, kUsage = 2, kCap = 3 };

using nlohmann::json;

// FNV-1a, 64 bit, over the raw config bytes.
inline std::string config_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream out;
  out << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << content;
}

inline std::string real(double value) {
  std::ostringstream out;
  write_real(out, value);
  return out.str();
}

struct RunManifest {
  std::string env_config_hash;
  std::string command;
  std::uint64_t seed = 0;
  std::string rng_id{kRngId};
  std::string tool_version{kToolVersion};
  std::string started_at;
  std::string finished_at;

  json to_json() const {
    return {{"env_config_hash", env_config_hash}, {"command", command},       {"seed", seed},
            {"rng", rng_id},                      {"tool_version", tool_version}, {"started_at", started_at},
            {"finished_at", finished_at}};
  }
};

// A loaded environment plus the raw bytes it came from.
struct LoadedEnv {
  std::string bytes;
  EnvDistribution env;
};

inline LoadedEnv load_env(const std::string& path) {
  std::string bytes = read_file(path);
  EnvDistribution env = parse_env_config(bytes);
  return {std::move(bytes), std::move(env)};
}

// Writes manifest.json, result.csv and result.json into `dir` when given.
inline void emit_outputs(const std::optional<std::string>& dir, RunManifest manifest, const std::string& csv,
                         const json& result) {
  if (!dir) return;
  std::filesystem::create_directories(*dir);
  manifest.finished_at = utc_now();
  write_file(std::filesystem::path(*dir) / "manifest.json", manifest.to_json().dump(2) + "\n");
  if (!csv.empty()) write_file(std::filesystem::path(*dir) / "result.csv", csv);
  write_file(std::filesystem::path(*dir) / "result.json", result.dump(2) + "\n");
}

// Maps library exceptions onto exit codes.
template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const CapExceeded& e) {
    err << "error: " << e.what() << "\n";
    return kCap;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ModelError& e) {
    err << "error: " << e.what() << "\n";
    return kFail;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

// ---------------------------------------------------------------- env-check

struct EnvCheckArgs {
  std::string config;
  double p = 2.0;
  double q = 3.0;
  std::optional<std::string> out;
  std::string command = "env-check";
};

inline int cmd_env_check(const EnvCheckArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunManifest manifest{.command = args.command, .started_at = utc_now()};
    const LoadedEnv loaded = load_env(args.config);
    manifest.env_config_hash = config_hash(loaded.bytes);
    const AssumptionReport report = check_assumptions(loaded.env, args.p, args.q);
    json result = to_json(report);
    result["moments"] = to_json(compute_moments(loaded.env));
    out << result.dump(2) << "\n";
    emit_outputs(args.out, manifest, "", result);
    return report.all_pass() ? kPass : kFail;
  });
}

// -------------------------------------------------------------------- bound

struct BoundArgs {
  std::uint64_t n = 1;
  double x = 0.0;
  std::optional<double> v;
  std::optional<double> sigma;
  std::optional<double> M;
};

inline int cmd_bound(const BoundArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    double v = 0.0;
    if (args.v) {
      if (args.sigma || args.M) throw InvalidInput("give either --v or both --sigma and --M, not both");
      v = *args.v;
    } else if (args.sigma && args.M) {
      if (!(*args.M > 0.0)) throw InvalidInput("M must be positive");
      v = std::sqrt(static_cast<double>(args.n)) * *args.sigma / *args.M;
    } else {
      throw InvalidInput("give either --v or both --sigma and --M");
    }
    const BoundQuery q{args.n, args.x, v};
    const double lh = log_H(q);
    json result = {{"n", args.n}, {"x", args.x}, {"v", v}, {"H", H(q)}, {"H_upper", H_upper(args.x, v)}};
    result["log_H"] = std::isinf(lh) ? json("-inf") : json(lh + 0.0);  // no "-0.0"
    out << result.dump() << "\n";
    return kPass;
  });
}

// ----------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config;
  std::size_t n = 10;
  std::uint64_t trials = 1;
  std::uint64_t seed = 1;
  std::optional<std::string> out;
  std::uint64_t exact_threshold = kDefaultExactThreshold;
  unsigned cap_log2 = 512;
  unsigned workers = 1;
  std::string command = "simulate";
};

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunManifest manifest{.command = args.command, .seed = args.seed, .started_at = utc_now()};
    const LoadedEnv loaded = load_env(args.config);
    manifest.env_config_hash = config_hash(loaded.bytes);
    if (args.trials < 1) throw InvalidInput("trials must be >= 1");

    const AssumptionReport report = check_assumptions(loaded.env);
    if (!report.at("P0_ZERO").pass) {
      err << "error: " << report.at("P0_ZERO").message << "\n";
      return kFail;
    }
    std::vector<std::string> warnings;
    for (const auto& c : report.checks) {
      if (!c.pass) warnings.push_back(c.check + ": " + c.message);
    }
    for (const auto& w : warnings) err << "warning: " << w << "\n";

    SimConfig cfg;
    cfg.n = args.n;
    cfg.seed = args.seed;
    cfg.exact_sampling_threshold = args.exact_threshold;
    cfg.population_cap_log2 = args.cap_log2;
    validate(cfg);

    struct TrialOutput {
      std::string csv;
      std::string summary;
      bool approx = false;
    };
    const auto blocks = run_blocks<std::vector<TrialOutput>>(
        args.trials, ExecPolicy{args.workers, 16}, [&](std::uint64_t first, std::uint64_t end) {
          std::vector<TrialOutput> outs;
          for (std::uint64_t t = first; t < end; ++t) {
            RandomStream rng = trial_stream(args.seed, t);
            const Trajectory traj = simulate_trajectory(loaded.env, cfg, rng);
            std::ostringstream csv;
            write_trajectory_csv(csv, traj);
            const auto& last = traj.last();
            std::ostringstream row;
            row << t << ',' << last.Z.str() << ',' << real(log_population(last.Z) / std::log(2.0)) << ','
                << real(last.S) << ',' << real(last.logW) << ',' << (traj.approx_sampling_used ? 1 : 0) << '\n';
            outs.push_back({csv.str(), row.str(), traj.approx_sampling_used});
          }
          return outs;
        });

    bool approx = false;
    std::string summary = "trial,Z_n,log2_Z_n,S_n,logW_n,approx\n";
    std::vector<const TrialOutput*> ordered;
    for (const auto& b : blocks) {
      for (const auto& o : b) {
        ordered.push_back(&o);
        summary += o.summary;
        approx = approx || o.approx;
      }
    }
    const json result = {{"env_config_hash", manifest.env_config_hash}, {"seed", args.seed},  {"rng", kRngId},
                         {"n", args.n},                                  {"trials", args.trials},
                         {"approx_sampling_used", approx},               {"warnings", warnings}};
    if (args.out) {
      emit_outputs(args.out, manifest, summary, result);
      for (std::size_t t = 0; t < ordered.size(); ++t) {
        write_file(std::filesystem::path(*args.out) / ("trajectory_" + std::to_string(t) + ".csv"), ordered[t]->csv);
      }
      out << result.dump() << "\n";
    } else {
      out << ordered.front()->csv;
    }
    return kPass;
  });
}

// ------------------------------------------------------------------- verify

enum class MKind { Tight, Paper };

struct VerifyArgs {
  std::string config;
  std::string mode = "sn";  // sn | theorem1 | increments | oracle
  std::size_t n = 10;
  double x = 1.0;
  std::optional<std::uint64_t> m;
  std::uint64_t trials = 100000;
  std::uint64_t seed = 1;
  double level = 0.99;
  MKind m_kind = MKind::Tight;
  std::optional<double> m_value;  // replaces M_paper
  std::optional<double> C;
  std::optional<double> delta;
  std::uint64_t fit_trials = 100000;
  std::size_t fit_n = 20;
  std::size_t fit_k_min = 2;
  std::optional<std::size_t> fit_k_max;
  std::size_t grid = 101;
  unsigned workers = 1;
  std::optional<std::string> out;
  std::string command = "verify";
};

inline const char* m_kind_name(MKind kind) { return kind == MKind::Tight ? "tight" : "paper"; }

inline double select_M(const ModelMoments& mm, MKind kind) {
  if (kind == MKind::Tight) {
    if (!(mm.M_tight > 0.0)) throw InvalidInput("M_tight is 0 (degenerate environment); use --M-kind paper with --M-value");
    return mm.M_tight;
  }
  if (!mm.M_paper) throw InvalidInput("no M_paper for this environment; pass --M-value");
  return *mm.M_paper;
}

// Budget for the population DP inside verify: under a second on one core
// (binary support up to n = 12).
inline constexpr double kOracleWorkBudget = 5e8;

inline bool oracle_feasible(const EnvDistribution& env, std::size_t n, bool with_population) {
  if (!with_population) {
    try {
      enumeration_size(env, n);
    } catch (const CapExceeded&) {
      return false;
    }
    return true;
  }
  std::uint64_t max_population = 1;
  for (std::size_t i = 0; i < n; ++i) {
    max_population *= env.max_offspring();
    if (max_population > kPopulationCap) return false;
  }
  return detail::oracle_work(env, n) <= kOracleWorkBudget;
}

inline std::string tail_csv_header() { return "n,x,M_kind,hits,trials,point,ci_low,ci_high,bound_H,bound_thm1\n"; }

inline std::string tail_csv_row(const TailEstimate& est, MKind kind, std::optional<double> bound_h,
                                std::optional<double> bound_thm1) {
  std::ostringstream row;
  row << est.n << ',' << real(est.threshold_x) << ',' << m_kind_name(kind) << ',' << est.hits << ',' << est.trials
      << ',' << real(est.point) << ',' << real(est.ci_low) << ',' << real(est.ci_high) << ','
      << (bound_h ? real(*bound_h) : "") << ',' << (bound_thm1 ? real(*bound_thm1) : "") << '\n';
  return row.str();
}

inline json tail_json(const TailEstimate& est) {
  return {{"n", est.n},         {"x", est.threshold_x},   {"hits", est.hits},      {"trials", est.trials},
          {"point", est.point}, {"ci_low", est.ci_low},   {"ci_high", est.ci_high}, {"level", est.level}};
}

inline int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunManifest manifest{.command = args.command, .seed = args.seed, .started_at = utc_now()};
    const LoadedEnv loaded = load_env(args.config);
    const EnvDistribution& env = loaded.env;
    manifest.env_config_hash = config_hash(loaded.bytes);
    if (args.n < 1) throw InvalidInput("n must be >= 1");
    const ModelMoments mm = compute_moments(env, args.m_value);
    const ExecPolicy exec{std::max(1u, args.workers)};

    json result = {{"mode", args.mode}, {"seed", args.seed}, {"rng", kRngId}, {"M_kind", m_kind_name(args.m_kind)}};
    std::string csv;
    bool pass = true;

    if (args.mode == "sn") {
      const double M = select_M(mm, args.m_kind);
      const TailEstimate est = mc_tail_sn(env, args.n, args.x, M, args.trials, args.seed, args.level, exec);
      const double bound = sn_tail_bound(args.n, args.x, mm.sigma(), M);
      pass = est.ci_low <= bound;
      result["estimate"] = tail_json(est);
      result["bound_H"] = bound;
      if (oracle_feasible(env, args.n, false)) {
        const double exact = exact_sn_tail(env, args.n, args.x, M, mm.mu);
        result["exact_tail"] = exact;
        pass = pass && within_bound(exact, bound);
      }
      csv = tail_csv_header() + tail_csv_row(est, args.m_kind, bound, std::nullopt);
    } else if (args.mode == "theorem1") {
      if (!(args.x >= 3.0)) throw InvalidInput("theorem1 mode covers thresholds x >= 3");
      const double M = select_M(mm, args.m_kind);
      const std::uint64_t m = args.m.value_or(args.n);
      double C = 0.0, delta = 0.0;
      if (args.C || args.delta) {
        if (!(args.C && args.delta)) throw InvalidInput("give both --C and --delta, or neither to fit them");
        C = *args.C;
        delta = *args.delta;
        result["constants"] = {{"source", "user"}, {"C", C}, {"delta", delta}};
      } else {
        const std::size_t k_max = args.fit_k_max.value_or(args.fit_n > 8 ? args.fit_n - 5 : args.fit_n - 1);
        const auto stats = mc_logw_increments(env, args.fit_n, args.fit_trials, args.seed, exec);
        const DecayFit fit = fit_geometric_decay(stats, args.fit_k_min, k_max);
        C = fit.aggregated_constant();
        delta = fit.delta_hat;
        result["constants"] = {{"source", "fitted"}, {"c_hat", fit.c_hat}, {"delta_hat", fit.delta_hat},
                               {"r2", fit.r2},       {"C", C},             {"delta", delta}};
      }
      if (!(delta > 0.0 && delta < 1.0)) {
        result["verdict"] = "FAIL";
        result["reason"] = "delta outside (0, 1); the bound cannot be formed";
        out << result.dump(2) << "\n";
        emit_outputs(args.out, manifest, "", result);
        return kFail;
      }
      const double bound_thm1 = theorem1_bound({args.n, m, M, C, delta});
      const double bound_h = sn_tail_bound(args.n, static_cast<double>(args.n) * args.x, mm.sigma(), M);
      const TailEstimate est = mc_tail_logzn(env, args.n, args.x, M, args.trials, args.seed, args.level, exec);
      pass = est.ci_low <= bound_thm1;
      result["estimate"] = tail_json(est);
      result["m"] = m;
      result["bound_thm1"] = bound_thm1;
      result["bound_H_sn_part"] = bound_h;
      if (oracle_feasible(env, args.n, true)) {
        const double exact = exact_logZn_tail(env, args.n, args.x, mm, M);
        result["exact_tail"] = exact;
        pass = pass && within_bound(exact, bound_thm1);
      }
      csv = tail_csv_header() + tail_csv_row(est, args.m_kind, bound_h, bound_thm1);
    } else if (args.mode == "increments") {
      const auto stats = mc_logw_increments(env, args.n, args.trials, args.seed, exec);
      const std::size_t k_max = args.fit_k_max.value_or(args.n > 8 ? args.n - 5 : args.n - 1);
      const DecayFit fit = fit_geometric_decay(stats, args.fit_k_min, k_max);
      pass = fit.delta_hat > 0.0 && fit.delta_hat < 1.0;
      result["fit"] = {{"delta_hat", fit.delta_hat}, {"c_hat", fit.c_hat}, {"r2", fit.r2},
                       {"C_hat", fit.aggregated_constant()}, {"k_min", args.fit_k_min}, {"k_max", k_max}};
      std::ostringstream table;
      write_increments_csv(table, stats);
      csv = table.str();
    } else if (args.mode == "oracle") {
      const double M = select_M(mm, args.m_kind);
      if (args.grid < 2) throw InvalidInput("grid needs at least 2 points");
      json rows = json::array();
      std::ostringstream table;
      table << "n,x,M_kind,exact_tail,bound,dominated\n";
      for (std::size_t i = 0; i < args.grid; ++i) {
        const double x = static_cast<double>(args.n) * static_cast<double>(i) / static_cast<double>(args.grid - 1);
        const double exact = exact_sn_tail(env, args.n, x, M, mm.mu);
        const double bound = sn_tail_bound(args.n, x, mm.sigma(), M);
        const bool dominated = within_bound(exact, bound);
        pass = pass && dominated;
        rows.push_back({{"n", args.n}, {"x", x}, {"M", m_kind_name(args.m_kind)}, {"exact_tail", exact},
                        {"bound", bound}, {"dominated", dominated}});
        table << args.n << ',' << real(x) << ',' << m_kind_name(args.m_kind) << ',' << real(exact) << ','
              << real(bound) << ',' << (dominated ? "true" : "false") << '\n';
      }
      result["rows"] = rows;
      csv = table.str();
    } else {
      throw InvalidInput("unknown verify mode '" + args.mode + "' (sn, theorem1, increments, oracle)");
    }

    result["verdict"] = pass ? "PASS" : "FAIL";
    out << result.dump(2) << "\n";
    emit_outputs(args.out, manifest, csv, result);
    return pass ? kPass : kFail;
  });
}

// ----------------------------------------------------------------- converge

struct ConvergeArgs {
  std::string config;
  std::vector<std::size_t> n_values{8, 16, 32, 64};
  std::vector<double> y_values{0.2};
  std::uint64_t trials = 10000;
  std::uint64_t seed = 1;
  double level = 0.95;
  unsigned workers = 1;
  std::optional<std::string> out;
  std::string command = "converge";
};

inline int cmd_converge(const ConvergeArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunManifest manifest{.command = args.command, .seed = args.seed, .started_at = utc_now()};
    const LoadedEnv loaded = load_env(args.config);
    manifest.env_config_hash = config_hash(loaded.bytes);
    const auto rows = convergence_report(loaded.env, args.n_values, args.y_values, args.trials, args.seed, args.level,
                                         ExecPolicy{std::max(1u, args.workers)});
    std::ostringstream table;
    write_convergence_csv(table, rows);
    const json result = {{"seed", args.seed}, {"rng", kRngId}, {"trials", args.trials}, {"level", args.level}};
    out << table.str();
    emit_outputs(args.out, manifest, table.str(), result);
    return kPass;
  });
}

}  // namespace bpre::cli
