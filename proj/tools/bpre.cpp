// bpre: command-line front end. Argument parsing only; the commands live in
// bpre/cli.hpp.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "bpre/cli.hpp"

namespace {

using bpre::cli::ExitCode;

// Accepts "1e6" as well as "1000000".
struct CountOption {
  std::uint64_t* target;
  bool operator()(const CLI::results_t& res) const {
    if (res.size() != 1) return false;
    try {
      std::size_t used = 0;
      const double v = std::stod(res[0], &used);
      if (used != res[0].size() || !(v >= 0.0) || v > 1.8e19 || v != std::floor(v)) return false;
      *target = static_cast<std::uint64_t>(v);
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }
};

CLI::Option* add_count(CLI::App* app, const std::string& name, std::uint64_t& target, const std::string& help) {
  auto* opt = app->add_option(name, CountOption{&target}, help);
  opt->type_name("COUNT")->expected(1)->default_str(std::to_string(target));
  return opt;
}

// --seed wins, then BPRE_SEED, then 1.
std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value) {
  if (flag->count() > 0) return flag_value;
  if (const char* env = std::getenv("BPRE_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw CLI::ValidationError("BPRE_SEED", "not an unsigned 64-bit integer");
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching processes in random environment: simulation, tail bounds and verification"};
  app.set_version_flag("--version", std::string(bpre::cli::kToolVersion));
  app.require_subcommand(1);

  const std::string cmdline = [&] {
    std::string s;
    for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
    return s;
  }();
  const unsigned default_workers = bpre::default_workers();

  // env-check
  bpre::cli::EnvCheckArgs check;
  auto* env_check = app.add_subcommand("env-check", "validate a config and report the model assumptions");
  env_check->add_option("config", check.config, "environment config (JSON)")->required();
  env_check->add_option("--p", check.p, "moment order for the quenched mean-ratio check")->capture_default_str();
  env_check->add_option("--q", check.q, "moment order for the log-mean check")->capture_default_str();
  env_check->add_option("--out", check.out, "output directory");

  // bound
  bpre::cli::BoundArgs bound;
  auto* bound_cmd = app.add_subcommand("bound", "evaluate the H bound");
  bound_cmd->add_option("--n", bound.n, "number of increments")->required();
  bound_cmd->add_option("--x", bound.x, "threshold")->required();
  bound_cmd->add_option("--v", bound.v, "variance parameter");
  bound_cmd->add_option("--sigma", bound.sigma, "increment standard deviation (with --M)");
  bound_cmd->add_option("--M", bound.M, "increment bound constant (with --sigma)");

  // simulate
  bpre::cli::SimulateArgs sim;
  sim.workers = default_workers;
  std::uint64_t sim_seed = 1;
  auto* sim_cmd = app.add_subcommand("simulate", "generate trajectories");
  sim_cmd->add_option("config", sim.config, "environment config (JSON)")->required();
  sim_cmd->add_option("--n", sim.n, "horizon")->capture_default_str();
  add_count(sim_cmd, "--trials", sim.trials, "number of trajectories");
  auto* sim_seed_opt = sim_cmd->add_option("--seed", sim_seed, "master seed (fallback: BPRE_SEED, then 1)");
  sim_cmd->add_option("--out", sim.out, "output directory (default: trajectory 0 to stdout)");
  add_count(sim_cmd, "--exact-threshold", sim.exact_threshold, "largest binomial trial count drawn exactly");
  sim_cmd->add_option("--cap-log2", sim.cap_log2, "abort when Z exceeds 2^cap")->capture_default_str();
  sim_cmd->add_option("--workers", sim.workers, "worker threads")->capture_default_str();

  // verify
  bpre::cli::VerifyArgs ver;
  ver.workers = default_workers;
  std::uint64_t ver_seed = 1;
  std::string m_kind = "tight";
  auto* ver_cmd = app.add_subcommand("verify", "check bounds against Monte Carlo and exact values");
  ver_cmd->add_option("mode", ver.mode, "sn | theorem1 | increments | oracle")
      ->required()
      ->check(CLI::IsMember({"sn", "theorem1", "increments", "oracle"}));
  ver_cmd->add_option("--config", ver.config, "environment config (JSON)")->required();
  ver_cmd->add_option("--n", ver.n, "horizon")->capture_default_str();
  ver_cmd->add_option("--x", ver.x, "threshold")->capture_default_str();
  ver_cmd->add_option("--m", ver.m, "free index m in the log Z_n bound (default n)");
  add_count(ver_cmd, "--trials", ver.trials, "Monte Carlo trials");
  auto* ver_seed_opt = ver_cmd->add_option("--seed", ver_seed, "master seed (fallback: BPRE_SEED, then 1)");
  ver_cmd->add_option("--level", ver.level, "confidence level")->capture_default_str();
  ver_cmd->add_option("--M-kind", m_kind, "tight | paper")->check(CLI::IsMember({"tight", "paper"}))->capture_default_str();
  ver_cmd->add_option("--M-value", ver.m_value, "explicit M (replaces the preset)");
  ver_cmd->add_option("--C", ver.C, "decay constant C (with --delta; fitted otherwise)");
  ver_cmd->add_option("--delta", ver.delta, "decay rate delta (with --C)");
  add_count(ver_cmd, "--fit-trials", ver.fit_trials, "trials for fitting C and delta");
  ver_cmd->add_option("--fit-n", ver.fit_n, "horizon for fitting C and delta")->capture_default_str();
  ver_cmd->add_option("--fit-k-min", ver.fit_k_min, "first generation in the decay fit")->capture_default_str();
  ver_cmd->add_option("--fit-k-max", ver.fit_k_max, "last generation in the decay fit");
  ver_cmd->add_option("--grid", ver.grid, "x grid size for oracle mode")->capture_default_str();
  ver_cmd->add_option("--workers", ver.workers, "worker threads")->capture_default_str();
  ver_cmd->add_option("--out", ver.out, "output directory");

  // oracle: shorthand for `verify oracle`
  bpre::cli::VerifyArgs orc;
  orc.mode = "oracle";
  std::string orc_m_kind = "tight";
  auto* orc_cmd = app.add_subcommand("oracle", "exact tail against the H bound over an x grid");
  orc_cmd->add_option("config", orc.config, "environment config (JSON)")->required();
  orc_cmd->add_option("--n", orc.n, "horizon")->capture_default_str();
  orc_cmd->add_option("--M-kind", orc_m_kind, "tight | paper")->check(CLI::IsMember({"tight", "paper"}))->capture_default_str();
  orc_cmd->add_option("--M-value", orc.m_value, "explicit M (replaces the preset)");
  orc_cmd->add_option("--grid", orc.grid, "x grid size")->capture_default_str();
  orc_cmd->add_option("--out", orc.out, "output directory");

  // converge
  bpre::cli::ConvergeArgs conv;
  conv.workers = default_workers;
  std::uint64_t conv_seed = 1;
  auto* conv_cmd = app.add_subcommand("converge", "tail estimates of (log Z_n)/n - mu over an (n, y) grid");
  conv_cmd->add_option("config", conv.config, "environment config (JSON)")->required();
  conv_cmd->add_option("--n-values", conv.n_values, "horizons")->delimiter(',');
  conv_cmd->add_option("--y-values", conv.y_values, "thresholds")->delimiter(',');
  add_count(conv_cmd, "--trials", conv.trials, "Monte Carlo trials");
  auto* conv_seed_opt = conv_cmd->add_option("--seed", conv_seed, "master seed (fallback: BPRE_SEED, then 1)");
  conv_cmd->add_option("--level", conv.level, "confidence level")->capture_default_str();
  conv_cmd->add_option("--workers", conv.workers, "worker threads")->capture_default_str();
  conv_cmd->add_option("--out", conv.out, "output directory");

  try {
    app.parse(argc, argv);
    if (env_check->parsed()) {
      check.command = cmdline;
      return bpre::cli::cmd_env_check(check, std::cout, std::cerr);
    }
    if (bound_cmd->parsed()) return bpre::cli::cmd_bound(bound, std::cout, std::cerr);
    if (sim_cmd->parsed()) {
      sim.seed = resolve_seed(sim_seed_opt, sim_seed);
      sim.command = cmdline;
      return bpre::cli::cmd_simulate(sim, std::cout, std::cerr);
    }
    if (ver_cmd->parsed()) {
      ver.seed = resolve_seed(ver_seed_opt, ver_seed);
      ver.m_kind = m_kind == "paper" ? bpre::cli::MKind::Paper : bpre::cli::MKind::Tight;
      ver.command = cmdline;
      return bpre::cli::cmd_verify(ver, std::cout, std::cerr);
    }
    if (orc_cmd->parsed()) {
      orc.m_kind = orc_m_kind == "paper" ? bpre::cli::MKind::Paper : bpre::cli::MKind::Tight;
      orc.command = cmdline;
      return bpre::cli::cmd_verify(orc, std::cout, std::cerr);
    }
    if (conv_cmd->parsed()) {
      conv.seed = resolve_seed(conv_seed_opt, conv_seed);
      conv.command = cmdline;
      return bpre::cli::cmd_converge(conv, std::cout, std::cerr);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ExitCode::kPass : ExitCode::kUsage;
  }
  return ExitCode::kUsage;
}
