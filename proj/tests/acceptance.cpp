// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bpre/cli.hpp"

namespace {

using namespace bpre;
namespace fs = std::filesystem;

const std::string kBinaryPath = std::string(BPRE_CONFIG_DIR) + "/binary_two_point.json";

// 50-digit references for the binary two-point environment, rounded to double.
constexpr double kMu = 0.39137966962481622;
constexpr double kMPaper = 0.30176751093512909;

const EnvDistribution& binary() {
  static const auto env = parse_env_config(cli::read_file(kBinaryPath));
  return env;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

std::vector<double> grid(double lo, double hi, std::size_t points) {
  std::vector<double> xs(points);
  for (std::size_t i = 0; i < points; ++i) xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return xs;
}

ExecPolicy exec() { return {default_workers(), 1024}; }

Outcome closed_forms() {
  Outcome o;
  const auto mm = compute_moments(binary());
  o.require(std::abs(mm.mu - kMu) <= 1e-12, fmt("mu=%.17g", mm.mu));
  o.require(mm.M_paper && std::abs(*mm.M_paper - kMPaper) <= 1e-12, "M_paper off");
  const auto report = check_assumptions(binary());
  o.require(report.all_pass(), "env-check failed");
  o.require(report.checks.size() == 6, "expected six assumption checks");
  o.note(fmt("mu=%.17g M_paper=%.17g", mm.mu, mm.M_paper.value_or(NAN)));
  return o;
}

Outcome h_suite() {
  Outcome o;
  std::size_t violations = 0, fd_points = 0;
  double worst_fd = 0.0;
  for (std::uint64_t n : {1u, 4u, 16u, 64u}) {
    const double nd = static_cast<double>(n);
    for (double v : {0.1, 1.0, 10.0}) {
      if (H({n, 0.0, v}) != 1.0) ++violations;
      double prev = 1.0;
      for (double x : grid(0.0, nd + 1.0, 1024)) {
        const double h = H({n, x, v});
        if (h > prev || h > H_upper(x, v) || (x > nd && h != 0.0)) ++violations;
        prev = h;
      }
      for (double x : grid(0.0, nd, 1024)) {
        const double step = 1e-6 * std::max(1.0, x);
        if (x - step <= 0.0 || x + step >= nd) continue;
        const double lh = log_H({n, x, v});
        const double fd = std::exp(lh) *
                          (std::expm1(log_H({n, x + step, v}) - lh) - std::expm1(log_H({n, x - step, v}) - lh)) /
                          (2 * step);
        const double d = dH_dx({n, x, v});
        const double rel = std::abs(d - fd) / std::max(1e-12, std::abs(d));
        worst_fd = std::max(worst_fd, rel);
        ++fd_points;
      }
    }
  }
  o.require(violations == 0, std::to_string(violations) + " grid violations");
  o.require(worst_fd <= 1e-5, fmt("worst derivative rel err %.3g", worst_fd));
  o.note(fmt("%.0f derivative points, worst rel err %.3g", static_cast<double>(fd_points), worst_fd));
  return o;
}

Outcome domination() {
  Outcome o;
  const auto mm = compute_moments(binary());
  std::size_t checked = 0, violations = 0, ties = 0;
  double min_slack = INFINITY;
  for (double M : {mm.M_tight, *mm.M_paper}) {
    for (std::size_t n = 2; n <= 10; ++n) {
      for (double x : grid(0.0, static_cast<double>(n), 101)) {
        const double exact = exact_sn_tail(binary(), n, x, M, mm.mu);
        const double bound = sn_tail_bound(n, x, mm.sigma(), M);
        ++checked;
        if (exact > bound) ++ties;  // counted again below if beyond rounding
        if (!within_bound(exact, bound)) {
          ++violations;
          o.require(false, fmt("n=%.0f x=%.17g exact=%.17g", static_cast<double>(n), x, exact));
        }
        min_slack = std::min(min_slack, bound - exact);
      }
    }
  }
  o.note(std::to_string(checked) + " points, " + std::to_string(violations) + " violations, " +
         std::to_string(ties - violations) + " ties at rounding level, min slack " + fmt("%.3g", min_slack));
  return o;
}

Outcome oracle_agreement() {
  Outcome o;
  const auto mm = compute_moments(binary());
  const std::size_t n = 6;
  for (double x : {0.25, 0.5, 1.0}) {
    const double sn_exact = exact_sn_tail(binary(), n, x, mm.M_tight, mm.mu);
    const double lz_exact = exact_logZn_tail(binary(), n, x, mm, mm.M_tight);
    int sn_ok = 0, lz_ok = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      sn_ok += mc_tail_sn(binary(), n, x, mm.M_tight, 1000000, seed, 0.99, exec()).contains(sn_exact);
      lz_ok += mc_tail_logzn(binary(), n, x, mm.M_tight, 100000, seed, 0.99, exec()).contains(lz_exact);
    }
    o.require(sn_ok >= 19, fmt("S_n x=%g only %.0f/20", x, sn_ok));
    o.require(lz_ok >= 19, fmt("logZ_n x=%g only %.0f/20", x, lz_ok));
    o.note(fmt("x=%g S_n %.0f/20", x, sn_ok) + fmt(" logZ_n %.0f/20", lz_ok));
  }
  return o;
}

Outcome martingale() {
  Outcome o;
  double worst = 0.0;
  for (std::size_t n = 1; n <= 6; ++n) worst = std::max(worst, std::abs(exact_EWn(binary(), n) - 1.0));
  o.require(worst <= 1e-9, fmt("exact E W_n off by %.3g", worst));

  SimConfig cfg;
  cfg.n = 20;
  cfg.seed = 2024;
  cfg.record_full_path = false;
  const int trials = 10000;
  double s1 = 0.0, s2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng = trial_stream(cfg.seed, static_cast<std::uint64_t>(t));
    const double w = std::exp(simulate_trajectory(binary(), cfg, rng).last().logW);
    s1 += w;
    s2 += w * w;
  }
  const double mean = s1 / trials;
  const double se = std::sqrt((s2 - trials * mean * mean) / (trials - 1)) / std::sqrt(static_cast<double>(trials));
  o.require(std::abs(mean - 1.0) <= 4.0 * se, fmt("mean W_20 %.6f se %.2g", mean, se));

  RandomStream env_rng(5);
  const auto seq = sample_env_sequence(binary(), 20, env_rng);
  RandomStream rng(6);
  const auto q = quenched_martingale_check(binary(), seq, 10, 100000, rng);
  o.require(std::abs(q.mean_ratio - 1.0) <= 4.0 * q.stderr_ratio, fmt("quenched ratio %.6f se %.2g", q.mean_ratio, q.stderr_ratio));
  o.note(fmt("max |E W_n - 1| %.2g, W_20 %.5f", worst, mean) + fmt(" (se %.2g), quenched %.5f", se, q.mean_ratio));
  return o;
}

Outcome theorem1_regime() {
  Outcome o;
  const auto mm = compute_moments(binary());
  const double M = *mm.M_paper;
  for (std::size_t n = 1; n <= 6; ++n) {
    o.require(exact_logZn_tail(binary(), n, 3.0, mm, M) == 0.0, "exact tail nonzero at n=" + std::to_string(n));
  }
  const auto stats = mc_logw_increments(binary(), 20, 100000, 1, exec());
  const auto fit = fit_geometric_decay(stats, 2, 15);
  const double C = fit.aggregated_constant();
  o.require(fit.delta_hat > 0.0 && fit.delta_hat < 1.0, fmt("delta_hat %.4f", fit.delta_hat));
  for (std::size_t n : {16u, 32u}) {
    const auto est = mc_tail_logzn(binary(), n, 3.0, M, 1000000, 1, 0.99, exec());
    o.require(est.hits == 0, "hits at n=" + std::to_string(n));
    const double nd = static_cast<double>(n);
    const double slack_term = C * std::pow(fit.delta_hat, nd) / (M * std::sqrt(nd));
    o.require(slack_term >= 0.0, "negative fitted term");
    o.note(fmt("n=%.0f hits=%.0f Cd^m/(M sqrt n)=%.3g", nd, static_cast<double>(est.hits), slack_term));
  }
  o.note(fmt("C=%.4f delta=%.4f", C, fit.delta_hat));
  return o;
}

Outcome geometric_decay() {
  Outcome o;
  const auto stats = mc_logw_increments(binary(), 20, 100000, 1, exec());
  const auto fit = fit_geometric_decay(stats, 2, 15);
  o.require(fit.delta_hat > 0.0 && fit.delta_hat < 1.0, fmt("delta_hat %.4f", fit.delta_hat));
  o.require(fit.r2 >= 0.9, fmt("r2 %.4f", fit.r2));
  const double ratio = stats[2].mean / stats[15].mean;
  o.require(ratio >= 5.0, fmt("k=2/k=15 ratio %.3f", ratio));
  o.note(fmt("delta_hat=%.4f r2=%.5f ratio=%.1f", fit.delta_hat, fit.r2, ratio));
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome reproducibility() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "bpre_acceptance_repro";
  fs::remove_all(root);
  std::ostringstream sink;
  std::size_t files = 0;
  auto compare = [&](const std::string& what, const fs::path& a, const fs::path& b) {
    for (const auto& entry : fs::directory_iterator(a)) {
      if (entry.path().extension() != ".csv") continue;
      ++files;
      const std::string name = entry.path().filename().string();
      const std::string left = slurp(entry.path());
      o.require(!left.empty() && left == slurp(b / name), what + "/" + name + " differs");
    }
  };
  for (unsigned workers : {1u, 8u}) {
    const fs::path dir = root / std::to_string(workers);
    const int codes[] = {
        cli::cmd_simulate({.config = kBinaryPath, .n = 25, .trials = 40, .seed = 11, .out = (dir / "simulate").string(),
                           .workers = workers},
                          sink, sink),
        cli::cmd_verify({.config = kBinaryPath, .mode = "sn", .n = 10, .x = 1.0, .trials = 200000, .seed = 11,
                         .workers = workers, .out = (dir / "sn").string()},
                        sink, sink),
        cli::cmd_verify({.config = kBinaryPath, .mode = "increments", .n = 20, .trials = 20000, .seed = 11,
                         .workers = workers, .out = (dir / "increments").string()},
                        sink, sink),
        cli::cmd_converge({.config = kBinaryPath, .trials = 5000, .seed = 11, .workers = workers,
                           .out = (dir / "converge").string()},
                          sink, sink),
    };
    for (int code : codes) o.require(code == cli::kPass, "command exit " + std::to_string(code));
  }
  for (const char* what : {"simulate", "sn", "increments", "converge"}) compare(what, root / "1" / what, root / "8" / what);
  o.require(files >= 4, "too few CSV files compared");
  o.note(std::to_string(files) + " CSV files compared");
  fs::remove_all(root);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "closed forms and env-check", 1.0, closed_forms},
      {2, "H-function suite", 5.0, h_suite},
      {3, "exact bound domination", 30.0, domination},
      {4, "oracle vs Monte Carlo", 300.0, oracle_agreement},
      {5, "martingale checks", 60.0, martingale},
      {6, "x >= 3 regime", 600.0, theorem1_regime},
      {7, "geometric decay of increments", 120.0, geometric_decay},
      {8, "worker-count reproducibility", 0.0, reproducibility},
  };
  bool all = true;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0 && secs > c.budget_s) o.require(false, fmt("runtime %.1fs over %.0fs", secs, c.budget_s));
    all = all && o.pass;
    std::printf("%s criterion %d (%s) [%.2fs]: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
