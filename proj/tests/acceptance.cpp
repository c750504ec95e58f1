// Acceptance checks: one [PASS]/[FAIL] line per criterion.
//   acceptance                 run everything
//   acceptance --criterion N   run criterion N only (exit status reflects it)

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "quietmarket/greedy.hpp"
#include "quietmarket/relaxation.hpp"
#include "quietmarket/scenario.hpp"
#include "quietmarket/vcg.hpp"
#include "support.hpp"

using namespace quietmarket;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, double v) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict criterion1() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario sc = build_scenario(amsr2_preset());
  const WelfareComparison cmp = welfare_comparison(sc);
  const double secs = seconds_since(t0);
  const double ratio = cmp.flexible.total_cost / cmp.fixed.total_cost;
  v.check(ratio <= 0.5, fmt("flexible / fixed cost = %.4f (<= 0.5)", ratio));
  v.check(cmp.welfare_delta_pct >= 10.0, fmt("welfare improvement %.2f%% (>= 10%%)", cmp.welfare_delta_pct));
  v.check(cmp.flexible.trap_tiles == 0, fmt("flexible trap tiles %.0f (== 0)", double(cmp.flexible.trap_tiles)));
  v.check(cmp.fixed.trap_tiles >= 1, fmt("fixed-band trap tiles %.0f (>= 1)", double(cmp.fixed.trap_tiles)));
  v.check(secs < 10.0, fmt("runtime %.3f s (< 10 s)", secs));
  return v;
}

Verdict criterion2() {
  Verdict v;
  const Scenario sc = build_scenario(amsr2_preset());
  const DualSolution d = scenario_duals(sc);
  const ClearingCurve c = market_clearing_curves(sc, d.multipliers, 0);
  if (!c.first_rejected_price) {
    v.check(false, "curve never crosses");
    return v;
  }
  const double p = *c.first_rejected_price;
  std::size_t below = 0;
  for (TileId id : sc.grid.tiles_in_channel(0)) below += sc.costs[id] < p;
  v.check(below == c.equilibrium_q,
          "Q = " + std::to_string(c.equilibrium_q) + " equals tiles priced below the crossing (" +
              std::to_string(below) + ")");
  GreedyOptions opts;
  opts.rule = StopRule::clearing;
  opts.channel = 0;
  const auto g = greedy_procure(sc.grid, sc.instrument(), d.multipliers, sc.costs, opts);
  v.check(g.selected.size() == c.equilibrium_q,
          "greedy clearing buys " + std::to_string(g.selected.size()) + " tiles (== Q)");
  v.check(p >= 40.0 && p <= 50.0, fmt("first rejected price $%.4f in [$40, $50]", p));
  bool decreasing = true;
  for (std::size_t i = 1; i < c.rows.size(); ++i) decreasing = decreasing && c.rows[i].demand < c.rows[i - 1].demand;
  v.check(decreasing, "demand strictly decreasing over " + std::to_string(c.rows.size()) + " points");
  return v;
}

Verdict criterion3() {
  Verdict v;
  std::vector<std::size_t> sizes;
  for (std::size_t s = 5; s <= 21; ++s) sizes.push_back(s);
  const auto rows = scalability_bench(sizes, 10, kReferenceSeed);
  double sum = 0.0, worst = 0.0, worst_greedy_us = 0.0;
  std::size_t over_bound = 0;
  std::map<std::size_t, std::vector<double>> log_us;
  for (const auto& r : rows) {
    sum += r.gap_pct;
    worst = std::max(worst, r.gap_pct);
    worst_greedy_us = std::max(worst_greedy_us, r.greedy_us);
    over_bound += r.greedy_cost > r.bound_factor * r.exact_cost * (1.0 + 1e-12);
    log_us[r.size].push_back(std::log(std::max(r.exact_us, 1e-3)));
  }
  const double mean = sum / static_cast<double>(rows.size());
  // least-squares slope of mean log exact time against size
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (const auto& [size, ls] : log_us) {
    double m = 0.0;
    for (double l : ls) m += l;
    m /= static_cast<double>(ls.size());
    const double x = static_cast<double>(size);
    sx += x, sy += m, sxx += x * x, sxy += x * m, n += 1;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  v.check(rows.size() == 170, std::to_string(rows.size()) + " instances (17 sizes x 10)");
  v.check(mean <= 10.0, fmt("mean gap %.2f%% (<= 10%%)", mean));
  v.check(worst <= 30.0, fmt("max gap %.2f%% (<= 30%%)", worst));
  v.check(over_bound == 0, fmt("%.0f instances above the approximation bound (== 0)", double(over_bound)));
  v.check(worst_greedy_us < 1000.0, fmt("slowest greedy run %.1f us (< 1 ms)", worst_greedy_us));
  v.check(slope > 0.4, fmt("log exact time slope %.3f per tile (> 0.4)", slope));
  return v;
}

Verdict criterion4() {
  Verdict v;
  std::mt19937_64 rng(kReferenceSeed);
  SolverOptions exhaustive;
  exhaustive.mode = SolverMode::exhaustive;
  AuctionOptions opts;
  opts.solver = exhaustive;
  double worst_dsic = 0.0, worst_ir = 0.0, worst_eff = 0.0;
  std::size_t cases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = qmtest::auction_market(rng, 12);
    const AuctionOutcome o = run_auction(m.grid, m.instrument, truthful_reports(m.sellers), opts);
    for (const auto& s : m.sellers) worst_ir = std::min(worst_ir, o.seller_utilities.at(s.id));
    const auto oracle = qmtest::oracle_welfare_max(m.grid, m.instrument, m.costs, qmtest::full_mask(m.grid.size()));
    worst_eff = std::max(worst_eff, std::abs(o.welfare.welfare.amount() - oracle.welfare) /
                                        std::max(1.0, std::abs(oracle.welfare)));
    for (double f : {0.5, 0.8, 1.25, 2.0})
      for (const auto& row : dsic_probe(m.grid, m.instrument, m.sellers, scale_misreport(f), opts)) {
        worst_dsic = std::max(worst_dsic, row.misreport_utility - row.truthful_utility);
        ++cases;
      }
  }
  v.check(worst_dsic <= 1e-9, fmt("max misreport gain %.3e over ", worst_dsic) + std::to_string(cases) +
                                  " seller/scaling cases (<= 1e-9)");
  v.check(worst_ir >= -1e-12, fmt("min truthful utility %.3e (>= -1e-12)", worst_ir));
  v.check(worst_eff <= 1e-9, fmt("max welfare gap to exhaustive oracle %.3e", worst_eff));
  return v;
}

Verdict criterion5() {
  Verdict v;
  const Scenario sc = build_scenario(amsr2_preset());
  const DualSolution d = scenario_duals(sc);
  const auto r = submodularity_probe(sc.grid, sc.instrument(), d.multipliers, kReferenceSeed, 1000);
  v.check(r.trials == 1000, std::to_string(r.trials) + " nested triples");
  v.check(r.violations.empty(), std::to_string(r.violations.size()) + " diminishing-returns violations (== 0)");
  v.check(r.negative_gains == 0, std::to_string(r.negative_gains) + " negative marginal gains (== 0)");
  return v;
}

Verdict criterion6() {
  Verdict v;
  double worst_b = 0.0, worst_l = 0.0;
  std::mt19937_64 rng(kReferenceSeed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double p = 0.01 + u(rng), kappa = 100.0 + 900.0 * u(rng), eps2 = 0.05 + 0.5 * u(rng);
    const double c = 0.1 + 2.0 * u(rng), tau = 0.5 + u(rng), width = 5.0 + 100.0 * u(rng);
    const double b_star = c * c * kappa / (tau * eps2);
    const double lambda_star = p * tau * b_star * b_star / (c * c * kappa);
    std::vector<TileSpec> tiles;
    const auto n = static_cast<std::size_t>(2.0 * b_star / width * tau) + 2;
    for (TileId i = 0; i < n; ++i) tiles.push_back({i, 0, width, tau, 1.0, i, 0});
    const TileGrid grid(tiles, tau, 1);
    auto ins = qmtest::single_channel(1.0, kappa, eps2, 1.0, c);
    ins.integration_window = tau;
    const DualSolution d = solve_relaxation(grid, ins, std::vector<double>(n, p * width));
    worst_b = std::max(worst_b, qmtest::rel_diff(d.bandwidths[0], b_star));
    worst_l = std::max(worst_l, qmtest::rel_diff(d.multipliers[0], lambda_star));
  }
  v.check(worst_b <= 1e-6, fmt("max relative B* error %.3e (<= 1e-6)", worst_b));
  v.check(worst_l <= 1e-6, fmt("max relative lambda* error %.3e (<= 1e-6)", worst_l));

  double worst_cs = 0.0;
  std::size_t converged = 0, total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = qmtest::random_market(rng, 30 + rng() % 40, 2 + rng() % 3, 1 + rng() % 3, 2);
    const DualSolution d = solve_relaxation(m.grid, m.instrument, m.costs);
    ++total;
    if (!d.converged) continue;
    ++converged;
    worst_cs = std::max(worst_cs, d.complementary_slackness);
  }
  v.check(worst_cs <= 1e-6, fmt("max complementary slackness residual %.3e over ", worst_cs) +
                                std::to_string(converged) + "/" + std::to_string(total) +
                                " converged multi-channel solves (<= 1e-6)");
  return v;
}

Verdict criterion7() {
  Verdict v;
  std::mt19937_64 rng(kReferenceSeed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_half = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double b = std::pow(10.0, 9.0 * u(rng) - 2.0), k = 1.0 + 1e3 * u(rng), t = 1e-3 + u(rng);
    worst_half = std::max(worst_half, qmtest::rel_diff(thermal_variance(2.0 * b, k, t), thermal_variance(b, k, t) / 2.0));
  }
  v.check(worst_half <= 2.3e-16, fmt("radiometer halving max relative error %.3e", worst_half));

  const Scenario sc = build_scenario(amsr2_preset());
  const Allocation empty(sc.grid);
  bool baseline = true;
  for (std::size_t j = 0; j < sc.grid.channel_count(); ++j)
    baseline = baseline && effective_bandwidth(empty, sc.grid, sc.instrument(), j) ==
                               sc.instrument().channels[j].baseline_bandwidth;
  v.check(baseline, "empty allocation bandwidth equals baseline on every channel");

  Allocation a(sc.grid);
  double worst_cache = 0.0;
  for (int step = 0; step < 100000; ++step) {
    const auto id = static_cast<TileId>(rng() % sc.grid.size());
    if (a.contains(id)) a.erase(sc.grid, id);
    else a.insert(sc.grid, id);
    const std::size_t j = sc.grid.tile(id).channel;
    const double fresh = a.recompute_volume(sc.grid, j);
    worst_cache = std::max(worst_cache, std::abs(a.channel_volume(j) - fresh) / std::max(fresh, 1.0));
  }
  v.check(worst_cache <= 1e-12, fmt("cache vs recompute over 1e5 mutations: %.3e relative (<= 1e-12)", worst_cache));
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict criterion8(const std::string& cli) {
  Verdict v;
  if (cli.empty()) {
    v.check(false, "CLI path not configured");
    return v;
  }
  const fs::path dir = fs::temp_directory_path() / "qm_acceptance_determinism";
  const std::vector<std::string> subs{"dual", "greedy", "greedy --mode clearing --channel 0", "auction",
                                      "compare", "clear-curve", "bench"};
  for (const std::string& sub : subs)
    for (const std::string fmt_flag : {"csv", "json"}) {
      std::map<std::string, std::string> first;
      bool ok = true;
      for (int pass = 0; pass < 2 && ok; ++pass) {
        fs::remove_all(dir);
        const std::string cmd =
            cli + " " + sub + " --format " + fmt_flag + " --out " + dir.string() + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
        if (!ok) break;
        std::map<std::string, std::string> files;
        for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
        if (pass == 0) first = files;
        else ok = !files.empty() && files == first;
      }
      v.check(ok, "'" + sub + " --format " + fmt_flag + "' byte-identical across two runs");
    }
  fs::remove_all(dir);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  std::string cli;
#ifdef QM_CLI_PATH
  cli = QM_CLI_PATH;
#endif
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
    else if (a == "--cli" && i + 1 < argc) cli = argv[++i];
    else {
      std::fprintf(stderr, "usage: %s [--criterion N] [--cli PATH]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > 8) {
    std::fprintf(stderr, "criterion must be 1-8\n");
    return 2;
  }

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"interference-trap welfare comparison", criterion1},
      {"market clearing structure", criterion2},
      {"scalability benchmark", criterion3},
      {"DSIC, IR and efficiency on random auctions", criterion4},
      {"submodularity and monotonicity", criterion5},
      {"dual solver closed form and complementary slackness", criterion6},
      {"physics identities and cache consistency", criterion7},
      {"determinism of CLI outputs", [&] { return criterion8(cli); }},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i + 1) != only) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    for (const auto& n : v.notes) std::printf("    %s\n", n.c_str());
    std::printf("[%s] criterion %zu: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str());
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
