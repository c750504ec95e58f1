// quietmarket: command-line driver for the quiet-tile procurement market.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "quietmarket/io.hpp"

namespace qm = quietmarket;
namespace io = quietmarket::io;

namespace {

enum ExitCode { kOk = 0, kInfeasible = 1, kInputError = 2 };

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string format;  // empty: the subcommand's natural format
  std::size_t max_exact_tiles = 22;
};

struct Run {
  io::RunManifest manifest;
  qm::ScenarioConfig config;
};

Run prepare(const std::string& subcommand, const CommonFlags& f, const std::string& natural_format) {
  Run run;
  run.config = f.config_path.empty() ? qm::amsr2_preset() : io::load_config(f.config_path);
  if (f.seed) run.config.seed = *f.seed;
  run.manifest.subcommand = subcommand;
  run.manifest.config_path = f.config_path.empty() ? "preset:amsr2" : f.config_path;
  run.manifest.seed = run.config.seed;
  run.manifest.output_dir = f.out_dir;
  run.manifest.format = f.format.empty() ? natural_format : f.format;
  run.manifest.config_digest = io::config_digest(run.config);
  std::error_code ec;
  std::filesystem::create_directories(f.out_dir, ec);
  if (ec) throw qm::InvalidArgument("cannot create output directory '" + f.out_dir + "'");
  return run;
}

std::string output_path(const Run& run, const std::string& stem) {
  return (std::filesystem::path(run.manifest.output_dir) / (stem + "." + run.manifest.format)).string();
}

void emit_document(const Run& run, const std::string& stem, const io::Json& doc) {
  const std::string text =
      run.manifest.format == "csv" ? io::document_to_csv(doc, run.manifest) : io::to_json_text(doc, run.manifest);
  io::write_file(output_path(run, stem), text);
}

void emit_table(const Run& run, const std::string& stem, const io::Table& table, const io::Json& extra = {}) {
  if (run.manifest.format == "csv") {
    io::write_file(output_path(run, stem), io::to_csv(table, run.manifest));
    return;
  }
  io::Json doc = extra.is_null() ? io::Json::object() : extra;
  doc["rows"] = io::to_json(table);
  io::write_file(output_path(run, stem), io::to_json_text(doc, run.manifest));
}

qm::SolverOptions solver_options(const CommonFlags& f) {
  qm::SolverOptions o;
  o.max_exact_tiles = f.max_exact_tiles;
  return o;
}

int cmd_dual(const CommonFlags& f) {
  const Run run = prepare("dual", f, "json");
  const qm::Scenario sc = qm::build_scenario(run.config);
  const qm::DualSolution d = qm::scenario_duals(sc);
  emit_document(run, "dual", io::to_json(d));
  for (std::size_t k = 0; k < d.multipliers.size(); ++k)
    std::printf("lambda[%zu] = %s\n", k, io::format_double(d.multipliers[k]).c_str());
  for (std::size_t j = 0; j < d.bandwidths.size(); ++j)
    std::printf("channel %zu: B* = %.2f Hz, shadow price = %s/Hz\n", j, d.bandwidths[j],
                io::format_currency(d.shadow_prices[j]).c_str());
  std::printf("converged: %s after %zu sweeps\n", d.converged ? "yes" : "no", d.iterations);
  return kOk;
}

int cmd_greedy(const CommonFlags& f, const std::string& mode, std::optional<std::size_t> channel) {
  const Run run = prepare("greedy", f, "csv");
  const qm::Scenario sc = qm::build_scenario(run.config);
  const qm::DualSolution d = qm::scenario_duals(sc);
  qm::GreedyOptions opts;
  opts.rule = mode == "clearing" ? qm::StopRule::clearing : qm::StopRule::coverage;
  opts.channel = channel;
  const qm::GreedyOutcome g = qm::greedy_procure(sc.grid, sc.instrument(), d.multipliers, sc.costs, opts);
  io::Json extra{{"mode", mode},
                 {"total_cost", g.total_cost},
                 {"feasible", g.feasible},
                 {"bound_factor", g.bound_factor ? io::Json(*g.bound_factor) : io::Json(nullptr)},
                 {"first_rejected_price",
                  g.first_rejected_price ? io::Json(*g.first_rejected_price) : io::Json(nullptr)}};
  emit_table(run, "greedy_trace", io::greedy_trace_table(g, sc.instrument().product_count()), extra);
  std::printf("selected %zu tiles, total cost %s, feasible: %s\n", g.selected.size(),
              io::format_currency(g.total_cost).c_str(), g.feasible ? "yes" : "no");
  if (g.bound_factor) std::printf("approximation bound factor %.4f\n", *g.bound_factor);
  if (g.first_rejected_price)
    std::printf("first rejected price %s\n", io::format_currency(*g.first_rejected_price).c_str());
  return kOk;
}

int cmd_auction(const CommonFlags& f, std::optional<double> reserve_cap) {
  const Run run = prepare("auction", f, "json");
  const qm::Scenario sc = qm::build_scenario(run.config);
  qm::AuctionOptions opts;
  opts.solver = solver_options(f);
  opts.reserve_cap = reserve_cap;
  const auto reports = qm::truthful_reports(sc.sellers);
  const qm::AuctionOutcome o = qm::run_auction(sc.grid, sc.instrument(), reports, opts);
  emit_document(run, "auction", io::to_json(o, qm::make_reported_market(sc.grid, reports)));
  std::printf("allocated %zu tiles (%s solver), welfare %s\n", o.allocation.size(), qm::to_string(o.mode),
              io::format_currency(o.welfare.welfare.amount()).c_str());
  for (const auto& [id, p] : o.payments)
    std::printf("seller %u: payment %s, utility %s\n", id, io::format_currency(p).c_str(),
                io::format_currency(o.seller_utilities.at(id)).c_str());
  if (o.reserve_capped) std::printf("reserve cap applied\n");
  return kOk;
}

int cmd_compare(const CommonFlags& f) {
  const Run run = prepare("compare", f, "json");
  const qm::Scenario sc = qm::build_scenario(run.config);
  const qm::WelfareComparison c = qm::welfare_comparison(sc, solver_options(f));
  emit_document(run, "compare", io::to_json(c));
  std::printf("%-10s %12s %12s %12s %6s\n", "strategy", "value", "cost", "welfare", "trap");
  for (const auto* r : {&c.fixed, &c.flexible})
    std::printf("%-10s %12s %12s %12s %6zu\n", r == &c.fixed ? "fixed" : "flexible",
                io::format_currency(r->buyer_value.amount()).c_str(), io::format_currency(r->total_cost).c_str(),
                io::format_currency(r->welfare.amount()).c_str(), r->trap_tiles);
  std::printf("cost change %+.1f%%, welfare change %+.1f%%\n", c.cost_delta_pct, c.welfare_delta_pct);
  return kOk;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  const auto number = [&](const std::string& s) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (s.empty() || pos != s.size() || s[0] == '-') throw qm::InvalidArgument("bad --sizes value '" + text + "'");
    return static_cast<std::size_t>(v);
  };
  if (auto dots = text.find(".."); dots != std::string::npos) {
    const std::size_t lo = number(text.substr(0, dots)), hi = number(text.substr(dots + 2));
    if (lo > hi) throw qm::InvalidArgument("empty --sizes range '" + text + "'");
    for (std::size_t s = lo; s <= hi; ++s) sizes.push_back(s);
    return sizes;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    sizes.push_back(number(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return sizes;
}

int cmd_bench(const CommonFlags& f, const std::string& sizes_spec, std::size_t instances, bool timing) {
  const Run run = prepare("bench", f, "csv");
  const auto sizes = parse_sizes(sizes_spec);
  if (instances < 1) throw qm::InvalidArgument("--instances must be at least 1");
  qm::BenchOptions opts;
  opts.max_exact_tiles = f.max_exact_tiles;
  const auto rows = qm::scalability_bench(sizes, instances, run.config.seed, opts);
  emit_table(run, "bench", io::bench_table(rows, timing));
  double mean = 0.0, worst = 0.0;
  for (const auto& r : rows) {
    mean += r.gap_pct;
    worst = std::max(worst, r.gap_pct);
  }
  mean /= static_cast<double>(rows.size());
  std::printf("%zu instances: mean gap %.2f%%, max gap %.2f%%\n", rows.size(), mean, worst);
  return kOk;
}

int cmd_clear_curve(const CommonFlags& f, std::size_t channel) {
  const Run run = prepare("clear-curve", f, "csv");
  const qm::Scenario sc = qm::build_scenario(run.config);
  const qm::DualSolution d = qm::scenario_duals(sc);
  const qm::ClearingCurve c = qm::market_clearing_curves(sc, d.multipliers, channel);
  io::Json extra{{"channel", channel},
                 {"equilibrium_q", c.equilibrium_q},
                 {"first_rejected_price",
                  c.first_rejected_price ? io::Json(*c.first_rejected_price) : io::Json(nullptr)}};
  emit_table(run, "clearing", io::clearing_table(c), extra);
  std::printf("channel %zu: equilibrium Q = %zu", channel, c.equilibrium_q);
  if (c.first_rejected_price) std::printf(", first rejected price %s", io::format_currency(*c.first_rejected_price).c_str());
  std::printf("\n");
  return kOk;
}

int report_error(const char* kind, const std::string& message, int code) {
  io::Json rec{{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << rec.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quiet-tile spectrum procurement: auctions, shadow prices and greedy posted-price buying."};
  app.set_version_flag("--version", io::kToolVersion);
  app.require_subcommand(1);

  CommonFlags flags;
  std::string mode = "coverage", sizes = "5..21";
  std::optional<std::size_t> greedy_channel;
  std::size_t clear_channel = 0, instances = 10;
  std::optional<double> reserve_cap;
  bool timing = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "Scenario config JSON (default: built-in AMSR-2 preset)");
    sub->add_option("--seed", flags.seed, "Override the config seed");
    sub->add_option("--out", flags.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--format", flags.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--max-exact-tiles", flags.max_exact_tiles, "Cap for exhaustive enumeration")
        ->capture_default_str()
        ->check(CLI::Range(1, 62));
  };

  auto* dual = app.add_subcommand("dual", "Solve the continuous relaxation for multipliers and shadow prices");
  auto* greedy = app.add_subcommand("greedy", "Greedy posted-price procurement at relaxation duals");
  auto* auction = app.add_subcommand("auction", "Clear the VCG reverse auction with Clarke payments");
  auto* compare = app.add_subcommand("compare", "Fixed-band baseline versus flexible welfare maximization");
  auto* bench = app.add_subcommand("bench", "Exact versus greedy minimum-cost coverage benchmark");
  auto* clear = app.add_subcommand("clear-curve", "Market-clearing demand and supply curves for one channel");
  for (auto* sub : {dual, greedy, auction, compare, bench, clear}) add_common(sub);

  greedy->add_option("--mode", mode, "Stop rule")->check(CLI::IsMember({"coverage", "clearing"}))->capture_default_str();
  greedy->add_option("--channel", greedy_channel, "Restrict candidates to one channel (0-based)");
  auction->add_option("--reserve-cap", reserve_cap, "Clamp payments above this amount");
  bench->add_option("--sizes", sizes, "Tile counts: lo..hi or a comma list")->capture_default_str();
  bench->add_option("--instances", instances, "Instances per size")->capture_default_str();
  bench->add_flag("--timing", timing, "Record wall-clock times (output no longer byte-stable)");
  clear->add_option("--channel", clear_channel, "Channel index (0-based)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kInputError);
  }

  try {
    if (*dual) return cmd_dual(flags);
    if (*greedy) return cmd_greedy(flags, mode, greedy_channel);
    if (*auction) return cmd_auction(flags, reserve_cap);
    if (*compare) return cmd_compare(flags);
    if (*bench) return cmd_bench(flags, sizes, instances, timing);
    if (*clear) return cmd_clear_curve(flags, clear_channel);
  } catch (const qm::InfeasibleError& e) {
    return report_error(e.kind(), e.what(), kInfeasible);
  } catch (const qm::AssumptionViolation& e) {
    return report_error(e.kind(), e.what(), kInfeasible);
  } catch (const qm::DegenerateError& e) {
    return report_error(e.kind(), e.what(), kInfeasible);
  } catch (const qm::Error& e) {
    return report_error(e.kind(), e.what(), kInputError);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kInputError);
  }
  return kInputError;
}
