#pragma once

// Simulation scenarios: seeded commercial cost fields with an optional
// interference trap, the AMSR-2-like preset, and the experiments built on
// them (fixed-band baseline, market clearing, welfare comparison and the
// exact-versus-greedy scalability benchmark).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "quietmarket/errors.hpp"
#include "quietmarket/greedy.hpp"
#include "quietmarket/market.hpp"
#include "quietmarket/physics.hpp"
#include "quietmarket/relaxation.hpp"
#include "quietmarket/rng.hpp"
#include "quietmarket/vcg.hpp"

namespace quietmarket {

inline constexpr std::uint64_t kReferenceSeed = 1;

/// High-cost block on one channel over an inclusive range of time slots.
struct TrapSpec {
  std::size_t channel = 0;
  std::size_t slot_first = 5;
  std::size_t slot_last = 15;
  double peak_cost = 50.0;
  double floor_cost = 40.0;
  double falloff_sigma = 2.5;  // slots
};

/// Geometry shared by every tile of a scenario grid.
struct TileShape {
  double freq_width = 6.0;  // Hz
  double duration = 1.0;    // s
  double duty_cycle = 1.0;
};

struct ScenarioConfig {
  std::size_t time_slots = 20;
  std::size_t bins_per_channel = 5;
  InstrumentConfig instrument;
  TileShape tile;
  double cost_low = 1.0;
  double cost_high = 3.0;
  std::optional<TrapSpec> trap;
  std::size_t seller_count = 4;
  std::uint64_t seed = kReferenceSeed;
  double smoothing_sigma = 1.5;  // tiles

  std::size_t rows() const noexcept { return instrument.channel_count() * bins_per_channel; }
  std::size_t tile_count() const noexcept { return rows() * time_slots; }

  TileId tile_id(std::size_t channel, std::size_t bin, std::size_t slot) const noexcept {
    return static_cast<TileId>((channel * bins_per_channel + bin) * time_slots + slot);
  }

  void validate() const {
    instrument.validate();
    if (time_slots < 1) throw ConfigError("time_slots must be at least 1");
    if (bins_per_channel < 1) throw ConfigError("bins_per_channel must be at least 1");
    if (!(cost_low >= 0.0) || !(cost_low <= cost_high)) throw ConfigError("need 0 <= cost_low <= cost_high");
    if (!(smoothing_sigma >= 0.0)) throw ConfigError("smoothing_sigma must be nonnegative");
    if (seller_count < 1 || seller_count > time_slots)
      throw ConfigError("seller_count must lie in [1, time_slots]");
    if (!(tile.freq_width > 0.0) || !(tile.duration > 0.0) || tile.duration > instrument.integration_window ||
        !(tile.duty_cycle >= 0.0 && tile.duty_cycle <= 1.0))
      throw ConfigError("invalid tile shape");
    if (trap) {
      if (trap->channel >= instrument.channel_count()) throw ConfigError("trap channel outside grid");
      if (trap->slot_first > trap->slot_last || trap->slot_last >= time_slots)
        throw ConfigError("trap slot range outside grid");
      if (!(trap->peak_cost >= trap->floor_cost) || !(trap->floor_cost >= cost_high))
        throw ConfigError("trap needs peak_cost >= floor_cost >= cost_high");
      if (!(trap->falloff_sigma >= 0.0)) throw ConfigError("trap falloff_sigma must be nonnegative");
    }
  }
};

using CostField = std::vector<double>;

inline TileGrid make_grid(const ScenarioConfig& cfg) {
  std::vector<TileSpec> tiles;
  tiles.reserve(cfg.tile_count());
  for (std::size_t j = 0; j < cfg.instrument.channel_count(); ++j)
    for (std::size_t bin = 0; bin < cfg.bins_per_channel; ++bin)
      for (std::size_t t = 0; t < cfg.time_slots; ++t)
        tiles.push_back({cfg.tile_id(j, bin, t), j, cfg.tile.freq_width, cfg.tile.duration, cfg.tile.duty_cycle, t,
                         bin});
  return TileGrid(std::move(tiles), cfg.instrument.integration_window, cfg.instrument.channel_count());
}

namespace detail {

inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  if (len == 1) return 0;
  while (i < 0 || i >= len) {
    if (i < 0) i = -i - 1;
    if (i >= len) i = 2 * len - i - 1;
  }
  return static_cast<std::size_t>(i);
}

/// Separable truncated Gaussian blur (radius ceil(3 sigma)), reflective
/// boundaries, on a rows x cols row-major array.
inline std::vector<double> gaussian_smooth(const std::vector<double>& in, std::size_t rows, std::size_t cols,
                                           double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  if (!(sigma > 0.0) || radius == 0) return in;
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
    const double w = std::exp(-static_cast<double>(d * d) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(d + radius)] = w;
    sum += w;
  }
  for (double& w : kernel) w /= sum;

  std::vector<double> tmp(in.size()), out(in.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d)
        acc += kernel[static_cast<std::size_t>(d + radius)] *
               in[r * cols + reflect(static_cast<std::ptrdiff_t>(c) + d, cols)];
      tmp[r * cols + c] = acc;
    }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d)
        acc += kernel[static_cast<std::size_t>(d + radius)] *
               tmp[reflect(static_cast<std::ptrdiff_t>(r) + d, rows) * cols + c];
      out[r * cols + c] = acc;
    }
  return out;
}

/// Affine map of [min, max] onto [lo, hi]; a constant field maps to lo.
inline void rescale(std::vector<double>& v, double lo, double hi) {
  if (v.empty()) return;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double a = *mn, b = *mx;
  for (double& x : v) x = (b > a) ? lo + (x - a) / (b - a) * (hi - lo) : lo;
}

}  // namespace detail

/// Smoothed, rescaled background field without the trap.
inline CostField background_cost_field(const ScenarioConfig& cfg) {
  const CounterRng rng(cfg.seed);
  CostField raw(cfg.tile_count());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = rng.uniform(i);
  CostField field = detail::gaussian_smooth(raw, cfg.rows(), cfg.time_slots, cfg.smoothing_sigma);
  detail::rescale(field, cfg.cost_low, cfg.cost_high);
  return field;
}

inline bool in_trap(const TrapSpec& trap, const TileSpec& t) {
  return t.channel == trap.channel && t.time_slot >= trap.slot_first && t.time_slot <= trap.slot_last;
}

/// Overwrites the trap block with floor + (peak - floor) * exp(-d^2 / 2s^2),
/// d = slot distance to the centre of the range (both middle slots count as
/// the centre for even-length ranges).
inline CostField apply_trap(CostField field, const ScenarioConfig& cfg, const TrapSpec& trap) {
  if (field.size() != cfg.tile_count()) throw InvalidArgument("cost field does not match scenario grid");
  if (trap.channel >= cfg.instrument.channel_count() || trap.slot_first > trap.slot_last ||
      trap.slot_last >= cfg.time_slots)
    throw InvalidArgument("trap outside grid");
  const double c_lo = std::floor(0.5 * static_cast<double>(trap.slot_first + trap.slot_last));
  const double c_hi = std::ceil(0.5 * static_cast<double>(trap.slot_first + trap.slot_last));
  for (std::size_t bin = 0; bin < cfg.bins_per_channel; ++bin)
    for (std::size_t t = trap.slot_first; t <= trap.slot_last; ++t) {
      const double s = static_cast<double>(t);
      const double d = s < c_lo ? c_lo - s : (s > c_hi ? s - c_hi : 0.0);
      const double g = d == 0.0 ? 1.0
                       : trap.falloff_sigma > 0.0
                           ? std::exp(-d * d / (2.0 * trap.falloff_sigma * trap.falloff_sigma))
                           : 0.0;
      field[cfg.tile_id(trap.channel, bin, t)] = trap.floor_cost + (trap.peak_cost - trap.floor_cost) * g;
    }
  return field;
}

inline CostField generate_cost_field(const ScenarioConfig& cfg) {
  cfg.validate();
  CostField field = background_cost_field(cfg);
  if (cfg.trap) field = apply_trap(std::move(field), cfg, *cfg.trap);
  return field;
}

/// Sellers own contiguous blocks of time slots across every channel.
inline std::vector<SellerProfile> time_block_sellers(const ScenarioConfig& cfg, const TileGrid& grid,
                                                     const CostField& costs) {
  std::vector<SellerProfile> sellers(cfg.seller_count);
  for (std::size_t s = 0; s < sellers.size(); ++s) sellers[s].id = static_cast<SellerId>(s);
  for (const auto& t : grid.tiles()) {
    const std::size_t s = t.time_slot * cfg.seller_count / cfg.time_slots;
    sellers[s].owned_tiles.push_back(t.id);
    sellers[s].true_costs[t.id] = costs[t.id];
  }
  return sellers;
}

struct Scenario {
  ScenarioConfig config;  // instrument reflects any baseline adjustment
  TileGrid grid;
  CostField costs;
  std::vector<SellerProfile> sellers;
  std::size_t generation_attempts = 1;

  const InstrumentConfig& instrument() const noexcept { return config.instrument; }

  bool is_trap_tile(TileId id) const {
    return config.trap && in_trap(*config.trap, grid.tile(id));
  }
};

/// Builds grid, field and sellers. If buying every tile still misses the
/// targets, baseline bandwidths are raised by 50% and generation retried.
inline Scenario build_scenario(ScenarioConfig cfg, std::size_t max_attempts = 8) {
  cfg.validate();
  Scenario sc;
  for (std::size_t attempt = 1;; ++attempt) {
    sc.grid = make_grid(cfg);
    if (is_feasible(Allocation::full(sc.grid), sc.grid, cfg.instrument)) {
      sc.generation_attempts = attempt;
      break;
    }
    if (attempt >= max_attempts)
      throw InfeasibleError("scenario infeasible even with every tile after " + std::to_string(attempt) +
                            " attempts");
    for (auto& ch : cfg.instrument.channels) ch.baseline_bandwidth *= 1.5;
  }
  sc.config = cfg;
  sc.costs = generate_cost_field(cfg);
  sc.sellers = time_block_sellers(cfg, sc.grid, sc.costs);
  validate_partition(sc.grid, sc.sellers);
  return sc;
}

/// Three-channel water-vapour radiometer (23.8 / 36.5 / 89.0 GHz), 5 bins
/// per channel, 20 time slots, interference trap on the 23.8 GHz channel.
inline ScenarioConfig amsr2_preset(std::uint64_t seed = kReferenceSeed) {
  ScenarioConfig cfg;
  cfg.time_slots = 20;
  cfg.bins_per_channel = 5;
  cfg.seed = seed;
  auto& ins = cfg.instrument;
  ins.integration_window = 1.0;
  for (const char* label : {"23.8 GHz", "36.5 GHz", "89.0 GHz"})
    ins.channels.push_back({label, 230.0, 500.0, 0.0, 0.0, 0.0});
  ins.sensitivity = {{0.45, -0.20, 0.05}};
  ins.variance_targets = {0.25};
  ins.product_weights = {1.0};
  ins.value_scale = 10000.0;
  cfg.tile = {6.0, 1.0, 1.0};
  cfg.cost_low = 1.0;
  cfg.cost_high = 3.0;
  cfg.smoothing_sigma = 1.5;
  cfg.trap = TrapSpec{0, 5, 15, 50.0, 40.0, 2.5};
  cfg.seller_count = 4;
  return cfg;
}

/// Outcome of one procurement strategy on a scenario.
struct StrategyResult {
  std::vector<TileId> selected;  // ascending ids
  double total_cost = 0.0;
  Payoff buyer_value = Payoff::infeasible();
  Payoff welfare = Payoff::infeasible();
  std::vector<double> final_variances;
  std::size_t trap_tiles = 0;
  std::vector<std::size_t> per_channel;
};

inline StrategyResult summarize(const Scenario& sc, const Allocation& alloc) {
  StrategyResult r;
  r.selected = alloc.tiles();
  r.per_channel.assign(sc.grid.channel_count(), 0);
  for (TileId id : r.selected) {
    r.total_cost += sc.costs[id];
    ++r.per_channel[sc.grid.tile(id).channel];
    if (sc.is_trap_tile(id)) ++r.trap_tiles;
  }
  r.buyer_value = buyer_valuation(alloc, sc.grid, sc.instrument());
  r.welfare = r.buyer_value - r.total_cost;
  r.final_variances = retrieval_variances(alloc, sc.grid, sc.instrument());
  return r;
}

/// Buys tiles of one channel in ascending price until the targets hold.
inline StrategyResult fixed_band_baseline(const Scenario& sc, std::size_t channel = 0) {
  check_channel(sc.instrument(), channel);
  std::vector<TileId> order = sc.grid.tiles_in_channel(channel);
  std::stable_sort(order.begin(), order.end(), [&](TileId a, TileId b) { return sc.costs[a] < sc.costs[b]; });
  Allocation alloc(sc.grid);
  for (TileId id : order) {
    if (is_feasible(alloc, sc.grid, sc.instrument())) break;
    alloc.insert(sc.grid, id);
  }
  if (!is_feasible(alloc, sc.grid, sc.instrument()))
    throw InfeasibleError("fixed-band baseline infeasible: channel " + std::to_string(channel) +
                          " alone cannot meet the targets");
  return summarize(sc, alloc);
}

/// Welfare-maximizing allocation at truthful costs across all channels.
inline StrategyResult flexible_allocation(const Scenario& sc, const SolverOptions& options = {}) {
  const auto reports = truthful_reports(sc.sellers);
  return summarize(sc, solve_welfare_max(sc.grid, sc.instrument(), reports, options));
}

struct WelfareComparison {
  StrategyResult fixed;
  StrategyResult flexible;
  double value_delta_pct = 0.0;
  double cost_delta_pct = 0.0;
  double welfare_delta_pct = 0.0;
};

/// (after - before) / |before| in percent.
inline double percent_change(double before, double after) {
  if (before == 0.0) return after == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), after);
  return (after - before) / std::abs(before) * 100.0;
}

inline WelfareComparison welfare_comparison(const Scenario& sc, const SolverOptions& options = {}) {
  WelfareComparison cmp;
  cmp.fixed = fixed_band_baseline(sc);
  cmp.flexible = flexible_allocation(sc, options);
  cmp.value_delta_pct = percent_change(cmp.fixed.buyer_value.amount(), cmp.flexible.buyer_value.amount());
  cmp.cost_delta_pct = percent_change(cmp.fixed.total_cost, cmp.flexible.total_cost);
  cmp.welfare_delta_pct = percent_change(cmp.fixed.welfare.amount(), cmp.flexible.welfare.amount());
  return cmp;
}

/// Relaxation multipliers for the scenario's posted prices.
inline DualSolution scenario_duals(const Scenario& sc, const RelaxationSettings& settings = {}) {
  return solve_relaxation(sc.grid, sc.instrument(), sc.costs, settings);
}

struct ClearingRow {
  std::size_t q = 0;
  double bandwidth = 0.0;  // after q purchases
  double demand = 0.0;     // per-tile marginal value at that bandwidth
  double supply = 0.0;     // q-th lowest price
};

struct ClearingCurve {
  std::size_t channel = 0;
  std::vector<ClearingRow> rows;
  std::size_t equilibrium_q = 0;
  std::optional<double> first_rejected_price;
};

/// Demand: shadow price at the bandwidth reached after q purchases times the
/// q-th tile's bandwidth contribution. Supply: channel prices ascending.
inline ClearingCurve market_clearing_curves(const Scenario& sc, std::span<const double> duals, std::size_t channel) {
  check_channel(sc.instrument(), channel);
  std::vector<TileId> order = sc.grid.tiles_in_channel(channel);
  std::stable_sort(order.begin(), order.end(), [&](TileId a, TileId b) { return sc.costs[a] < sc.costs[b]; });
  ClearingCurve curve;
  curve.channel = channel;
  double vol = 0.0;
  for (std::size_t q = 1; q <= order.size(); ++q) {
    const TileId id = order[q - 1];
    vol += sc.grid.tile(id).spectral_volume();
    const double tau = sc.instrument().integration_window;
    const double b = sc.instrument().channels[channel].baseline_bandwidth + vol / tau;
    const double demand = shadow_price_at(duals, sc.instrument(), channel, b) * sc.grid.bandwidth_contribution(id);
    curve.rows.push_back({q, b, demand, sc.costs[id]});
  }
  // demand falls and supply rises, so trades form a prefix
  while (curve.equilibrium_q < curve.rows.size() &&
         curve.rows[curve.equilibrium_q].demand >= curve.rows[curve.equilibrium_q].supply)
    ++curve.equilibrium_q;
  if (curve.equilibrium_q < curve.rows.size()) curve.first_rejected_price = curve.rows[curve.equilibrium_q].supply;
  return curve;
}

// ---------------------------------------------------------------------------
// Exact-versus-greedy scalability benchmark

struct BenchSettings {
  double baseline_bandwidth = 1.0;  // Hz
  double noise_constant = 500.0;
  double coverage_fraction = 0.5;  // theta: need sum b_x >= theta * sum of all b_x
};

struct BenchInstance {
  std::size_t tile_count = 0;
  std::vector<double> bandwidth_contributions;  // b_x ~ U(1, 5)
  std::vector<double> costs;                    // c_x ~ U(1, 10)
  double target = 0.0;                          // required sum of b_x
};

inline BenchInstance make_bench_instance(std::size_t size, std::uint64_t seed, std::size_t index,
                                         const BenchSettings& settings = {}) {
  const CounterRng rng = CounterRng(seed).derive(size).derive(index);
  BenchInstance inst;
  inst.tile_count = size;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    inst.bandwidth_contributions.push_back(rng.uniform(2 * i, 1.0, 5.0));
    inst.costs.push_back(rng.uniform(2 * i + 1, 1.0, 10.0));
    total += inst.bandwidth_contributions.back();
  }
  inst.target = settings.coverage_fraction * total;
  return inst;
}

/// Single-channel physics model of a bench instance: the accuracy target is
/// met exactly when the bought bandwidth reaches the coverage requirement.
struct BenchProblem {
  TileGrid grid;
  InstrumentConfig instrument;
};

inline BenchProblem bench_problem(const BenchInstance& inst, const BenchSettings& settings = {}) {
  BenchProblem p;
  std::vector<TileSpec> tiles;
  for (std::size_t i = 0; i < inst.tile_count; ++i)
    tiles.push_back({static_cast<TileId>(i), 0, inst.bandwidth_contributions[i], 1.0, 1.0, i, 0});
  p.grid = TileGrid(std::move(tiles), 1.0, 1);
  p.instrument.integration_window = 1.0;
  p.instrument.channels = {{"bench", settings.baseline_bandwidth, settings.noise_constant, 0.0, 0.0, 0.0}};
  p.instrument.sensitivity = {{1.0}};
  p.instrument.variance_targets = {settings.noise_constant / (settings.baseline_bandwidth + inst.target)};
  p.instrument.product_weights = {1.0};
  p.instrument.value_scale = 1.0;
  return p;
}

struct ExactCover {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<TileId> tiles;
};

/// Minimum-cost feasible subset by enumerating all 2^n subsets.
inline ExactCover exact_min_cost_cover(const BenchProblem& p, std::span<const double> costs,
                                       std::size_t max_exact_tiles = 22) {
  const std::size_t n = p.grid.size();
  if (n > max_exact_tiles || n > 62)
    throw CapacityError("exact cover limited to " + std::to_string(max_exact_tiles) +
                        " tiles (--max-exact-tiles); got " + std::to_string(n));
  if (costs.size() != n) throw InvalidArgument("one cost per tile required");
  const double b0 = p.instrument.channels[0].baseline_bandwidth;
  std::vector<double> bw(1);
  ExactCover best;
  std::uint64_t best_mask = 0;
  bool found = false;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double cost = 0.0, vol = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if ((mask >> i) & 1u) {
        cost += costs[i];
        vol += p.grid.tiles()[i].spectral_volume();
      }
    if (found && !(cost < best.cost)) continue;
    bw[0] = b0 + vol / p.instrument.integration_window;
    if (!is_feasible_at(bw, p.instrument)) continue;
    best.cost = cost;
    best_mask = mask;
    found = true;
  }
  if (!found) throw InfeasibleError("bench instance has no feasible subset");
  for (std::size_t i = 0; i < n; ++i)
    if ((best_mask >> i) & 1u) best.tiles.push_back(static_cast<TileId>(i));
  return best;
}

struct BenchRow {
  std::size_t size = 0;
  std::size_t instance = 0;
  double exact_cost = 0.0;
  double greedy_cost = 0.0;
  double gap_pct = 0.0;
  double exact_us = 0.0;
  double greedy_us = 0.0;
  double bound_factor = 0.0;
};

struct BenchOptions {
  std::size_t max_exact_tiles = 22;
  BenchSettings settings;
};

/// Greedy side of one bench instance: relaxation duals, then coverage greedy.
inline GreedyOutcome bench_greedy(const BenchProblem& p, std::span<const double> costs) {
  const DualSolution duals = solve_relaxation(p.grid, p.instrument, costs);
  return greedy_procure(p.grid, p.instrument, duals.multipliers, costs);
}

inline std::vector<BenchRow> scalability_bench(const std::vector<std::size_t>& sizes, std::size_t instances,
                                               std::uint64_t seed, const BenchOptions& options = {}) {
  for (std::size_t s : sizes)
    if (s > options.max_exact_tiles)
      throw CapacityError("bench size " + std::to_string(s) + " exceeds exact cap " +
                          std::to_string(options.max_exact_tiles) + " (--max-exact-tiles)");
  using clock = std::chrono::steady_clock;
  const auto micros = [](clock::duration d) { return std::chrono::duration<double, std::micro>(d).count(); };
  std::vector<BenchRow> rows;
  for (std::size_t size : sizes)
    for (std::size_t i = 0; i < instances; ++i) {
      const BenchInstance inst = make_bench_instance(size, seed, i, options.settings);
      const BenchProblem prob = bench_problem(inst, options.settings);
      BenchRow row{size, i};
      auto t0 = clock::now();
      const ExactCover exact = exact_min_cost_cover(prob, inst.costs, options.max_exact_tiles);
      auto t1 = clock::now();
      const GreedyOutcome greedy = bench_greedy(prob, inst.costs);
      auto t2 = clock::now();
      row.exact_cost = exact.cost;
      // summed in id order so an identical set prices identically
      std::vector<TileId> picked = greedy.selected;
      std::sort(picked.begin(), picked.end());
      for (TileId id : picked) row.greedy_cost += inst.costs[id];
      row.gap_pct = (row.greedy_cost - exact.cost) / exact.cost * 100.0;
      row.exact_us = micros(t1 - t0);
      row.greedy_us = micros(t2 - t1);
      row.bound_factor = greedy.bound_factor.value_or(1.0);
      rows.push_back(row);
    }
  return rows;
}

}  // namespace quietmarket
