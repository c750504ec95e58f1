#pragma once

// Shared fixtures and independent oracles. The oracles evaluate the model
// formulas directly on plain arrays and never call the library's solvers.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "quietmarket/market.hpp"
#include "quietmarket/physics.hpp"
#include "quietmarket/vcg.hpp"

namespace qmtest {

using namespace quietmarket;

/// kappa = 500, tau = 1, B0 = 100, three 1000 Hz tiles, eps^2 = 0.25,
/// lambda_0 = 1000, costs {1, 2, 100}, one seller per tile.
struct ThreeTile {
  TileGrid grid;
  InstrumentConfig instrument;
  std::vector<double> costs{1.0, 2.0, 100.0};
  std::vector<SellerProfile> sellers;

  ThreeTile() {
    std::vector<TileSpec> tiles;
    for (TileId i = 0; i < 3; ++i) tiles.push_back({i, 0, 1000.0, 1.0, 1.0, i, 0});
    grid = TileGrid(tiles, 1.0, 1);
    instrument.channels = {{"c", 100.0, 500.0, 0.0, 0.0, 0.0}};
    instrument.sensitivity = {{1.0}};
    instrument.variance_targets = {0.25};
    instrument.product_weights = {1.0};
    instrument.value_scale = 1000.0;
    for (TileId i = 0; i < 3; ++i) sellers.push_back({i, {i}, {{i, costs[i]}}});
  }
};

inline InstrumentConfig single_channel(double b0, double kappa, double eps2, double lambda0 = 1.0, double c = 1.0) {
  InstrumentConfig ins;
  ins.channels = {{"c", b0, kappa, 0.0, 0.0, 0.0}};
  ins.sensitivity = {{c}};
  ins.variance_targets = {eps2};
  ins.product_weights = {1.0};
  ins.value_scale = lambda0;
  return ins;
}

/// Random market: J channels with uniform per-channel tile volumes, K
/// products, additive costs, sellers owning random tiles. Targets are set
/// between the empty-set and full-grid variances so feasibility is
/// nontrivial.
struct RandomMarket {
  TileGrid grid;
  InstrumentConfig instrument;
  std::vector<double> costs;
  std::vector<SellerProfile> sellers;
};

inline RandomMarket random_market(std::mt19937_64& rng, std::size_t tiles, std::size_t channels,
                                  std::size_t products, std::size_t seller_count) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomMarket m;
  auto& ins = m.instrument;
  ins.integration_window = 1.0;
  std::vector<double> width(channels);
  for (std::size_t j = 0; j < channels; ++j) {
    ins.channels.push_back({"c" + std::to_string(j), 50.0 + 150.0 * u(rng), 200.0 + 600.0 * u(rng), 0.0, 0.0, 0.0});
    width[j] = 20.0 + 200.0 * u(rng);
  }
  std::vector<TileSpec> specs;
  for (std::size_t i = 0; i < tiles; ++i) {
    const std::size_t j = i < channels ? i : static_cast<std::size_t>(u(rng) * static_cast<double>(channels));
    specs.push_back({static_cast<TileId>(i), std::min(j, channels - 1), width[std::min(j, channels - 1)], 1.0, 1.0, i, 0});
  }
  m.grid = TileGrid(specs, 1.0, channels);
  for (std::size_t k = 0; k < products; ++k) {
    std::vector<double> row(channels);
    for (double& c : row) c = u(rng) * 2.0 - 1.0;
    ins.sensitivity.push_back(row);
    ins.product_weights.push_back(0.5 + u(rng));
  }
  // targets: somewhere between full-grid and empty variances
  ins.variance_targets.assign(products, 1.0);
  const auto empty = retrieval_variances(Allocation(m.grid), m.grid, ins);
  const auto full = retrieval_variances(Allocation::full(m.grid), m.grid, ins);
  for (std::size_t k = 0; k < products; ++k) {
    const double t = 0.15 + 0.6 * u(rng);
    ins.variance_targets[k] = std::max(full[k] + t * (empty[k] - full[k]), 1e-9);
  }
  // value scale comparable to costs
  double spread = 0.0;
  for (std::size_t k = 0; k < products; ++k) spread += ins.product_weights[k] * (empty[k] - full[k]);
  ins.value_scale = (5.0 + 40.0 * u(rng)) * static_cast<double>(tiles) / std::max(spread, 1e-12);
  for (std::size_t i = 0; i < tiles; ++i) m.costs.push_back(1.0 + 9.0 * u(rng));
  m.sellers.resize(seller_count);
  for (std::size_t s = 0; s < seller_count; ++s) m.sellers[s].id = static_cast<SellerId>(s);
  for (std::size_t i = 0; i < tiles; ++i) {
    const std::size_t s = i < seller_count ? i : static_cast<std::size_t>(u(rng) * static_cast<double>(seller_count));
    auto& seller = m.sellers[std::min(s, seller_count - 1)];
    seller.owned_tiles.push_back(static_cast<TileId>(i));
    seller.true_costs[static_cast<TileId>(i)] = m.costs[i];
  }
  return m;
}

/// Random market on at most `max_tiles` tiles with 2-4 sellers where no single
/// seller is essential for feasibility.
inline RandomMarket auction_market(std::mt19937_64& rng, std::size_t max_tiles) {
  while (true) {
    const std::size_t n = 4 + rng() % (max_tiles - 3);
    const std::size_t sellers = 2 + rng() % 3;
    const std::size_t channels = 1 + rng() % 3;
    auto m = random_market(rng, n, channels, 1 + rng() % 2, sellers);
    const auto ok = check_assumption1(m.grid, m.instrument, m.sellers);
    bool all = true;
    for (const auto& [id, v] : ok) all = all && v;
    if (all) return m;
  }
}

/// Retrieval variances from the model formulas on a bitmask subset.
inline std::vector<double> oracle_variances(const TileGrid& grid, const InstrumentConfig& ins, std::uint64_t mask) {
  std::vector<double> bw(ins.channels.size());
  for (std::size_t j = 0; j < bw.size(); ++j) bw[j] = ins.channels[j].baseline_bandwidth;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if ((mask >> i) & 1u) {
      const auto& t = grid.tiles()[i];
      bw[t.channel] += t.duty_cycle * t.duration * t.freq_width / ins.integration_window;
    }
  std::vector<double> var(ins.sensitivity.size(), 0.0);
  for (std::size_t k = 0; k < var.size(); ++k)
    for (std::size_t j = 0; j < bw.size(); ++j) {
      const auto& ch = ins.channels[j];
      const double p = ch.residual_rfi_power;
      const double sigma2 = ch.noise_constant / (bw[j] * ins.integration_window) + ch.rfi_linear * p +
                            ch.rfi_quadratic * p * p;
      var[k] += ins.sensitivity[k][j] * ins.sensitivity[k][j] * sigma2;
    }
  return var;
}

struct OracleWelfare {
  bool feasible = false;
  double welfare = -std::numeric_limits<double>::infinity();
  std::uint64_t mask = 0;
};

/// Brute-force welfare maximum over subsets of `allowed` (bitmask).
inline OracleWelfare oracle_welfare_max(const TileGrid& grid, const InstrumentConfig& ins,
                                        const std::vector<double>& costs, std::uint64_t allowed) {
  OracleWelfare best;
  const std::size_t n = grid.size();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    if ((mask & ~allowed) != 0) continue;
    const auto var = oracle_variances(grid, ins, mask);
    bool ok = true;
    double value = 0.0;
    for (std::size_t k = 0; k < var.size(); ++k) {
      ok = ok && var[k] <= ins.variance_targets[k];
      value += ins.product_weights[k] * (ins.variance_targets[k] - var[k]);
    }
    if (!ok) continue;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if ((mask >> i) & 1u) cost += costs[i];
    const double w = ins.value_scale * value - cost;
    if (!best.feasible || w > best.welfare) best = {true, w, mask};
  }
  return best;
}

/// Brute-force minimum posted-price cost over feasible subsets.
inline double oracle_min_cover_cost(const TileGrid& grid, const InstrumentConfig& ins,
                                    const std::vector<double>& prices) {
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << grid.size()); ++mask) {
    const auto var = oracle_variances(grid, ins, mask);
    bool ok = true;
    for (std::size_t k = 0; k < var.size(); ++k) ok = ok && var[k] <= ins.variance_targets[k];
    if (!ok) continue;
    double cost = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      if ((mask >> i) & 1u) cost += prices[i];
    best = std::min(best, cost);
  }
  return best;
}

inline std::uint64_t full_mask(std::size_t n) { return n >= 64 ? ~0ull : (std::uint64_t{1} << n) - 1; }

inline std::uint64_t mask_of(const std::vector<TileId>& ids) {
  std::uint64_t m = 0;
  for (TileId id : ids) m |= std::uint64_t{1} << id;
  return m;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace qmtest
