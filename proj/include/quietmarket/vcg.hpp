#pragma once

// Reverse VCG auction: welfare-maximizing allocation over quiet tiles and
// Clarke pivot payments to sellers.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "quietmarket/errors.hpp"
#include "quietmarket/market.hpp"
#include "quietmarket/physics.hpp"

namespace quietmarket {

enum class SolverMode {
  automatic,           // channel-decomposed when eligible, else exhaustive
  exhaustive,          // all 2^|allowed tiles| subsets
  channel_decomposed,  // per-channel purchase counts over cost-sorted tiles
};

inline const char* to_string(SolverMode m) noexcept {
  switch (m) {
    case SolverMode::exhaustive: return "exhaustive";
    case SolverMode::channel_decomposed: return "channel-decomposed";
    default: return "automatic";
  }
}

struct SolverOptions {
  SolverMode mode = SolverMode::automatic;
  std::size_t max_exact_tiles = 22;
  std::size_t max_count_vectors = 50'000'000;
};

struct EconomySolution {
  Allocation allocation;
  Payoff welfare = Payoff::infeasible();
};

struct AuctionOptions {
  SolverOptions solver;
  std::optional<double> reserve_cap;  // off by default; breaks DSIC when binding
};

struct AuctionOutcome {
  Allocation allocation;
  WelfareBreakdown welfare;
  std::map<SellerId, double> payments;
  std::map<SellerId, double> counterfactual_welfares;
  std::map<SellerId, double> seller_utilities;  // at declared costs
  std::map<SellerId, double> declared_costs;    // C_i(S*_i) as reported
  SolverMode mode = SolverMode::automatic;
  bool reserve_capped = false;
};

namespace detail {

/// Sorted-id-sequence lexicographic order on two subsets encoded as bitmasks
/// over an ascending list of tile ids.
inline bool lex_less_mask(std::uint64_t a, std::uint64_t b) noexcept {
  const std::uint64_t diff = a ^ b;
  if (diff == 0) return false;
  const int p = std::countr_zero(diff);
  if ((a >> p) & 1u) return (b >> p) != 0;
  return (a >> p) == 0;
}

inline bool lex_less(const std::vector<TileId>& a, const std::vector<TileId>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

inline std::vector<TileId> allowed_tiles(const TileGrid& grid, const ReportedMarket& market,
                                         std::optional<std::size_t> excluded) {
  std::vector<TileId> out;
  for (const auto& t : grid.tiles())
    if (!excluded || market.owner[t.id] != *excluded) out.push_back(t.id);
  return out;
}

inline bool uniform_channel_volumes(const TileGrid& grid, std::span<const TileId> tiles) {
  std::vector<double> first(grid.channel_count(), -1.0);
  for (TileId id : tiles) {
    const TileSpec& t = grid.tile(id);
    const double v = t.spectral_volume();
    double& f = first[t.channel];
    if (f < 0.0) {
      f = v;
    } else if (std::abs(v - f) > 1e-12 * std::max(std::abs(f), 1.0)) {
      return false;
    }
  }
  return true;
}

template <class Visit>
void for_each_count_vector(const std::vector<std::size_t>& limits, Visit&& visit) {
  std::vector<std::size_t> counts(limits.size(), 0);
  while (true) {
    visit(static_cast<const std::vector<std::size_t>&>(counts));
    std::size_t j = 0;
    while (j < counts.size() && counts[j] == limits[j]) counts[j++] = 0;
    if (j == counts.size()) return;
    ++counts[j];
  }
}

}  // namespace detail

/// Exhaustive welfare maximization for an arbitrary total-cost function of
/// the selected set. `cost_of(tiles)` receives the selected ids in ascending
/// order. Use only on small grids.
template <class CostFn>
EconomySolution solve_exhaustive_with(const TileGrid& grid, const InstrumentConfig& instrument,
                                      std::span<const TileId> allowed, CostFn&& cost_of,
                                      std::size_t max_exact_tiles = 22) {
  if (allowed.size() > max_exact_tiles || allowed.size() > 62)
    throw CapacityError("exhaustive solver limited to " + std::to_string(max_exact_tiles) +
                        " tiles (--max-exact-tiles); got " + std::to_string(allowed.size()));
  std::vector<TileId> ids(allowed.begin(), allowed.end());
  std::sort(ids.begin(), ids.end());
  const std::size_t n = ids.size();
  const double tau = instrument.integration_window;

  std::vector<double> vol(instrument.channel_count());
  std::vector<double> bw(instrument.channel_count());
  std::vector<TileId> chosen;
  chosen.reserve(n);

  Payoff best = Payoff::infeasible();
  std::uint64_t best_mask = 0;
  const std::uint64_t end = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < end; ++mask) {
    std::fill(vol.begin(), vol.end(), 0.0);
    chosen.clear();
    for (std::size_t p = 0; p < n; ++p) {
      if ((mask >> p) & 1u) {
        const TileSpec& t = grid.tile(ids[p]);
        vol[t.channel] += t.spectral_volume();
        chosen.push_back(ids[p]);
      }
    }
    for (std::size_t j = 0; j < bw.size(); ++j)
      bw[j] = instrument.channels[j].baseline_bandwidth + vol[j] / tau;
    const Payoff value = buyer_valuation_at(bw, instrument);
    if (!value.feasible()) continue;
    const Payoff w = value - cost_of(std::span<const TileId>(chosen));
    if (w > best || (w == best && detail::lex_less_mask(mask, best_mask))) {
      best = w;
      best_mask = mask;
    }
  }

  EconomySolution out{Allocation(grid), best};
  if (best.feasible())
    for (std::size_t p = 0; p < n; ++p)
      if ((best_mask >> p) & 1u) out.allocation.insert(grid, ids[p]);
  return out;
}

/// Channel-decomposed exact solver for additive costs with uniform tile
/// volumes per channel: any optimum buys the cheapest tiles of each channel,
/// so it suffices to search per-channel purchase counts.
inline EconomySolution solve_channel_decomposed(const TileGrid& grid, const InstrumentConfig& instrument,
                                                const ReportedMarket& market, std::span<const TileId> allowed,
                                                std::size_t max_count_vectors = 50'000'000) {
  if (!detail::uniform_channel_volumes(grid, allowed))
    throw CapacityError("channel-decomposed solver needs uniform tile volumes within each channel");
  const std::size_t J = instrument.channel_count();
  std::vector<std::vector<TileId>> sorted(J);
  for (TileId id : allowed) sorted[grid.tile(id).channel].push_back(id);
  std::vector<std::vector<double>> prefix_cost(J), prefix_bw(J);
  std::vector<std::size_t> limits(J);
  double combos = 1.0;
  for (std::size_t j = 0; j < J; ++j) {
    auto& s = sorted[j];
    std::sort(s.begin(), s.end(), [&](TileId a, TileId b) {
      return market.cost[a] != market.cost[b] ? market.cost[a] < market.cost[b] : a < b;
    });
    prefix_cost[j].assign(s.size() + 1, 0.0);
    prefix_bw[j].assign(s.size() + 1, 0.0);
    double vol = 0.0;
    for (std::size_t q = 0; q < s.size(); ++q) {
      prefix_cost[j][q + 1] = prefix_cost[j][q] + market.cost[s[q]];
      vol += grid.tile(s[q]).spectral_volume();
      prefix_bw[j][q + 1] = vol / instrument.integration_window;
    }
    limits[j] = s.size();
    combos *= static_cast<double>(s.size() + 1);
  }
  if (combos > static_cast<double>(max_count_vectors))
    throw CapacityError("channel-decomposed search space exceeds " + std::to_string(max_count_vectors) +
                        " count vectors");

  auto selection = [&](const std::vector<std::size_t>& counts) {
    std::vector<TileId> ids;
    for (std::size_t j = 0; j < J; ++j) ids.insert(ids.end(), sorted[j].begin(), sorted[j].begin() + counts[j]);
    std::sort(ids.begin(), ids.end());
    return ids;
  };

  std::vector<double> bw(J);
  Payoff best = Payoff::infeasible();
  std::vector<std::size_t> best_counts(J, 0);
  detail::for_each_count_vector(limits, [&](const std::vector<std::size_t>& counts) {
    double cost = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      bw[j] = instrument.channels[j].baseline_bandwidth + prefix_bw[j][counts[j]];
      cost += prefix_cost[j][counts[j]];
    }
    const Payoff value = buyer_valuation_at(bw, instrument);
    if (!value.feasible()) return;
    const Payoff w = value - cost;
    if (w > best || (w == best && detail::lex_less(selection(counts), selection(best_counts)))) {
      best = w;
      best_counts = counts;
    }
  });

  EconomySolution out{Allocation(grid), best};
  if (best.feasible())
    for (TileId id : selection(best_counts)) out.allocation.insert(grid, id);
  return out;
}

inline SolverMode resolve_mode(const TileGrid& grid, const SolverOptions& options) {
  if (options.mode != SolverMode::automatic) return options.mode;
  std::vector<TileId> all(grid.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<TileId>(i);
  return detail::uniform_channel_volumes(grid, all) ? SolverMode::channel_decomposed : SolverMode::exhaustive;
}

/// Best reported welfare over allocations that avoid the excluded seller's
/// tiles. Returns an infeasible payoff when no such allocation is feasible.
inline EconomySolution solve_economy(const TileGrid& grid, const InstrumentConfig& instrument,
                                     const ReportedMarket& market, SolverMode mode,
                                     const SolverOptions& options,
                                     std::optional<std::size_t> excluded = std::nullopt) {
  const auto allowed = detail::allowed_tiles(grid, market, excluded);
  if (mode == SolverMode::automatic) mode = resolve_mode(grid, options);
  if (mode == SolverMode::channel_decomposed)
    return solve_channel_decomposed(grid, instrument, market, allowed, options.max_count_vectors);
  const auto additive = [&](std::span<const TileId> ids) {
    double c = 0.0;
    for (TileId id : ids) c += market.cost[id];
    return c;
  };
  return solve_exhaustive_with(grid, instrument, allowed, additive, options.max_exact_tiles);
}

/// argmax over feasible allocations of reported welfare.
inline Allocation solve_welfare_max(const TileGrid& grid, const InstrumentConfig& instrument,
                                    const std::vector<CostReport>& reports, const SolverOptions& options = {}) {
  const ReportedMarket market = make_reported_market(grid, reports);
  EconomySolution sol = solve_economy(grid, instrument, market, options.mode, options);
  if (!sol.welfare.feasible()) throw InfeasibleError("no feasible allocation exists");
  return std::move(sol.allocation);
}

namespace detail {
inline std::vector<bool> assumption1(const TileGrid& grid, const InstrumentConfig& instrument,
                                     const std::vector<std::size_t>& owner, std::size_t seller_count) {
  std::vector<bool> ok(seller_count);
  for (std::size_t s = 0; s < seller_count; ++s) {
    Allocation rest(grid);
    for (const auto& t : grid.tiles())
      if (owner[t.id] != s) rest.insert(grid, t.id);
    // Omega \ Omega_i is the most capable allocation avoiding seller i.
    ok[s] = is_feasible(rest, grid, instrument);
  }
  return ok;
}
}  // namespace detail

/// Per seller: whether the mission stays feasible without that seller.
inline std::map<SellerId, bool> check_assumption1(const TileGrid& grid, const InstrumentConfig& instrument,
                                                  const std::vector<SellerProfile>& sellers) {
  validate_partition(grid, sellers);
  std::vector<std::size_t> owner(grid.size());
  for (std::size_t s = 0; s < sellers.size(); ++s)
    for (TileId id : sellers[s].owned_tiles) owner[id] = s;
  const auto ok = detail::assumption1(grid, instrument, owner, sellers.size());
  std::map<SellerId, bool> out;
  for (std::size_t s = 0; s < sellers.size(); ++s) out[sellers[s].id] = ok[s];
  return out;
}

/// Everything a payment computation needs about the solved grand economy.
struct AuctionContext {
  const TileGrid* grid = nullptr;
  const InstrumentConfig* instrument = nullptr;
  ReportedMarket market;
  SolverMode mode = SolverMode::automatic;
  SolverOptions options;
  EconomySolution grand;
};

inline AuctionContext make_auction_context(const TileGrid& grid, const InstrumentConfig& instrument,
                                           const std::vector<CostReport>& reports,
                                           const SolverOptions& options = {}) {
  AuctionContext ctx;
  ctx.grid = &grid;
  ctx.instrument = &instrument;
  ctx.market = make_reported_market(grid, reports);
  ctx.mode = resolve_mode(grid, options);
  ctx.options = options;
  ctx.grand = solve_economy(grid, instrument, ctx.market, ctx.mode, options);
  if (!ctx.grand.welfare.feasible()) throw InfeasibleError("no feasible allocation exists");
  return ctx;
}

struct ClarkePayment {
  double payment = 0.0;
  double declared_cost = 0.0;        // C_i(S*_i) as reported
  double counterfactual_welfare = 0.0;  // W_{-i}
};

/// p_i = C_i(S*_i) + (W(S*) - W_{-i}).
inline ClarkePayment clarke_payment(const AuctionContext& ctx, SellerId seller) {
  const std::size_t pos = ctx.market.position_of(seller);
  const EconomySolution without = solve_economy(*ctx.grid, *ctx.instrument, ctx.market, ctx.mode, ctx.options, pos);
  if (!without.welfare.feasible())
    throw AssumptionViolation("mission infeasible without seller " + std::to_string(seller) +
                              "; pivot payment unbounded");
  ClarkePayment out;
  for (TileId id : ctx.grand.allocation.tiles())
    if (ctx.market.owner[id] == pos) out.declared_cost += ctx.market.cost[id];
  out.counterfactual_welfare = without.welfare.amount();
  out.payment = out.declared_cost + (ctx.grand.welfare.amount() - out.counterfactual_welfare);
  return out;
}

inline AuctionOutcome run_auction(const TileGrid& grid, const InstrumentConfig& instrument,
                                  const std::vector<CostReport>& reports, const AuctionOptions& options = {}) {
  const ReportedMarket market = make_reported_market(grid, reports);
  const auto ok = detail::assumption1(grid, instrument, market.owner, market.seller_count());
  for (std::size_t s = 0; s < ok.size(); ++s)
    if (!ok[s])
      throw AssumptionViolation("seller " + std::to_string(market.seller_ids[s]) +
                                " is essential for feasibility (non-pivotal feasibility fails)");

  const AuctionContext ctx = make_auction_context(grid, instrument, reports, options.solver);
  AuctionOutcome out;
  out.allocation = ctx.grand.allocation;
  out.welfare = social_welfare(out.allocation, grid, instrument, ctx.market);
  out.mode = ctx.mode;
  for (SellerId id : ctx.market.seller_ids) {
    ClarkePayment p = clarke_payment(ctx, id);
    if (options.reserve_cap && p.payment > *options.reserve_cap) {
      p.payment = *options.reserve_cap;
      out.reserve_capped = true;
    }
    out.payments[id] = p.payment;
    out.declared_costs[id] = p.declared_cost;
    out.counterfactual_welfares[id] = p.counterfactual_welfare;
    out.seller_utilities[id] = p.payment - p.declared_cost;
  }
  return out;
}

struct DsicRow {
  SellerId seller = 0;
  double truthful_utility = 0.0;
  double misreport_utility = 0.0;
};

using MisreportFn = std::function<CostReport(const SellerProfile&)>;

inline MisreportFn scale_misreport(double factor) {
  return [factor](const SellerProfile& s) {
    CostReport r{s.id, {}};
    for (const auto& [id, c] : s.true_costs) r.declared_costs[id] = c * factor;
    return r;
  };
}

/// Utility of each seller at TRUE costs when truthful versus when that seller
/// alone misreports.
inline std::vector<DsicRow> dsic_probe(const TileGrid& grid, const InstrumentConfig& instrument,
                                       const std::vector<SellerProfile>& sellers, const MisreportFn& misreport,
                                       const AuctionOptions& options = {}) {
  const auto true_utility = [&](const AuctionOutcome& o, const SellerProfile& s) {
    double cost = 0.0;
    for (TileId id : o.allocation.tiles())
      if (auto it = s.true_costs.find(id); it != s.true_costs.end()) cost += it->second;
    return o.payments.at(s.id) - cost;
  };
  const auto truthful = truthful_reports(sellers);
  const AuctionOutcome base = run_auction(grid, instrument, truthful, options);
  std::vector<DsicRow> rows;
  for (std::size_t s = 0; s < sellers.size(); ++s) {
    auto reports = truthful;
    reports[s] = misreport(sellers[s]);
    reports[s].seller = sellers[s].id;
    const AuctionOutcome lie = run_auction(grid, instrument, reports, options);
    rows.push_back({sellers[s].id, true_utility(base, sellers[s]), true_utility(lie, sellers[s])});
  }
  return rows;
}

}  // namespace quietmarket
