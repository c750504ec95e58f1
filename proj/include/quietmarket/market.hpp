#pragma once

// Buyer valuation, seller costs and social welfare for the quiet-tile
// procurement market.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quietmarket/errors.hpp"
#include "quietmarket/physics.hpp"

namespace quietmarket {

/// A currency amount, or the sentinel for "allocation violates the mission
/// constraints". The sentinel orders below every finite amount and absorbs
/// arithmetic, so it can never leak into a sum as a number.
class Payoff {
 public:
  static Payoff infeasible() noexcept { return Payoff(); }
  static Payoff of(double amount) noexcept { return Payoff(amount); }

  bool feasible() const noexcept { return feasible_; }

  double amount() const {
    if (!feasible_) throw InfeasibleError("payoff of an infeasible allocation has no amount");
    return amount_;
  }

  double amount_or(double fallback) const noexcept { return feasible_ ? amount_ : fallback; }

  Payoff operator-(double cost) const noexcept { return feasible_ ? Payoff(amount_ - cost) : *this; }
  Payoff operator+(double gain) const noexcept { return feasible_ ? Payoff(amount_ + gain) : *this; }

  friend bool operator==(const Payoff& a, const Payoff& b) noexcept {
    return a.feasible_ == b.feasible_ && (!a.feasible_ || a.amount_ == b.amount_);
  }

  friend std::partial_ordering operator<=>(const Payoff& a, const Payoff& b) noexcept {
    if (!a.feasible_ || !b.feasible_) return a.feasible_ <=> b.feasible_;
    return a.amount_ <=> b.amount_;
  }

 private:
  Payoff() = default;
  explicit Payoff(double amount) noexcept : amount_(amount), feasible_(true) {}

  double amount_ = 0.0;
  bool feasible_ = false;
};

struct SellerProfile {
  SellerId id = 0;
  std::vector<TileId> owned_tiles;
  std::map<TileId, double> true_costs;
};

struct CostReport {
  SellerId seller = 0;
  std::map<TileId, double> declared_costs;
};

struct WelfareBreakdown {
  Payoff buyer_value = Payoff::infeasible();
  double total_cost = 0.0;
  Payoff welfare = Payoff::infeasible();
  bool feasible = false;
};

inline CostReport truthful_report(const SellerProfile& seller) {
  return CostReport{seller.id, seller.true_costs};
}

inline std::vector<CostReport> truthful_reports(const std::vector<SellerProfile>& sellers) {
  std::vector<CostReport> out;
  out.reserve(sellers.size());
  for (const auto& s : sellers) out.push_back(truthful_report(s));
  return out;
}

/// Checks that the sellers' tile sets partition the grid and that every owned
/// tile carries a nonnegative cost.
inline void validate_partition(const TileGrid& grid, const std::vector<SellerProfile>& sellers) {
  std::vector<int> owner(grid.size(), -1);
  for (std::size_t s = 0; s < sellers.size(); ++s) {
    for (TileId id : sellers[s].owned_tiles) {
      if (id >= grid.size()) throw PartitionError("seller owns unknown tile " + std::to_string(id));
      if (owner[id] != -1) throw PartitionError("tile " + std::to_string(id) + " owned by two sellers");
      owner[id] = static_cast<int>(s);
    }
    for (const auto& [id, cost] : sellers[s].true_costs) {
      if (id >= grid.size() || owner[id] != static_cast<int>(s))
        throw OwnershipError("cost given for tile " + std::to_string(id) + " not owned by seller");
      if (!(cost >= 0.0)) throw InvalidArgument("tile costs must be nonnegative");
    }
  }
  for (std::size_t i = 0; i < owner.size(); ++i)
    if (owner[i] == -1) throw PartitionError("tile " + std::to_string(i) + " has no owner");
}

/// v0(S): lambda_0 * sum_k w_k (eps_k^2 - Var_k(S)) when feasible.
inline Payoff buyer_valuation_at(std::span<const double> bandwidths, const InstrumentConfig& instrument) {
  double value = 0.0;
  for (std::size_t k = 0; k < instrument.product_count(); ++k) {
    const double var = retrieval_variance_at(bandwidths, instrument, k);
    if (!(var <= instrument.variance_targets[k])) return Payoff::infeasible();
    value += instrument.product_weights[k] * (instrument.variance_targets[k] - var);
  }
  return Payoff::of(instrument.value_scale * value);
}

inline Payoff buyer_valuation(const Allocation& alloc, const TileGrid& grid,
                              const InstrumentConfig& instrument) {
  return buyer_valuation_at(effective_bandwidths(alloc, grid, instrument), instrument);
}

namespace detail {
inline double additive_cost(const std::map<TileId, double>& costs, std::span<const TileId> local_set) {
  double total = 0.0;
  for (TileId id : local_set) {
    auto it = costs.find(id);
    if (it == costs.end()) throw OwnershipError("tile " + std::to_string(id) + " not owned by seller");
    total += it->second;
  }
  return total;
}
}  // namespace detail

inline double seller_cost(const SellerProfile& seller, std::span<const TileId> local_set) {
  return detail::additive_cost(seller.true_costs, local_set);
}

inline double seller_cost(const CostReport& report, std::span<const TileId> local_set) {
  return detail::additive_cost(report.declared_costs, local_set);
}

/// Dense per-tile view of a set of cost reports: owner index and declared
/// cost for every tile.
struct ReportedMarket {
  std::vector<SellerId> seller_ids;   // position -> seller id
  std::vector<std::size_t> owner;     // tile -> position in seller_ids
  std::vector<double> cost;           // tile -> declared cost

  std::size_t seller_count() const noexcept { return seller_ids.size(); }

  std::size_t position_of(SellerId id) const {
    auto it = std::find(seller_ids.begin(), seller_ids.end(), id);
    if (it == seller_ids.end()) throw InvalidArgument("unknown seller " + std::to_string(id));
    return static_cast<std::size_t>(it - seller_ids.begin());
  }
};

inline ReportedMarket make_reported_market(const TileGrid& grid, const std::vector<CostReport>& reports) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  ReportedMarket m;
  m.owner.assign(grid.size(), kNone);
  m.cost.assign(grid.size(), 0.0);
  for (std::size_t s = 0; s < reports.size(); ++s) {
    m.seller_ids.push_back(reports[s].seller);
    for (const auto& [id, c] : reports[s].declared_costs) {
      if (id >= grid.size()) throw PartitionError("report names unknown tile " + std::to_string(id));
      if (m.owner[id] != kNone) throw PartitionError("tile " + std::to_string(id) + " reported twice");
      if (!(c >= 0.0)) throw InvalidArgument("declared costs must be nonnegative");
      m.owner[id] = s;
      m.cost[id] = c;
    }
  }
  for (std::size_t i = 0; i < m.owner.size(); ++i)
    if (m.owner[i] == kNone) throw PartitionError("tile " + std::to_string(i) + " has no owning seller");
  return m;
}

inline WelfareBreakdown social_welfare(const Allocation& alloc, const TileGrid& grid,
                                       const InstrumentConfig& instrument, const ReportedMarket& market) {
  WelfareBreakdown out;
  out.buyer_value = buyer_valuation(alloc, grid, instrument);
  for (TileId id : alloc.tiles()) out.total_cost += market.cost.at(id);
  out.feasible = out.buyer_value.feasible();
  out.welfare = out.buyer_value - out.total_cost;
  return out;
}

inline WelfareBreakdown social_welfare(const Allocation& alloc, const TileGrid& grid,
                                       const InstrumentConfig& instrument,
                                       const std::vector<CostReport>& reports) {
  return social_welfare(alloc, grid, instrument, make_reported_market(grid, reports));
}

}  // namespace quietmarket
