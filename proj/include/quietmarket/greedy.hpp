#pragma once

// Posted-price procurement: dual-weighted variance-reduction utility and the
// cost-efficiency greedy that covers the accuracy targets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quietmarket/errors.hpp"
#include "quietmarket/physics.hpp"
#include "quietmarket/rng.hpp"

namespace quietmarket {

/// Retrieval variances with no tiles bought.
inline std::vector<double> base_variances(const TileGrid& grid, const InstrumentConfig& instrument) {
  return retrieval_variances(Allocation(grid), grid, instrument);
}

/// F(S) = sum_k lambda_k (Var_k^base - Var_k(S)), evaluated from scratch.
inline double utility_F(const Allocation& alloc, const TileGrid& grid, const InstrumentConfig& instrument,
                        std::span<const double> duals) {
  if (duals.size() != instrument.product_count()) throw InvalidArgument("one dual per product required");
  const auto base = base_variances(grid, instrument);
  const auto var = retrieval_variances(alloc, grid, instrument);
  double f = 0.0;
  for (std::size_t k = 0; k < duals.size(); ++k) f += duals[k] * (base[k] - var[k]);
  return f;
}

/// Gamma = sum_k lambda_k (Var_k^base - eps_k^2).
inline double coverage_target(const InstrumentConfig& instrument, std::span<const double> duals,
                              std::span<const double> base) {
  if (duals.size() != instrument.product_count() || base.size() != instrument.product_count())
    throw InvalidArgument("one dual and one base variance per product required");
  double g = 0.0;
  for (std::size_t k = 0; k < duals.size(); ++k) g += duals[k] * (base[k] - instrument.variance_targets[k]);
  return g;
}

/// Incrementally maintained F(S). Holds non-owning pointers to the grid and
/// instrument, which must outlive the state.
class UtilityState {
 public:
  UtilityState(const TileGrid& grid, const InstrumentConfig& instrument, std::vector<double> duals)
      : grid_(&grid), instrument_(&instrument), duals_(std::move(duals)), alloc_(grid) {
    if (duals_.size() != instrument.product_count()) throw InvalidArgument("one dual per product required");
    for (double l : duals_)
      if (!(l >= 0.0)) throw InvalidArgument("duals must be nonnegative");
    if (grid.channel_count() != instrument.channel_count())
      throw InvalidArgument("grid and instrument disagree on channel count");
    bandwidth_ = effective_bandwidths(alloc_, grid, instrument);
    base_ = retrieval_variances_at(bandwidth_, instrument);
    weight_.resize(instrument.channel_count());
    for (std::size_t j = 0; j < weight_.size(); ++j) {
      double a = 0.0;
      for (std::size_t k = 0; k < duals_.size(); ++k) {
        const double c = instrument.sensitivity[k][j];
        a += duals_[k] * c * c;
      }
      weight_[j] = a * instrument.channels[j].noise_constant / instrument.integration_window;
    }
  }

  double utility() const noexcept { return utility_; }
  double target() const { return coverage_target(*instrument_, duals_, base_); }
  const Allocation& allocation() const noexcept { return alloc_; }
  const std::vector<double>& duals() const noexcept { return duals_; }
  const std::vector<double>& bandwidths() const noexcept { return bandwidth_; }
  const std::vector<double>& base_variances() const noexcept { return base_; }
  std::vector<double> variances() const { return retrieval_variances_at(bandwidth_, *instrument_); }
  bool feasible() const { return is_feasible_at(bandwidth_, *instrument_); }

  /// Delta_F(x | S). Only the bandwidth of x's channel moves, so the gain is
  /// a_j * db / (B_j (B_j + db)) with a_j = sum_k lambda_k c_kj^2 kappa_j / tau.
  double marginal_gain(TileId x) const {
    const TileSpec& t = grid_->tile(x);
    if (alloc_.contains(x)) throw InvalidArgument("tile " + std::to_string(x) + " already selected");
    const double b = bandwidth_[t.channel];
    const double db = t.spectral_volume() / instrument_->integration_window;
    return weight_[t.channel] * db / (b * (b + db));
  }

  void insert(TileId x) {
    const double gain = marginal_gain(x);
    const TileSpec& t = grid_->tile(x);
    alloc_.insert(*grid_, x);
    bandwidth_[t.channel] = effective_bandwidth(alloc_, *grid_, *instrument_, t.channel);
    utility_ += gain;
  }

  double recompute_utility() const { return utility_F(alloc_, *grid_, *instrument_, duals_); }

 private:
  const TileGrid* grid_;
  const InstrumentConfig* instrument_;
  std::vector<double> duals_;
  Allocation alloc_;
  std::vector<double> bandwidth_;
  std::vector<double> base_;
  std::vector<double> weight_;
  double utility_ = 0.0;
};

enum class StopRule {
  coverage,  // stop once every accuracy target holds
  clearing,  // stop once the best gain-per-price ratio drops below 1
};

struct GreedyOptions {
  StopRule rule = StopRule::coverage;
  std::optional<std::size_t> channel;  // restrict candidates to one channel
  bool verify_incremental = false;     // cross-check every gain from scratch
};

struct GreedyStep {
  std::size_t step = 0;
  TileId tile = 0;
  std::size_t channel = 0;
  double gain = 0.0;
  double price = 0.0;
  double ratio = 0.0;  // +inf for free tiles
  std::vector<double> variances_after;
};

struct GreedyOutcome {
  std::vector<TileId> selected;  // selection order
  double total_cost = 0.0;
  std::vector<double> final_variances;
  bool feasible = false;
  std::optional<double> bound_factor;
  std::optional<double> first_rejected_price;
  double max_initial_gain = 0.0;
  double min_selected_gain = 0.0;  // gain of the last tile at its selection
  std::vector<GreedyStep> trace;
};

/// 1 + ln(max_x Delta(x | {}) / Delta_min).
inline double approximation_bound(double max_initial_gain, double min_selected_gain) {
  if (!(min_selected_gain > 0.0)) throw DegenerateError("approximation bound needs a positive minimum gain");
  if (!(max_initial_gain >= min_selected_gain))
    throw DegenerateError("maximum initial gain below the minimum selected gain");
  return 1.0 + std::log(max_initial_gain / min_selected_gain);
}

inline double approximation_bound(const GreedyOutcome& outcome) {
  if (outcome.selected.empty()) throw DegenerateError("approximation bound needs at least one selected tile");
  return approximation_bound(outcome.max_initial_gain, outcome.min_selected_gain);
}

/// Greedy posted-price procurement: repeatedly buys the tile with the best
/// Delta_F / price, ties to the lowest id. Zero-gain tiles are never bought;
/// free tiles with positive gain are bought up front.
inline GreedyOutcome greedy_procure(const TileGrid& grid, const InstrumentConfig& instrument,
                                    std::span<const double> duals, std::span<const double> prices,
                                    const GreedyOptions& options = {}) {
  if (prices.size() != grid.size()) throw InvalidArgument("one posted price per tile required");
  for (double p : prices)
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("posted prices must be finite and nonnegative");
  if (options.channel) check_channel(instrument, *options.channel);

  UtilityState state(grid, instrument, std::vector<double>(duals.begin(), duals.end()));
  std::vector<TileId> candidates;
  for (const auto& t : grid.tiles())
    if (!options.channel || t.channel == *options.channel) candidates.push_back(t.id);

  GreedyOutcome out;
  for (TileId x : candidates) out.max_initial_gain = std::max(out.max_initial_gain, state.marginal_gain(x));

  auto take = [&](TileId x, double gain) {
    if (options.verify_incremental) {
      const double before = state.recompute_utility();
      Allocation probe = state.allocation();
      probe.insert(grid, x);
      const double after = utility_F(probe, grid, instrument, state.duals());
      const double scale = std::max({std::abs(after), std::abs(gain), 1e-300});
      if (std::abs((after - before) - gain) > 1e-12 * scale)
        throw DegenerateError("incremental gain disagrees with from-scratch utility");
    }
    state.insert(x);
    const double price = prices[x];
    out.selected.push_back(x);
    out.total_cost += price;
    out.min_selected_gain = gain;
    out.trace.push_back({out.trace.size() + 1, x, grid.tile(x).channel, gain, price,
                         price > 0.0 ? gain / price : std::numeric_limits<double>::infinity(),
                         state.variances()});
  };

  const bool coverage = options.rule == StopRule::coverage;
  if (!(coverage && state.feasible())) {
    for (TileId x : candidates) {
      if (prices[x] != 0.0) continue;
      const double gain = state.marginal_gain(x);
      if (gain > 0.0) take(x, gain);
    }
    while (!(coverage && state.feasible())) {
      std::optional<TileId> best;
      double best_ratio = 0.0, best_gain = 0.0;
      for (TileId x : candidates) {
        if (state.allocation().contains(x)) continue;
        const double gain = state.marginal_gain(x);
        if (!(gain > 0.0)) continue;
        const double ratio = gain / prices[x];
        if (!best || ratio > best_ratio) {
          best = x;
          best_ratio = ratio;
          best_gain = gain;
        }
      }
      if (!best) {
        if (coverage) throw InfeasibleError("greedy exhausted all useful tiles without meeting the targets");
        break;
      }
      if (!coverage && best_ratio < 1.0) {
        out.first_rejected_price = prices[*best];
        break;
      }
      take(*best, best_gain);
    }
  }

  out.final_variances = state.variances();
  out.feasible = state.feasible();
  if (!out.selected.empty() && out.min_selected_gain > 0.0)
    out.bound_factor = approximation_bound(out.max_initial_gain, out.min_selected_gain);
  return out;
}

struct ProbeViolation {
  std::size_t trial = 0;
  TileId tile = 0;
  double gain_small = 0.0;  // Delta(z | A)
  double gain_large = 0.0;  // Delta(z | Q)
};

struct SubmodularityReport {
  std::size_t trials = 0;
  std::vector<ProbeViolation> violations;  // Delta(z|A) < Delta(z|Q) - 1e-12
  std::size_t negative_gains = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // min Delta(z|A) - Delta(z|Q)
};

/// Samples random nested triples A subset Q subset Omega, z outside Q and checks
/// diminishing returns and nonnegative gains.
inline SubmodularityReport submodularity_probe(const TileGrid& grid, const InstrumentConfig& instrument,
                                               std::span<const double> duals, std::uint64_t seed,
                                               std::size_t trials) {
  if (trials < 1) throw InvalidArgument("submodularity probe needs at least one trial");
  if (grid.size() < 1) throw InvalidArgument("grid is empty");
  const std::vector<double> lam(duals.begin(), duals.end());
  const std::size_t n = grid.size();
  const CounterRng root(seed);

  SubmodularityReport report;
  report.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const CounterRng rng = root.derive(t);
    const double density = rng.uniform(0);
    std::vector<TileId> outside;
    UtilityState small(grid, instrument, lam), large(grid, instrument, lam);
    for (std::size_t i = 0; i < n; ++i) {
      const TileId id = static_cast<TileId>(i);
      if (rng.uniform(1 + i) < density) {
        large.insert(id);
        if (rng.uniform(1 + n + i) < 0.5) small.insert(id);
      } else {
        outside.push_back(id);
      }
    }
    if (outside.empty()) continue;  // Q = Omega leaves no z to test
    const auto pick = static_cast<std::size_t>(rng.uniform(1 + 2 * n) * static_cast<double>(outside.size()));
    const TileId z = outside[std::min(pick, outside.size() - 1)];
    const double ga = small.marginal_gain(z), gq = large.marginal_gain(z);
    if (ga < 0.0 || gq < 0.0) ++report.negative_gains;
    report.worst_margin = std::min(report.worst_margin, ga - gq);
    if (ga < gq - 1e-12) report.violations.push_back({t, z, ga, gq});
  }
  return report;
}

}  // namespace quietmarket
