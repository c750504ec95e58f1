#pragma once

// Continuous relaxation of the procurement problem: bandwidth is bought at
// the marginal-cost curve induced by posted tile prices, subject to the
// accuracy constraints. Solved in the dual; yields the multipliers lambda*
// and the per-channel shadow price of clean bandwidth.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "quietmarket/errors.hpp"
#include "quietmarket/physics.hpp"

namespace quietmarket {

/// Convex piecewise-linear cost of clean bandwidth in one channel.
/// breakpoints[0] = (B^(0), 0); densities[s] is the slope between
/// breakpoints s and s+1, ascending.
struct MarginalCostCurve {
  std::size_t channel = 0;
  std::vector<std::pair<double, double>> breakpoints;
  std::vector<double> densities;

  double baseline() const noexcept { return breakpoints.front().first; }
  double max_bandwidth() const noexcept { return breakpoints.back().first; }
  std::size_t segment_count() const noexcept { return densities.size(); }

  double cost_at(double bandwidth) const {
    if (bandwidth < baseline() || bandwidth > max_bandwidth())
      throw DomainError("bandwidth outside the cost curve's domain");
    for (std::size_t s = 0; s < densities.size(); ++s) {
      const auto [b0, c0] = breakpoints[s];
      if (bandwidth <= breakpoints[s + 1].first) return c0 + densities[s] * (bandwidth - b0);
    }
    return breakpoints.back().second;
  }

  /// [left, right] derivative of the cost at `bandwidth`; infinite outside
  /// the domain edges.
  std::pair<double, double> derivative_interval(double bandwidth) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    double left = -inf, right = inf;
    for (std::size_t s = 0; s < densities.size(); ++s) {
      const double lo = breakpoints[s].first, hi = breakpoints[s + 1].first;
      if (bandwidth > lo && bandwidth <= hi) left = densities[s];
      if (bandwidth >= lo && bandwidth < hi) {
        right = densities[s];
        break;
      }
    }
    return {left, right};
  }
};

/// Per channel, tiles sorted by price per hertz of bandwidth contribution
/// and integrated into a convex cost curve.
inline std::vector<MarginalCostCurve> build_cost_curves(const TileGrid& grid, const InstrumentConfig& instrument,
                                                        std::span<const double> prices) {
  if (prices.size() != grid.size()) throw InvalidArgument("one posted price per tile required");
  if (grid.channel_count() != instrument.channel_count())
    throw InvalidArgument("grid and instrument disagree on channel count");
  std::vector<MarginalCostCurve> curves(instrument.channel_count());
  for (std::size_t j = 0; j < curves.size(); ++j) {
    struct Piece {
      double bw, price;
      TileId id;
    };
    std::vector<Piece> pieces;
    for (TileId id : grid.tiles_in_channel(j)) {
      const double bw = grid.bandwidth_contribution(id);
      if (!(bw > 0.0)) throw DegenerateError("tile " + std::to_string(id) + " has zero spectral volume");
      if (!(prices[id] >= 0.0)) throw InvalidArgument("posted prices must be nonnegative");
      pieces.push_back({bw, prices[id], id});
    }
    std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) {
      const double da = a.price / a.bw, db = b.price / b.bw;
      return da != db ? da < db : a.id < b.id;
    });
    auto& c = curves[j];
    c.channel = j;
    c.breakpoints.emplace_back(instrument.channels[j].baseline_bandwidth, 0.0);
    for (const auto& p : pieces) {
      const auto [b, cost] = c.breakpoints.back();
      c.breakpoints.emplace_back(b + p.bw, cost + p.price);
      c.densities.push_back(p.price / p.bw);
    }
  }
  return curves;
}

/// argmin over B in the curve's domain of C(B) + weight / B. The objective is
/// strictly convex for weight > 0, so the minimizer is unique: the first
/// point where the marginal cost catches up with weight / B^2.
inline double minimize_channel(const MarginalCostCurve& curve, double weight) {
  if (weight <= 0.0 || curve.densities.empty()) return curve.baseline();
  const auto& bp = curve.breakpoints;
  const auto& d = curve.densities;
  // first segment whose end already has marginal value <= its slope
  std::size_t lo = 0, hi = d.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    const double end = bp[mid + 1].first;
    if (weight / (end * end) <= d[mid]) hi = mid;
    else lo = mid + 1;
  }
  if (lo == d.size()) return curve.max_bandwidth();
  const double start = bp[lo].first;
  if (weight / (start * start) <= d[lo]) return start;
  return std::sqrt(weight / d[lo]);
}

struct RelaxationSettings {
  double tol_primal = 1e-6;  // relative to eps_k^2
  double tol_cs = 1e-6;      // currency; scaled by max(1, 1e-6 * sum_k lambda_k eps_k^2)
  std::size_t max_iterations = 100000;  // coordinate sweeps
};

struct DualSolution {
  std::vector<double> multipliers;    // lambda_k*
  std::vector<double> bandwidths;     // B_j*
  std::vector<double> shadow_prices;  // v_j at B_j*
  std::vector<double> constraint_slacks;  // eps_k^2 - Var_k(B*)
  double max_violation = 0.0;
  double complementary_slackness = 0.0;   // max_k |lambda_k * slack_k|
  std::size_t iterations = 0;
  bool converged = false;
};

/// v_j = sum_k lambda_k c_kj^2 kappa_j / (tau B_j^2), at an explicit bandwidth.
inline double shadow_price_at(std::span<const double> multipliers, const InstrumentConfig& instrument,
                              std::size_t j, double bandwidth) {
  check_channel(instrument, j);
  if (!(bandwidth > 0.0)) throw DomainError("bandwidth must be positive");
  if (multipliers.size() != instrument.product_count()) throw InvalidArgument("one multiplier per product required");
  double v = 0.0;
  for (std::size_t k = 0; k < multipliers.size(); ++k) {
    const double c = instrument.sensitivity[k][j];
    v += multipliers[k] * c * c;
  }
  return v * instrument.channels[j].noise_constant / (instrument.integration_window * bandwidth * bandwidth);
}

inline double shadow_price(const DualSolution& sol, const InstrumentConfig& instrument, std::size_t j) {
  check_channel(instrument, j);
  return shadow_price_at(sol.multipliers, instrument, j, sol.bandwidths.at(j));
}

namespace detail {

/// Weight a_j = sum_k lambda_k c_kj^2 kappa_j / tau in front of 1/B_j.
inline double channel_weight(std::span<const double> lambda, const InstrumentConfig& instrument, std::size_t j) {
  double a = 0.0;
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    const double c = instrument.sensitivity[k][j];
    a += lambda[k] * c * c;
  }
  return a * instrument.channels[j].noise_constant / instrument.integration_window;
}

inline std::vector<double> inner_minimizer(const std::vector<MarginalCostCurve>& curves,
                                           std::span<const double> lambda, const InstrumentConfig& instrument) {
  std::vector<double> b(curves.size());
  for (std::size_t j = 0; j < curves.size(); ++j)
    b[j] = minimize_channel(curves[j], channel_weight(lambda, instrument, j));
  return b;
}

}  // namespace detail

/// Dual ascent on lambda >= 0. For fixed lambda the Lagrangian separates
/// into one-dimensional convex problems per channel (minimize_channel). The
/// dual is concave and differentiable with gradient Var_k(B(lambda)) -
/// eps_k^2, so each sweep maximizes it exactly along one coordinate at a
/// time by bisection on that gradient.
inline DualSolution solve_continuous(const std::vector<MarginalCostCurve>& curves,
                                     const InstrumentConfig& instrument, const RelaxationSettings& settings = {}) {
  instrument.validate();
  const std::size_t J = instrument.channel_count(), K = instrument.product_count();
  if (curves.size() != J) throw InvalidArgument("one cost curve per channel required");
  for (std::size_t j = 0; j < J; ++j)
    if (curves[j].breakpoints.empty() || curves[j].channel != j)
      throw InvalidArgument("cost curves must be ordered by channel");

  std::vector<double> bmax(J);
  for (std::size_t j = 0; j < J; ++j) bmax[j] = curves[j].max_bandwidth();
  for (std::size_t k = 0; k < K; ++k)
    if (!(retrieval_variance_at(bmax, instrument, k) <= instrument.variance_targets[k]))
      throw InfeasibleError("relaxation infeasible: product " + std::to_string(k) +
                            " misses its target even with every tile bought");

  std::vector<double> lambda(K, 0.0);
  auto gradient = [&](std::size_t k) {
    const auto b = detail::inner_minimizer(curves, lambda, instrument);
    return retrieval_variance_at(b, instrument, k) - instrument.variance_targets[k];
  };

  DualSolution sol;
  for (std::size_t sweep = 1; sweep <= settings.max_iterations; ++sweep) {
    for (std::size_t k = 0; k < K; ++k) {
      lambda[k] = 0.0;
      if (gradient(k) <= 0.0) continue;
      double lo = 0.0, hi = 1.0;
      lambda[k] = hi;
      for (int n = 0; gradient(k) > 0.0; ++n) {
        if (n > 2000) throw InfeasibleError("multiplier diverged for product " + std::to_string(k));
        lo = hi;
        hi *= 2.0;
        lambda[k] = hi;
      }
      for (int n = 0; n < 400 && hi - lo > 1e-15 * hi; ++n) {
        const double mid = 0.5 * (lo + hi);
        lambda[k] = mid;
        if (gradient(k) > 0.0) lo = mid;
        else hi = mid;
      }
      lambda[k] = hi;  // feasible side of the root
    }

    const auto b = detail::inner_minimizer(curves, lambda, instrument);
    double viol = 0.0, cs = 0.0, dual_term = 0.0;
    sol.constraint_slacks.assign(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double slack = instrument.variance_targets[k] - retrieval_variance_at(b, instrument, k);
      sol.constraint_slacks[k] = slack;
      viol = std::max(viol, -slack / instrument.variance_targets[k]);
      cs = std::max(cs, std::abs(lambda[k] * slack));
      dual_term += lambda[k] * instrument.variance_targets[k];
    }
    sol.iterations = sweep;
    sol.max_violation = std::max(viol, 0.0);
    sol.complementary_slackness = cs;
    sol.bandwidths = b;
    // absolute unless the multipliers are so large that rounding in the
    // slacks alone would exceed it
    if (viol <= settings.tol_primal && cs <= settings.tol_cs * std::max(1.0, 1e-6 * dual_term)) {
      sol.converged = true;
      break;
    }
  }
  sol.multipliers = lambda;
  sol.shadow_prices.resize(J);
  for (std::size_t j = 0; j < J; ++j) sol.shadow_prices[j] = shadow_price(sol, instrument, j);
  return sol;
}

/// Relaxation on a grid with posted prices.
inline DualSolution solve_relaxation(const TileGrid& grid, const InstrumentConfig& instrument,
                                     std::span<const double> prices, const RelaxationSettings& settings = {}) {
  return solve_continuous(build_cost_curves(grid, instrument, prices), instrument, settings);
}

}  // namespace quietmarket
