#pragma once

// Radiometric model: maps a set of quiet time-frequency tiles to effective
// clean bandwidth, channel noise variance and retrieval error variance.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "quietmarket/errors.hpp"

namespace quietmarket {

using TileId = std::uint32_t;
using SellerId = std::uint32_t;

struct TileSpec {
  TileId id = 0;
  std::size_t channel = 0;
  double freq_width = 0.0;  // Hz
  double duration = 0.0;    // s
  double duty_cycle = 1.0;  // fraction of the tile kept quiet
  std::size_t time_slot = 0;
  std::size_t freq_bin = 0;

  /// alpha * dt * df, in Hz*s.
  double spectral_volume() const noexcept { return duty_cycle * duration * freq_width; }
};

struct ChannelConfig {
  std::string label;
  double baseline_bandwidth = 0.0;  // Hz, always protected
  double noise_constant = 0.0;      // K^2 Hz s
  double rfi_linear = 0.0;          // K^2 / W
  double rfi_quadratic = 0.0;       // K^2 / W^2
  double residual_rfi_power = 0.0;  // W, precomputed
};

struct InstrumentConfig {
  double integration_window = 1.0;  // s
  std::vector<ChannelConfig> channels;
  /// sensitivity[k][j]: retrieval coefficient of product k on channel j.
  std::vector<std::vector<double>> sensitivity;
  std::vector<double> variance_targets;  // eps_k^2
  std::vector<double> product_weights;   // w_k
  double value_scale = 1.0;              // currency per weighted variance unit

  std::size_t channel_count() const noexcept { return channels.size(); }
  std::size_t product_count() const noexcept { return sensitivity.size(); }

  void validate() const {
    if (!(integration_window > 0.0)) throw InvalidArgument("integration window must be positive");
    if (channels.empty()) throw InvalidArgument("instrument needs at least one channel");
    if (sensitivity.empty()) throw InvalidArgument("instrument needs at least one product");
    for (const auto& ch : channels) {
      if (!(ch.baseline_bandwidth > 0.0))
        throw InvalidArgument("baseline bandwidth must be positive (channel '" + ch.label + "')");
      if (!(ch.noise_constant > 0.0)) throw InvalidArgument("noise constant must be positive");
      if (ch.rfi_linear < 0.0 || ch.rfi_quadratic < 0.0 || ch.residual_rfi_power < 0.0)
        throw InvalidArgument("RFI coefficients and residual power must be nonnegative");
    }
    for (const auto& row : sensitivity) {
      if (row.size() != channels.size())
        throw InvalidArgument("sensitivity matrix must have one column per channel");
      for (double c : row)
        if (!std::isfinite(c)) throw InvalidArgument("sensitivity coefficients must be finite");
    }
    if (variance_targets.size() != product_count())
      throw InvalidArgument("one variance target per product required");
    if (product_weights.size() != product_count())
      throw InvalidArgument("one product weight per product required");
    for (double e : variance_targets)
      if (!(e > 0.0)) throw InvalidArgument("variance targets must be positive");
    for (double w : product_weights)
      if (!(w > 0.0)) throw InvalidArgument("product weights must be positive");
    if (!(value_scale > 0.0)) throw InvalidArgument("value scale must be positive");
  }
};

/// The discretized time-frequency resource plane. Tile ids are dense: tile
/// `i` lives at index `i`.
class TileGrid {
 public:
  TileGrid() = default;

  TileGrid(std::vector<TileSpec> tiles, double integration_window, std::size_t channel_count)
      : tiles_(std::move(tiles)), tau_(integration_window), by_channel_(channel_count) {
    if (!(tau_ > 0.0)) throw InvalidArgument("integration window must be positive");
    for (std::size_t i = 0; i < tiles_.size(); ++i) {
      const TileSpec& t = tiles_[i];
      if (t.id != i) throw InvalidArgument("tile ids must be dense and ordered");
      if (t.channel >= channel_count) throw InvalidArgument("tile references unknown channel");
      if (!(t.freq_width > 0.0) || !(t.duration > 0.0))
        throw InvalidArgument("tile width and duration must be positive");
      if (t.duration > tau_) throw InvalidArgument("tile duration exceeds integration window");
      if (!(t.duty_cycle >= 0.0 && t.duty_cycle <= 1.0))
        throw InvalidArgument("duty cycle must lie in [0, 1]");
      if (!std::isfinite(t.spectral_volume())) throw InvalidArgument("spectral volume must be finite");
      by_channel_[t.channel].push_back(t.id);
    }
  }

  std::size_t size() const noexcept { return tiles_.size(); }
  std::size_t channel_count() const noexcept { return by_channel_.size(); }
  double integration_window() const noexcept { return tau_; }
  const std::vector<TileSpec>& tiles() const noexcept { return tiles_; }

  const TileSpec& tile(TileId id) const {
    if (id >= tiles_.size()) throw InvalidArgument("unknown tile id " + std::to_string(id));
    return tiles_[id];
  }

  const std::vector<TileId>& tiles_in_channel(std::size_t j) const {
    if (j >= by_channel_.size()) throw InvalidArgument("unknown channel index " + std::to_string(j));
    return by_channel_[j];
  }

  /// Time-normalized bandwidth a tile adds to its channel, in Hz.
  double bandwidth_contribution(TileId id) const { return tile(id).spectral_volume() / tau_; }

 private:
  std::vector<TileSpec> tiles_;
  double tau_ = 1.0;
  std::vector<std::vector<TileId>> by_channel_;
};

/// A set of quiet tiles with a per-channel cache of accumulated spectral
/// volume.
class Allocation {
 public:
  Allocation() = default;
  explicit Allocation(const TileGrid& grid)
      : member_(grid.size(), 0), channel_volume_(grid.channel_count(), 0.0) {}

  void insert(const TileGrid& grid, TileId id) {
    check_grid(grid);
    const TileSpec& t = grid.tile(id);
    if (member_[id]) throw InvalidArgument("tile " + std::to_string(id) + " already allocated");
    member_[id] = 1;
    ++count_;
    channel_volume_[t.channel] += t.spectral_volume();
  }

  void erase(const TileGrid& grid, TileId id) {
    check_grid(grid);
    const TileSpec& t = grid.tile(id);
    if (!member_[id]) throw InvalidArgument("tile " + std::to_string(id) + " not allocated");
    member_[id] = 0;
    --count_;
    // rebuilt rather than subtracted so rounding cannot build up over
    // insert/erase cycles; inserts stay O(1)
    channel_volume_[t.channel] = recompute_volume(grid, t.channel);
  }

  bool contains(TileId id) const noexcept { return id < member_.size() && member_[id] != 0; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  std::size_t grid_size() const noexcept { return member_.size(); }

  /// Allocated tile ids in ascending order.
  std::vector<TileId> tiles() const {
    std::vector<TileId> out;
    out.reserve(count_);
    for (std::size_t i = 0; i < member_.size(); ++i)
      if (member_[i]) out.push_back(static_cast<TileId>(i));
    return out;
  }

  double channel_volume(std::size_t j) const {
    if (j >= channel_volume_.size()) throw InvalidArgument("unknown channel index " + std::to_string(j));
    return channel_volume_[j];
  }

  const std::vector<double>& channel_volumes() const noexcept { return channel_volume_; }

  /// Sum of spectral volumes of allocated tiles in channel j, from scratch.
  double recompute_volume(const TileGrid& grid, std::size_t j) const {
    double v = 0.0;
    for (TileId id : grid.tiles_in_channel(j))
      if (member_[id]) v += grid.tile(id).spectral_volume();
    return v;
  }

  static Allocation from_tiles(const TileGrid& grid, std::span<const TileId> ids) {
    Allocation a(grid);
    for (TileId id : ids) a.insert(grid, id);
    return a;
  }

  static Allocation full(const TileGrid& grid) {
    Allocation a(grid);
    for (const auto& t : grid.tiles()) a.insert(grid, t.id);
    return a;
  }

  friend bool operator==(const Allocation& a, const Allocation& b) noexcept {
    return a.member_ == b.member_;
  }

 private:
  void check_grid(const TileGrid& grid) const {
    if (grid.size() != member_.size() || grid.channel_count() != channel_volume_.size())
      throw InvalidArgument("allocation does not belong to this grid");
  }

  std::vector<std::uint8_t> member_;
  std::vector<double> channel_volume_;
  std::size_t count_ = 0;
};

inline void check_channel(const InstrumentConfig& instrument, std::size_t j) {
  if (j >= instrument.channel_count())
    throw InvalidArgument("unknown channel index " + std::to_string(j));
}

inline void check_product(const InstrumentConfig& instrument, std::size_t k) {
  if (k >= instrument.product_count())
    throw InvalidArgument("unknown product index " + std::to_string(k));
}

/// B_j(S) = B_j^(0) + (1/tau) * sum of spectral volumes in channel j.
inline double effective_bandwidth(const Allocation& alloc, const TileGrid& grid,
                                  const InstrumentConfig& instrument, std::size_t j) {
  check_channel(instrument, j);
  if (j >= grid.channel_count()) throw InvalidArgument("grid has no channel " + std::to_string(j));
  return instrument.channels[j].baseline_bandwidth + alloc.channel_volume(j) / instrument.integration_window;
}

inline std::vector<double> effective_bandwidths(const Allocation& alloc, const TileGrid& grid,
                                                const InstrumentConfig& instrument) {
  std::vector<double> b(instrument.channel_count());
  for (std::size_t j = 0; j < b.size(); ++j) b[j] = effective_bandwidth(alloc, grid, instrument, j);
  return b;
}

/// Radiometer equation: kappa / (B * tau).
inline double thermal_variance(double bandwidth, double kappa, double tau) {
  if (!(bandwidth > 0.0)) throw DomainError("bandwidth must be positive");
  if (!(tau > 0.0)) throw DomainError("integration window must be positive");
  if (!(kappa > 0.0)) throw DomainError("noise constant must be positive");
  return kappa / (bandwidth * tau);
}

/// gamma * P + beta * P^2.
inline double rfi_penalty(double power, double gamma, double beta) {
  if (power < 0.0 || gamma < 0.0 || beta < 0.0) throw DomainError("RFI penalty inputs must be nonnegative");
  return gamma * power + beta * power * power;
}

inline double channel_variance_at(double bandwidth, const ChannelConfig& ch, double tau) {
  return thermal_variance(bandwidth, ch.noise_constant, tau) +
         rfi_penalty(ch.residual_rfi_power, ch.rfi_linear, ch.rfi_quadratic);
}

inline double channel_variance(const Allocation& alloc, const TileGrid& grid,
                               const InstrumentConfig& instrument, std::size_t j) {
  return channel_variance_at(effective_bandwidth(alloc, grid, instrument, j), instrument.channels[j],
                             instrument.integration_window);
}

/// Retrieval variance of product k for an explicit vector of channel
/// bandwidths. Shared by the discrete model and the continuous relaxation.
inline double retrieval_variance_at(std::span<const double> bandwidths,
                                    const InstrumentConfig& instrument, std::size_t k) {
  check_product(instrument, k);
  if (bandwidths.size() != instrument.channel_count())
    throw InvalidArgument("one bandwidth per channel required");
  const auto& row = instrument.sensitivity[k];
  double var = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] == 0.0) continue;
    var += row[j] * row[j] * channel_variance_at(bandwidths[j], instrument.channels[j],
                                                 instrument.integration_window);
  }
  return var;
}

inline double retrieval_variance(const Allocation& alloc, const TileGrid& grid,
                                 const InstrumentConfig& instrument, std::size_t k) {
  check_product(instrument, k);
  const auto b = effective_bandwidths(alloc, grid, instrument);
  return retrieval_variance_at(b, instrument, k);
}

inline std::vector<double> retrieval_variances_at(std::span<const double> bandwidths,
                                                  const InstrumentConfig& instrument) {
  std::vector<double> v(instrument.product_count());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = retrieval_variance_at(bandwidths, instrument, k);
  return v;
}

inline std::vector<double> retrieval_variances(const Allocation& alloc, const TileGrid& grid,
                                               const InstrumentConfig& instrument) {
  return retrieval_variances_at(effective_bandwidths(alloc, grid, instrument), instrument);
}

/// Mission accuracy check; the boundary counts as feasible.
inline bool is_feasible_at(std::span<const double> bandwidths, const InstrumentConfig& instrument) {
  for (std::size_t k = 0; k < instrument.product_count(); ++k)
    if (!(retrieval_variance_at(bandwidths, instrument, k) <= instrument.variance_targets[k])) return false;
  return true;
}

inline bool is_feasible(const Allocation& alloc, const TileGrid& grid, const InstrumentConfig& instrument) {
  return is_feasible_at(effective_bandwidths(alloc, grid, instrument), instrument);
}

}  // namespace quietmarket
