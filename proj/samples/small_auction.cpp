// Three sellers, one tile each, single channel: clear the reverse auction
// and print Clarke payments.

#include <cstdio>

#include "quietmarket/vcg.hpp"

using namespace quietmarket;

int main() {
  std::vector<TileSpec> tiles;
  for (TileId i = 0; i < 3; ++i) tiles.push_back({i, 0, 1000.0, 1.0, 1.0, i, 0});
  const TileGrid grid(tiles, 1.0, 1);

  InstrumentConfig ins;
  ins.channels = {{"ch0", 100.0, 500.0, 0.0, 0.0, 0.0}};
  ins.sensitivity = {{1.0}};
  ins.variance_targets = {0.25};
  ins.product_weights = {1.0};
  ins.value_scale = 1000.0;

  const double costs[] = {1.0, 2.0, 100.0};
  std::vector<CostReport> reports;
  for (TileId i = 0; i < 3; ++i) reports.push_back({i, {{i, costs[i]}}});

  const AuctionOutcome out = run_auction(grid, ins, reports);
  std::printf("welfare %.4f\n", out.welfare.welfare.amount());
  for (TileId id : out.allocation.tiles()) std::printf("tile %u bought\n", id);
  for (const auto& [seller, pay] : out.payments)
    std::printf("seller %u: payment %.4f utility %.4f\n", seller, pay, out.seller_utilities.at(seller));
}
