// Interference-trap study on the AMSR-2-like preset: fixed-band baseline
// against flexible welfare maximization, plus the channel-0 clearing point.

#include <cstdio>
#include <cstdlib>

#include "quietmarket/scenario.hpp"

using namespace quietmarket;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : kReferenceSeed;
  const Scenario sc = build_scenario(amsr2_preset(seed));
  const WelfareComparison cmp = welfare_comparison(sc);

  for (const auto& [name, r] : {std::pair{"fixed", &cmp.fixed}, std::pair{"flexible", &cmp.flexible}})
    std::printf("%-8s tiles %3zu  trap %2zu  cost %9.2f  value %8.2f  welfare %9.2f\n", name, r->selected.size(),
                r->trap_tiles, r->total_cost, r->buyer_value.amount(), r->welfare.amount());
  std::printf("cost change %.1f%%\n", cmp.cost_delta_pct);

  const DualSolution duals = scenario_duals(sc);
  const ClearingCurve curve = market_clearing_curves(sc, duals.multipliers, 0);
  std::printf("lambda* %.3f, channel 0 clears at Q = %zu", duals.multipliers[0], curve.equilibrium_q);
  if (curve.first_rejected_price) std::printf(", first rejected at %.2f", *curve.first_rejected_price);
  std::printf("\n");
}
