#include <gtest/gtest.h>

#include <random>

#include "quietmarket/scenario.hpp"
#include "quietmarket/vcg.hpp"
#include "support.hpp"

using namespace quietmarket;

namespace {

SolverOptions exhaustive() {
  SolverOptions o;
  o.mode = SolverMode::exhaustive;
  return o;
}

SolverOptions decomposed() {
  SolverOptions o;
  o.mode = SolverMode::channel_decomposed;
  return o;
}

}  // namespace

TEST(WelfareMax, FreeTilesBuyEverything) {
  qmtest::ThreeTile t;
  std::vector<CostReport> reports;
  for (TileId i = 0; i < 3; ++i) reports.push_back({i, {{i, 0.0}}});
  for (const auto& opt : {exhaustive(), decomposed()})
    EXPECT_EQ(solve_welfare_max(t.grid, t.instrument, reports, opt), Allocation::full(t.grid));
}

TEST(WelfareMax, ThreeTileInstance) {
  qmtest::ThreeTile t;
  const auto reports = truthful_reports(t.sellers);
  const auto oracle = qmtest::oracle_welfare_max(t.grid, t.instrument, t.costs, qmtest::full_mask(3));
  ASSERT_TRUE(oracle.feasible);
  EXPECT_EQ(oracle.mask, 0b011u);
  for (const auto& opt : {exhaustive(), decomposed()}) {
    const Allocation a = solve_welfare_max(t.grid, t.instrument, reports, opt);
    EXPECT_EQ(a.tiles(), (std::vector<TileId>{0, 1}));
  }
}

TEST(WelfareMax, MatchesBruteForceOracle) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = qmtest::random_market(rng, 4 + rng() % 9, 1 + rng() % 3, 1 + rng() % 2, 2);
    const auto oracle = qmtest::oracle_welfare_max(m.grid, m.instrument, m.costs, qmtest::full_mask(m.grid.size()));
    const auto reports = truthful_reports(m.sellers);
    if (!oracle.feasible) {
      EXPECT_THROW(solve_welfare_max(m.grid, m.instrument, reports, exhaustive()), InfeasibleError);
      continue;
    }
    const Allocation a = solve_welfare_max(m.grid, m.instrument, reports, exhaustive());
    const auto w = social_welfare(a, m.grid, m.instrument, reports);
    ASSERT_TRUE(w.feasible);
    EXPECT_NEAR(w.welfare.amount(), oracle.welfare, 1e-9 * std::max(1.0, std::abs(oracle.welfare)));
  }
}

TEST(WelfareMax, DecomposedEqualsExhaustive) {
  std::mt19937_64 rng(202);
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = qmtest::random_market(rng, 4 + rng() % 17, 1 + rng() % 3, 1 + rng() % 2, 3);
    const auto reports = truthful_reports(m.sellers);
    const auto market = make_reported_market(m.grid, reports);
    const auto ex = solve_economy(m.grid, m.instrument, market, SolverMode::exhaustive, exhaustive());
    const auto dc = solve_economy(m.grid, m.instrument, market, SolverMode::channel_decomposed, decomposed());
    ASSERT_EQ(ex.welfare.feasible(), dc.welfare.feasible());
    if (!ex.welfare.feasible()) continue;
    ++compared;
    EXPECT_NEAR(ex.welfare.amount(), dc.welfare.amount(), 1e-9 * std::max(1.0, std::abs(ex.welfare.amount())));
  }
  EXPECT_GT(compared, 50);
}

TEST(WelfareMax, TiesGoToLexicographicallySmallestSet) {
  // one 1900 Hz tile lands exactly on the target (value 0); either singleton
  // gives welfare -1 and the pair is worse
  const TileGrid grid({{0, 0, 1900.0, 1.0, 1.0, 0, 0}, {1, 0, 1900.0, 1.0, 1.0, 1, 0}}, 1.0, 1);
  const auto ins = qmtest::single_channel(100.0, 500.0, 0.25, 1.0);
  const std::vector<CostReport> reports{{0, {{0, 1.0}, {1, 1.0}}}};
  for (const auto& opt : {exhaustive(), decomposed()})
    EXPECT_EQ(solve_welfare_max(grid, ins, reports, opt).tiles(), (std::vector<TileId>{0}));
}

TEST(WelfareMax, ErrorsAndCapacity) {
  qmtest::ThreeTile t;
  t.instrument.variance_targets = {0.01};  // unreachable
  EXPECT_THROW(solve_welfare_max(t.grid, t.instrument, truthful_reports(t.sellers), exhaustive()), InfeasibleError);

  std::vector<TileSpec> tiles;
  for (TileId i = 0; i < 23; ++i) tiles.push_back({i, 0, 10.0 + i, 1.0, 1.0, i, 0});
  const TileGrid big(tiles, 1.0, 1);
  std::vector<CostReport> reports{{0, {}}};
  for (TileId i = 0; i < 23; ++i) reports[0].declared_costs[i] = 1.0;
  const auto ins = qmtest::single_channel(100.0, 500.0, 1.0, 1.0);
  EXPECT_THROW(solve_welfare_max(big, ins, reports, exhaustive()), CapacityError);
  EXPECT_THROW(solve_welfare_max(big, ins, reports, decomposed()), CapacityError);
  EXPECT_THROW(solve_welfare_max(big, ins, reports, {}), CapacityError);
  EXPECT_THROW(solve_welfare_max(t.grid, ins, truthful_reports(t.sellers), SolverOptions{SolverMode::exhaustive, 2}),
               CapacityError);
}

TEST(Assumption1, Examples) {
  qmtest::ThreeTile t;
  // one seller owning every tile: removing it leaves only the baseline
  const std::vector<SellerProfile> solo{{0, {0, 1, 2}, {{0, 1.0}, {1, 2.0}, {2, 100.0}}}};
  EXPECT_FALSE(check_assumption1(t.grid, t.instrument, solo).at(0));

  // four 1000 Hz tiles split 2/2: each half alone reaches 2100 Hz
  std::vector<TileSpec> tiles;
  for (TileId i = 0; i < 4; ++i) tiles.push_back({i, 0, 1000.0, 1.0, 1.0, i, 0});
  const TileGrid grid(tiles, 1.0, 1);
  const std::vector<SellerProfile> halves{{0, {0, 1}, {{0, 1.0}, {1, 1.0}}}, {1, {2, 3}, {{2, 1.0}, {3, 1.0}}}};
  const auto ok = check_assumption1(grid, t.instrument, halves);
  EXPECT_TRUE(ok.at(0));
  EXPECT_TRUE(ok.at(1));

  const Scenario sc = build_scenario(amsr2_preset());
  for (const auto& [id, v] : check_assumption1(sc.grid, sc.instrument(), sc.sellers)) EXPECT_TRUE(v) << id;
}

TEST(Auction, ThreeTileOutcomeMatchesEnumeration) {
  qmtest::ThreeTile t;
  AuctionOptions opts;
  opts.solver = exhaustive();
  const AuctionOutcome o = run_auction(t.grid, t.instrument, truthful_reports(t.sellers), opts);
  EXPECT_EQ(o.allocation.tiles(), (std::vector<TileId>{0, 1}));

  const auto all = qmtest::oracle_welfare_max(t.grid, t.instrument, t.costs, 0b111);
  EXPECT_NEAR(o.welfare.welfare.amount(), all.welfare, 1e-9);
  for (TileId i = 0; i < 3; ++i) {
    const auto without = qmtest::oracle_welfare_max(t.grid, t.instrument, t.costs, 0b111 & ~(1u << i));
    ASSERT_TRUE(without.feasible);
    const double declared = (all.mask >> i) & 1u ? t.costs[i] : 0.0;
    EXPECT_NEAR(o.counterfactual_welfares.at(i), without.welfare, 1e-9);
    EXPECT_NEAR(o.payments.at(i), declared + (all.welfare - without.welfare), 1e-9);
    EXPECT_NEAR(o.seller_utilities.at(i), all.welfare - without.welfare, 1e-9);
  }
  // seller 2 is not needed and its absence changes nothing
  EXPECT_NEAR(o.payments.at(2), 0.0, 1e-12);
  // p_1 = $1 + (W* - W_-1)
  EXPECT_GT(o.payments.at(0), 1.0);
  EXPECT_FALSE(o.reserve_capped);
}

TEST(Auction, ReserveCapClampsAndFlags) {
  qmtest::ThreeTile t;
  AuctionOptions opts;
  opts.solver = exhaustive();
  const AuctionOutcome free = run_auction(t.grid, t.instrument, truthful_reports(t.sellers), opts);
  opts.reserve_cap = free.payments.at(0) / 2.0;
  const AuctionOutcome capped = run_auction(t.grid, t.instrument, truthful_reports(t.sellers), opts);
  EXPECT_TRUE(capped.reserve_capped);
  EXPECT_EQ(capped.payments.at(0), *opts.reserve_cap);
  opts.reserve_cap = 1e9;
  EXPECT_FALSE(run_auction(t.grid, t.instrument, truthful_reports(t.sellers), opts).reserve_capped);
}

TEST(Auction, ErrorPaths) {
  qmtest::ThreeTile t;
  const std::vector<CostReport> solo{{0, {{0, 1.0}, {1, 2.0}, {2, 100.0}}}};
  EXPECT_THROW(run_auction(t.grid, t.instrument, solo), AssumptionViolation);

  auto unreachable = t.instrument;
  unreachable.variance_targets = {0.01};
  EXPECT_THROW(run_auction(t.grid, unreachable, truthful_reports(t.sellers)), AssumptionViolation);

  // payments without a prior check surface the violation too
  const AuctionContext ctx = make_auction_context(t.grid, t.instrument, solo);
  EXPECT_THROW(clarke_payment(ctx, 0), AssumptionViolation);
  EXPECT_THROW(clarke_payment(ctx, 9), InvalidArgument);
}

TEST(Auction, IndividualRationalityAndInformationRent) {
  std::mt19937_64 rng(303);
  for (int trial = 0; trial < 60; ++trial) {
    const auto m = qmtest::auction_market(rng, 12);
    AuctionOptions opts;
    opts.solver = exhaustive();
    const AuctionOutcome o = run_auction(m.grid, m.instrument, truthful_reports(m.sellers), opts);
    for (const auto& s : m.sellers) {
      EXPECT_GE(o.seller_utilities.at(s.id), -1e-12);
      EXPECT_GE(o.welfare.welfare.amount() - o.counterfactual_welfares.at(s.id), -1e-12);
      EXPECT_GE(o.payments.at(s.id), o.declared_costs.at(s.id) - 1e-12);
    }
  }
}

TEST(Dsic, IdentityMisreportChangesNothing) {
  qmtest::ThreeTile t;
  AuctionOptions opts;
  opts.solver = exhaustive();
  for (const auto& row : dsic_probe(t.grid, t.instrument, t.sellers, scale_misreport(1.0), opts))
    EXPECT_EQ(row.truthful_utility, row.misreport_utility);
}

TEST(Dsic, OverreportThatLosesTheTileEarnsNothing) {
  qmtest::ThreeTile t;
  AuctionOptions opts;
  opts.solver = exhaustive();
  // at 60x the $2 tile costs $120 and {0, 2} becomes the cheaper feasible set
  const auto rows = dsic_probe(t.grid, t.instrument, t.sellers, scale_misreport(60.0), opts);
  EXPECT_EQ(rows[1].misreport_utility, 0.0);
  EXPECT_GT(rows[1].truthful_utility, 0.0);
  for (const auto& row : dsic_probe(t.grid, t.instrument, t.sellers, scale_misreport(2.0), opts))
    EXPECT_GE(row.truthful_utility, row.misreport_utility - 1e-9);
}

TEST(Dsic, RandomInstancesAndScalings) {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = qmtest::auction_market(rng, 12);
    AuctionOptions opts;
    opts.solver = exhaustive();
    for (double f : {0.5, 0.8, 1.25, 2.0})
      for (const auto& row : dsic_probe(m.grid, m.instrument, m.sellers, scale_misreport(f), opts))
        EXPECT_GE(row.truthful_utility, row.misreport_utility - 1e-9) << "trial " << trial << " scale " << f;
  }
}

TEST(Auction, PresetClearsWithDecomposedSolver) {
  const Scenario sc = build_scenario(amsr2_preset());
  const AuctionOutcome o = run_auction(sc.grid, sc.instrument(), truthful_reports(sc.sellers));
  EXPECT_EQ(o.mode, SolverMode::channel_decomposed);
  EXPECT_TRUE(o.welfare.feasible);
  for (const auto& s : sc.sellers) EXPECT_GE(o.seller_utilities.at(s.id), -1e-9);
  for (TileId id : o.allocation.tiles()) EXPECT_FALSE(sc.is_trap_tile(id));
}
