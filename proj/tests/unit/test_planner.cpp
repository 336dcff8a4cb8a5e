#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "visinf/planner.hpp"

using namespace visinf;
using namespace visinf::planner;

namespace {

const std::filesystem::path kData = VISINF_TEST_DATA;

PlanConfig plan(const std::string& id, double acc, double thr) {
  PlanConfig p;
  p.id = id;
  p.est_accuracy = acc;
  p.est_throughput = thr;
  return p;
}

std::vector<std::string> ids(const std::vector<PlanConfig>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.id);
  return out;
}

dag::PreprocGraph chain() { return dag::canonical_pipeline(480, 640, 256, 224); }

}  // namespace

TEST(Pareto, ThreePlanExample) {
  const auto f = pareto_frontier({plan("a", .70, 1000), plan("b", .75, 500), plan("c", .72, 400)});
  EXPECT_EQ(ids(f), (std::vector<std::string>{"a", "b"}));
}

TEST(Pareto, SingleAndIdentical) {
  EXPECT_EQ(ids(pareto_frontier({plan("x", .5, 10)})), std::vector<std::string>{"x"});
  EXPECT_EQ(ids(pareto_frontier({plan("q", .5, 10), plan("p", .5, 10)})), (std::vector<std::string>{"p", "q"}));
  EXPECT_THROW(pareto_frontier({}), std::invalid_argument);
}

TEST(Pareto, MatchesBruteForceOnRandomSets) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 200)(rng);
    // Coarse grids force plenty of ties.
    std::uniform_int_distribution<int> a(0, 20), t(1, 30);
    std::vector<PlanConfig> ps;
    std::vector<oracle::Point> pts;
    for (int i = 0; i < n; ++i) {
      ps.push_back(plan("p" + std::to_string(i), a(rng) / 20.0, t(rng) * 100.0));
      pts.push_back({ps.back().est_accuracy, ps.back().est_throughput, ps.back().id});
    }
    auto got = ids(pareto_frontier(ps));
    const auto front = pareto_frontier(ps);
    for (std::size_t i = 1; i < front.size(); ++i) EXPECT_LE(front[i - 1].est_accuracy, front[i].est_accuracy);
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got, oracle::pareto_ids(pts));
  }
}

TEST(Select, LowResolutionExample) {
  const auto plans = generate_plans(load_catalog(kData / "catalog_lowres.json"));
  const auto best = select_plan(plans, Constraint::min_accuracy(0.72));
  EXPECT_EQ(best.id, "ResNet-50@161-PNG");
  EXPECT_DOUBLE_EQ(best.est_throughput, 1995);
  EXPECT_DOUBLE_EQ(best.est_accuracy, 0.75);
  const auto r34 = std::find_if(plans.begin(), plans.end(), [](const auto& p) { return p.id == "ResNet-34@full"; });
  EXPECT_DOUBLE_EQ(r34->est_throughput, 527);
}

TEST(Select, ConstraintOrientation) {
  const std::vector<PlanConfig> ps{plan("fast", .60, 5000), plan("mid", .70, 2000), plan("slow", .80, 500)};
  EXPECT_EQ(select_plan(ps, Constraint::min_throughput(1000)).id, "mid");
  EXPECT_EQ(select_plan(ps, Constraint::min_accuracy(0.75)).id, "slow");
  EXPECT_EQ(select_plan(ps, Constraint::none()).id, "fast");
  EXPECT_EQ(select_plan({plan("only", .1, 1)}, Constraint::min_accuracy(0.05)).id, "only");
}

TEST(Select, InfeasibleReportsNearestBound) {
  const std::vector<PlanConfig> ps{plan("a", .6, 5000), plan("b", .7, 2000)};
  try {
    select_plan(ps, Constraint::min_throughput(1e9));
    FAIL();
  } catch (const InfeasibleConstraint& e) {
    EXPECT_DOUBLE_EQ(e.nearest_feasible_bound(), 5000);
    EXPECT_NE(std::string(e.what()).find("infeasible"), std::string::npos);
  }
  try {
    select_plan(ps, Constraint::min_accuracy(0.9));
    FAIL();
  } catch (const InfeasibleConstraint& e) {
    EXPECT_DOUBLE_EQ(e.nearest_feasible_bound(), 0.7);
  }
  EXPECT_THROW(select_plan(ps, Constraint{ConstraintKind::MinAccuracy, -1}), std::invalid_argument);
}

TEST(Select, ResultIsOnFrontierAndMonotone) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> a(0.5, 0.9), t(100, 10000);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PlanConfig> ps;
    for (int i = 0; i < 40; ++i) ps.push_back(plan("p" + std::to_string(i), a(rng), t(rng)));
    const auto front = ids(pareto_frontier(ps));
    double prev_thr = std::numeric_limits<double>::infinity();
    for (double bound = 0.5; bound <= 0.9; bound += 0.02) {
      try {
        const auto s = select_plan(ps, Constraint::min_accuracy(bound));
        EXPECT_NE(std::find(front.begin(), front.end(), s.id), front.end());
        EXPECT_LE(s.est_throughput, prev_thr);
        prev_thr = s.est_throughput;
      } catch (const InfeasibleConstraint&) {
      }
    }
    const auto s = select_plan(ps, Constraint::min_throughput(3000));
    EXPECT_NE(std::find(front.begin(), front.end(), s.id), front.end());
  }
}

TEST(Placement, DnnBoundKeepsEverythingOnCpu) {
  const auto g = chain();
  const int n = int(g.ops.size());
  OpProfile prof;
  prof.cpu.assign(std::size_t(n), 5876.0 * n);
  prof.accel.assign(std::size_t(n), 20000.0);
  prof.accel[0].reset();  // decode is CPU-only
  const auto s = place_operators(g, prof, 1844);
  EXPECT_EQ(s.split_index, n);
  EXPECT_NEAR(s.cpu_preproc_throughput, 5876, 1e-6);
  EXPECT_DOUBLE_EQ(s.accel_overhead_throughput, 1844);
}

TEST(Placement, PreprocBoundMovesWorkToAccelerator) {
  // Decode (CPU-only) then resize and normalize. All on CPU: 534 im/s.
  // Decode alone runs at 900; the two movable ops cost the accelerator
  // enough to drop 4999 to 4500.
  dag::PreprocGraph g;
  g.ops.resize(3);
  const double cpu_rest = 1.0 / (1.0 / 534 - 1.0 / 900);
  const double dev_total = 1.0 / (1.0 / 4500 - 1.0 / 4999);
  OpProfile prof{{900, 2 * cpu_rest, 2 * cpu_rest}, {std::nullopt, 2 * dev_total, 2 * dev_total}};
  const auto s = place_operators(g, prof, 4999);
  EXPECT_EQ(s.split_index, 1);
  EXPECT_NEAR(s.cpu_preproc_throughput, 900, 1e-6);
  EXPECT_NEAR(s.accel_overhead_throughput, 4500, 1e-6);
  const auto oracle_best = oracle::best_split(prof.cpu, prof.accel, 4999);
  EXPECT_EQ(oracle_best.split, 1);
}

TEST(Placement, SingleCpuOnlyOp) {
  dag::PreprocGraph g;
  g.ops.resize(1);
  const auto s = place_operators(g, {{700}, {std::nullopt}}, 5000);
  EXPECT_EQ(s.split_index, 1);
  EXPECT_DOUBLE_EQ(s.cpu_preproc_throughput, 700);
}

TEST(Placement, Errors) {
  dag::PreprocGraph empty;
  EXPECT_THROW(place_operators(empty, {}, 100), std::invalid_argument);
  dag::PreprocGraph g;
  g.ops.resize(2);
  EXPECT_THROW(place_operators(g, {{1}, {1.0}}, 100), std::invalid_argument);
  EXPECT_THROW(place_operators(g, {{1, 1}, {1.0, 1.0}}, 0), std::invalid_argument);
}

TEST(Placement, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> t(100, 50000);
  std::bernoulli_distribution cpu_only(0.3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 7)(rng);
    dag::PreprocGraph g;
    g.ops.resize(std::size_t(n));
    OpProfile prof;
    for (int i = 0; i < n; ++i) {
      prof.cpu.push_back(t(rng));
      prof.accel.push_back(cpu_only(rng) ? std::nullopt : std::optional<double>(t(rng)));
    }
    const double exec = t(rng);
    const auto got = place_operators(g, prof, exec);
    const auto want = oracle::best_split(prof.cpu, prof.accel, exec);
    EXPECT_EQ(got.split_index, want.split);
    EXPECT_NEAR(split_score(got), want.score, 1e-9 * want.score);
  }
}

TEST(DollarCost, VcpuTableCells) {
  // Published cents are rounded from unrounded throughputs, so a rounded
  // throughput can move a cell by a few hundredths.
  EXPECT_NEAR(dollar_cost(1927, 0.526), 7.58, 0.01);
  EXPECT_NEAR(dollar_cost(377, 0.526), 38.75, 0.01);
  EXPECT_NEAR(dollar_cost(3756, 0.752), 5.56, 0.01);
  EXPECT_NEAR(dollar_cost(4548, 1.204), 7.35, 0.01);
  EXPECT_NEAR(dollar_cost(1e6, 3.60), 0.1, 1e-12);
  EXPECT_THROW(dollar_cost(0, 1), std::invalid_argument);
}

TEST(DollarCost, InverselyProportional) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> t(1, 1e5), p(0.1, 10);
  for (int i = 0; i < 1000; ++i) {
    const double tt = t(rng), pp = p(rng);
    EXPECT_DOUBLE_EQ(dollar_cost(2 * tt, pp), dollar_cost(tt, pp) / 2);
  }
}

TEST(PriceFit, G4dnPoints) {
  const auto f = fit_core_price(load_pricing(kData / "g4dn_pricing.csv"));
  EXPECT_NEAR(f.per_core, 0.0639, 0.0005);
  EXPECT_NEAR(f.accelerator, 0.218, 0.005);
  EXPECT_GE(f.r_squared, 0.995);
}

TEST(PriceFit, DegenerateAndExactCases) {
  auto f = fit_core_price({{{4, 1.0}, {8, 2.0}}});
  EXPECT_NEAR(f.per_core, 0.25, 1e-12);
  EXPECT_NEAR(f.accelerator, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(f.r_squared, 1.0);
  f = fit_core_price({{{4, 3.0}, {8, 3.0}, {16, 3.0}}});
  EXPECT_NEAR(f.per_core, 0.0, 1e-12);
  EXPECT_NEAR(f.accelerator, 3.0, 1e-12);
  EXPECT_THROW(fit_core_price({{{4, 1.0}, {4, 2.0}}}), std::invalid_argument);
  EXPECT_THROW(fit_core_price({{{4, 1.0}}}), std::invalid_argument);
}
