#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "visinf/costmodel.hpp"

using namespace visinf::costmodel;

TEST(ExecOnly, SingleStageIsItsThroughput) {
  EXPECT_DOUBLE_EQ(throughput_exec_only(CascadeSpec::single(4999)).value, 4999);
  for (double t : {1.0, 37.5, 12592.0}) EXPECT_DOUBLE_EQ(throughput_exec_only(CascadeSpec::single(t)).value, t);
  EXPECT_EQ(throughput_exec_only(CascadeSpec::single(10)).model, Model::ExecOnly);
}

TEST(ExecOnly, TwoStageCascadeMatchesSimulation) {
  const CascadeSpec c({{10000, 1.0}, {100, 0.1}});
  std::mt19937_64 rng(7);
  const double sim = oracle::simulate_cascade(c, 1'000'000, rng);
  EXPECT_NEAR(throughput_exec_only(c).value, 909.0909, 1e-3);
  EXPECT_NEAR(throughput_exec_only(c).value / sim, 1.0, 1e-3);
}

TEST(SumAndMin, CostModelTableEstimates) {
  const auto s = CascadeSpec::single(4999);
  const auto d = CascadeSpec::single(1844);
  EXPECT_NEAR(throughput_sum(4001, s).value, 2222, 1.0);
  EXPECT_NEAR(throughput_sum(534, s).value, 482, 1.0);
  EXPECT_NEAR(throughput_sum(5876, d).value, 1403, 1.0);
  EXPECT_DOUBLE_EQ(throughput_min(4001, s).value, 4001);
  EXPECT_DOUBLE_EQ(throughput_min(534, s).value, 534);
  EXPECT_DOUBLE_EQ(throughput_min(5876, d).value, 1844);
}

TEST(Error, RelativeToMeasured) {
  EXPECT_NEAR(estimation_error(4999, 4056), 23.25, 0.01);
  EXPECT_NEAR(estimation_error(534, 557), 4.13, 0.01);
  EXPECT_DOUBLE_EQ(estimation_error(812.5, 812.5), 0.0);
  EXPECT_THROW(estimation_error(1, 0), std::invalid_argument);
}

TEST(CascadeSpec, RejectsBadStages) {
  EXPECT_THROW(CascadeSpec(std::vector<CascadeStage>{}), std::invalid_argument);
  EXPECT_THROW(CascadeSpec({{0, 1}}), std::invalid_argument);
  EXPECT_THROW(CascadeSpec({{10, 0.5}}), std::invalid_argument);
  EXPECT_THROW(CascadeSpec({{10, 1}, {10, 0}}), std::invalid_argument);
  EXPECT_THROW(CascadeSpec({{10, 1}, {10, 1.5}}), std::invalid_argument);
  EXPECT_THROW(throughput_sum(0, CascadeSpec::single(10)), std::invalid_argument);
  EXPECT_THROW(throughput_min(-1, CascadeSpec::single(10)), std::invalid_argument);
}

CascadeSpec random_cascade(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> k(1, 4);
  std::uniform_real_distribution<double> t(50, 20000), pass(0.02, 1.0);
  std::vector<CascadeStage> st{{t(rng), 1.0}};
  const int n = k(rng);
  for (int j = 1; j < n; ++j) st.push_back({t(rng), st.back().alpha * pass(rng)});
  return CascadeSpec(st);
}

TEST(Properties, MinIsBelowBothInputsAndSumBelowMin) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> p(1, 50000);
  for (int i = 0; i < 2000; ++i) {
    const auto c = random_cascade(rng);
    const double pre = p(rng);
    const double eo = throughput_exec_only(c).value;
    const double mi = throughput_min(pre, c).value;
    EXPECT_LE(mi, eo);
    EXPECT_LE(mi, pre);
    EXPECT_LT(throughput_sum(pre, c).value, mi);
  }
}

TEST(Properties, ExecOnlyMonotone) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    const auto c = random_cascade(rng);
    const double base = throughput_exec_only(c).value;
    auto st = c.stages();
    for (std::size_t j = 0; j < st.size(); ++j) {
      auto faster = st;
      faster[j].exec_throughput *= 1.5;
      EXPECT_GE(throughput_exec_only(CascadeSpec(faster)).value, base);
      if (j > 0) {
        auto more = st;
        more[j].alpha = std::min(1.0, more[j].alpha * 1.3);
        EXPECT_LE(throughput_exec_only(CascadeSpec(more)).value, base);
      }
    }
  }
}

TEST(Properties, ExecOnlyMatchesSimulationOnRandomCascades) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 10; ++i) {
    const auto c = random_cascade(rng);
    const double sim = oracle::simulate_cascade(c, 200'000, rng);
    EXPECT_NEAR(throughput_exec_only(c).value / sim, 1.0, 1e-3);
  }
}
