#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fsru/model.hpp"
#include "test_util.hpp"

namespace fsru {
namespace {

using ::testing::HasSubstr;

const StateDistribution kExampleD{{1.0, 1.0, 4.0, 0.0}};

TEST(ExampleOne, TransitionMatrices) {
  const FsruInstance inst = example_instance();
  const double m0[4][4] = {{0.0, 0.5, 0.5, 0.0},
                           {0.0, 0.5, 0.5, 0.0},
                           {0.0, 0.5, 0.5, 0.0},
                           {0.0, 0.0, 0.0, 1.0}};
  const double m2[4][4] = {{0.75, 0.25, 0.0, 0.0},
                           {0.25, 0.75, 0.0, 0.0},
                           {0.25, 0.25, 0.5, 0.0},
                           {0.0, 0.0, 0.0, 1.0}};
  for (int a = 0; a < 4; ++a) {
    const auto r0 = transition_row(inst, 0, 0, a, kExampleD);
    const auto r2 = transition_row(inst, 0, 2, a, kExampleD);
    for (int j = 0; j < 4; ++j) {
      EXPECT_NEAR(r0[j], m0[a][j], 1e-12) << "a=" << a << " s'=" << j;
      EXPECT_NEAR(r2[j], m2[a][j], 1e-12) << "a=" << a << " s'=" << j;
    }
  }
}

TEST(ExampleOne, RewardMatrix) {
  const FsruInstance inst = example_instance();
  const double r[4][4] = {{1.0, 1.0, 1.0, 0.0},
                          {1.0, 1.0, 1.0, 0.0},
                          {0.5, 0.5, 0.5, 0.0},
                          {0.0, 0.0, 0.0, 0.0}};
  for (int s = 0; s < 4; ++s) {
    for (int a = 0; a < 4; ++a) {
      EXPECT_NEAR(expected_reward(inst, 0, s, a, kExampleD), r[s][a], 1e-12)
          << "s=" << s << " a=" << a;
    }
  }
}

TEST(ExampleOne, Regimes) {
  const FsruInstance inst = example_instance();
  EXPECT_EQ(classify(inst, 0, 0, 3, kExampleD), Regime::SinkAction);
  EXPECT_EQ(classify(inst, 0, 3, 1, kExampleD), Regime::SinkState);
  EXPECT_EQ(classify(inst, 0, 0, 1, kExampleD), Regime::Unconstrained);
  EXPECT_EQ(classify(inst, 0, 2, 2, kExampleD), Regime::Congested);
}

TEST(ExampleOne, SinkExitIsDeterministic) {
  const FsruInstance inst = example_instance();
  EXPECT_EQ(transition_row(inst, 0, 3, 1, kExampleD), (std::vector<double>{0, 1, 0, 0}));
}

TEST(ExampleOne, BoundaryCountsAsUnconstrained) {
  const FsruInstance inst = example_instance();
  // Demand 2 equals two active taxis.
  const auto row = transition_row(inst, 0, 0, 0, 2.0);
  EXPECT_DOUBLE_EQ(row[1], 0.5);
  EXPECT_DOUBLE_EQ(row[2], 0.5);
  EXPECT_EQ(classify(inst, 0, 0, 0, testing::distribution({2, 0, 0, 0})), Regime::Unconstrained);
}

TEST(ExampleOne, ValidatesClean) { EXPECT_TRUE(validate_instance(example_instance()).empty()); }

TEST(Transition, EmptyZoneIsDomainError) {
  const FsruInstance inst = example_instance();
  EXPECT_THROW(transition_row(inst, 0, 0, 1, 0.0), std::domain_error);
  EXPECT_THROW(expected_reward(inst, 0, 1, 1, testing::distribution({1, 0, 0, 3})),
               std::domain_error);
}

TEST(Transition, FractionalCountsAboveDemandAreCongested) {
  const FsruInstance inst = example_instance();
  const auto row = transition_row(inst, 0, 0, 0, 2.5);
  EXPECT_NEAR(row[1], 1.0 / 2.5, 1e-15);
  EXPECT_NEAR(row[0], 1.0 - 2.0 / 2.5, 1e-15);
}

TEST(Transition, CongestionKernelMatchesRows) {
  const FsruInstance inst = testing::random_instance(7, 3, 2, 10, 2, 1);
  for (double d : {0.5, 1.0, 2.0, 5.0, 9.0}) {
    for (int s = 0; s < 3; ++s) {
      const CongestionKernel k = congestion_kernel(inst.demand(0, s), d);
      for (int a = 0; a < 3; ++a) {
        const auto row = transition_row(inst, 0, s, a, d);
        for (int j = 0; j < 3; ++j) {
          const double expect = k.hire_scale * inst.flow_at(0, s, j) + (j == a ? k.free_prob : 0.0);
          EXPECT_NEAR(row[j], expect, 1e-12);
        }
      }
    }
  }
}

TEST(Transition, RowsAreStochasticOnRandomQueries) {
  SplitMix64 rng(11);
  for (int q = 0; q < 2000; ++q) {
    const int z = 1 + static_cast<int>(rng() % 5);
    const FsruInstance inst = testing::random_instance(rng(), z, 2, 10, 2, 1);
    const int s = static_cast<int>(rng() % (z + 1));
    const int a = static_cast<int>(rng() % (z + 1));
    const double d = 1.0 + static_cast<double>(rng() % 12);
    const auto row = transition_row(inst, 1, s, a, d);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-9);
    for (double p : row) EXPECT_GE(p, 0.0);
  }
}

TEST(Sample, SinkActionAndSinkState) {
  FsruInstance inst = example_instance();
  inst.cost[inst.index(0, 1, 3)] = 0.25;
  SplitMix64 rng(1);
  const Move m = sample_transition(inst, 0, 1, 3, kExampleD, rng);
  EXPECT_EQ(m.next, 3);
  EXPECT_DOUBLE_EQ(m.reward, 0.25);
  EXPECT_DOUBLE_EQ(expected_reward(inst, 0, 1, 3, kExampleD), 0.25);
  const Move e = sample_transition(inst, 0, 3, 2, kExampleD, rng);
  EXPECT_EQ(e.next, 2);
  EXPECT_FALSE(e.hired);
}

TEST(Sample, CongestedOtherZonesAreAlwaysHired) {
  FsruInstance inst = example_instance();
  for (auto& c : inst.cost) c = 0.1;
  SplitMix64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    const Move m = sample_transition(inst, 0, 2, 2, kExampleD, rng);
    if (m.next != 2) {
      EXPECT_TRUE(m.hired);
      EXPECT_DOUBLE_EQ(m.reward, 0.9);
    }
  }
}

TEST(Sample, ExampleOneHireRate) {
  const FsruInstance inst = example_instance();
  SplitMix64 rng(9);
  const int n = 1000000;
  int hired = 0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const Move m = sample_transition(inst, 0, 2, 2, kExampleD, rng);
    hired += m.hired ? 1 : 0;
    total += m.reward;
  }
  const double p = static_cast<double>(hired) / n;
  const double se = std::sqrt(0.25 / n);
  EXPECT_NEAR(p, 0.5, 3 * se);
  EXPECT_NEAR(total / n, 0.5, 3 * se);
}

TEST(Sample, FastSamplerMatchesRows) {
  const FsruInstance inst = testing::random_instance(21, 4, 1, 10, 2, 0);
  const TransitionSampler sampler(inst);
  for (const double d : {1.0, 3.0, 8.0}) {
    for (int s = 0; s < 4; ++s) {
      const int a = (s + 1) % 4;
      const auto row = transition_row(inst, 0, s, a, d);
      const double mean = expected_reward(inst, 0, s, a, d);
      SplitMix64 rng(derive_seed(3, static_cast<std::uint64_t>(s)));
      const int n = 200000;
      std::vector<double> freq(5, 0.0);
      double total = 0.0, total_sq = 0.0;
      for (int i = 0; i < n; ++i) {
        const Move m = sampler.sample(0, s, a, d, rng);
        freq[m.next] += 1.0;
        total += m.reward;
        total_sq += m.reward * m.reward;
      }
      for (int j = 0; j < 5; ++j) {
        const double p = row[j];
        EXPECT_NEAR(freq[j] / n, p, 4 * std::sqrt(p * (1 - p) / n) + 1e-12);
      }
      const double var = total_sq / n - (total / n) * (total / n);
      EXPECT_NEAR(total / n, mean, 4 * std::sqrt(var / n) + 1e-12);
    }
  }
}

TEST(Validate, ReportsFieldAndIndex) {
  FsruInstance inst = example_instance(2);
  inst.flow[inst.index(1, 0, 3)] = 1.0;
  inst.fare[inst.index(0, 2, 1)] = -1.0;
  inst.num_agents = 0;
  const auto v = validate_instance(inst);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].field, "num_agents");
  // Cells are scanned in time order.
  EXPECT_EQ(v[1].field, "fare");
  EXPECT_THAT(v[1].message, HasSubstr("(t=0, s=2, s'=1)"));
  EXPECT_EQ(v[2].field, "flow");
  EXPECT_THAT(v[2].message, HasSubstr("customer flow into sink"));
  EXPECT_THAT(v[2].message, HasSubstr("(t=1, s=0, s'=3)"));
}

TEST(Validate, ShapeMismatch) {
  FsruInstance inst = example_instance();
  inst.cost.pop_back();
  const auto v = validate_instance(inst);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "cost");
}

TEST(Validate, FlowOutOfSinkAndBadLimits) {
  FsruInstance inst = example_instance();
  inst.flow[inst.index(0, 3, 1)] = 2.0;
  inst.max_hours = 0;
  inst.max_breaks = -1;
  const auto v = validate_instance(inst);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].field, "max_hours");
  EXPECT_EQ(v[1].field, "max_breaks");
  EXPECT_THAT(v[2].message, HasSubstr("out of sink"));
}

}  // namespace
}  // namespace fsru
