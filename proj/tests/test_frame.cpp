#include <gtest/gtest.h>

#include <set>

#include "ncota/frame.hpp"

using namespace ncota;

TEST(Partition, StridedExample) {
  const auto sets = build_partition(24, 5);
  ASSERT_EQ(sets.size(), 5u);
  EXPECT_EQ(sets[0], (std::vector<int>{0, 5, 10, 15, 20}));
  EXPECT_EQ(sets[4], (std::vector<int>{4, 9, 14, 19}));
  std::vector<std::size_t> sizes;
  for (const auto& s : sets) sizes.push_back(s.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{5, 5, 5, 5, 4}));
}

TEST(Partition, SingletonsWhenUnitsEqualComponents) {
  const auto sets = build_partition(7, 7);
  for (int m = 0; m < 7; ++m) EXPECT_EQ(sets[static_cast<std::size_t>(m)], std::vector<int>{m});
}

TEST(Partition, ExactDivision) {
  for (const auto& s : build_partition(6, 3)) EXPECT_EQ(s.size(), 2u);
}

TEST(Partition, DisjointCoveringAndEven) {
  for (int Q = 1; Q <= 60; ++Q)
    for (int M = 1; M <= Q; ++M) {
      const auto sets = build_partition(Q, M);
      std::set<int> seen;
      for (const auto& s : sets) {
        EXPECT_LT(std::abs(static_cast<double>(s.size()) - static_cast<double>(Q) / M), 1.0);
        for (int q : s) EXPECT_TRUE(seen.insert(q).second);
      }
      EXPECT_EQ(static_cast<int>(seen.size()), Q);
    }
}

TEST(Partition, RejectsTooFewUnits) {
  EXPECT_THROW(build_partition(3, 4), Error);
  EXPECT_THROW(make_frame_plan(1, 3, 0, 4), Error);
}

TEST(Preamble, NormAndOrthogonality) {
  const FramePlan plan = make_frame_plan(2, 12, 3, 5);
  const int Q = plan.resource_units();
  for (int m = 0; m < 5; ++m) {
    const Vector u = preamble(m, plan);
    EXPECT_NEAR(u.norm(), std::sqrt(static_cast<double>(Q)), 1e-12);
    for (int n = m + 1; n < 5; ++n) EXPECT_EQ(u.dot(preamble(n, plan)), 0.0);
  }
  EXPECT_THROW(preamble(5, plan), Error);
}

TEST(Preamble, SingletonSetsGiveScaledUnitVectors) {
  const FramePlan plan = make_frame_plan(1, 4, 0, 4);
  for (int m = 0; m < 4; ++m) EXPECT_EQ(preamble(m, plan), 2.0 * Vector::Unit(4, m));
}

TEST(FrameDuration, OfdmNumerology) {
  EXPECT_NEAR(frame_duration(make_frame_plan(2, 512, 133, 11), 5e6), 258e-6, 1e-15);
  EXPECT_NEAR(frame_duration(make_frame_plan(1, 512, 133, 11), 5e6), 129e-6, 1e-15);
  EXPECT_DOUBLE_EQ(frame_duration(make_frame_plan(4, 64, 16, 3), 1e6), 2.0 * frame_duration(make_frame_plan(2, 64, 16, 3), 1e6));
}

TEST(FramePlan, OwnerMatchesSets) {
  const FramePlan plan = make_frame_plan(3, 7, 0, 4);
  for (int m = 0; m < 4; ++m)
    for (int q : plan.sets[static_cast<std::size_t>(m)]) EXPECT_EQ(plan.owner[static_cast<std::size_t>(q)], m);
  EXPECT_EQ(plan.subcarrier_of(9), 2);
  EXPECT_EQ(shifted_set(3, 2, 4), 1);
}
