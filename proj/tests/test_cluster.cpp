#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace bitquant;
using namespace testing_support;

namespace {

ConfusionMatrix matrix(std::size_t k, std::vector<std::uint64_t> counts) {
  ConfusionMatrix cm(default_class_names(k));
  cm.counts = std::move(counts);
  return cm;
}

ConfusionMatrix random_matrix(SeededRng& rng, std::size_t k) {
  ConfusionMatrix cm(default_class_names(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) cm.at(i, j) = rng.below(i == j ? 200 : 40);
  return cm;
}

ClassGrouping random_grouping(SeededRng& rng, const std::vector<std::string>& names) {
  for (;;) {
    const auto groups = 2 + rng.below(names.size() - 1);
    std::vector<std::vector<std::uint32_t>> g(groups);
    for (std::uint32_t c = 0; c < names.size(); ++c) g[rng.below(groups)].push_back(c);
    std::erase_if(g, [](const auto& v) { return v.empty(); });
    if (g.size() >= 2) return make_grouping(std::move(g), names);
  }
}

}  // namespace

TEST(ProposeMerge, HeavyConfusionPairMergesFirst) {
  const auto cm = matrix(3, {50, 30, 0, 25, 60, 1, 2, 0, 90});
  const auto g = propose_merge(cm, 1);
  EXPECT_EQ(g.groups, (std::vector<std::vector<std::uint32_t>>{{0, 1}, {2}}));
  EXPECT_EQ(g.group_name(0), "class0+class1");
}

TEST(ProposeMerge, ZeroMergesIsIdentity) {
  SeededRng rng(61);
  const auto cm = random_matrix(rng, 5);
  EXPECT_EQ(propose_merge(cm, 0), identity_grouping(cm.class_names));
}

TEST(ProposeMerge, AllDiagonalMergesFirstPair) {
  ConfusionMatrix cm(default_class_names(4));
  for (std::size_t i = 0; i < 4; ++i) cm.at(i, i) = 10;
  EXPECT_EQ(propose_merge(cm, 1).groups[0], (std::vector<std::uint32_t>{0, 1}));
}

TEST(ProposeMerge, TooManyMergesIsRejected) {
  ConfusionMatrix cm(default_class_names(4));
  EXPECT_THROW(propose_merge(cm, 3), ArgumentError);
  EXPECT_NO_THROW(propose_merge(cm, 2));
}

TEST(ProposeMerge, OneStepMatchesExhaustiveSearch) {
  SeededRng rng(62);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 3 + rng.below(8);
    const auto cm = random_matrix(rng, k);
    double best = -1;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) {
        const auto ni = double(cm.row_sum(i)), nj = double(cm.row_sum(j));
        const double s = (ni ? cm.at(i, j) / ni : 0) + (nj ? cm.at(j, i) / nj : 0);
        if (s > best) best = s, bi = i, bj = j;
      }
    const auto g = propose_merge(cm, 1);
    ASSERT_EQ(g.mapping[bi], g.mapping[bj]);
    ASSERT_EQ(g.groups.size(), k - 1);
  }
}

TEST(ProposeMerge, DeterministicAcrossCalls) {
  SeededRng rng(63);
  const auto cm = random_matrix(rng, 8);
  EXPECT_EQ(propose_merge(cm, 4), propose_merge(cm, 4));
}

TEST(RegroupEval, IdentityGroupingPreservesResult) {
  SeededRng rng(64);
  const auto cm = random_matrix(rng, 6);
  const auto r = regroup_eval(cm, identity_grouping(cm.class_names));
  EXPECT_EQ(r.confusion.counts, cm.counts);
  EXPECT_EQ(r.accuracy, cm.accuracy());
}

TEST(RegroupEval, EqualsPartitionMatrixProduct) {
  SeededRng rng(65);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 3 + rng.below(7);
    const auto cm = random_matrix(rng, k);
    const auto g = random_grouping(rng, cm.class_names);
    const std::size_t m = g.groups.size();
    // P is m x k with P[a][c] = 1 iff class c is in group a
    std::vector<std::uint64_t> p(m * k, 0), pc(m * k, 0), pcp(m * m, 0);
    for (std::size_t c = 0; c < k; ++c) p[g.mapping[c] * k + c] = 1;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t c = 0; c < k; ++c) pc[a * k + j] += p[a * k + c] * cm.at(c, j);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t j = 0; j < k; ++j) pcp[a * m + b] += pc[a * k + j] * p[b * k + j];
    ASSERT_EQ(regroup_eval(cm, g).confusion.counts, pcp);
  }
}

TEST(RegroupEval, GroupingNeverLowersAccuracy) {
  SeededRng rng(66);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cm = random_matrix(rng, 3 + rng.below(8));
    const auto g = random_grouping(rng, cm.class_names);
    ASSERT_GE(regroup_eval(cm, g).accuracy, cm.accuracy());
  }
}

TEST(RegroupEval, MapsPerSamplePredictions) {
  auto cm = matrix(3, {1, 1, 0, 0, 1, 0, 0, 0, 1});
  const auto r = make_result(cm, {0, 1, 1, 2});
  const auto g = make_grouping({{0, 1}, {2}}, cm.class_names);
  const auto grouped = regroup_eval(r, g);
  EXPECT_EQ(grouped.predictions, (std::vector<std::uint32_t>{0, 0, 0, 1}));
  EXPECT_EQ(grouped.accuracy, 1.0);
  EXPECT_THROW(regroup_eval(matrix(2, {1, 0, 0, 1}), g), ArgumentError);
}

TEST(RegroupEval, LogitSumVariantOnOverlapFixture) {
  const auto model = load_model(fixture_dir() / "overlap_mlp.bqnt");
  const auto data = load_dataset(fixture_dir() / "overlap_mlp.bqds");
  const Network net(model);
  const auto base = evaluate(net, data);
  const auto id = identity_grouping(base.confusion.class_names);
  EXPECT_EQ(regroup_eval_logit_sum(net, data, id).accuracy, base.accuracy);
  const auto g = propose_merge(base.confusion, 1);
  EXPECT_GE(regroup_eval_logit_sum(net, data, g).accuracy, base.accuracy);
}

TEST(Grouping, TextRoundTripAndValidation) {
  const std::vector<std::string> names{"cat", "dog", "frog"};
  const auto g = make_grouping({{1, 0}, {2}}, names);
  EXPECT_EQ(grouping_to_text(g), "cat,dog\nfrog\n");
  EXPECT_EQ(grouping_from_text(grouping_to_text(g), names), g);
  EXPECT_THROW(grouping_from_text("cat,dog\nhorse\n", names), ValidationError);
  EXPECT_THROW(grouping_from_text("cat,dog,frog\n", names), ValidationError);
  EXPECT_THROW(grouping_from_text("cat,dog\ndog,frog\n", names), ValidationError);
  EXPECT_THROW(grouping_from_text("cat\nfrog\n", names), ValidationError);
}
