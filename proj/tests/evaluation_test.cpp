#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "verikit/evaluation.hpp"

using namespace verikit;

namespace {

TemplateSet complete_dataset(int subjects, int distances) {
  TemplateSet set;
  for (int s = 0; s < subjects; ++s)
    for (int session : {1, 2})
      for (Eye eye : {Eye::L, Eye::R})
        for (int d = 1; d <= distances; ++d)
          set.add({{"s" + std::to_string(100 + s), session, eye, d}, {1.0}});
  return set;
}

ScoreSet random_scores(const std::vector<ComparisonPair>& pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ScoreSet s{"A", Metric::chi2, pairs, {}};
  for (const auto& p : pairs) s.scores.push_back(n(rng) + (p.label == Label::genuine ? 2.5 : 0.0));
  return s;
}

}  // namespace

TEST(ComputeEer, HandExample) {
  const std::vector<double> g{0.9, 0.8, 0.7, 0.4}, i{0.6, 0.5, 0.3, 0.2};
  const auto r = compute_eer(g, i);
  EXPECT_DOUBLE_EQ(r.eer, 0.25);
  EXPECT_EQ(r.n_genuine, 4u);
  EXPECT_EQ(r.n_impostor, 4u);
  // FAR = FRR = 1/4 on the whole interval (0.5, 0.6]; the sweep reports its
  // right end, the first distinct score where FRR catches up with FAR.
  EXPECT_DOUBLE_EQ(r.eer_threshold, 0.6);
  const auto o = oracle::brute_force_eer(g, i);
  EXPECT_DOUBLE_EQ(o.eer, r.eer);
}

TEST(ComputeEer, SeparableAndIndistinguishable) {
  EXPECT_EQ(compute_eer(std::vector{1.0, 1.0, 1.0}, std::vector{0.0, 0.0, 0.0}).eer, 0.0);
  EXPECT_DOUBLE_EQ(compute_eer(std::vector{0.5, 0.6}, std::vector{0.5, 0.6}).eer, 0.5);
}

TEST(ComputeEer, Errors) {
  EXPECT_THROW(compute_eer(std::vector<double>{}, std::vector{1.0}), UsageError);
  EXPECT_THROW(compute_eer(std::vector{1.0}, std::vector<double>{}), UsageError);
  EXPECT_THROW(compute_eer(std::vector<double>{NAN}, std::vector{1.0}), DomainError);
  EXPECT_THROW(compute_eer(std::vector{1.0}, std::vector<double>{INFINITY}), DomainError);
}

TEST(ComputeEer, MatchesBruteForceIncludingTies) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(1, 300), level(0, 20);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> g(static_cast<std::size_t>(size(rng))), i(static_cast<std::size_t>(size(rng)));
    // coarse integer levels force many ties
    for (auto& x : g) x = level(rng) + 3;
    for (auto& x : i) x = level(rng);
    const auto r = compute_eer(g, i);
    const auto o = oracle::brute_force_eer(g, i);
    ASSERT_NEAR(r.eer, o.eer, 1e-12);
    ASSERT_EQ(r.eer_threshold, o.threshold);
  }
}

TEST(ComputeEer, InvariantUnderIncreasingTransforms) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> g(200), i(500);
    for (auto& x : g) x = n(rng) + 1.0;
    for (auto& x : i) x = n(rng);
    const double base = compute_eer(g, i).eer;
    auto tg = g, ti = i;
    for (auto& x : tg) x = std::exp(x);
    for (auto& x : ti) x = std::exp(x);
    EXPECT_NEAR(compute_eer(tg, ti).eer, base, 1e-12);
    for (auto& x : tg) x = 3.0 * x - 7.0;
    for (auto& x : ti) x = 3.0 * x - 7.0;
    EXPECT_NEAR(compute_eer(tg, ti).eer, base, 1e-12);
  }
}

TEST(RocCurve, FarAndFrrAreMonotone) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> g(1000), i(3000);
  for (auto& x : g) x = n(rng) + 1.5;
  for (auto& x : i) x = std::round(10 * n(rng)) / 10;
  const auto roc = roc_curve(g, i);
  EXPECT_EQ(roc.front().far, 1.0);
  EXPECT_EQ(roc.front().frr, 0.0);
  EXPECT_EQ(roc.back().far, 0.0);
  EXPECT_EQ(roc.back().frr, 1.0);
  for (std::size_t k = 1; k < roc.size(); ++k) {
    EXPECT_GT(roc[k].threshold, roc[k - 1].threshold);
    EXPECT_LE(roc[k].far, roc[k - 1].far);
    EXPECT_GE(roc[k].frr, roc[k - 1].frr);
  }
}

TEST(RelativeChange, TableBrackets) {
  EXPECT_NEAR(relative_change(1.31, 1.66), -21.0843, 1e-3);
  EXPECT_NEAR(relative_change(1.31, 1.66), -21.14, 0.5);
  EXPECT_NEAR(relative_change(1.33, 1.73), -23.40, 0.5);
  EXPECT_EQ(relative_change(2.0, 2.0), 0.0);
  EXPECT_THROW(relative_change(1.0, 0.0), DomainError);
}

TEST(GroupEval, FullProtocolGroups) {
  const auto pairs = flatten(full_protocol(complete_dataset(86, 5), 5));
  const auto s = random_scores(pairs, 3);

  const auto intra = group_eval(s, Grouping::intra_by_distance, 5);
  ASSERT_EQ(intra.size(), 5u);
  for (int d = 0; d < 5; ++d) {
    EXPECT_EQ(intra[d].n_genuine, 344u);
    EXPECT_EQ(intra[d].n_impostor, 29240u);
    EXPECT_EQ(intra[d].grouping, "intra D" + std::to_string(d + 1));
  }

  const auto gaps = group_eval(s, Grouping::by_distance_gap, 5);
  ASSERT_EQ(gaps.size(), 4u);
  // gap g pools 5 - g cross combinations
  for (int g = 1; g <= 4; ++g) {
    EXPECT_EQ(gaps[g - 1].n_genuine, static_cast<std::size_t>(5 - g) * 688u);
    EXPECT_EQ(gaps[g - 1].group_value, g);
  }

  const auto pooled = group_eval(s, Grouping::pooled, 5);
  ASSERT_EQ(pooled.size(), 1u);
  EXPECT_EQ(pooled[0].n_genuine, 8600u);
  EXPECT_EQ(pooled[0].n_impostor, 438600u);
}

TEST(GroupEval, ThreadCountDoesNotChangeResults) {
  const auto pairs = flatten(full_protocol(complete_dataset(20, 4), 4));
  const auto s = random_scores(pairs, 9);
  for (auto g : {Grouping::intra_by_distance, Grouping::by_distance_gap, Grouping::pooled}) {
    const auto a = group_eval(s, g, 4, 1);
    const auto b = group_eval(s, g, 4, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].eer, b[k].eer);
      EXPECT_EQ(a[k].eer_threshold, b[k].eer_threshold);
    }
  }
}

TEST(GroupEval, EmptyGroupIsUsageError) {
  const auto s = random_scores(flatten(full_protocol(complete_dataset(3, 2), 2)), 1);
  try {
    group_eval(s, Grouping::intra_by_distance, 3);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("intra D3"), std::string::npos);
  }
}

TEST(EvalReport, RoundTrip) {
  const auto s = random_scores(flatten(full_protocol(complete_dataset(5, 3), 3)), 2);
  const auto r = group_eval(s, Grouping::by_distance_gap);
  std::stringstream buf;
  write_eval_report(buf, r);
  const auto back = read_eval_report(buf);
  ASSERT_EQ(back.size(), r.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    EXPECT_EQ(back[k].grouping, r[k].grouping);
    EXPECT_EQ(back[k].group_value, r[k].group_value);
    EXPECT_NEAR(back[k].eer, r[k].eer, 1e-15);
  }
}
