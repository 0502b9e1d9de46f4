#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "verikit/evaluation.hpp"
#include "verikit/metrics.hpp"

using namespace verikit;

namespace {
std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = 0.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}
}  // namespace

TEST(Cosine, HandExamples) {
  EXPECT_NEAR(cosine_similarity(std::vector{3.0, 4.0}, std::vector{3.0, 4.0}), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(std::vector{1.0, 0.0}, std::vector{0.0, 1.0}), 0.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(std::vector{1.0, 2.0, 2.0}, std::vector{2.0, 1.0, 2.0}), 8.0 / 9.0,
              1e-12);
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine_similarity(std::vector{0.0, 0.0}, std::vector{1.0, 0.0}), DomainError);
  EXPECT_THROW(cosine_similarity(std::vector{1.0}, std::vector{1.0, 0.0}), DimensionError);
}

TEST(Chi2, HandExamples) {
  EXPECT_EQ(chi2_distance(std::vector{0.3, 0.0, 2.0}, std::vector{0.3, 0.0, 2.0}), 0.0);
  EXPECT_NEAR(chi2_distance(std::vector{1.0, 0.0}, std::vector{0.0, 1.0}), 2.0, 1e-12);
  EXPECT_NEAR(chi2_distance(std::vector{2.0, 2.0}, std::vector{1.0, 1.0}), 2.0 / 3.0, 1e-12);
}

TEST(Chi2, Errors) {
  EXPECT_THROW(chi2_distance(std::vector{-1.0}, std::vector{1.0}), DomainError);
  EXPECT_THROW(chi2_distance(std::vector{1.0, 1.0}, std::vector{1.0}), DimensionError);
}

TEST(MetricProperties, SymmetryScaleInvarianceNonNegativity) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> alpha(0.01, 100.0);
  for (int i = 0; i < 500; ++i) {
    const auto x = random_vector(rng, 32, 0.0, 5.0), y = random_vector(rng, 32, 0.0, 5.0);
    EXPECT_NEAR(cosine_similarity(x, y), cosine_similarity(y, x), 1e-12);
    EXPECT_NEAR(chi2_distance(x, y), chi2_distance(y, x), 1e-12);
    EXPECT_GE(chi2_distance(x, y), 0.0);
    auto scaled = x;
    const double a = alpha(rng);
    for (auto& v : scaled) v *= a;
    EXPECT_NEAR(cosine_similarity(scaled, y), cosine_similarity(x, y), 1e-12);
    const double c = cosine_similarity(x, y);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(MetricProperties, Chi2ZeroOnlyForIdenticalPositiveVectors) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto x = random_vector(rng, 8, 0.1, 3.0);
    auto y = x;
    EXPECT_EQ(chi2_distance(x, y), 0.0);
    y[static_cast<std::size_t>(i) % 8] += 1e-3;
    EXPECT_GT(chi2_distance(x, y), 0.0);
  }
}

TEST(ScorePairs, NegatedChi2AndCountPreservation) {
  TemplateSet set;
  set.add({{"a", 1, Eye::L, 1}, {1.0, 0.0}});
  set.add({{"a", 2, Eye::L, 1}, {1.0, 0.0}});
  set.add({{"b", 2, Eye::L, 1}, {0.0, 1.0}});
  std::vector<ComparisonPair> pairs{
      {{"a", 1, Eye::L, 1}, {"a", 2, Eye::L, 1}, Label::genuine, 1, 1},
      {{"a", 1, Eye::L, 1}, {"b", 2, Eye::L, 1}, Label::impostor, 1, 1}};
  const auto s = score_pairs(pairs, set, {Metric::chi2});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.scores[0], 0.0);
  EXPECT_NEAR(s.scores[1], -2.0, 1e-12);

  pairs.push_back({{"a", 1, Eye::L, 1}, {"c", 2, Eye::L, 1}, Label::impostor, 1, 1});
  try {
    score_pairs(pairs, set, {Metric::cosine});
    FAIL();
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("(c, 2, L, 1)"), std::string::npos);
  }
}

TEST(ScorePairs, ParallelMatchesSerialAndCsvRoundTrips) {
  std::mt19937_64 rng(8);
  TemplateSet set;
  std::vector<ComparisonPair> pairs;
  for (int s = 0; s < 20; ++s) {
    set.add({{"s" + std::to_string(s), 1, Eye::L, 1}, random_vector(rng, 16)});
    set.add({{"s" + std::to_string(s), 2, Eye::L, 1}, random_vector(rng, 16)});
  }
  for (int a = 0; a < 20; ++a)
    for (int b = 0; b < 20; ++b)
      pairs.push_back({{"s" + std::to_string(a), 1, Eye::L, 1},
                       {"s" + std::to_string(b), 2, Eye::L, 1},
                       a == b ? Label::genuine : Label::impostor, 1, 1});
  const auto serial = score_pairs(pairs, set, {Metric::chi2, false, 1}, "A");
  const auto parallel = score_pairs(pairs, set, {Metric::chi2, false, 4}, "A");
  EXPECT_EQ(serial.scores, parallel.scores);

  std::stringstream buf;
  write_scores(buf, serial);
  const auto back = read_scores(buf);
  EXPECT_EQ(back.system, "A");
  EXPECT_EQ(back.metric, Metric::chi2);
  EXPECT_EQ(back.pairs, serial.pairs);
  EXPECT_EQ(back.scores, serial.scores);
}

TEST(ScorePairs, NegatedChi2MakesAcceptAboveThresholdCorrect) {
  // Genuine pairs are closer in chi2; after negation they must score higher,
  // so a perfectly separable set has EER 0 under "accept if score >= t".
  TemplateSet set;
  set.add({{"a", 1, Eye::L, 1}, {1.0, 0.1}});
  set.add({{"a", 2, Eye::L, 1}, {0.9, 0.1}});
  set.add({{"b", 1, Eye::L, 1}, {0.1, 1.0}});
  set.add({{"b", 2, Eye::L, 1}, {0.1, 0.9}});
  std::vector<ComparisonPair> pairs;
  for (const char* a : {"a", "b"})
    for (const char* b : {"a", "b"})
      pairs.push_back({{a, 1, Eye::L, 1}, {b, 2, Eye::L, 1},
                       std::string(a) == b ? Label::genuine : Label::impostor, 1, 1});
  const auto s = score_pairs(pairs, set, {Metric::chi2});
  const auto r = group_eval(s, Grouping::pooled);
  EXPECT_EQ(r[0].eer, 0.0);
}

TEST(ScorePairs, OptionalL2NormalisationBeforeChi2) {
  TemplateSet set;
  set.add({{"a", 1, Eye::L, 1}, {1.0, 1.0}});
  set.add({{"a", 2, Eye::L, 1}, {3.0, 3.0}});
  std::vector<ComparisonPair> pairs{{{"a", 1, Eye::L, 1}, {"a", 2, Eye::L, 1}, Label::genuine, 1, 1}};
  EXPECT_LT(score_pairs(pairs, set, {Metric::chi2, false}).scores[0], 0.0);
  EXPECT_NEAR(score_pairs(pairs, set, {Metric::chi2, true}).scores[0], 0.0, 1e-15);
}
