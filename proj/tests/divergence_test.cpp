#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "verikit/divergence.hpp"

using namespace verikit;

namespace {

ProbabilityMap dist(std::vector<double> v) {
  return ProbabilityMap{v.size(), 1, std::move(v)};
}

Heatmap map_of(std::size_t w, std::size_t h, std::vector<double> v, SampleKey key = {}) {
  Heatmap m(w, h);
  m.values = std::move(v);
  m.key = std::move(key);
  return m;
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n, double zero_prob = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = u(rng) < zero_prob ? 0.0 : u(rng);
    s += x;
  }
  if (s == 0.0) {
    v[0] = 1.0;
    s = 1.0;
  }
  for (auto& x : v) x /= s;
  return v;
}

DivergencePoint point(std::string id, std::vector<double> pairs) {
  return {{std::move(id), 1, Eye::L, 1}, std::move(pairs)};
}

}  // namespace

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize(map_of(2, 2, {1, 1, 1, 1})).values, (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  EXPECT_EQ(normalize(map_of(2, 2, {2, 0, 0, 0})).values, (std::vector<double>{1, 0, 0, 0}));
  EXPECT_THROW(normalize(map_of(2, 2, {0, 0, 0, 0})), DomainError);
}

TEST(Normalize, ScaleInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 3.0), a(0.01, 100.0);
  for (int t = 0; t < 100; ++t) {
    auto h = map_of(4, 4, std::vector<double>(16));
    for (auto& v : h.values) v = u(rng);
    auto scaled = h;
    const double alpha = a(rng);
    for (auto& v : scaled.values) v *= alpha;
    const auto p = normalize(h), q = normalize(scaled);
    double total = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_NEAR(p.values[i], q.values[i], 1e-15);
      total += p.values[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Kl, Examples) {
  EXPECT_EQ(kl(dist({0.3, 0.7}), dist({0.3, 0.7})), 0.0);
  EXPECT_NEAR(kl(dist({1, 0}), dist({0.5, 0.5})), std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isinf(kl(dist({1, 0}), dist({0, 1}))));
  EXPECT_THROW(kl(dist({1, 0}), dist({1, 0, 0})), UsageError);
}

TEST(Jsd, Examples) {
  EXPECT_EQ(jsd(dist({0.2, 0.8}), dist({0.2, 0.8})), 0.0);
  EXPECT_NEAR(jsd(dist({1, 0}), dist({0, 1})), 0.6931, 1e-4);
  EXPECT_NEAR(jsd(dist({1, 0}), dist({0, 1})), kJsdMax, 1e-15);
  EXPECT_NEAR(jsd(dist({0.5, 0.5}), dist({1, 0})), 0.215762, 1e-6);
  EXPECT_THROW(jsd(dist({1}), dist({0.5, 0.5})), UsageError);
}

TEST(Jsd, SymmetricBoundedAndMatchesEntropyForm) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(t % 50);
    const auto p = random_simplex(rng, n, 0.3), q = random_simplex(rng, n, 0.3);
    const double a = jsd(dist(p), dist(q)), b = jsd(dist(q), dist(p));
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, kJsdMax);
    EXPECT_NEAR(a, oracle::entropy_jsd(p, q), 1e-10);
    EXPECT_EQ(jsd(dist(p), dist(p)), 0.0);
  }
}

TEST(Pearson, Examples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y;
  for (double v : x) y.push_back(2 * v + 1);
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-15);
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateInputError);
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), UsageError);
}

TEST(Pearson, AffineInvariantAndMatchesRawSums) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> a(0.1, 10.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = n(rng);
      y[i] = 0.5 * x[i] + n(rng);
    }
    const double r = pearson(x, y);
    EXPECT_NEAR(r, oracle::raw_sum_pearson(x, y), 1e-12);
    auto tx = x;
    const double scale = a(rng), shift = 5 * n(rng);
    for (auto& v : tx) v = scale * v + shift;
    EXPECT_NEAR(pearson(tx, y), r, 1e-12);
  }
}

TEST(AverageHeatmap, Examples) {
  const std::vector<Heatmap> two{map_of(2, 1, {0, 2}), map_of(2, 1, {2, 0})};
  EXPECT_EQ(average_heatmap(two).values, (std::vector<double>{1, 1}));
  const std::vector<Heatmap> one{map_of(2, 2, {1, 2, 3, 4})};
  EXPECT_EQ(average_heatmap(one).values, one[0].values);
  const std::vector<Heatmap> mixed{map_of(2, 2, {1, 1, 1, 1}), map_of(3, 3, std::vector<double>(9, 1.0))};
  EXPECT_THROW(average_heatmap(mixed), UsageError);
  EXPECT_THROW(average_heatmap(std::span<const Heatmap>{}), UsageError);
}

TEST(AverageHeatmap, GroupsByDistance) {
  const std::vector<Heatmap> maps{map_of(1, 1, {1}, {"a", 1, Eye::L, 1}),
                                  map_of(1, 1, {3}, {"a", 1, Eye::L, 2}),
                                  map_of(1, 1, {5}, {"b", 1, Eye::L, 2})};
  EXPECT_EQ(average_heatmap(maps, 2).values[0], 4.0);
  EXPECT_EQ(average_heatmap(maps, 0).values[0], 3.0);
  EXPECT_THROW(average_heatmap(maps, 3), UsageError);
}

TEST(PairwiseCloud, CountsOriginAndDimensions) {
  std::mt19937_64 rng(5);
  HeatmapsBySystem identical, varied;
  for (int i = 0; i < 10; ++i) {
    const SampleKey key{"s" + std::to_string(i), 1, Eye::R, 1};
    const auto base = map_of(3, 3, random_simplex(rng, 9), key);
    for (const char* s : {"A", "B", "C"}) {
      identical[s][key] = base;
      varied[s][key] = map_of(3, 3, random_simplex(rng, 9), key);
    }
  }
  const auto flat = pairwise_cloud(identical, {"A", "B", "C"});
  ASSERT_EQ(flat.size(), 10u);
  for (const auto& p : flat) EXPECT_EQ(p.pairs, (std::vector<double>{0, 0, 0}));

  const auto cloud = pairwise_cloud(varied, {"C", "A", "B"});
  for (const auto& p : cloud) {
    ASSERT_EQ(p.pairs.size(), 3u);
    const auto& a = varied.at("A").at(p.key);
    const auto& c = varied.at("C").at(p.key);
    // axis 1 is the (A, C) pair
    EXPECT_NEAR(p.pairs[1], oracle::entropy_jsd(normalize(a).values, normalize(c).values), 1e-10);
  }
  EXPECT_EQ(pairwise_cloud(varied, {"A", "B"}).front().pairs.size(), 1u);

  const auto threaded = pairwise_cloud(varied, {"A", "B", "C"}, 4);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_EQ(cloud[i].pairs, threaded[i].pairs);
}

TEST(PairwiseCloud, MissingHeatmapNamesSystemAndKey) {
  HeatmapsBySystem h;
  const SampleKey k1{"s1", 1, Eye::L, 2}, k2{"s2", 2, Eye::R, 3};
  h["A"][k1] = map_of(1, 1, {1}, k1);
  h["A"][k2] = map_of(1, 1, {1}, k2);
  h["B"][k1] = map_of(1, 1, {1}, k1);
  try {
    pairwise_cloud(h, {"A", "B"});
    FAIL();
  } catch (const CompletenessError& e) {
    EXPECT_NE(std::string(e.what()).find("(B, (s2, 2, R, 3))"), std::string::npos) << e.what();
  }
}

TEST(ExtremeImages, Examples) {
  const std::vector<DivergencePoint> two{point("x", {0.1, 0.1, 0.1}), point("y", {0.6, 0.6, 0.6})};
  const auto e = extreme_images(two, 1);
  EXPECT_EQ(e.lowest[0].key.subject_id, "x");
  EXPECT_EQ(e.highest[0].key.subject_id, "y");

  const std::vector<DivergencePoint> with_zero{point("a", {0.3, 0.2, 0.1}), point("b", {0, 0, 0}),
                                               point("c", {0.5, 0.1, 0.1})};
  EXPECT_EQ(extreme_images(with_zero, 1).lowest[0].key.subject_id, "b");

  const auto all = extreme_images(with_zero, 3);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(all.lowest[i].key, all.highest[2 - i].key);
  EXPECT_THROW(extreme_images(with_zero, 4), UsageError);
}

TEST(ExtremeImages, MatchesBruteForceSelection) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> level(0, 4);
  for (int t = 0; t < 100; ++t) {
    std::vector<DivergencePoint> cloud;
    for (int i = 0; i < 25; ++i)
      cloud.push_back(point("s" + std::to_string(100 + i),
                            {0.1 * level(rng), 0.1 * level(rng), 0.1 * level(rng)}));
    const auto e = extreme_images(cloud, 5);
    // the lowest set must be exactly the images with fewer than 5 points
    // strictly ahead of them under (mean, key) ordering
    for (const auto& candidate : cloud) {
      std::size_t ahead = 0;
      for (const auto& other : cloud)
        if (other.mean() < candidate.mean() ||
            (other.mean() == candidate.mean() && other.key < candidate.key))
          ++ahead;
      const bool in_low = std::any_of(e.lowest.begin(), e.lowest.end(),
                                      [&](const auto& p) { return p.key == candidate.key; });
      const bool in_high = std::any_of(e.highest.begin(), e.highest.end(),
                                       [&](const auto& p) { return p.key == candidate.key; });
      EXPECT_EQ(in_low, ahead < 5);
      EXPECT_EQ(in_high, ahead >= cloud.size() - 5);
    }
  }
}

TEST(CloudCsv, Layout) {
  std::vector<DivergencePoint> cloud{{{"s1", 1, Eye::L, 2}, {0.5, 0.25, 0.0}}};
  std::stringstream buf;
  write_cloud(buf, cloud, 3);
  EXPECT_EQ(buf.str(),
            "subject,session,eye,distance,pair_ab,pair_ac,pair_bc,mean\n"
            "s1,1,L,2,0.5,0.25,0,0.25\n");

  cloud.push_back({{"s2", 1, Eye::L, 2}, {0.1, 0.3, 0.2}});
  cloud.push_back({{"s3", 1, Eye::L, 2}, {0.2, 0.1, 0.4}});
  std::stringstream corr;
  write_correlations(corr, cloud, 3);
  EXPECT_EQ(corr.str().substr(0, 22), "axis_x,axis_y,pearson\n");
  EXPECT_NE(corr.str().find("pair_ab,pair_ac,"), std::string::npos);
}
