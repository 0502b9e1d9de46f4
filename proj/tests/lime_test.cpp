#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "verikit/lime.hpp"

using namespace verikit;
using namespace verikit::lime;

namespace {

std::vector<double> planted_scores(const std::vector<Mask>& masks, const std::vector<double>& w,
                                   double bias = 0.0) {
  PlantedLinearScorer scorer(w, bias);
  return scorer.score("p", "r", masks);
}

class NanScorer : public MaskScorer {
 public:
  std::vector<double> score(const std::string&, const std::string&,
                            std::span<const Mask> masks) override {
    std::vector<double> out(masks.size(), 1.0);
    if (calls_++ == 1) out[3] = std::numeric_limits<double>::quiet_NaN();
    return out;
  }

 private:
  int calls_ = 0;
};

}  // namespace

TEST(SampleMasks, DeterministicAndStartsUnperturbed) {
  const auto a = sample_masks(3, 4, 0.5, 7);
  EXPECT_EQ(a, sample_masks(3, 4, 0.5, 7));
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0], (Mask{1, 1, 1, 1}));
  EXPECT_NE(sample_masks(50, 8, 0.5, 1), sample_masks(50, 8, 0.5, 2));
}

TEST(SampleMasks, DensityConcentratesAtKeepProbability) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto masks = sample_masks(10000, 8, 0.5, seed);
    std::size_t on = 0;
    for (std::size_t i = 1; i < masks.size(); ++i) on += std::accumulate(masks[i].begin(), masks[i].end(), 0u);
    EXPECT_NEAR(static_cast<double>(on) / (8.0 * 9999.0), 0.5, 0.02);
  }
}

TEST(SampleMasks, Errors) {
  EXPECT_THROW(sample_masks(3, 4, 0.0, 1), DomainError);
  EXPECT_THROW(sample_masks(3, 4, 1.0, 1), DomainError);
  EXPECT_THROW(sample_masks(0, 4, 0.5, 1), UsageError);
}

TEST(FitSurrogate, ExactRecoveryOnEnumeratedMasks) {
  const auto masks = enumerate_masks(4);
  const auto fit = fit_surrogate(masks, planted_scores(masks, {1, 0, 0, 2}),
                                 std::numeric_limits<double>::infinity(), 0.0);
  EXPECT_NEAR(fit.intercept, 0.0, 1e-12);
  const std::vector<double> expected{1, 0, 0, 2};
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(fit.coefficients[c], expected[c], 1e-12);
}

TEST(FitSurrogate, ExactRecoveryMatchesNormalEquationOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t cells : {3u, 7u, 12u}) {
    std::vector<double> w(cells);
    for (auto& x : w) x = n(rng);
    const double bias = n(rng);
    const auto masks = enumerate_masks(cells);
    const auto y = planted_scores(masks, w, bias);
    const auto fit = fit_surrogate(masks, y, std::numeric_limits<double>::infinity(), 0.0);
    const auto ref = oracle::least_squares(masks, y);
    EXPECT_NEAR(fit.intercept, bias, 1e-9);
    EXPECT_NEAR(ref[0], bias, 1e-9);
    for (std::size_t c = 0; c < cells; ++c) {
      EXPECT_NEAR(fit.coefficients[c], w[c], 1e-9);
      EXPECT_NEAR(ref[c + 1], w[c], 1e-9);
    }
  }
}

TEST(FitSurrogate, ConstantScoresAndShrinkage) {
  const auto masks = sample_masks(200, 6, 0.5, 4);
  const auto flat = fit_surrogate(masks, std::vector<double>(masks.size(), 3.5));
  EXPECT_NEAR(flat.intercept, 3.5, 1e-9);
  for (double c : flat.coefficients) EXPECT_NEAR(c, 0.0, 1e-9);

  const auto y = planted_scores(masks, {1, -2, 0.5, 3, 0, 1});
  const auto shrunk = fit_surrogate(masks, y, 0.25, 1e6);
  for (double c : shrunk.coefficients) EXPECT_NEAR(c, 0.0, 1e-3);
}

TEST(FitSurrogate, Errors) {
  const auto masks = sample_masks(5, 3, 0.5, 1);
  EXPECT_THROW(fit_surrogate(masks, std::vector<double>(4, 0.0)), UsageError);
  // n = cells leaves cells + 1 unknowns under-determined without ridge
  const auto few = sample_masks(6, 6, 0.5, 1);
  EXPECT_THROW(fit_surrogate(few, std::vector<double>(6, 1.0), 0.25, 0.0), SingularityError);
  EXPECT_NO_THROW(fit_surrogate(few, std::vector<double>(6, 1.0), 0.25, 1e-3));
}

TEST(FitSurrogate, PermutingCellsPermutesCoefficients) {
  const auto masks = sample_masks(300, 5, 0.5, 8);
  const auto y = planted_scores(masks, {0.3, -1.0, 2.0, 0.0, 0.7});
  const auto base = fit_surrogate(masks, y);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<Mask> permuted;
  for (const auto& m : masks) {
    Mask p(5);
    for (std::size_t c = 0; c < 5; ++c) p[c] = m[perm[c]];
    permuted.push_back(p);
  }
  const auto moved = fit_surrogate(permuted, y);
  EXPECT_NEAR(moved.intercept, base.intercept, 1e-10);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(moved.coefficients[c], base.coefficients[perm[c]], 1e-10);
}

TEST(CoefficientsToHeatmap, QuadrantsClampAndUniform) {
  const SegmentationGrid grid{4, 4, 2, 2};
  const auto h = coefficients_to_heatmap(std::vector<double>{1, 0, 0, 2}, grid);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const double expected = x < 2 && y < 2 ? 1 : (x >= 2 && y >= 2 ? 2 : 0);
      EXPECT_EQ(h.at(x, y), expected);
    }
  const auto neg = coefficients_to_heatmap(std::vector<double>{-1, -2, -3, -0.5}, grid);
  EXPECT_EQ(neg.sum(), 0.0);

  const auto one = coefficients_to_heatmap(std::vector<double>{5}, SegmentationGrid{113, 113, 1, 1});
  EXPECT_EQ(one.values, std::vector<double>(113 * 113, 5.0));
  EXPECT_THROW(coefficients_to_heatmap(std::vector<double>{1, 2}, grid), UsageError);
}

TEST(SegmentationGrid, EveryPixelInOneCellWithRemainders) {
  const SegmentationGrid grid{113, 113, 8, 8};
  std::vector<std::size_t> area(grid.cells(), 0);
  for (std::size_t y = 0; y < 113; ++y)
    for (std::size_t x = 0; x < 113; ++x) ++area[grid.cell_of(x, y)];
  EXPECT_EQ(std::accumulate(area.begin(), area.end(), std::size_t{0}), 113u * 113u);
  EXPECT_EQ(area[0], 14u * 14u);
  EXPECT_EQ(area[63], 15u * 15u);
  EXPECT_THROW((SegmentationGrid{4, 4, 0, 2}.validate()), DomainError);
}

TEST(Explain, PlantedArgmaxIsRecovered) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ExplainConfig cfg;
  cfg.grid = {113, 113, 4, 4};
  cfg.samples = 4096;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<double> w(16);
    for (auto& x : w) x = u(rng);
    const auto top = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    w[top] += 0.5;
    cfg.seed = seed;
    PlantedLinearScorer scorer(w, 0.1);
    const auto ex = explain("p", "r", scorer, cfg);
    const auto& c = ex.surrogate.coefficients;
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin()), top);
    const auto peak = std::max_element(ex.heatmap.values.begin(), ex.heatmap.values.end());
    const auto idx = static_cast<std::size_t>(peak - ex.heatmap.values.begin());
    EXPECT_EQ(cfg.grid.cell_of(idx % 113, idx / 113), top);
  }
}

TEST(Explain, SeededRunsAreBitIdentical) {
  ExplainConfig cfg;
  cfg.samples = 300;
  cfg.seed = 77;
  cfg.batch_size = 64;
  std::vector<double> w(64);
  std::iota(w.begin(), w.end(), 0.0);
  PlantedLinearScorer a(w), b(w);
  EXPECT_EQ(explain("p", "r", a, cfg).heatmap.values, explain("p", "r", b, cfg).heatmap.values);
}

TEST(Explain, NonFiniteScoreNamesBatchAndRow) {
  ExplainConfig cfg;
  cfg.grid = {8, 8, 2, 2};
  cfg.samples = 40;
  cfg.batch_size = 10;
  NanScorer scorer;
  try {
    explain("p", "r", scorer, cfg);
    FAIL();
  } catch (const ScorerError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 1 row 3"), std::string::npos) << e.what();
  }
}

TEST(Explain, DegenerateSampleCountIsSingular) {
  ExplainConfig cfg;
  cfg.grid = {8, 8, 2, 2};
  cfg.samples = 4;
  cfg.ridge = 0.0;
  PlantedLinearScorer scorer({1, 2, 3, 4});
  EXPECT_THROW(explain("p", "r", scorer, cfg), SingularityError);
}

TEST(WireFormat, MasksAndScoresRoundTrip) {
  const auto masks = sample_masks(20, 6, 0.5, 2);
  std::stringstream buf;
  write_masks(buf, masks);
  EXPECT_EQ(buf.str().substr(0, 7), "M 20 6\n");
  EXPECT_EQ(read_masks(buf), masks);

  const std::vector<double> s{0.25, -3.0, 1e-17};
  std::stringstream sb;
  write_score_lines(sb, s);
  EXPECT_EQ(read_score_lines(sb), s);

  std::istringstream bad("M 2 3\n1,0,1\n1,2,0\n");
  EXPECT_THROW(read_masks(bad), ParseError);
  std::istringstream text("0.5\nabc\n");
  EXPECT_THROW(read_score_lines(text), ParseError);
}

TEST(ExternalCommandScorer, FailingCommandIsScorerError) {
  ExternalCommandScorer scorer("false");
  const auto masks = sample_masks(3, 2, 0.5, 1);
  EXPECT_THROW(scorer.score("p", "r", masks), ScorerError);
}

TEST(ExternalCommandScorer, ShellScorerProducesOneScorePerRow) {
  // counts the ones in each mask row
  ExternalCommandScorer scorer(
      "sh -c 'tail -n +2 \"$0\" | awk -F, \"{s=0; for(i=1;i<=NF;i++) s+=\\$i; print s}\" > \"$1\"'");
  const auto masks = sample_masks(10, 5, 0.5, 3);
  const auto out = scorer.score("p", "r", masks);
  ASSERT_EQ(out.size(), masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i)
    EXPECT_EQ(out[i], std::accumulate(masks[i].begin(), masks[i].end(), 0.0));
}

TEST(Surrogate, CsvLayout) {
  std::stringstream buf;
  write_surrogate(buf, {0.5, {1.0, -2.0}});
  EXPECT_EQ(buf.str(), "term,value\nintercept,0.5\nc0,1\nc1,-2\n");
}
