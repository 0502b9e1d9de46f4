#pragma once

// Heatmap comparison: probability normalisation, KL and Jensen-Shannon
// divergence (natural log), pairwise divergence clouds across systems,
// Pearson correlation, averaging and extreme-image selection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "verikit/core_model.hpp"
#include "verikit/errors.hpp"
#include "verikit/parallel.hpp"

namespace verikit {

/// Upper bound of the JSD with natural logarithms.
inline constexpr double kJsdMax = std::numbers::ln2;

struct ProbabilityMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;
};

inline ProbabilityMap normalize(const Heatmap& h) {
  const double total = h.sum();
  if (!(total > 0.0)) throw DomainError("heatmap " + to_string(h.key) + " has zero total mass");
  ProbabilityMap p{h.width, h.height, h.values};
  for (double& v : p.values) v /= total;
  return p;
}

namespace detail {
inline void require_same_shape(const ProbabilityMap& p, const ProbabilityMap& q) {
  if (p.width != q.width || p.height != q.height || p.values.size() != q.values.size())
    throw UsageError("distributions differ in shape: " + std::to_string(p.width) + "x" +
                     std::to_string(p.height) + " vs " + std::to_string(q.width) + "x" +
                     std::to_string(q.height));
}
}  // namespace detail

/// KL(P || Q). Terms with P(i) = 0 vanish; P(i) > 0 with Q(i) = 0 gives +inf.
inline double kl(const ProbabilityMap& p, const ProbabilityMap& q) {
  detail::require_same_shape(p, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double pi = p.values[i];
    if (pi <= 0.0) continue;
    const double qi = q.values[i];
    if (qi <= 0.0) return std::numeric_limits<double>::infinity();
    acc += pi * std::log(pi / qi);
  }
  return acc;
}

/// 0.5 KL(P||M) + 0.5 KL(Q||M), M = (P + Q) / 2, in [0, ln 2].
inline double jsd(const ProbabilityMap& p, const ProbabilityMap& q) {
  detail::require_same_shape(p, q);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double pi = p.values[i], qi = q.values[i];
    if (pi == qi) continue;  // both halves vanish
    const double mi = 0.5 * (pi + qi);
    if (pi > 0.0) acc += pi * std::log(pi / mi);
    if (qi > 0.0) acc += qi * std::log(qi / mi);
  }
  return std::clamp(0.5 * acc, 0.0, kJsdMax);
}

/// Sample Pearson correlation.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw UsageError("pearson needs equal lengths, got " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()));
  if (x.size() < 2) throw UsageError("pearson needs at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateInputError("pearson of a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Pixel-wise mean of equally sized heatmaps.
inline Heatmap average_heatmap(std::span<const Heatmap> maps) {
  if (maps.empty()) throw UsageError("cannot average an empty group of heatmaps");
  Heatmap out(maps.front().width, maps.front().height);
  for (const auto& m : maps) {
    if (m.width != out.width || m.height != out.height)
      throw UsageError("cannot average heatmaps of different sizes (" + std::to_string(m.width) +
                       "x" + std::to_string(m.height) + " vs " + std::to_string(out.width) + "x" +
                       std::to_string(out.height) + ")");
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += m.values[i];
  }
  for (double& v : out.values) v /= static_cast<double>(maps.size());
  return out;
}

/// Averages every heatmap whose key lies at `distance` (0 = all distances).
inline Heatmap average_heatmap(std::span<const Heatmap> maps, int distance) {
  if (distance == 0) return average_heatmap(maps);
  std::vector<Heatmap> group;
  for (const auto& m : maps)
    if (m.key.distance == distance) group.push_back(m);
  if (group.empty())
    throw UsageError("no heatmaps at distance " + std::to_string(distance));
  return average_heatmap(group);
}

// ---------------------------------------------------------------------------
// Divergence clouds

/// One point per image: JSD for every system pair (a,b), a < b, in
/// lexicographic pair order.
struct DivergencePoint {
  SampleKey key;
  std::vector<double> pairs;

  double mean() const {
    double s = 0.0;
    for (double v : pairs) s += v;
    return pairs.empty() ? 0.0 : s / static_cast<double>(pairs.size());
  }
};

/// heatmaps[system][key]
using HeatmapsBySystem = std::map<std::string, std::map<SampleKey, Heatmap>>;

inline std::vector<std::pair<std::string, std::string>> system_pairs(
    std::vector<std::string> systems) {
  std::sort(systems.begin(), systems.end());
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t a = 0; a < systems.size(); ++a)
    for (std::size_t b = a + 1; b < systems.size(); ++b) out.emplace_back(systems[a], systems[b]);
  return out;
}

/// Images are those of the first system (in sorted order); every other
/// system must provide the same keys.
inline std::vector<DivergencePoint> pairwise_cloud(const HeatmapsBySystem& heatmaps,
                                                   std::vector<std::string> systems,
                                                   unsigned threads = 1) {
  std::sort(systems.begin(), systems.end());
  if (systems.size() < 2) throw UsageError("a divergence cloud needs at least 2 systems");
  std::map<SampleKey, int> keys;
  for (const auto& s : systems) {
    auto it = heatmaps.find(s);
    if (it == heatmaps.end()) throw CompletenessError("no heatmaps for system '" + s + "'");
    for (const auto& [k, h] : it->second) keys[k];
  }
  std::vector<SampleKey> order;
  for (const auto& [k, _] : keys) {
    for (const auto& s : systems)
      if (!heatmaps.at(s).count(k))
        throw CompletenessError("missing heatmap for (" + s + ", " + to_string(k) + ")");
    order.push_back(k);
  }

  const auto pairs = system_pairs(systems);
  std::vector<DivergencePoint> cloud(order.size());
  parallel_for(order.size(), threads, [&](std::size_t i) {
    std::map<std::string, ProbabilityMap> dist;
    for (const auto& s : systems) dist.emplace(s, normalize(heatmaps.at(s).at(order[i])));
    DivergencePoint pt{order[i], {}};
    for (const auto& [a, b] : pairs) pt.pairs.push_back(jsd(dist.at(a), dist.at(b)));
    cloud[i] = std::move(pt);
  });
  return cloud;
}

/// Column `axis` of a cloud as a series.
inline std::vector<double> cloud_axis(const std::vector<DivergencePoint>& cloud, std::size_t axis) {
  std::vector<double> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(p.pairs.at(axis));
  return out;
}

struct ExtremeImages {
  std::vector<DivergencePoint> lowest;   // ascending mean
  std::vector<DivergencePoint> highest;  // descending mean
};

/// Ranks images by mean pairwise JSD, ties by key. `highest` is the tail of
/// that ranking reversed, so for k = size the two lists mirror each other.
inline ExtremeImages extreme_images(std::vector<DivergencePoint> cloud, std::size_t k) {
  if (k > cloud.size())
    throw UsageError("asked for " + std::to_string(k) + " images from a cloud of " +
                     std::to_string(cloud.size()));
  std::stable_sort(cloud.begin(), cloud.end(), [](const DivergencePoint& a, const DivergencePoint& b) {
    const double ma = a.mean(), mb = b.mean();
    return ma != mb ? ma < mb : a.key < b.key;
  });
  ExtremeImages out;
  out.lowest.assign(cloud.begin(), cloud.begin() + static_cast<std::ptrdiff_t>(k));
  out.highest.assign(cloud.rbegin(), cloud.rbegin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

/// Column names pair_ab, pair_ac, ... for N systems labelled a, b, c, ...
inline std::vector<std::string> cloud_axis_names(std::size_t n_systems) {
  std::vector<std::string> names;
  for (std::size_t a = 0; a < n_systems; ++a)
    for (std::size_t b = a + 1; b < n_systems; ++b)
      names.push_back(std::string("pair_") + char('a' + a) + char('a' + b));
  return names;
}

inline void write_cloud(std::ostream& out, const std::vector<DivergencePoint>& cloud,
                        std::size_t n_systems) {
  out << "subject,session,eye,distance";
  for (const auto& n : cloud_axis_names(n_systems)) out << ',' << n;
  out << ",mean\n";
  for (const auto& p : cloud) {
    out << p.key.subject_id << ',' << p.key.session << ',' << to_char(p.key.eye) << ','
        << p.key.distance;
    for (double v : p.pairs) out << ',' << text::format_double(v);
    out << ',' << text::format_double(p.mean()) << '\n';
  }
}

/// Pearson correlation for every pair of cloud axes.
inline void write_correlations(std::ostream& out, const std::vector<DivergencePoint>& cloud,
                               std::size_t n_systems) {
  const auto names = cloud_axis_names(n_systems);
  out << "axis_x,axis_y,pearson\n";
  for (std::size_t a = 0; a < names.size(); ++a)
    for (std::size_t b = a + 1; b < names.size(); ++b)
      out << names[a] << ',' << names[b] << ','
          << text::format_double(pearson(cloud_axis(cloud, a), cloud_axis(cloud, b))) << '\n';
}

}  // namespace verikit
