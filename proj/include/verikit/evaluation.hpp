#pragma once

// ROC / equal-error-rate evaluation and grouped (per-distance, per-gap,
// pooled) breakdowns of score sets.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "verikit/errors.hpp"
#include "verikit/metrics.hpp"
#include "verikit/parallel.hpp"

namespace verikit {

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // impostors with score >= threshold
  double frr = 0.0;  // genuines with score < threshold
};

struct EvalResult {
  double eer = 0.0;
  double eer_threshold = 0.0;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
  std::string grouping = "all";
  int group_value = 0;  // distance index or gap; 0 for pooled

  double eer_percent() const { return 100.0 * eer; }
};

namespace detail {

inline std::vector<double> sorted_checked(std::span<const double> s, const char* what) {
  if (s.empty()) throw UsageError(std::string("no ") + what + " scores");
  std::vector<double> v(s.begin(), s.end());
  for (double x : v)
    if (!std::isfinite(x)) throw DomainError(std::string("non-finite ") + what + " score");
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

/// FAR/FRR at every distinct score value (ascending), followed by a final
/// +infinity threshold where everything is rejected.
inline std::vector<RocPoint> roc_curve(std::span<const double> genuine,
                                       std::span<const double> impostor) {
  const auto g = detail::sorted_checked(genuine, "genuine");
  const auto im = detail::sorted_checked(impostor, "impostor");
  const double ng = static_cast<double>(g.size());
  const double ni = static_cast<double>(im.size());

  std::vector<RocPoint> roc;
  roc.reserve(g.size() + im.size() + 1);
  std::size_t gi = 0, ii = 0;  // counts of scores strictly below the threshold
  while (gi < g.size() || ii < im.size()) {
    double t;
    if (gi == g.size()) t = im[ii];
    else if (ii == im.size()) t = g[gi];
    else t = std::min(g[gi], im[ii]);
    roc.push_back({t, (ni - static_cast<double>(ii)) / ni, static_cast<double>(gi) / ng});
    while (gi < g.size() && g[gi] == t) ++gi;
    while (ii < im.size() && im[ii] == t) ++ii;
  }
  roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return roc;
}

/// EER with the rule "accept iff score >= t": sweep thresholds upward and
/// stop at the first one where FRR >= FAR, returning (FAR + FRR) / 2.
inline EvalResult compute_eer(std::span<const double> genuine, std::span<const double> impostor) {
  const auto roc = roc_curve(genuine, impostor);
  EvalResult r;
  r.n_genuine = genuine.size();
  r.n_impostor = impostor.size();
  for (const auto& p : roc) {
    if (p.frr >= p.far) {
      r.eer = 0.5 * (p.far + p.frr);
      r.eer_threshold = p.threshold;
      return r;
    }
  }
  return r;  // unreachable: the +inf point always satisfies FRR >= FAR
}

/// Percent change of a fused EER relative to the best individual EER.
inline double relative_change(double fused_eer, double best_individual_eer) {
  if (best_individual_eer == 0.0) throw DomainError("relative change against a zero baseline");
  return 100.0 * (fused_eer - best_individual_eer) / best_individual_eer;
}

enum class Grouping { intra_by_distance, by_distance_gap, pooled };

inline Grouping parse_grouping(std::string_view s) {
  s = text::trim(s);
  if (s == "intra_by_distance" || s == "intra") return Grouping::intra_by_distance;
  if (s == "by_distance_gap" || s == "gap") return Grouping::by_distance_gap;
  if (s == "pooled" || s == "all") return Grouping::pooled;
  throw ParseError("unknown grouping '" + std::string(s) + "'");
}

/// One EvalResult per group, ordered by distance index / gap. When
/// max_distance is 0 it is inferred from the pairs.
inline std::vector<EvalResult> group_eval(const ScoreSet& scores, Grouping grouping,
                                          int max_distance = 0, unsigned threads = 1) {
  if (max_distance == 0)
    for (const auto& p : scores.pairs) max_distance = std::max({max_distance, p.di, p.dj});

  std::vector<int> groups;
  std::string prefix;
  switch (grouping) {
    case Grouping::intra_by_distance:
      for (int d = 1; d <= max_distance; ++d) groups.push_back(d);
      prefix = "intra D";
      break;
    case Grouping::by_distance_gap:
      for (int g = 1; g < max_distance; ++g) groups.push_back(g);
      prefix = "gap ";
      break;
    case Grouping::pooled:
      groups.push_back(0);
      break;
  }

  std::map<int, std::size_t> slot;
  for (std::size_t i = 0; i < groups.size(); ++i) slot[groups[i]] = i;
  std::vector<std::vector<double>> gen(groups.size()), imp(groups.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& p = scores.pairs[i];
    int key = 0;
    if (grouping == Grouping::intra_by_distance) {
      if (p.di != p.dj) continue;
      key = p.di;
    } else if (grouping == Grouping::by_distance_gap) {
      key = std::abs(p.di - p.dj);
      if (key == 0) continue;
    }
    auto it = slot.find(key);
    if (it == slot.end()) continue;
    (p.label == Label::genuine ? gen : imp)[it->second].push_back(scores.scores[i]);
  }

  std::vector<EvalResult> results(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string label =
        grouping == Grouping::pooled ? std::string("all") : prefix + std::to_string(groups[i]);
    if (gen[i].empty() || imp[i].empty())
      throw UsageError("group '" + label + "' has no " +
                       (gen[i].empty() ? "genuine" : "impostor") + " scores");
    results[i].grouping = label;
    results[i].group_value = groups[i];
  }
  parallel_for(groups.size(), threads, [&](std::size_t i) {
    auto r = compute_eer(gen[i], imp[i]);
    r.grouping = results[i].grouping;
    r.group_value = results[i].group_value;
    results[i] = std::move(r);
  });
  return results;
}

inline void write_eval_report(std::ostream& out, const std::vector<EvalResult>& results) {
  out << "grouping,n_genuine,n_impostor,eer_percent,threshold\n";
  for (const auto& r : results)
    out << r.grouping << ',' << r.n_genuine << ',' << r.n_impostor << ','
        << text::format_double(r.eer_percent()) << ',' << text::format_double(r.eer_threshold)
        << '\n';
}

inline int group_value_of(std::string_view label) {
  int v = 0;
  if (label.rfind("intra D", 0) == 0 && text::parse_int(label.substr(7), v)) return v;
  if (label.rfind("gap ", 0) == 0 && text::parse_int(label.substr(4), v)) return v;
  return 0;
}

inline std::vector<EvalResult> read_eval_report(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      text::trim(line) != "grouping,n_genuine,n_impostor,eer_percent,threshold")
    throw ParseError("line 1: expected evaluation report header");
  std::vector<EvalResult> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto f = text::split(body, ',');
    const std::string where = "line " + std::to_string(lineno);
    EvalResult r;
    double pct = 0.0;
    if (f.size() != 5 || !text::parse_int(f[1], r.n_genuine) ||
        !text::parse_int(f[2], r.n_impostor) || !text::parse_double(f[3], pct) ||
        !text::parse_double(f[4], r.eer_threshold))
      throw ParseError(where + ": malformed evaluation row");
    r.grouping = std::string(text::trim(f[0]));
    r.group_value = group_value_of(r.grouping);
    r.eer = pct / 100.0;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace verikit
