#pragma once

// Template comparison metrics. Every score is oriented so that higher means
// "more likely the same identity"; chi-square distances are negated.

#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "verikit/core_model.hpp"
#include "verikit/parallel.hpp"
#include "verikit/protocol.hpp"

namespace verikit {

enum class Metric { cosine, chi2 };

inline const char* to_string(Metric m) { return m == Metric::cosine ? "cosine" : "chi2"; }

inline Metric parse_metric(std::string_view s) {
  s = text::trim(s);
  if (s == "cosine") return Metric::cosine;
  if (s == "chi2") return Metric::chi2;
  throw ParseError("metric must be cosine or chi2, got '" + std::string(s) + "'");
}

namespace detail {
inline void require_same_dim(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DimensionError("vector lengths differ: " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
}
}  // namespace detail

inline double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  detail::require_same_dim(x, y);
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (!(xx > 0.0) || !(yy > 0.0)) throw DomainError("cosine similarity of a zero-norm vector");
  const double c = dot / (std::sqrt(xx) * std::sqrt(yy));
  return std::clamp(c, -1.0, 1.0);
}

/// sum_i (x_i - y_i)^2 / (x_i + y_i), with 0/0 terms taken as 0.
inline double chi2_distance(std::span<const double> x, std::span<const double> y) {
  detail::require_same_dim(x, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0 || y[i] < 0.0)
      throw DomainError("chi-square distance needs non-negative components (index " +
                        std::to_string(i) + ")");
    const double s = x[i] + y[i];
    if (s > 0.0) {
      const double d = x[i] - y[i];
      acc += d * d / s;
    }
  }
  return acc;
}

struct ScoringOptions {
  Metric metric = Metric::chi2;
  // L2-normalise both templates before comparing (chi2 only; cosine is
  // already scale invariant).
  bool l2_normalize = false;
  unsigned threads = 1;
};

/// Scores aligned one-to-one with a pair list, for one system and metric.
struct ScoreSet {
  std::string system;
  Metric metric = Metric::chi2;
  std::vector<ComparisonPair> pairs;
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }
};

inline double similarity(std::span<const double> x, std::span<const double> y,
                         const ScoringOptions& opt) {
  if (opt.metric == Metric::cosine) return cosine_similarity(x, y);
  if (!opt.l2_normalize) return -chi2_distance(x, y);
  auto unit = [](std::span<const double> v) {
    double n = 0.0;
    for (double a : v) n += a * a;
    n = std::sqrt(n);
    if (!(n > 0.0)) throw DomainError("cannot L2-normalise a zero vector");
    std::vector<double> out(v.begin(), v.end());
    for (double& a : out) a /= n;
    return out;
  };
  return -chi2_distance(unit(x), unit(y));
}

inline ScoreSet score_pairs(const std::vector<ComparisonPair>& pairs, const TemplateSet& templates,
                            const ScoringOptions& opt, std::string system = {}) {
  // Resolve every key up front so a missing template is reported before any work.
  std::vector<std::pair<const EmbeddingTemplate*, const EmbeddingTemplate*>> resolved;
  resolved.reserve(pairs.size());
  for (const auto& p : pairs) resolved.emplace_back(&templates.at(p.probe), &templates.at(p.gallery));

  ScoreSet out{std::move(system), opt.metric, pairs, std::vector<double>(pairs.size())};
  parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
    out.scores[i] = similarity(resolved[i].first->vector, resolved[i].second->vector, opt);
  });
  return out;
}

inline ScoreSet score_pairs(const ProtocolSet& protocol, const TemplateSet& templates,
                            const ScoringOptions& opt, std::string system = {}) {
  return score_pairs(protocol.pairs, templates, opt, std::move(system));
}

/// Concatenates score sets of one system (e.g. per-combination sets).
inline ScoreSet concat(const std::vector<ScoreSet>& parts) {
  if (parts.empty()) return {};
  ScoreSet out{parts.front().system, parts.front().metric, {}, {}};
  for (const auto& p : parts) {
    out.pairs.insert(out.pairs.end(), p.pairs.begin(), p.pairs.end());
    out.scores.insert(out.scores.end(), p.scores.begin(), p.scores.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// ScoreSet CSV: protocol columns + system,metric,score

inline void write_scores(std::ostream& out, const ScoreSet& s) {
  out << kProtocolHeader << ",system,metric,score\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    write_pair_fields(out, s.pairs[i]);
    out << ',' << s.system << ',' << to_string(s.metric) << ','
        << text::format_double(s.scores[i]) << '\n';
  }
}

inline ScoreSet read_scores(std::istream& in) {
  const std::string header = std::string(kProtocolHeader) + ",system,metric,score";
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != header)
    throw ParseError("line 1: expected score header");
  ScoreSet s;
  std::size_t lineno = 1;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto f = text::split(body, ',');
    const std::string where = "line " + std::to_string(lineno);
    if (f.size() != 12) throw ParseError(where + ": expected 12 columns");
    auto pair = parse_pair_fields(f, where);
    const auto system = std::string(text::trim(f[9]));
    const auto metric = parse_metric(f[10]);
    if (first) {
      s.system = system;
      s.metric = metric;
      first = false;
    } else if (system != s.system || metric != s.metric) {
      throw ParseError(where + ": a score file must hold a single system and metric");
    }
    double v = 0.0;
    if (!text::parse_double(f[11], v)) throw ParseError(where + ": bad score");
    if (!std::isfinite(v)) throw DomainError(where + ": non-finite score");
    s.pairs.push_back(std::move(pair));
    s.scores.push_back(v);
  }
  return s;
}

inline ScoreSet read_scores(const std::string& path) {
  auto in = text::open_input(path);
  return read_scores(in);
}

}  // namespace verikit
