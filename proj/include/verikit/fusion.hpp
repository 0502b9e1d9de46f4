#pragma once

// Linear logistic-regression score fusion: f = a0 + sum_i a_i * s_i.
//
// Training minimises the prior-weighted logistic loss
//
//   C(a) = pi/|G| * sum_G log(1 + exp(-(f + logit pi)))
//        + (1-pi)/|I| * sum_I log(1 + exp(  f + logit pi ))
//        + reg/2 * |a_1..a_N|^2
//
// with a damped Newton method started at zero. Under this objective the fused
// score behaves as a log-likelihood ratio, independent of class balance.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "verikit/errors.hpp"
#include "verikit/metrics.hpp"
#include "verikit/protocol.hpp"
#include "verikit/text.hpp"

namespace verikit {

struct FusionModel {
  double bias = 0.0;
  std::vector<double> weights;
  std::vector<std::string> system_names;
  std::string trained_on;

  std::size_t systems() const { return weights.size(); }

  double apply(std::span<const double> scores) const {
    double f = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) f += weights[i] * scores[i];
    return f;
  }
};

struct FusionOptions {
  double prior = 0.5;
  double regularization = 1e-6;
  double gradient_tolerance = 1e-8;
  int max_iterations = 10000;
};

struct FusionFit {
  FusionModel model;
  int iterations = 0;
  double loss = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  // Set when training without regularisation ended on a boundary that
  // separates the classes perfectly; the weights then grow without bound.
  bool separable = false;
};

/// Labelled trials: one row of N system scores per trial.
struct FusionData {
  Eigen::MatrixXd scores;  // trials x systems
  std::vector<Label> labels;
  std::vector<std::string> system_names;
};

namespace detail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline void require_aligned(const std::vector<ScoreSet>& sets) {
  if (sets.empty()) throw UsageError("no score sets given");
  for (std::size_t k = 1; k < sets.size(); ++k) {
    if (sets[k].size() != sets[0].size() || sets[k].pairs.size() != sets[0].pairs.size())
      throw AlignmentError("score set '" + sets[k].system + "' has " +
                           std::to_string(sets[k].size()) + " trials, expected " +
                           std::to_string(sets[0].size()));
    for (std::size_t j = 0; j < sets[0].pairs.size(); ++j)
      if (!(sets[k].pairs[j] == sets[0].pairs[j]))
        throw AlignmentError("score set '" + sets[k].system + "' differs from '" +
                             sets[0].system + "' at trial " + std::to_string(j));
  }
}

}  // namespace detail

inline FusionData make_fusion_data(const std::vector<ScoreSet>& sets,
                                   std::span<const std::size_t> rows = {}) {
  detail::require_aligned(sets);
  const std::size_t n = rows.empty() ? sets[0].size() : rows.size();
  FusionData d;
  d.scores.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sets.size()));
  d.labels.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = rows.empty() ? j : rows[j];
    d.labels[j] = sets[0].pairs[src].label;
    for (std::size_t k = 0; k < sets.size(); ++k)
      d.scores(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = sets[k].scores[src];
  }
  for (const auto& s : sets) d.system_names.push_back(s.system);
  return d;
}

/// Value, gradient and Hessian of the training objective at theta = (a0, a1..aN).
struct FusionObjective {
  const FusionData& data;
  double prior;
  double regularization;

  double offset() const { return std::log(prior / (1.0 - prior)); }

  std::pair<double, double> class_weights() const {
    std::size_t ng = 0;
    for (Label l : data.labels) ng += l == Label::genuine;
    const std::size_t ni = data.labels.size() - ng;
    return {prior / static_cast<double>(ng), (1.0 - prior) / static_cast<double>(ni)};
  }

  double value(const Eigen::VectorXd& theta) const {
    const auto [cg, ci] = class_weights();
    const Eigen::VectorXd f =
        (data.scores * theta.tail(theta.size() - 1)).array() + theta(0) + offset();
    double loss = 0.0;
    for (Eigen::Index j = 0; j < f.size(); ++j)
      loss += data.labels[static_cast<std::size_t>(j)] == Label::genuine
                  ? cg * detail::softplus(-f(j))
                  : ci * detail::softplus(f(j));
    return loss + 0.5 * regularization * theta.tail(theta.size() - 1).squaredNorm();
  }

  void derivatives(const Eigen::VectorXd& theta, Eigen::VectorXd& grad,
                   Eigen::MatrixXd& hess) const {
    const auto [cg, ci] = class_weights();
    const Eigen::Index p = theta.size();
    grad.setZero(p);
    hess.setZero(p, p);
    Eigen::VectorXd x(p);
    for (Eigen::Index j = 0; j < data.scores.rows(); ++j) {
      x(0) = 1.0;
      x.tail(p - 1) = data.scores.row(j).transpose();
      const double f = theta.dot(x) + offset();
      const double s = detail::sigmoid(f);
      const bool genuine = data.labels[static_cast<std::size_t>(j)] == Label::genuine;
      const double c = genuine ? cg : ci;
      grad += c * (genuine ? s - 1.0 : s) * x;
      hess.selfadjointView<Eigen::Lower>().rankUpdate(x, c * s * (1.0 - s));
    }
    hess = hess.selfadjointView<Eigen::Lower>();
    grad.tail(p - 1) += regularization * theta.tail(p - 1);
    hess.diagonal().tail(p - 1).array() += regularization;
  }
};

inline FusionFit train_fusion(const FusionData& data, const FusionOptions& opt = {}) {
  const auto n_systems = static_cast<Eigen::Index>(data.scores.cols());
  if (n_systems < 1) throw UsageError("fusion needs at least one system");
  if (!(opt.prior > 0.0 && opt.prior < 1.0)) throw DomainError("prior must lie in (0, 1)");
  if (opt.regularization < 0.0) throw DomainError("regularization must be >= 0");
  std::size_t ng = 0;
  for (Label l : data.labels) ng += l == Label::genuine;
  if (ng == 0 || ng == data.labels.size())
    throw UsageError("fusion training needs both genuine and impostor trials");
  if (!data.scores.allFinite()) throw DomainError("non-finite score in fusion training data");

  const FusionObjective objective{data, opt.prior, opt.regularization};
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n_systems + 1);
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double loss = objective.value(theta);

  FusionFit fit;
  bool at_precision_limit = false;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    objective.derivatives(theta, grad, hess);
    fit.gradient_norm = grad.norm();
    if (fit.gradient_norm <= opt.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    // Damped Newton direction; the damping only kicks in when the Hessian
    // degenerates (separable or collinear inputs).
    Eigen::VectorXd step;
    double damping = 0.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd h = hess;
      h.diagonal().array() += damping;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
          (ldlt.vectorD().array() > 1e-14 * std::max(1.0, hess.diagonal().maxCoeff())).all()) {
        step = ldlt.solve(-grad);
        if (step.allFinite() && step.dot(grad) < 0.0) break;
      }
      damping = damping == 0.0 ? 1e-10 * std::max(1.0, hess.diagonal().maxCoeff()) : damping * 10.0;
      step.resize(0);
    }
    if (step.size() == 0) step = -grad;

    // The predicted decrease is half the Newton decrement; once it drops
    // below the rounding resolution of the loss no step can improve it.
    const double slope = step.dot(grad);
    if (-0.5 * slope <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(loss)) {
      at_precision_limit = true;
      break;
    }

    // Armijo backtracking.
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd candidate = theta + t * step;
      const double cand_loss = objective.value(candidate);
      if (cand_loss <= loss + 1e-4 * t * slope) {
        theta = candidate;
        loss = cand_loss;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;  // no representable decrease left
  }
  objective.derivatives(theta, grad, hess);
  fit.gradient_norm = grad.norm();
  fit.converged = at_precision_limit || fit.gradient_norm <= opt.gradient_tolerance;
  fit.iterations = it;
  fit.loss = loss;

  fit.model.bias = theta(0);
  fit.model.weights.assign(theta.data() + 1, theta.data() + theta.size());
  fit.model.system_names = data.system_names;
  if (fit.model.system_names.size() != fit.model.weights.size()) {
    fit.model.system_names.clear();
    for (Eigen::Index k = 0; k < n_systems; ++k)
      fit.model.system_names.push_back("s" + std::to_string(k + 1));
  }

  if (opt.regularization == 0.0) {
    double min_gen = std::numeric_limits<double>::infinity();
    double max_imp = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < data.scores.rows(); ++j) {
      const double f = theta(0) + data.scores.row(j).dot(theta.tail(n_systems));
      if (data.labels[static_cast<std::size_t>(j)] == Label::genuine) min_gen = std::min(min_gen, f);
      else max_imp = std::max(max_imp, f);
    }
    fit.separable = min_gen > max_imp;
  }
  return fit;
}

inline FusionFit train_fusion(const std::vector<ScoreSet>& sets, const FusionOptions& opt = {}) {
  return train_fusion(make_fusion_data(sets), opt);
}

inline std::string fused_system_name(const FusionModel& m) {
  std::string s = "fusion(";
  for (std::size_t i = 0; i < m.system_names.size(); ++i) s += (i ? "+" : "") + m.system_names[i];
  return s + ")";
}

inline ScoreSet apply_fusion(const FusionModel& model, const std::vector<ScoreSet>& sets) {
  if (sets.size() != model.systems())
    throw UsageError("model expects " + std::to_string(model.systems()) + " systems, got " +
                     std::to_string(sets.size()));
  detail::require_aligned(sets);
  ScoreSet out{fused_system_name(model), sets[0].metric, sets[0].pairs,
               std::vector<double>(sets[0].size())};
  std::vector<double> row(sets.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (std::size_t k = 0; k < sets.size(); ++k) row[k] = sets[k].scores[j];
    out.scores[j] = model.apply(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subject-disjoint cross-validation

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::string> test_subjects;
};

/// Deterministic subject -> fold map: subjects sorted by (FNV-1a hash, id)
/// and dealt round-robin, so k equal to the subject count is leave-one-out.
inline std::map<std::string, int> subject_folds(std::vector<std::string> subjects, int k) {
  if (k < 2) throw UsageError("need at least 2 folds, got " + std::to_string(k));
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < static_cast<std::size_t>(k))
    throw UsageError("cannot split " + std::to_string(subjects.size()) + " subjects into " +
                     std::to_string(k) + " folds");
  std::sort(subjects.begin(), subjects.end(), [](const std::string& a, const std::string& b) {
    const auto ha = text::fnv1a64(a), hb = text::fnv1a64(b);
    return ha != hb ? ha < hb : a < b;
  });
  std::map<std::string, int> fold;
  for (std::size_t i = 0; i < subjects.size(); ++i)
    fold[subjects[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

inline std::vector<std::string> pair_subjects(const std::vector<ComparisonPair>& pairs) {
  std::vector<std::string> subjects;
  subjects.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    subjects.push_back(p.probe.subject_id);
    subjects.push_back(p.gallery.subject_id);
  }
  return subjects;
}

/// A pair is tested in fold f when either subject belongs to f; it trains
/// fold f only when neither subject does.
inline std::vector<FoldSplit> subject_disjoint_folds(const std::vector<ComparisonPair>& pairs,
                                                     const std::map<std::string, int>& fold, int k) {
  std::vector<FoldSplit> splits(static_cast<std::size_t>(k));
  for (const auto& [s, f] : fold) splits[static_cast<std::size_t>(f)].test_subjects.push_back(s);
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    const int fp = fold.at(pairs[j].probe.subject_id);
    const int fg = fold.at(pairs[j].gallery.subject_id);
    for (int f = 0; f < k; ++f) {
      auto& split = splits[static_cast<std::size_t>(f)];
      (fp == f || fg == f ? split.test : split.train).push_back(j);
    }
  }
  return splits;
}

inline std::vector<FoldSplit> subject_disjoint_folds(const std::vector<ComparisonPair>& pairs, int k) {
  return subject_disjoint_folds(pairs, subject_folds(pair_subjects(pairs), k), k);
}

struct CrossValidatedFusion {
  ScoreSet fused;  // held-out scores, aligned with the input pairs
  std::vector<FusionFit> fits;
};

/// Trains one model per fold and scores every pair with the model of the
/// fold holding its probe subject (a fold in which the pair is held out).
/// With train_on_all a single model is trained and applied to all pairs.
inline CrossValidatedFusion cross_validated_fusion(const std::vector<ScoreSet>& sets, int folds,
                                                   const FusionOptions& opt = {},
                                                   bool train_on_all = false) {
  detail::require_aligned(sets);
  CrossValidatedFusion out;
  if (train_on_all) {
    auto fit = train_fusion(sets, opt);
    fit.model.trained_on = "all trials";
    out.fused = apply_fusion(fit.model, sets);
    out.fits.push_back(std::move(fit));
    return out;
  }
  const auto& pairs = sets[0].pairs;
  const auto fold = subject_folds(pair_subjects(pairs), folds);
  const auto splits = subject_disjoint_folds(pairs, fold, folds);

  for (std::size_t f = 0; f < splits.size(); ++f) {
    auto fit = train_fusion(make_fusion_data(sets, splits[f].train), opt);
    fit.model.trained_on = "subject-disjoint fold " + std::to_string(f + 1) + "/" +
                           std::to_string(folds) + " (held-out fold excluded)";
    out.fits.push_back(std::move(fit));
  }
  out.fused.system = fused_system_name(out.fits.front().model);
  out.fused.metric = sets[0].metric;
  out.fused.pairs = pairs;
  out.fused.scores.resize(pairs.size());
  std::vector<double> row(sets.size());
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    for (std::size_t k = 0; k < sets.size(); ++k) row[k] = sets[k].scores[j];
    out.fused.scores[j] =
        out.fits[static_cast<std::size_t>(fold.at(pairs[j].probe.subject_id))].model.apply(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model text format: "bias = v" then "weight.<system> = v" lines.

inline void write_fusion_model(std::ostream& out, const FusionModel& m) {
  if (!m.trained_on.empty()) out << "# trained_on: " << m.trained_on << '\n';
  out << "bias = " << text::format_double(m.bias) << '\n';
  for (std::size_t i = 0; i < m.weights.size(); ++i)
    out << "weight." << m.system_names[i] << " = " << text::format_double(m.weights[i]) << '\n';
}

inline FusionModel read_fusion_model(std::istream& in) {
  FusionModel m;
  bool have_bias = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    if (body.front() == '#') {
      constexpr std::string_view tag = "# trained_on: ";
      if (body.substr(0, tag.size()) == tag) m.trained_on = std::string(body.substr(tag.size()));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(where + ": expected 'key = value'");
    const auto key = text::trim(body.substr(0, eq));
    double v = 0.0;
    if (!text::parse_double(body.substr(eq + 1), v) || !std::isfinite(v))
      throw ParseError(where + ": bad number");
    if (key == "bias") {
      m.bias = v;
      have_bias = true;
    } else if (key.substr(0, 7) == "weight." && key.size() > 7) {
      m.system_names.emplace_back(key.substr(7));
      m.weights.push_back(v);
    } else {
      throw ParseError(where + ": unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_bias) throw ParseError("fusion model lacks a bias line");
  if (m.weights.empty()) throw ParseError("fusion model has no weights");
  return m;
}

}  // namespace verikit
