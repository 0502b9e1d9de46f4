#pragma once

// Mask-based local surrogate explanations of a black-box verification
// scorer. Grid cells are switched on/off, the scorer rates each masked
// probe against its reference, and a weighted ridge regression of scores on
// masks yields per-cell relevance.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "verikit/core_model.hpp"
#include "verikit/errors.hpp"
#include "verikit/text.hpp"

namespace verikit::lime {

using Mask = std::vector<std::uint8_t>;

/// Regular grid of superpixels; the last row/column absorbs remainders.
struct SegmentationGrid {
  std::size_t image_w = 113;
  std::size_t image_h = 113;
  std::size_t cells_x = 8;
  std::size_t cells_y = 8;

  void validate() const {
    if (cells_x == 0 || cells_y == 0) throw DomainError("grid needs at least one cell per axis");
    if (cells_x > image_w || cells_y > image_h)
      throw DomainError("grid has more cells than pixels along an axis");
  }

  std::size_t cells() const { return cells_x * cells_y; }

  std::size_t cell_of(std::size_t x, std::size_t y) const {
    const std::size_t cx = std::min(x / (image_w / cells_x), cells_x - 1);
    const std::size_t cy = std::min(y / (image_h / cells_y), cells_y - 1);
    return cy * cells_x + cx;
  }
};

/// n masks over `cells` cells. Sample 0 is the unperturbed (all-ones) mask;
/// the remaining n - 1 are i.i.d. Bernoulli(keep_prob) per cell.
inline std::vector<Mask> sample_masks(std::size_t n, std::size_t cells, double keep_prob,
                                      std::uint64_t seed) {
  if (n < 1 || cells < 1) throw UsageError("need at least one sample and one cell");
  if (!(keep_prob > 0.0 && keep_prob < 1.0)) throw DomainError("keep_prob must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<Mask> masks;
  masks.reserve(n);
  masks.emplace_back(cells, std::uint8_t{1});
  for (std::size_t i = 1; i < n; ++i) {
    Mask m(cells);
    for (auto& bit : m) {
      // 53-bit uniform in [0, 1); spelled out so the stream is portable.
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      bit = u < keep_prob ? 1 : 0;
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

/// Every mask over `cells` cells, in binary counting order.
inline std::vector<Mask> enumerate_masks(std::size_t cells) {
  if (cells == 0 || cells > 20) throw UsageError("mask enumeration supports 1..20 cells");
  std::vector<Mask> masks;
  masks.reserve(std::size_t{1} << cells);
  for (std::size_t code = 0; code < (std::size_t{1} << cells); ++code) {
    Mask m(cells);
    for (std::size_t c = 0; c < cells; ++c) m[c] = (code >> c) & 1U;
    masks.push_back(std::move(m));
  }
  return masks;
}

struct SurrogateFit {
  double intercept = 0.0;
  std::vector<double> coefficients;
};

/// Locality weight exp(-d^2 / width^2), d = fraction of cells switched off.
/// An infinite width gives uniform weights.
inline double kernel_weight(const Mask& m, double kernel_width) {
  if (std::isinf(kernel_width)) return 1.0;
  std::size_t on = 0;
  for (auto b : m) on += b;
  const double d = 1.0 - static_cast<double>(on) / static_cast<double>(m.size());
  return std::exp(-d * d / (kernel_width * kernel_width));
}

/// Weighted ridge regression of scores on masks. The intercept is not
/// penalised. Solved by column-pivoted QR on the (ridge-augmented) weighted
/// design, which also detects rank deficiency.
inline SurrogateFit fit_surrogate(const std::vector<Mask>& masks, std::span<const double> scores,
                                  double kernel_width = 0.25, double ridge = 1e-3) {
  if (masks.size() != scores.size())
    throw UsageError("got " + std::to_string(masks.size()) + " masks but " +
                     std::to_string(scores.size()) + " scores");
  if (masks.empty()) throw UsageError("no samples to fit");
  if (!(kernel_width > 0.0)) throw DomainError("kernel width must be positive");
  if (ridge < 0.0) throw DomainError("ridge must be >= 0");
  const std::size_t cells = masks.front().size();
  for (const auto& m : masks)
    if (m.size() != cells) throw UsageError("masks have different lengths");

  const auto n = static_cast<Eigen::Index>(masks.size());
  const auto p = static_cast<Eigen::Index>(cells) + 1;
  const Eigen::Index extra = ridge > 0.0 ? p - 1 : 0;
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n + extra, p);
  Eigen::VectorXd target = Eigen::VectorXd::Zero(n + extra);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = masks[static_cast<std::size_t>(i)];
    const double w = std::sqrt(kernel_weight(m, kernel_width));
    design(i, 0) = w;
    for (std::size_t c = 0; c < cells; ++c)
      design(i, static_cast<Eigen::Index>(c) + 1) = w * m[c];
    target(i) = w * scores[static_cast<std::size_t>(i)];
  }
  for (Eigen::Index c = 0; c < extra; ++c) design(n + c, c + 1) = std::sqrt(ridge);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p)
    throw SingularityError("surrogate design has rank " + std::to_string(qr.rank()) + " < " +
                           std::to_string(p) + "; add samples or use ridge > 0");
  const Eigen::VectorXd beta = qr.solve(target);

  SurrogateFit fit;
  fit.intercept = beta(0);
  fit.coefficients.assign(beta.data() + 1, beta.data() + beta.size());
  return fit;
}

/// Broadcasts cell coefficients to pixels, clamping negatives to zero.
inline Heatmap coefficients_to_heatmap(std::span<const double> coeffs, const SegmentationGrid& grid) {
  grid.validate();
  if (coeffs.size() != grid.cells())
    throw UsageError("got " + std::to_string(coeffs.size()) + " coefficients for " +
                     std::to_string(grid.cells()) + " cells");
  Heatmap h(grid.image_w, grid.image_h);
  for (std::size_t y = 0; y < grid.image_h; ++y)
    for (std::size_t x = 0; x < grid.image_w; ++x)
      h.at(x, y) = std::max(coeffs[grid.cell_of(x, y)], 0.0);
  return h;
}

// ---------------------------------------------------------------------------
// Scorers

/// Black-box scorer: one similarity of the masked probe vs. the reference
/// per mask row, in request order.
class MaskScorer {
 public:
  virtual ~MaskScorer() = default;
  virtual std::vector<double> score(const std::string& probe_id, const std::string& reference_id,
                                    std::span<const Mask> masks) = 0;
};

/// score = bias + sum_c weight_c * mask_c.
class PlantedLinearScorer : public MaskScorer {
 public:
  PlantedLinearScorer(std::vector<double> weights, double bias = 0.0)
      : weights_(std::move(weights)), bias_(bias) {}

  std::vector<double> score(const std::string&, const std::string&,
                            std::span<const Mask> masks) override {
    std::vector<double> out;
    out.reserve(masks.size());
    for (const auto& m : masks) {
      if (m.size() != weights_.size()) throw UsageError("mask length does not match planted weights");
      double s = bias_;
      for (std::size_t c = 0; c < m.size(); ++c) s += weights_[c] * m[c];
      out.push_back(s);
    }
    return out;
  }

 private:
  std::vector<double> weights_;
  double bias_;
};

// Wire format: "M <rows> <cells>" then one comma-separated 0/1 row per mask.
inline void write_masks(std::ostream& out, std::span<const Mask> masks) {
  const std::size_t cells = masks.empty() ? 0 : masks.front().size();
  out << "M " << masks.size() << ' ' << cells << '\n';
  for (const auto& m : masks) {
    for (std::size_t c = 0; c < m.size(); ++c) out << (c ? "," : "") << int(m[c]);
    out << '\n';
  }
}

inline std::vector<Mask> read_masks(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("masks: missing 'M <rows> <cells>' header");
  const auto head = text::split_ws(line);
  std::size_t rows = 0, cells = 0;
  if (head.size() != 3 || head[0] != "M" || !text::parse_int(head[1], rows) ||
      !text::parse_int(head[2], cells))
    throw ParseError("masks: header must be 'M <rows> <cells>'");
  std::vector<Mask> masks;
  masks.reserve(rows);
  while (masks.size() < rows && std::getline(in, line)) {
    const auto f = text::split(text::trim(line), ',');
    if (f.size() != cells)
      throw ParseError("masks row " + std::to_string(masks.size()) + ": expected " +
                       std::to_string(cells) + " entries");
    Mask m(cells);
    for (std::size_t c = 0; c < cells; ++c) {
      const auto t = text::trim(f[c]);
      if (t != "0" && t != "1")
        throw ParseError("masks row " + std::to_string(masks.size()) + ": entries must be 0 or 1");
      m[c] = t == "1";
    }
    masks.push_back(std::move(m));
  }
  if (masks.size() != rows) throw ParseError("masks: fewer rows than declared");
  return masks;
}

/// One decimal per line.
inline std::vector<double> read_score_lines(std::istream& in) {
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = text::trim(line);
    if (t.empty()) continue;
    double v = 0.0;
    if (!text::parse_double(t, v))
      throw ParseError("scores line " + std::to_string(lineno) + ": bad number '" +
                       std::string(t) + "'");
    out.push_back(v);
  }
  return out;
}

inline void write_score_lines(std::ostream& out, std::span<const double> scores) {
  for (double s : scores) out << text::format_double(s) << '\n';
}

/// Runs `<command> <masks.csv> <scores.csv>` through the shell for each
/// batch. A non-zero exit status is a scorer error.
class ExternalCommandScorer : public MaskScorer {
 public:
  explicit ExternalCommandScorer(std::string command, std::filesystem::path work_dir = {})
      : command_(std::move(command)), work_dir_(std::move(work_dir)) {
    if (work_dir_.empty()) {
      static std::atomic<unsigned> counter{0};
      work_dir_ = std::filesystem::temp_directory_path() /
                  ("verikit-scorer-" + std::to_string(::getpid()) + "-" +
                   std::to_string(counter++));
      owns_dir_ = true;
    }
    std::filesystem::create_directories(work_dir_);
  }

  ~ExternalCommandScorer() override {
    if (owns_dir_) {
      std::error_code ec;
      std::filesystem::remove_all(work_dir_, ec);
    }
  }

  ExternalCommandScorer(const ExternalCommandScorer&) = delete;
  ExternalCommandScorer& operator=(const ExternalCommandScorer&) = delete;

  std::vector<double> score(const std::string&, const std::string&,
                            std::span<const Mask> masks) override {
    const auto masks_path = work_dir_ / "masks.csv";
    const auto scores_path = work_dir_ / "scores.csv";
    {
      auto out = text::open_output(masks_path.string());
      write_masks(out, masks);
    }
    std::filesystem::remove(scores_path);
    const std::string cmd = command_ + " " + quote(masks_path.string()) + " " +
                            quote(scores_path.string());
    const int status = std::system(cmd.c_str());
    if (status == -1) throw ScorerError("could not launch '" + command_ + "'");
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw ScorerError("'" + command_ + "' exited with status " +
                        std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    auto in = text::open_input(scores_path.string());
    return read_score_lines(in);
  }

 private:
  static std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
  }

  std::string command_;
  std::filesystem::path work_dir_;
  bool owns_dir_ = false;
};

// ---------------------------------------------------------------------------

struct ExplainConfig {
  SegmentationGrid grid;
  std::size_t samples = 1000;
  double keep_prob = 0.5;
  double kernel_width = 0.25;
  double ridge = 1e-3;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;  // 0: a single batch
};

struct Explanation {
  Heatmap heatmap;
  SurrogateFit surrogate;
};

/// sample_masks -> scorer (batched) -> fit_surrogate -> heatmap.
inline Explanation explain(const std::string& probe_id, const std::string& reference_id,
                           MaskScorer& scorer, const ExplainConfig& cfg) {
  cfg.grid.validate();
  const auto masks = sample_masks(cfg.samples, cfg.grid.cells(), cfg.keep_prob, cfg.seed);
  const std::size_t batch = cfg.batch_size == 0 ? masks.size() : cfg.batch_size;

  std::vector<double> scores;
  scores.reserve(masks.size());
  for (std::size_t start = 0, b = 0; start < masks.size(); start += batch, ++b) {
    const std::size_t len = std::min(batch, masks.size() - start);
    const std::span<const Mask> rows(masks.data() + start, len);
    std::vector<double> out;
    try {
      out = scorer.score(probe_id, reference_id, rows);
    } catch (const std::exception& e) {
      throw ScorerError("batch " + std::to_string(b) + ": " + e.what());
    }
    if (out.size() != len)
      throw ScorerError("batch " + std::to_string(b) + ": scorer returned " +
                        std::to_string(out.size()) + " scores for " + std::to_string(len) + " masks");
    for (std::size_t r = 0; r < len; ++r)
      if (!std::isfinite(out[r]))
        throw ScorerError("batch " + std::to_string(b) + " row " + std::to_string(r) +
                          ": non-finite score");
    scores.insert(scores.end(), out.begin(), out.end());
  }

  Explanation ex;
  ex.surrogate = fit_surrogate(masks, scores, cfg.kernel_width, cfg.ridge);
  ex.heatmap = coefficients_to_heatmap(ex.surrogate.coefficients, cfg.grid);
  return ex;
}

inline void write_surrogate(std::ostream& out, const SurrogateFit& fit) {
  out << "term,value\nintercept," << text::format_double(fit.intercept) << '\n';
  for (std::size_t c = 0; c < fit.coefficients.size(); ++c)
    out << 'c' << c << ',' << text::format_double(fit.coefficients[c]) << '\n';
}

}  // namespace verikit::lime
