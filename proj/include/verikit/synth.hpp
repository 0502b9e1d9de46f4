#pragma once

// Synthetic dataset generator: S subjects x 2 sessions x 2 eyes x D
// distances, with one non-negative template set per system and optional
// per-system relevance heatmaps. Class separation, per-system noise and the
// correlation of noise across systems are controllable.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "verikit/core_model.hpp"
#include "verikit/lime.hpp"

namespace verikit::synth {

struct SynthConfig {
  std::size_t subjects = 86;
  std::size_t distances = 5;
  std::size_t dim = 64;
  std::vector<std::string> systems{"A", "B", "C"};
  // Per-system sample-noise scale (same length as systems, or empty for 1.0).
  std::vector<double> noise{0.75, 0.62, 0.58};
  // Correlation of sample noise across systems, in [0, 1).
  double noise_correlation = 0.2;
  // Extra noise at the farthest distance relative to the closest.
  double far_noise = 0.5;
  // Per-distance systematic shift shared by all subjects.
  double distance_shift = 0.3;
  std::uint64_t seed = 1;
};

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<TemplateSet> templates;  // one per system
};

namespace detail {

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    // Box-Muller on the raw 64-bit stream so output is portable.
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

inline std::string subject_name(std::size_t i) {
  std::string s = std::to_string(i + 1);
  return "s" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

inline SynthDataset generate(const SynthConfig& cfg) {
  if (cfg.systems.empty()) throw UsageError("synthetic dataset needs at least one system");
  if (cfg.subjects < 1 || cfg.distances < 1 || cfg.dim < 1)
    throw UsageError("subjects, distances and dim must be positive");
  if (!cfg.noise.empty() && cfg.noise.size() != cfg.systems.size())
    throw UsageError("noise list must have one entry per system");
  if (!(cfg.noise_correlation >= 0.0 && cfg.noise_correlation < 1.0))
    throw DomainError("noise correlation must lie in [0, 1)");

  detail::Gaussian gauss(cfg.seed);
  const std::size_t K = cfg.systems.size();
  SynthDataset ds;
  ds.manifest.name = "synthetic";
  ds.manifest.embedding_dim = cfg.dim;
  ds.manifest.nonnegative = true;
  for (std::size_t d = 0; d < cfg.distances; ++d)
    ds.manifest.distances.push_back(std::to_string(cfg.distances + 3 - d) + "m");
  ds.manifest.systems = cfg.systems;
  ds.templates.resize(K);

  // identity[k][s] and shift[k][d] vectors
  std::vector<std::vector<std::vector<double>>> identity(K), shift(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t s = 0; s < cfg.subjects; ++s) {
      std::vector<double> v(cfg.dim);
      for (auto& x : v) x = gauss();
      identity[k].push_back(std::move(v));
    }
    for (std::size_t d = 0; d < cfg.distances; ++d) {
      std::vector<double> v(cfg.dim);
      for (auto& x : v) x = cfg.distance_shift * gauss();
      shift[k].push_back(std::move(v));
    }
  }

  const double rho = cfg.noise_correlation;
  const double own = std::sqrt(1.0 - rho * rho);
  std::vector<double> common(cfg.dim);
  for (std::size_t s = 0; s < cfg.subjects; ++s)
    for (int session : {1, 2})
      for (Eye eye : {Eye::L, Eye::R})
        for (std::size_t d = 0; d < cfg.distances; ++d) {
          const double far = cfg.distances > 1 ? static_cast<double>(cfg.distances - 1 - d) /
                                                     static_cast<double>(cfg.distances - 1)
                                               : 0.0;
          const double scale = 1.0 + cfg.far_noise * far;
          for (auto& c : common) c = gauss();
          const SampleKey key{subject_name(s), session, eye, static_cast<int>(d + 1)};
          for (std::size_t k = 0; k < K; ++k) {
            const double sigma = (cfg.noise.empty() ? 1.0 : cfg.noise[k]) * scale;
            EmbeddingTemplate t{key, std::vector<double>(cfg.dim)};
            for (std::size_t i = 0; i < cfg.dim; ++i) {
              const double e = rho * common[i] + own * gauss();
              t.vector[i] = detail::softplus(identity[k][s][i] + shift[k][d][i] + sigma * e);
            }
            ds.templates[k].add(std::move(t));
          }
        }
  return ds;
}

/// Heatmaps per system for every sample key of `keys`: each system attends
/// to its own Gaussian blob of grid cells, perturbed per image.
inline std::vector<std::vector<Heatmap>> generate_heatmaps(const std::vector<SampleKey>& keys,
                                                           std::size_t n_systems,
                                                           const lime::SegmentationGrid& grid,
                                                           double jitter, std::uint64_t seed) {
  grid.validate();
  detail::Gaussian gauss(seed);
  std::vector<std::vector<Heatmap>> out(n_systems);
  const double cx = static_cast<double>(grid.cells_x), cy = static_cast<double>(grid.cells_y);
  for (std::size_t k = 0; k < n_systems; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_systems);
    const double mx = 0.5 * cx + 0.25 * cx * std::cos(angle);
    const double my = 0.5 * cy + 0.25 * cy * std::sin(angle);
    for (const auto& key : keys) {
      const double ox = mx + jitter * gauss(), oy = my + jitter * gauss();
      std::vector<double> w(grid.cells());
      for (std::size_t j = 0; j < grid.cells_y; ++j)
        for (std::size_t i = 0; i < grid.cells_x; ++i) {
          const double dx = (static_cast<double>(i) + 0.5 - ox) / (0.25 * cx);
          const double dy = (static_cast<double>(j) + 0.5 - oy) / (0.25 * cy);
          w[j * grid.cells_x + i] = std::exp(-0.5 * (dx * dx + dy * dy)) + 0.05 * gauss();
        }
      auto h = lime::coefficients_to_heatmap(w, grid);
      h.key = key;
      if (!(h.sum() > 0.0)) h.values.assign(h.values.size(), 1.0);
      out[k].push_back(std::move(h));
    }
  }
  return out;
}

}  // namespace verikit::synth
