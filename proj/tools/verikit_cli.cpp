// verikit command-line front end. Every stage of the pipeline is a
// subcommand that reads and writes plain files, so stages can be chained or
// rerun independently. Results land in an output directory that appears
// only once complete, next to a run.txt describing how it was produced.

#include <CLI11.hpp>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "verikit/verikit.hpp"

namespace fs = std::filesystem;
using namespace verikit;

namespace {

// ---------------------------------------------------------------------------
// Output handling

/// Files are written into a hidden staging directory which is renamed onto
/// the requested path on commit. An uncommitted staging directory is removed.
class OutputDir {
 public:
  explicit OutputDir(const std::string& path) : final_(fs::absolute(path).lexically_normal()) {
    if (final_.filename().empty()) final_ = final_.parent_path();
    staging_ = final_.parent_path() /
               ("." + final_.filename().string() + ".staging-" + std::to_string(::getpid()));
    fs::create_directories(final_.parent_path());
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }

  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  std::string file(const std::string& name) const {
    const auto p = staging_ / name;
    fs::create_directories(p.parent_path());
    return p.string();
  }

  void commit() {
    if (fs::exists(final_)) {
      const auto old = final_.parent_path() /
                       ("." + final_.filename().string() + ".old-" + std::to_string(::getpid()));
      fs::remove_all(old);
      fs::rename(final_, old);
      fs::rename(staging_, final_);
      fs::remove_all(old);
    } else {
      fs::rename(staging_, final_);
    }
    committed_ = true;
  }

  const fs::path& path() const { return final_; }

 private:
  fs::path final_;
  fs::path staging_;
  bool committed_ = false;
};

/// Provenance written as run.txt: the command line, the seed and a digest
/// of every input file.
struct RunRecord {
  std::string command;
  std::string argv;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<std::string> inputs;

  template <typename T>
  void set(const std::string& key, const T& value) {
    std::ostringstream s;
    s << value;
    settings.emplace_back(key, s.str());
  }

  void write(const std::string& path) const {
    auto out = text::open_output(path);
    out << "command = " << command << '\n'
        << "argv = " << argv << '\n'
        << "seed = " << seed << '\n'
        << "threads = " << threads << '\n';
    for (const auto& [k, v] : settings) out << "flag." << k << " = " << v << '\n';
    for (const auto& in : inputs) {
      if (fs::is_directory(in)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(in))
          if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::uint64_t h = text::fnv1a64("");
        for (const auto& f : files) {
          h = text::fnv1a64(fs::relative(f, in).string(), h);
          h = text::fnv1a64(text::read_file(f.string()), h);
        }
        out << "input = " << in << " fnv1a64=" << text::hex64(h) << " files=" << files.size()
            << '\n';
      } else {
        const auto data = text::read_file(in);
        out << "input = " << in << " fnv1a64=" << text::hex64(text::fnv1a64(data))
            << " bytes=" << data.size() << '\n';
      }
    }
  }
};

template <typename Fn>
void write_file(const std::string& path, Fn&& fn) {
  auto out = text::open_output(path);
  fn(out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (text::trim(s).empty()) return out;
  for (auto item : text::split(s, ',')) out.emplace_back(text::trim(item));
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    double v = 0.0;
    if (!text::parse_double(item, v)) throw UsageError("bad number '" + item + "' in " + what);
    out.push_back(v);
  }
  return out;
}

/// "NAME=PATH" argument.
std::pair<std::string, std::string> named_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
    throw UsageError("expected NAME=PATH, got '" + arg + "'");
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

std::string heatmap_file_name(const SampleKey& k) {
  return k.subject_id + "_s" + std::to_string(k.session) + "_" + to_char(k.eye) + "_d" +
         std::to_string(k.distance) + ".csv";
}

/// Inverse of heatmap_file_name; the subject id may itself contain '_'.
SampleKey heatmap_key_from_name(const fs::path& file) {
  const std::string stem = file.stem().string();
  const auto parts = text::split(stem, '_');
  auto bad = [&] {
    return ParseError("heatmap file '" + file.filename().string() +
                      "' is not named <subject>_s<session>_<eye>_d<distance>.csv");
  };
  if (parts.size() < 4) throw bad();
  const auto n = parts.size();
  SampleKey k;
  for (std::size_t i = 0; i + 3 < n; ++i) k.subject_id += (i ? "_" : "") + std::string(parts[i]);
  if (parts[n - 3].size() < 2 || parts[n - 3][0] != 's' ||
      !text::parse_int(parts[n - 3].substr(1), k.session))
    throw bad();
  try {
    k.eye = parse_eye(parts[n - 2]);
  } catch (const ParseError&) {
    throw bad();
  }
  if (parts[n - 1].size() < 2 || parts[n - 1][0] != 'd' ||
      !text::parse_int(parts[n - 1].substr(1), k.distance))
    throw bad();
  return k;
}

std::vector<EvalResult> read_eval_file(const std::string& path) {
  auto in = text::open_input(path);
  return read_eval_report(in);
}

double pooled_eer_percent(const std::string& path) {
  for (const auto& r : read_eval_file(path))
    if (r.grouping == "all") return r.eer_percent();
  throw UsageError("'" + path + "' has no pooled ('all') row; run eval with --grouping all");
}

// ---------------------------------------------------------------------------
// Subcommand options

struct Common {
  unsigned threads = 1;
  std::string argv;
};

struct SynthArgs {
  std::size_t subjects = 86, distances = 5, dim = 64;
  std::string systems = "A,B,C", noise = "0.75,0.62,0.58";
  double correlation = 0.2, far_noise = 0.5, distance_shift = 0.3;
  std::uint64_t seed = 1;
  bool heatmaps = false;
  std::size_t heatmap_subjects = 10, width = 113, height = 113, cells_x = 8, cells_y = 8;
  double jitter = 0.8;
  std::string out;
};

struct IngestArgs {
  std::string manifest;
  std::vector<std::string> templates, heatmaps;
};

struct CropArgs {
  double x = 0, y = 0, radius = 0;
};

struct FaceArgs {
  double inter_eye = 0, eye_offset = 0, nose_offset = 0;
  double min_inter_eye = 50, frontal_ratio = 0.4;
};

struct ProtocolArgs {
  std::string manifest, templates, out;
};

struct ScoreArgs {
  std::string manifest, pairs, metric = "chi2", out;
  std::vector<std::string> templates, systems;
  bool l2 = false;
};

struct EvalArgs {
  std::string scores, out;
  std::vector<std::string> groupings{"all"};
  int max_distance = 0;
};

struct FuseTrainArgs {
  std::vector<std::string> scores;
  double prior = 0.5, regularization = 1e-6;
  int folds = 2;
  bool train_on_all = false;
  std::string out;
};

struct FuseApplyArgs {
  std::string model, out;
  std::vector<std::string> scores;
};

struct ExplainArgs {
  std::string probe, reference, scorer_cmd, planted_weights, kernel_width = "0.25", out;
  std::size_t width = 113, height = 113, cells_x = 8, cells_y = 8, samples = 1000, batch_size = 0;
  double keep_prob = 0.5, ridge = 1e-3;
  std::uint64_t seed = 0;
};

struct DivergeArgs {
  std::string heatmaps, systems, out;
  std::size_t k = 3;
};

struct ReportArgs {
  std::string table, column = "EER", out;
  std::vector<std::string> systems, fusions;
};

struct FigureArgs {
  std::vector<std::string> series;
  std::string x_name = "distance", x_labels, manifest, title = "EER (%)", out;
  bool svg = false;
};

// ---------------------------------------------------------------------------
// Commands

void run_synth(const SynthArgs& a, const Common& c) {
  synth::SynthConfig cfg;
  cfg.subjects = a.subjects;
  cfg.distances = a.distances;
  cfg.dim = a.dim;
  cfg.systems = split_list(a.systems);
  cfg.noise = parse_doubles(a.noise, "--noise");
  cfg.noise_correlation = a.correlation;
  cfg.far_noise = a.far_noise;
  cfg.distance_shift = a.distance_shift;
  cfg.seed = a.seed;
  const auto ds = synth::generate(cfg);

  OutputDir out(a.out);
  write_file(out.file("manifest.txt"), [&](auto& s) { write_manifest(s, ds.manifest); });
  for (std::size_t k = 0; k < cfg.systems.size(); ++k)
    write_file(out.file("templates_" + cfg.systems[k] + ".csv"),
               [&](auto& s) { write_templates(s, ds.templates[k], cfg.dim); });

  if (a.heatmaps) {
    std::vector<SampleKey> keys;
    for (const auto& t : ds.templates.front())
      if (t.key.subject_id <= synth::subject_name(a.heatmap_subjects - 1)) keys.push_back(t.key);
    const lime::SegmentationGrid grid{a.width, a.height, a.cells_x, a.cells_y};
    const auto maps = synth::generate_heatmaps(keys, cfg.systems.size(), grid, a.jitter, a.seed + 1);
    for (std::size_t k = 0; k < cfg.systems.size(); ++k)
      for (const auto& h : maps[k])
        write_file(out.file("heatmaps/" + cfg.systems[k] + "/" + heatmap_file_name(h.key)),
                   [&](auto& s) { write_heatmap(s, h); });
  }

  RunRecord rec{"synth", c.argv, a.seed, c.threads, {}, {}};
  rec.set("subjects", a.subjects);
  rec.set("distances", a.distances);
  rec.set("dim", a.dim);
  rec.set("systems", a.systems);
  rec.set("noise", a.noise);
  rec.set("correlation", a.correlation);
  rec.set("heatmaps", a.heatmaps);
  rec.write(out.file("run.txt"));
  out.commit();
  std::cout << "subjects=" << a.subjects << " distances=" << a.distances
            << " systems=" << cfg.systems.size() << " templates_per_system="
            << ds.templates.front().size() << '\n';
}

void run_ingest(const IngestArgs& a) {
  if (!a.templates.empty() && a.manifest.empty())
    throw UsageError("--templates needs --manifest");
  if (!a.manifest.empty()) {
    const auto m = read_manifest(a.manifest);
    std::cout << "manifest " << a.manifest << ": name=" << m.name << " dim=" << m.embedding_dim
              << " distances=" << m.distances.size() << " systems=" << m.systems.size() << '\n';
    for (const auto& path : a.templates) {
      const auto set = ingest_templates(path, m);
      std::cout << "templates " << path << ": rows=" << set.size()
                << " subjects=" << set.subjects().size() << " dim=" << set.dim() << '\n';
    }
  }
  for (const auto& path : a.heatmaps) {
    const auto h = ingest_heatmap(path);
    std::cout << "heatmap " << path << ": " << h.width << "x" << h.height
              << " mass=" << text::format_double(h.sum()) << '\n';
  }
}

void run_protocol(const ProtocolArgs& a, const Common& c) {
  const auto manifest = read_manifest(a.manifest);
  const auto templates = ingest_templates(a.templates, manifest);
  const auto sets = full_protocol(templates, manifest.max_distance());
  const auto totals = count(sets);

  OutputDir out(a.out);
  std::ostringstream summary;
  for (const auto& s : sets) {
    const std::string name = "d" + std::to_string(s.di) + "_d" + std::to_string(s.dj) + "_" +
                             to_string(s.kind) + ".csv";
    write_file(out.file(name), [&](auto& f) { write_protocol(f, s.pairs); });
    summary << "D" << s.di << "-D" << s.dj << ' ' << to_string(s.kind) << '=' << s.size() << '\n';
  }
  write_file(out.file("all.csv"), [&](auto& f) { write_protocol(f, flatten(sets)); });
  const std::string line = "genuine=" + std::to_string(totals.genuine) +
                           " impostor=" + std::to_string(totals.impostor);
  summary << line << '\n';
  write_file(out.file("summary.txt"), [&](auto& f) { f << summary.str(); });

  RunRecord rec{"protocol", c.argv, 0, c.threads, {}, {a.manifest, a.templates}};
  rec.write(out.file("run.txt"));
  out.commit();
  std::cout << line << '\n';
}

void run_score(const ScoreArgs& a, const Common& c) {
  const auto manifest = read_manifest(a.manifest);
  auto systems = a.systems;
  if (systems.empty()) {
    if (manifest.systems.size() < a.templates.size())
      throw UsageError("pass --system for each --templates file (manifest lists " +
                       std::to_string(manifest.systems.size()) + " systems)");
    systems.assign(manifest.systems.begin(),
                   manifest.systems.begin() + static_cast<std::ptrdiff_t>(a.templates.size()));
  }
  if (systems.size() != a.templates.size())
    throw UsageError("got " + std::to_string(a.templates.size()) + " --templates but " +
                     std::to_string(systems.size()) + " --system names");

  std::vector<ComparisonPair> pairs;
  {
    auto in = text::open_input(a.pairs);
    pairs = read_protocol(in);
  }
  const ScoringOptions opt{parse_metric(a.metric), a.l2, c.threads};

  OutputDir out(a.out);
  for (std::size_t k = 0; k < systems.size(); ++k) {
    const auto templates = ingest_templates(a.templates[k], manifest);
    const auto scores = score_pairs(pairs, templates, opt, systems[k]);
    write_file(out.file("scores_" + systems[k] + ".csv"), [&](auto& f) { write_scores(f, scores); });
    std::cout << systems[k] << ": " << scores.size() << " scores (" << to_string(opt.metric)
              << ")\n";
  }
  RunRecord rec{"score", c.argv, 0, c.threads, {}, {a.manifest, a.pairs}};
  rec.inputs.insert(rec.inputs.end(), a.templates.begin(), a.templates.end());
  rec.set("metric", a.metric);
  rec.set("l2_normalize", a.l2);
  rec.write(out.file("run.txt"));
  out.commit();
}

void run_eval(const EvalArgs& a, const Common& c) {
  const auto scores = read_scores(a.scores);
  OutputDir out(a.out);
  for (const auto& g : a.groupings) {
    const auto grouping = parse_grouping(g);
    const auto results = group_eval(scores, grouping, a.max_distance, c.threads);
    const std::string tag = grouping == Grouping::pooled              ? "all"
                            : grouping == Grouping::intra_by_distance ? "intra"
                                                                      : "gap";
    write_file(out.file("eval_" + tag + ".csv"), [&](auto& f) { write_eval_report(f, results); });
    for (const auto& r : results)
      std::cout << scores.system << '\t' << r.grouping << "\tEER=" << text::format_fixed(r.eer_percent(), 2)
                << "%\tgenuine=" << r.n_genuine << "\timpostor=" << r.n_impostor << '\n';
  }
  RunRecord rec{"eval", c.argv, 0, c.threads, {}, {a.scores}};
  rec.set("max_distance", a.max_distance);
  rec.write(out.file("run.txt"));
  out.commit();
}

std::vector<ScoreSet> read_score_files(const std::vector<std::string>& paths) {
  std::vector<ScoreSet> sets;
  for (const auto& p : paths) sets.push_back(read_scores(p));
  return sets;
}

void write_fits(std::ostream& f, const std::vector<FusionFit>& fits) {
  f << "model,iterations,loss,gradient_norm,converged,separable\n";
  for (std::size_t i = 0; i < fits.size(); ++i)
    f << i + 1 << ',' << fits[i].iterations << ',' << text::format_double(fits[i].loss) << ','
      << text::format_double(fits[i].gradient_norm) << ',' << fits[i].converged << ','
      << fits[i].separable << '\n';
}

void run_fuse_train(const FuseTrainArgs& a, const Common& c) {
  const auto sets = read_score_files(a.scores);
  const FusionOptions opt{a.prior, a.regularization};
  const auto cv = cross_validated_fusion(sets, a.folds, opt, a.train_on_all);

  OutputDir out(a.out);
  if (a.train_on_all) {
    write_file(out.file("model.txt"), [&](auto& f) { write_fusion_model(f, cv.fits[0].model); });
  } else {
    for (std::size_t i = 0; i < cv.fits.size(); ++i)
      write_file(out.file("model_fold" + std::to_string(i + 1) + ".txt"),
                 [&](auto& f) { write_fusion_model(f, cv.fits[i].model); });
  }
  write_file(out.file("fused_scores.csv"), [&](auto& f) { write_scores(f, cv.fused); });
  write_file(out.file("fits.csv"), [&](auto& f) { write_fits(f, cv.fits); });

  for (std::size_t i = 0; i < cv.fits.size(); ++i) {
    if (cv.fits[i].separable)
      std::cerr << "verikit: warning: model " << i + 1
                << " separates its training classes perfectly; weights are unbounded without "
                   "--regularization\n";
    else if (!cv.fits[i].converged)
      std::cerr << "verikit: warning: model " << i + 1 << " stopped with gradient norm "
                << cv.fits[i].gradient_norm << '\n';
  }

  RunRecord rec{"fuse train", c.argv, 0, c.threads, {}, a.scores};
  rec.set("prior", a.prior);
  rec.set("regularization", a.regularization);
  rec.set("folds", a.train_on_all ? 0 : a.folds);
  rec.set("train_on_all", a.train_on_all);
  rec.write(out.file("run.txt"));
  out.commit();
  std::cout << cv.fused.system << ": " << cv.fits.size() << " model(s), "
            << cv.fused.size() << " " << (a.train_on_all ? "in-sample" : "held-out")
            << " fused scores\n";
}

void run_fuse_apply(const FuseApplyArgs& a, const Common& c) {
  FusionModel model;
  {
    auto in = text::open_input(a.model);
    model = read_fusion_model(in);
  }
  auto sets = read_score_files(a.scores);
  if (sets.size() == model.systems()) {
    // Match score files to model weights by system name when possible.
    std::vector<ScoreSet> ordered;
    for (const auto& name : model.system_names) {
      auto it = std::find_if(sets.begin(), sets.end(), [&](const ScoreSet& s) { return s.system == name; });
      if (it == sets.end()) throw UsageError("no score file for model system '" + name + "'");
      ordered.push_back(*it);
    }
    sets = std::move(ordered);
  }
  const auto fused = apply_fusion(model, sets);
  OutputDir out(a.out);
  write_file(out.file("fused_scores.csv"), [&](auto& f) { write_scores(f, fused); });
  RunRecord rec{"fuse apply", c.argv, 0, c.threads, {}, {a.model}};
  rec.inputs.insert(rec.inputs.end(), a.scores.begin(), a.scores.end());
  rec.write(out.file("run.txt"));
  out.commit();
  std::cout << fused.system << ": " << fused.size() << " fused scores\n";
}

void run_explain(const ExplainArgs& a, const Common& c) {
  if (a.scorer_cmd.empty() == a.planted_weights.empty())
    throw UsageError("pass exactly one of --scorer-cmd or --planted-weights");
  lime::ExplainConfig cfg;
  cfg.grid = {a.width, a.height, a.cells_x, a.cells_y};
  cfg.samples = a.samples;
  cfg.keep_prob = a.keep_prob;
  if (!text::parse_double(a.kernel_width, cfg.kernel_width))
    throw UsageError("bad --kernel-width '" + a.kernel_width + "'");
  cfg.ridge = a.ridge;
  cfg.seed = a.seed;
  cfg.batch_size = a.batch_size;

  std::unique_ptr<lime::MaskScorer> scorer;
  if (!a.scorer_cmd.empty())
    scorer = std::make_unique<lime::ExternalCommandScorer>(a.scorer_cmd);
  else
    scorer = std::make_unique<lime::PlantedLinearScorer>(parse_doubles(a.planted_weights, "--planted-weights"));

  const auto ex = lime::explain(a.probe, a.reference, *scorer, cfg);
  OutputDir out(a.out);
  write_file(out.file("heatmap.csv"), [&](auto& f) { write_heatmap(f, ex.heatmap); });
  write_file(out.file("surrogate.csv"), [&](auto& f) { lime::write_surrogate(f, ex.surrogate); });

  RunRecord rec{"explain", c.argv, a.seed, c.threads, {}, {}};
  rec.set("probe", a.probe);
  rec.set("reference", a.reference);
  rec.set("scorer", a.scorer_cmd.empty() ? "planted " + a.planted_weights : a.scorer_cmd);
  rec.set("cells", std::to_string(a.cells_x) + "x" + std::to_string(a.cells_y));
  rec.set("image", std::to_string(a.width) + "x" + std::to_string(a.height));
  rec.set("samples", a.samples);
  rec.set("keep_prob", a.keep_prob);
  rec.set("kernel_width", a.kernel_width);
  rec.set("ridge", a.ridge);
  rec.write(out.file("run.txt"));
  out.commit();

  const auto& coef = ex.surrogate.coefficients;
  const auto top = static_cast<std::size_t>(std::max_element(coef.begin(), coef.end()) - coef.begin());
  std::cout << "top cell=" << top << " coefficient=" << text::format_double(coef[top]) << '\n';
}

void run_diverge(const DivergeArgs& a, const Common& c) {
  const fs::path root(a.heatmaps);
  if (!fs::is_directory(root)) throw IoError("heatmap directory '" + a.heatmaps + "' not found");
  auto systems = split_list(a.systems);
  if (systems.empty())
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory()) systems.push_back(e.path().filename().string());
  std::sort(systems.begin(), systems.end());

  HeatmapsBySystem maps;
  for (const auto& s : systems) {
    const auto dir = root / s;
    if (!fs::is_directory(dir)) throw CompletenessError("no heatmaps for system '" + s + "'");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto h = ingest_heatmap(f.string());
      h.key = heatmap_key_from_name(f);
      maps[s].emplace(h.key, std::move(h));
    }
  }

  const auto cloud = pairwise_cloud(maps, systems, c.threads);
  const auto extremes = extreme_images(cloud, std::min(a.k, cloud.size()));

  OutputDir out(a.out);
  write_file(out.file("cloud.csv"), [&](auto& f) { write_cloud(f, cloud, systems.size()); });
  if (systems.size() >= 3)
    write_file(out.file("correlations.csv"),
               [&](auto& f) { write_correlations(f, cloud, systems.size()); });
  write_file(out.file("extremes.csv"), [&](auto& f) {
    f << "side,rank,subject,session,eye,distance,mean\n";
    auto rows = [&](const char* side, const std::vector<DivergencePoint>& pts) {
      for (std::size_t i = 0; i < pts.size(); ++i)
        f << side << ',' << i + 1 << ',' << pts[i].key.subject_id << ',' << pts[i].key.session << ','
          << to_char(pts[i].key.eye) << ',' << pts[i].key.distance << ','
          << text::format_double(pts[i].mean()) << '\n';
    };
    rows("lowest", extremes.lowest);
    rows("highest", extremes.highest);
  });

  std::vector<std::string> names;
  for (std::size_t i = 0; i < systems.size(); ++i)
    names.push_back(std::string(1, char('a' + i)) + "=" + systems[i]);
  write_file(out.file("systems.txt"), [&](auto& f) {
    for (const auto& n : names) f << n << '\n';
  });

  for (const auto& s : systems) {
    std::vector<Heatmap> group;
    std::map<int, int> distances;
    for (const auto& [k, h] : maps.at(s)) {
      group.push_back(h);
      distances[k.distance];
    }
    write_file(out.file("averages/" + s + "_all.csv"),
               [&](auto& f) { write_heatmap(f, average_heatmap(group)); });
    for (const auto& [d, _] : distances)
      write_file(out.file("averages/" + s + "_d" + std::to_string(d) + ".csv"),
                 [&](auto& f) { write_heatmap(f, average_heatmap(group, d)); });
  }

  RunRecord rec{"diverge", c.argv, 0, c.threads, {}, {a.heatmaps}};
  rec.set("systems", a.systems.empty() ? "(all subdirectories)" : a.systems);
  rec.set("k", a.k);
  rec.write(out.file("run.txt"));
  out.commit();
  std::cout << "images=" << cloud.size() << " axes=" << (cloud.empty() ? 0 : cloud.front().pairs.size())
            << '\n';
}

void run_report(const ReportArgs& a, const Common& c) {
  report::EerTable table;
  std::vector<std::string> inputs;
  if (!a.table.empty()) {
    auto in = text::open_input(a.table);
    table = report::read_eer_table(in);
    inputs.push_back(a.table);
  }
  for (const auto& [list, fusion] : {std::pair{&a.systems, false}, std::pair{&a.fusions, true}})
    for (const auto& arg : *list) {
      const auto [name, path] = named_path(arg);
      table.add(name, fusion, a.column, pooled_eer_percent(path));
      inputs.push_back(path);
    }
  if (table.rows.empty()) throw UsageError("nothing to report: pass --table, --system or --fusion");
  const auto rendered = report::build_report(table);

  OutputDir out(a.out);
  std::ostringstream md;
  report::write_markdown(md, rendered);
  write_file(out.file("report.md"), [&](auto& f) { f << md.str(); });
  write_file(out.file("report.csv"), [&](auto& f) { report::write_csv(f, rendered); });
  write_file(out.file("table.csv"), [&](auto& f) { report::write_eer_table_input(f, table); });
  RunRecord rec{"report", c.argv, 0, c.threads, {}, inputs};
  rec.write(out.file("run.txt"));
  out.commit();
  std::cout << md.str();
}

void run_figure(const FigureArgs& a, const Common& c) {
  std::vector<std::pair<std::string, std::vector<EvalResult>>> evals;
  std::vector<std::string> inputs;
  for (const auto& arg : a.series) {
    const auto [name, path] = named_path(arg);
    evals.emplace_back(name, read_eval_file(path));
    inputs.push_back(path);
  }
  std::vector<std::string> labels = split_list(a.x_labels);
  if (labels.empty() && !a.manifest.empty()) {
    labels = read_manifest(a.manifest).distances;
    inputs.push_back(a.manifest);
  }
  const auto fs = report::make_series(evals, a.x_name, labels);

  OutputDir out(a.out);
  write_file(out.file("series.csv"), [&](auto& f) { report::write_series_csv(f, fs); });
  if (a.svg) write_file(out.file("series.svg"), [&](auto& f) { report::write_series_svg(f, fs, a.title); });
  RunRecord rec{"figure-data", c.argv, 0, c.threads, {}, inputs};
  rec.set("x_name", a.x_name);
  rec.set("svg", a.svg);
  rec.write(out.file("run.txt"));
  out.commit();
  std::cout << "rows=" << fs.x.size() << " series=" << fs.names.size() << '\n';
}

void run_crop(const CropArgs& a) {
  const auto box = geometry::sclera_crop_box(a.x, a.y, a.radius);
  std::cout << "center=" << text::format_double(box.center_x) << ',' << text::format_double(box.center_y)
            << " side=" << text::format_double(box.side) << '\n';
}

void run_face(const FaceArgs& a) {
  const bool ok = geometry::face_crop_valid(a.inter_eye, a.eye_offset, a.nose_offset,
                                            {a.min_inter_eye, a.frontal_ratio});
  std::cout << (ok ? "valid" : "invalid") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verikit: distance-aware verification evaluation, score fusion and heatmap analysis"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--threads", common.threads, "Worker threads for parallel stages")
      ->check(CLI::Range(1u, 1024u));
  for (int i = 0; i < argc; ++i) common.argv += (i ? " " : "") + std::string(argv[i]);

  std::function<void()> action;

  SynthArgs synth_args;
  {
    auto* s = app.add_subcommand("synth", "Generate a synthetic dataset (manifest, templates, heatmaps)");
    s->add_option("--subjects", synth_args.subjects)->check(CLI::PositiveNumber);
    s->add_option("--distances", synth_args.distances)->check(CLI::PositiveNumber);
    s->add_option("--dim", synth_args.dim)->check(CLI::PositiveNumber);
    s->add_option("--systems", synth_args.systems, "Comma-separated system names");
    s->add_option("--noise", synth_args.noise, "Per-system noise scales, comma-separated");
    s->add_option("--correlation", synth_args.correlation, "Noise correlation across systems");
    s->add_option("--far-noise", synth_args.far_noise);
    s->add_option("--distance-shift", synth_args.distance_shift);
    s->add_option("--seed", synth_args.seed);
    s->add_flag("--heatmaps", synth_args.heatmaps, "Also write per-system heatmaps");
    s->add_option("--heatmap-subjects", synth_args.heatmap_subjects)->check(CLI::PositiveNumber);
    s->add_option("--width", synth_args.width);
    s->add_option("--height", synth_args.height);
    s->add_option("--cells-x", synth_args.cells_x);
    s->add_option("--cells-y", synth_args.cells_y);
    s->add_option("--jitter", synth_args.jitter);
    s->add_option("--out", synth_args.out)->required();
    s->callback([&] { action = [&] { run_synth(synth_args, common); }; });
  }

  IngestArgs ingest_args;
  {
    auto* s = app.add_subcommand("ingest", "Validate a manifest, template files and heatmaps");
    s->add_option("--manifest", ingest_args.manifest);
    s->add_option("--templates", ingest_args.templates);
    s->add_option("--heatmap", ingest_args.heatmaps);
    s->callback([&] { action = [&] { run_ingest(ingest_args); }; });
  }

  CropArgs crop_args;
  FaceArgs face_args;
  {
    auto* g = app.add_subcommand("geometry", "Crop-box and frontal-face checks");
    g->require_subcommand(1);
    auto* crop = g->add_subcommand("crop", "Square crop box around an eye");
    crop->add_option("--center-x", crop_args.x)->required();
    crop->add_option("--center-y", crop_args.y)->required();
    crop->add_option("--radius", crop_args.radius, "Sclera radius in pixels")->required();
    crop->callback([&] { action = [&] { run_crop(crop_args); }; });
    auto* face = g->add_subcommand("face", "Frontal face validity");
    face->add_option("--inter-eye", face_args.inter_eye)->required();
    face->add_option("--eye-offset", face_args.eye_offset)->required();
    face->add_option("--nose-offset", face_args.nose_offset)->required();
    face->add_option("--min-inter-eye", face_args.min_inter_eye);
    face->add_option("--frontal-ratio", face_args.frontal_ratio);
    face->callback([&] { action = [&] { run_face(face_args); }; });
  }

  ProtocolArgs protocol_args;
  {
    auto* s = app.add_subcommand("protocol", "Generate genuine/impostor comparison lists");
    s->add_option("--manifest", protocol_args.manifest)->required();
    s->add_option("--templates", protocol_args.templates)->required();
    s->add_option("--out", protocol_args.out)->required();
    s->callback([&] { action = [&] { run_protocol(protocol_args, common); }; });
  }

  ScoreArgs score_args;
  {
    auto* s = app.add_subcommand("score", "Score comparison pairs with one or more systems");
    s->add_option("--manifest", score_args.manifest)->required();
    s->add_option("--templates", score_args.templates)->required();
    s->add_option("--system", score_args.systems, "System name per --templates file");
    s->add_option("--pairs", score_args.pairs)->required();
    s->add_option("--metric", score_args.metric)->check(CLI::IsMember({"cosine", "chi2"}));
    s->add_flag("--l2-normalize", score_args.l2, "L2-normalise templates before chi2");
    s->add_option("--out", score_args.out)->required();
    s->callback([&] { action = [&] { run_score(score_args, common); }; });
  }

  EvalArgs eval_args;
  {
    auto* s = app.add_subcommand("eval", "EER per distance, per distance gap or pooled");
    s->add_option("--scores", eval_args.scores)->required();
    s->add_option("--grouping", eval_args.groupings, "intra, gap or all (repeatable)")
        ->check(CLI::IsMember({"intra", "gap", "all", "intra_by_distance", "by_distance_gap", "pooled"}));
    s->add_option("--max-distance", eval_args.max_distance);
    s->add_option("--out", eval_args.out)->required();
    s->callback([&] { action = [&] { run_eval(eval_args, common); }; });
  }

  FuseTrainArgs train_args;
  FuseApplyArgs apply_args;
  {
    auto* f = app.add_subcommand("fuse", "Logistic-regression score fusion");
    f->require_subcommand(1);
    auto* t = f->add_subcommand("train", "Train fusion models (subject-disjoint folds by default)");
    t->add_option("--scores", train_args.scores, "Score file per system")->required();
    t->add_option("--prior", train_args.prior, "Genuine prior in (0, 1)");
    t->add_option("--regularization", train_args.regularization, "L2 penalty on the weights");
    t->add_option("--folds", train_args.folds, "Subject-disjoint folds")->check(CLI::Range(2, 1 << 20));
    t->add_flag("--train-on-all", train_args.train_on_all, "Train one model on every trial");
    t->add_option("--out", train_args.out)->required();
    t->callback([&] { action = [&] { run_fuse_train(train_args, common); }; });
    auto* ap = f->add_subcommand("apply", "Apply a trained fusion model");
    ap->add_option("--model", apply_args.model)->required();
    ap->add_option("--scores", apply_args.scores)->required();
    ap->add_option("--out", apply_args.out)->required();
    ap->callback([&] { action = [&] { run_fuse_apply(apply_args, common); }; });
  }

  ExplainArgs explain_args;
  {
    auto* s = app.add_subcommand("explain", "Mask-based surrogate explanation of a scorer");
    s->add_option("--probe", explain_args.probe)->required();
    s->add_option("--reference", explain_args.reference)->required();
    s->add_option("--scorer-cmd", explain_args.scorer_cmd,
                  "Command run as '<cmd> masks.csv scores.csv' per batch");
    s->add_option("--planted-weights", explain_args.planted_weights,
                  "Use the built-in linear scorer with these cell weights");
    s->add_option("--width", explain_args.width);
    s->add_option("--height", explain_args.height);
    s->add_option("--cells-x", explain_args.cells_x);
    s->add_option("--cells-y", explain_args.cells_y);
    s->add_option("--samples", explain_args.samples);
    s->add_option("--keep-prob", explain_args.keep_prob);
    s->add_option("--kernel-width", explain_args.kernel_width, "Positive width, or inf");
    s->add_option("--ridge", explain_args.ridge);
    s->add_option("--seed", explain_args.seed);
    s->add_option("--batch-size", explain_args.batch_size, "Masks per scorer call (0: all)");
    s->add_option("--out", explain_args.out)->required();
    s->callback([&] { action = [&] { run_explain(explain_args, common); }; });
  }

  DivergeArgs diverge_args;
  {
    auto* s = app.add_subcommand("diverge", "Pairwise JSD clouds, correlations, extremes, averages");
    s->add_option("--heatmaps", diverge_args.heatmaps,
                  "Directory with <system>/<subject>_s<session>_<eye>_d<distance>.csv")
        ->required();
    s->add_option("--systems", diverge_args.systems, "Comma-separated subset of systems");
    s->add_option("--k", diverge_args.k, "Images per extreme list");
    s->add_option("--out", diverge_args.out)->required();
    s->callback([&] { action = [&] { run_diverge(diverge_args, common); }; });
  }

  ReportArgs report_args;
  {
    auto* s = app.add_subcommand("report", "EER table with fusion brackets (Markdown and CSV)");
    s->add_option("--table", report_args.table, "CSV name,kind,column,eer_percent");
    s->add_option("--system", report_args.systems, "NAME=eval_all.csv (repeatable)");
    s->add_option("--fusion", report_args.fusions, "NAME=eval_all.csv (repeatable)");
    s->add_option("--column", report_args.column, "Column label for --system/--fusion rows");
    s->add_option("--out", report_args.out)->required();
    s->callback([&] { action = [&] { run_report(report_args, common); }; });
  }

  FigureArgs figure_args;
  {
    auto* s = app.add_subcommand("figure-data", "EER series CSV and optional SVG plot");
    s->add_option("--series", figure_args.series, "NAME=eval.csv (repeatable)")->required();
    s->add_option("--x-name", figure_args.x_name);
    s->add_option("--x-labels", figure_args.x_labels, "Comma-separated x labels");
    s->add_option("--manifest", figure_args.manifest, "Take x labels from the manifest distances");
    s->add_option("--title", figure_args.title);
    s->add_flag("--svg", figure_args.svg);
    s->add_option("--out", figure_args.out)->required();
    s->callback([&] { action = [&] { run_figure(figure_args, common); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (action) action();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "verikit: " << e.what() << '\n';
    return 1;
  }
}
