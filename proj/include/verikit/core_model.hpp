#pragma once

// Domain types for verification data plus ingestion/serialization of
// templates, heatmaps and dataset manifests.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "verikit/errors.hpp"
#include "verikit/text.hpp"

namespace verikit {

enum class Eye { L = 0, R = 1 };

inline char to_char(Eye e) { return e == Eye::L ? 'L' : 'R'; }

inline Eye parse_eye(std::string_view s) {
  s = text::trim(s);
  if (s == "L") return Eye::L;
  if (s == "R") return Eye::R;
  throw ParseError("eye must be L or R, got '" + std::string(s) + "'");
}

/// Addresses one sample: who, which session, which eye, at which distance.
/// Distances are 1-based indices into the manifest's distance list.
struct SampleKey {
  std::string subject_id;
  int session = 1;
  Eye eye = Eye::L;
  int distance = 1;

  friend auto operator<=>(const SampleKey&, const SampleKey&) = default;
  friend bool operator==(const SampleKey&, const SampleKey&) = default;
};

inline std::string to_string(const SampleKey& k) {
  return "(" + k.subject_id + ", " + std::to_string(k.session) + ", " + to_char(k.eye) +
         ", " + std::to_string(k.distance) + ")";
}

/// Flat key-value description of a dataset.
struct DatasetManifest {
  std::string name;
  std::size_t embedding_dim = 0;
  bool nonnegative = false;
  std::vector<std::string> distances;  // labels, farthest first
  std::vector<std::string> systems;

  int max_distance() const { return static_cast<int>(distances.size()); }

  void validate() const {
    if (embedding_dim == 0) throw UsageError("manifest embedding_dim must be positive");
    if (distances.empty()) throw UsageError("manifest declares no distances");
    auto sorted = distances;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw UniquenessError("manifest distance labels must be unique");
  }
};

struct EmbeddingTemplate {
  SampleKey key;
  std::vector<double> vector;
};

/// Ordered template collection with key lookup. Row order is preserved.
class TemplateSet {
 public:
  TemplateSet() = default;

  void add(EmbeddingTemplate t) {
    if (!items_.empty() && t.vector.size() != items_.front().vector.size())
      throw DimensionError("template " + to_string(t.key) + " has length " +
                           std::to_string(t.vector.size()) + ", expected " +
                           std::to_string(items_.front().vector.size()));
    auto [it, inserted] = index_.emplace(t.key, items_.size());
    if (!inserted) throw UniquenessError("duplicate sample key " + to_string(t.key));
    items_.push_back(std::move(t));
  }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t dim() const { return items_.empty() ? 0 : items_.front().vector.size(); }

  const EmbeddingTemplate& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  const EmbeddingTemplate* find(const SampleKey& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  const EmbeddingTemplate& at(const SampleKey& key) const {
    if (const auto* t = find(key)) return *t;
    throw LookupError("no template for sample " + to_string(key));
  }

  bool contains(const SampleKey& key) const { return index_.count(key) != 0; }

  /// Distinct subject ids, sorted lexicographically.
  std::vector<std::string> subjects() const {
    std::vector<std::string> out;
    for (const auto& t : items_) out.push_back(t.key.subject_id);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  std::vector<EmbeddingTemplate> items_;
  std::map<SampleKey, std::size_t> index_;
};

/// Rectangular non-negative relevance map, stored row-major.
struct Heatmap {
  SampleKey key;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  Heatmap() = default;
  Heatmap(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), values(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

  double sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }
};

// ---------------------------------------------------------------------------
// Manifest

inline std::vector<std::string> parse_list(std::string_view v) {
  std::vector<std::string> out;
  if (text::trim(v).empty()) return out;
  for (auto item : text::split(v, ',')) out.emplace_back(text::trim(item));
  return out;
}

inline DatasetManifest read_manifest(std::istream& in) {
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = text::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("manifest line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = text::trim(body.substr(0, eq));
    const auto value = text::trim(body.substr(eq + 1));
    if (key == "name") {
      m.name = std::string(value);
    } else if (key == "embedding_dim") {
      if (!text::parse_int(value, m.embedding_dim) || m.embedding_dim == 0)
        throw ParseError("manifest line " + std::to_string(lineno) +
                         ": embedding_dim must be a positive integer");
    } else if (key == "nonnegative") {
      if (value == "true") m.nonnegative = true;
      else if (value == "false") m.nonnegative = false;
      else
        throw ParseError("manifest line " + std::to_string(lineno) +
                         ": nonnegative must be true or false");
    } else if (key == "distances") {
      m.distances = parse_list(value);
    } else if (key == "systems") {
      m.systems = parse_list(value);
    } else {
      throw ParseError("manifest line " + std::to_string(lineno) + ": unknown key '" +
                       std::string(key) + "'");
    }
  }
  m.validate();
  return m;
}

inline DatasetManifest read_manifest(const std::string& path) {
  auto in = text::open_input(path);
  return read_manifest(in);
}

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
  };
  out << "name = " << m.name << '\n'
      << "embedding_dim = " << m.embedding_dim << '\n'
      << "nonnegative = " << (m.nonnegative ? "true" : "false") << '\n'
      << "distances = " << join(m.distances) << '\n'
      << "systems = " << join(m.systems) << '\n';
}

// ---------------------------------------------------------------------------
// Template CSV: subject,session,eye,distance,e0,...,e{D-1}

/// Parses the four key columns; `where` prefixes error messages.
inline SampleKey parse_key_fields(std::span<const std::string_view> f, const std::string& where) {
  SampleKey k;
  k.subject_id = std::string(text::trim(f[0]));
  if (k.subject_id.empty()) throw ParseError(where + ": empty subject id");
  if (!text::parse_int(f[1], k.session))
    throw ParseError(where + ": bad session '" + std::string(f[1]) + "'");
  try {
    k.eye = parse_eye(f[2]);
  } catch (const ParseError& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (!text::parse_int(f[3], k.distance))
    throw ParseError(where + ": bad distance '" + std::string(f[3]) + "'");
  return k;
}

inline void check_key_domain(const SampleKey& k, int max_distance, const std::string& where) {
  if (k.session != 1 && k.session != 2)
    throw DomainError(where + ": session must be 1 or 2, got " + std::to_string(k.session));
  if (k.distance < 1 || k.distance > max_distance)
    throw DomainError(where + ": distance index " + std::to_string(k.distance) +
                      " outside 1.." + std::to_string(max_distance));
}

inline TemplateSet ingest_templates(std::istream& in, const DatasetManifest& manifest) {
  manifest.validate();
  const std::size_t dim = manifest.embedding_dim;
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header");
  {
    const auto cols = text::split(text::trim(line), ',');
    if (cols.size() < 4 || text::trim(cols[0]) != "subject" || text::trim(cols[1]) != "session" ||
        text::trim(cols[2]) != "eye" || text::trim(cols[3]) != "distance")
      throw ParseError("line 1: header must start with subject,session,eye,distance");
    if (cols.size() != 4 + dim)
      throw DimensionError("line 1: header declares " + std::to_string(cols.size() - 4) +
                           " components, manifest embedding_dim is " + std::to_string(dim));
  }

  TemplateSet set;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    const auto fields = text::split(body, ',');
    if (fields.size() < 4) throw ParseError(where + ": expected at least 4 columns");
    EmbeddingTemplate t;
    t.key = parse_key_fields(fields, where);
    check_key_domain(t.key, manifest.max_distance(), where);
    if (fields.size() - 4 != dim)
      throw DimensionError(where + ": " + std::to_string(fields.size() - 4) +
                           " components, expected " + std::to_string(dim));
    t.vector.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      double v = 0.0;
      if (!text::parse_double(fields[4 + i], v))
        throw ParseError(where + ": bad number '" + std::string(fields[4 + i]) + "'");
      if (!std::isfinite(v)) throw DomainError(where + ": non-finite component e" + std::to_string(i));
      if (manifest.nonnegative && v < 0.0)
        throw DomainError(where + ": negative component e" + std::to_string(i) +
                          " under nonnegative dataset");
      t.vector[i] = v;
    }
    if (set.contains(t.key))
      throw UniquenessError(where + ": duplicate sample key " + to_string(t.key));
    set.add(std::move(t));
  }
  return set;
}

inline TemplateSet ingest_templates(const std::string& path, const DatasetManifest& manifest) {
  auto in = text::open_input(path);
  return ingest_templates(in, manifest);
}

inline void write_templates(std::ostream& out, const TemplateSet& set, std::size_t dim) {
  out << "subject,session,eye,distance";
  for (std::size_t i = 0; i < dim; ++i) out << ",e" << i;
  out << '\n';
  for (const auto& t : set) {
    out << t.key.subject_id << ',' << t.key.session << ',' << to_char(t.key.eye) << ','
        << t.key.distance;
    for (double v : t.vector) out << ',' << text::format_double(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Heatmap CSV matrix: "H <width> <height>" then height rows of width values.

inline Heatmap ingest_heatmap(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("row 0: missing 'H <width> <height>' header");
  const auto head = text::split_ws(line);
  Heatmap h;
  if (head.size() != 3 || head[0] != "H" || !text::parse_int(head[1], h.width) ||
      !text::parse_int(head[2], h.height) || h.width == 0 || h.height == 0)
    throw ParseError("row 0: header must be 'H <width> <height>' with positive sizes");
  h.values.reserve(h.width * h.height);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto body = text::trim(line);
    if (body.empty()) continue;
    if (row == h.height)
      throw ParseError("row " + std::to_string(row) + ": more than " + std::to_string(h.height) +
                       " rows");
    const auto fields = text::split(body, ',');
    if (fields.size() != h.width)
      throw ParseError("row " + std::to_string(row) + ": " + std::to_string(fields.size()) +
                       " entries, expected " + std::to_string(h.width));
    for (std::size_t x = 0; x < fields.size(); ++x) {
      double v = 0.0;
      if (!text::parse_double(fields[x], v))
        throw ParseError("row " + std::to_string(row) + ": bad number '" +
                         std::string(fields[x]) + "'");
      if (!std::isfinite(v) || v < 0.0)
        throw DomainError("row " + std::to_string(row) + ", column " + std::to_string(x) +
                          ": heatmap entries must be finite and >= 0");
      h.values.push_back(v);
    }
    ++row;
  }
  if (row != h.height)
    throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(h.height) +
                     " rows, got " + std::to_string(row));
  return h;
}

inline Heatmap ingest_heatmap(const std::string& path) {
  auto in = text::open_input(path);
  return ingest_heatmap(in);
}

inline void write_heatmap(std::ostream& out, const Heatmap& h) {
  out << "H " << h.width << ' ' << h.height << '\n';
  for (std::size_t y = 0; y < h.height; ++y) {
    for (std::size_t x = 0; x < h.width; ++x) {
      if (x) out << ',';
      out << text::format_double(h.at(x, y));
    }
    out << '\n';
  }
}

}  // namespace verikit
