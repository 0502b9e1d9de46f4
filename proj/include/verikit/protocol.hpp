#pragma once

// Genuine/impostor comparison-pair generation for intra- and cross-distance
// verification experiments (two sessions, two eyes per subject and distance).

#include <array>
#include <cstddef>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "verikit/core_model.hpp"

namespace verikit {

enum class Label { genuine, impostor };

inline const char* to_string(Label l) { return l == Label::genuine ? "genuine" : "impostor"; }

inline Label parse_label(std::string_view s) {
  s = text::trim(s);
  if (s == "genuine") return Label::genuine;
  if (s == "impostor") return Label::impostor;
  throw ParseError("label must be genuine or impostor, got '" + std::string(s) + "'");
}

struct ComparisonPair {
  SampleKey probe;
  SampleKey gallery;
  Label label = Label::genuine;
  int di = 1;
  int dj = 1;

  friend bool operator==(const ComparisonPair&, const ComparisonPair&) = default;
};

struct ProtocolSet {
  int di = 1;
  int dj = 1;
  Label kind = Label::genuine;
  std::vector<ComparisonPair> pairs;

  std::size_t size() const { return pairs.size(); }
};

namespace detail {

inline constexpr std::array<Eye, 2> kEyes{Eye::L, Eye::R};

inline SampleKey key_of(const std::string& subject, int session, Eye eye, int distance) {
  return SampleKey{subject, session, eye, distance};
}

inline void require_complete(const TemplateSet& templates, const std::vector<std::string>& subjects,
                             int d) {
  for (const auto& s : subjects)
    for (int session : {1, 2})
      for (Eye eye : kEyes)
        if (!templates.contains(key_of(s, session, eye, d)))
          throw CompletenessError("subject '" + s + "' lacks session " + std::to_string(session) +
                                  " eye " + to_char(eye) + " at distance " + std::to_string(d));
}

inline ComparisonPair make_pair(SampleKey probe, SampleKey gallery) {
  ComparisonPair p;
  p.label = probe.subject_id == gallery.subject_id ? Label::genuine : Label::impostor;
  p.di = probe.distance;
  p.dj = gallery.distance;
  p.probe = std::move(probe);
  p.gallery = std::move(gallery);
  return p;
}

}  // namespace detail

/// Session-1 eyes vs session-2 eyes of the same subject at distance d:
/// 4 pairs per subject.
inline ProtocolSet intra_genuine(const TemplateSet& templates, int d) {
  const auto subjects = templates.subjects();
  detail::require_complete(templates, subjects, d);
  ProtocolSet set{d, d, Label::genuine, {}};
  set.pairs.reserve(4 * subjects.size());
  for (const auto& s : subjects)
    for (Eye pe : detail::kEyes)
      for (Eye ge : detail::kEyes)
        set.pairs.push_back(
            detail::make_pair(detail::key_of(s, 1, pe, d), detail::key_of(s, 2, ge, d)));
  return set;
}

/// Session-1 eyes at di vs both sessions' eyes at dj: 8 pairs per subject.
inline ProtocolSet cross_genuine(const TemplateSet& templates, int di, int dj) {
  if (di == dj) throw UsageError("cross_genuine needs two different distances, got " +
                                 std::to_string(di) + " twice");
  const auto subjects = templates.subjects();
  detail::require_complete(templates, subjects, di);
  detail::require_complete(templates, subjects, dj);
  ProtocolSet set{di, dj, Label::genuine, {}};
  set.pairs.reserve(8 * subjects.size());
  for (const auto& s : subjects)
    for (Eye pe : detail::kEyes)
      for (int gs : {1, 2})
        for (Eye ge : detail::kEyes)
          set.pairs.push_back(
              detail::make_pair(detail::key_of(s, 1, pe, di), detail::key_of(s, gs, ge, dj)));
  return set;
}

/// Session-1 eyes of A at di vs session-2 eyes of every other subject B at
/// dj, over ordered subject pairs: 4 * S * (S - 1) pairs.
inline ProtocolSet impostors(const TemplateSet& templates, int di, int dj) {
  const auto subjects = templates.subjects();
  if (subjects.size() < 2)
    throw UsageError("impostor generation needs at least 2 subjects, got " +
                     std::to_string(subjects.size()));
  detail::require_complete(templates, subjects, di);
  if (dj != di) detail::require_complete(templates, subjects, dj);
  ProtocolSet set{di, dj, Label::impostor, {}};
  set.pairs.reserve(4 * subjects.size() * (subjects.size() - 1));
  for (const auto& a : subjects)
    for (Eye pe : detail::kEyes)
      for (const auto& b : subjects) {
        if (a == b) continue;
        for (Eye ge : detail::kEyes)
          set.pairs.push_back(
              detail::make_pair(detail::key_of(a, 1, pe, di), detail::key_of(b, 2, ge, dj)));
      }
  return set;
}

/// For every unordered distance combination di <= dj: the genuine set
/// (intra when di == dj, cross otherwise) followed by the impostor set.
inline std::vector<ProtocolSet> full_protocol(const TemplateSet& templates, int max_distance) {
  if (max_distance < 1) throw UsageError("max distance must be >= 1");
  const auto subjects = templates.subjects();
  for (int d = 1; d <= max_distance; ++d) detail::require_complete(templates, subjects, d);
  std::vector<ProtocolSet> sets;
  for (int di = 1; di <= max_distance; ++di)
    for (int dj = di; dj <= max_distance; ++dj) {
      sets.push_back(di == dj ? intra_genuine(templates, di) : cross_genuine(templates, di, dj));
      sets.push_back(impostors(templates, di, dj));
    }
  return sets;
}

struct ProtocolCounts {
  std::size_t genuine = 0;
  std::size_t impostor = 0;
  std::size_t combinations = 0;
};

inline ProtocolCounts count(const std::vector<ProtocolSet>& sets) {
  ProtocolCounts c;
  std::set<std::pair<int, int>> combos;
  for (const auto& s : sets) {
    (s.kind == Label::genuine ? c.genuine : c.impostor) += s.size();
    combos.emplace(s.di, s.dj);
  }
  c.combinations = combos.size();
  return c;
}

/// Closed-form totals for S complete subjects over D distances.
inline ProtocolCounts expected_counts(std::size_t subjects, std::size_t distances) {
  const std::size_t cross = distances * (distances - 1) / 2;
  ProtocolCounts c;
  c.genuine = distances * 4 * subjects + cross * 8 * subjects;
  c.impostor = (distances + cross) * subjects * (subjects > 0 ? subjects - 1 : 0) * 4;
  c.combinations = distances + cross;
  return c;
}

inline std::vector<ComparisonPair> flatten(const std::vector<ProtocolSet>& sets) {
  std::vector<ComparisonPair> out;
  std::size_t n = 0;
  for (const auto& s : sets) n += s.size();
  out.reserve(n);
  for (const auto& s : sets) out.insert(out.end(), s.pairs.begin(), s.pairs.end());
  return out;
}

// ---------------------------------------------------------------------------
// Protocol CSV

inline constexpr const char* kProtocolHeader =
    "probe_subject,probe_session,probe_eye,di,gallery_subject,gallery_session,gallery_eye,dj,label";

inline void write_pair_fields(std::ostream& out, const ComparisonPair& p) {
  out << p.probe.subject_id << ',' << p.probe.session << ',' << to_char(p.probe.eye) << ','
      << p.di << ',' << p.gallery.subject_id << ',' << p.gallery.session << ','
      << to_char(p.gallery.eye) << ',' << p.dj << ',' << to_string(p.label);
}

inline void write_protocol(std::ostream& out, const std::vector<ComparisonPair>& pairs) {
  out << kProtocolHeader << '\n';
  for (const auto& p : pairs) {
    write_pair_fields(out, p);
    out << '\n';
  }
}

/// Parses the nine protocol columns starting at `fields[0]`.
inline ComparisonPair parse_pair_fields(std::span<const std::string_view> f,
                                        const std::string& where) {
  ComparisonPair p;
  const std::array<std::string_view, 4> probe{f[0], f[1], f[2], f[3]};
  const std::array<std::string_view, 4> gallery{f[4], f[5], f[6], f[7]};
  p.probe = parse_key_fields(probe, where);
  p.gallery = parse_key_fields(gallery, where);
  p.di = p.probe.distance;
  p.dj = p.gallery.distance;
  try {
    p.label = parse_label(f[8]);
  } catch (const ParseError& e) {
    throw ParseError(where + ": " + e.what());
  }
  const bool same = p.probe.subject_id == p.gallery.subject_id;
  if (same != (p.label == Label::genuine))
    throw ParseError(where + ": label disagrees with subject identities");
  return p;
}

inline std::vector<ComparisonPair> read_protocol(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kProtocolHeader)
    throw ParseError("line 1: expected protocol header");
  std::vector<ComparisonPair> pairs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto f = text::split(body, ',');
    const std::string where = "line " + std::to_string(lineno);
    if (f.size() != 9) throw ParseError(where + ": expected 9 columns");
    pairs.push_back(parse_pair_fields(f, where));
  }
  return pairs;
}

}  // namespace verikit
