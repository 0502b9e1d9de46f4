#pragma once

// EER tables (individual systems followed by fusion rows with bracketed
// relative change) and figure series / SVG line plots.

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "verikit/errors.hpp"
#include "verikit/evaluation.hpp"
#include "verikit/text.hpp"

namespace verikit::report {

struct EerRow {
  std::string name;
  bool fusion = false;
  std::map<std::string, double> eer_percent;  // column -> EER %
};

struct EerTable {
  std::vector<std::string> columns;  // first-appearance order
  std::vector<EerRow> rows;          // systems first, then fusions

  void add(const std::string& name, bool fusion, const std::string& column, double eer_percent) {
    if (std::find(columns.begin(), columns.end(), column) == columns.end())
      columns.push_back(column);
    auto it = std::find_if(rows.begin(), rows.end(), [&](const EerRow& r) { return r.name == name; });
    if (it == rows.end()) {
      rows.push_back({name, fusion, {}});
      it = rows.end() - 1;
    } else if (it->fusion != fusion) {
      throw UsageError("row '" + name + "' is listed both as a system and as a fusion");
    }
    it->eer_percent[column] = eer_percent;
    std::stable_partition(rows.begin(), rows.end(), [](const EerRow& r) { return !r.fusion; });
  }

  bool has_fusion() const {
    return std::any_of(rows.begin(), rows.end(), [](const EerRow& r) { return r.fusion; });
  }
};

/// Input CSV: name,kind,column,eer_percent with kind in {system, fusion}.
inline EerTable read_eer_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "name,kind,column,eer_percent")
    throw ParseError("line 1: expected header name,kind,column,eer_percent");
  EerTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto f = text::split(body, ',');
    const std::string where = "line " + std::to_string(lineno);
    if (f.size() != 4) throw ParseError(where + ": expected 4 columns");
    const auto kind = text::trim(f[1]);
    if (kind != "system" && kind != "fusion")
      throw ParseError(where + ": kind must be system or fusion");
    double v = 0.0;
    if (!text::parse_double(f[3], v) || !std::isfinite(v)) throw ParseError(where + ": bad EER");
    t.add(std::string(text::trim(f[0])), kind == "fusion", std::string(text::trim(f[2])), v);
  }
  return t;
}

inline void write_eer_table_input(std::ostream& out, const EerTable& t) {
  out << "name,kind,column,eer_percent\n";
  for (const auto& r : t.rows)
    for (const auto& c : t.columns)
      if (auto it = r.eer_percent.find(c); it != r.eer_percent.end())
        out << r.name << ',' << (r.fusion ? "fusion" : "system") << ',' << c << ','
            << text::format_double(it->second) << '\n';
}

/// "(-21.08%)"; a change that rounds to zero prints as "(+0.00%)".
inline std::string format_bracket(double change_percent) {
  double rounded = std::round(change_percent * 100.0) / 100.0;
  if (rounded == 0.0) rounded = 0.0;  // drops the sign of -0
  return std::string("(") + (rounded >= 0.0 ? "+" : "") + text::format_fixed(rounded, 2) + "%)";
}

struct ReportCell {
  double eer_percent = 0.0;
  std::optional<double> relative_change;  // fusion rows only
  bool best = false;
};

struct RenderedReport {
  std::vector<std::string> columns;
  std::vector<std::string> row_names;
  std::vector<bool> row_is_fusion;
  std::vector<std::vector<ReportCell>> cells;  // [row][column]
  std::map<std::string, std::string> baseline;  // column -> best system
  bool brackets = false;
};

inline RenderedReport build_report(const EerTable& t) {
  if (t.rows.empty()) throw UsageError("EER table is empty");
  RenderedReport r;
  r.columns = t.columns;
  r.brackets = t.has_fusion();
  std::map<std::string, double> best_individual;
  for (const auto& c : t.columns) {
    for (const auto& row : t.rows) {
      auto it = row.eer_percent.find(c);
      if (it == row.eer_percent.end())
        throw UsageError("row '" + row.name + "' has no value in column '" + c + "'");
      if (!row.fusion && (!best_individual.count(c) || it->second < best_individual[c])) {
        best_individual[c] = it->second;
        r.baseline[c] = row.name;
      }
    }
    if (r.brackets && !best_individual.count(c))
      throw UsageError("column '" + c + "' has no individual system to compare fusions against");
  }
  for (const auto& row : t.rows) {
    r.row_names.push_back(row.name);
    r.row_is_fusion.push_back(row.fusion);
    std::vector<ReportCell> cells;
    for (const auto& c : t.columns) {
      ReportCell cell;
      cell.eer_percent = row.eer_percent.at(c);
      if (row.fusion) cell.relative_change = relative_change(cell.eer_percent, best_individual.at(c));
      cells.push_back(cell);
    }
    r.cells.push_back(std::move(cells));
  }
  for (std::size_t c = 0; c < r.columns.size(); ++c) {
    double best = r.cells[0][c].eer_percent;
    for (const auto& row : r.cells) best = std::min(best, row[c].eer_percent);
    for (auto& row : r.cells) row[c].best = row[c].eer_percent == best;
  }
  return r;
}

inline void write_markdown(std::ostream& out, const RenderedReport& r) {
  out << "| network |";
  for (const auto& c : r.columns) out << ' ' << c << " |" << (r.brackets ? " |" : "");
  out << "\n|---|";
  for (std::size_t c = 0; c < r.columns.size(); ++c) out << (r.brackets ? "---:|---|" : "---:|");
  out << '\n';
  for (std::size_t i = 0; i < r.row_names.size(); ++i) {
    out << "| " << r.row_names[i] << " |";
    for (const auto& cell : r.cells[i]) {
      const auto v = text::format_fixed(cell.eer_percent, 2);
      out << ' ' << (cell.best ? "**" + v + "**" : v) << " |";
      if (r.brackets)
        out << ' ' << (cell.relative_change ? format_bracket(*cell.relative_change) : "-") << " |";
    }
    out << '\n';
  }
  if (r.brackets) {
    out << "\nBracketed values: relative EER change of each fusion vs. the best individual system";
    std::string sep = " (";
    for (const auto& [c, name] : r.baseline) {
      out << sep << c << ": " << name;
      sep = ", ";
    }
    out << ").\n";
  }
}

inline void write_csv(std::ostream& out, const RenderedReport& r) {
  out << "row,kind,column,eer_percent,relative_change_percent,best\n";
  for (std::size_t i = 0; i < r.row_names.size(); ++i)
    for (std::size_t c = 0; c < r.columns.size(); ++c) {
      const auto& cell = r.cells[i][c];
      out << r.row_names[i] << ',' << (r.row_is_fusion[i] ? "fusion" : "system") << ','
          << r.columns[c] << ',' << text::format_fixed(cell.eer_percent, 4) << ','
          << (cell.relative_change ? text::format_fixed(*cell.relative_change, 4) : "") << ','
          << (cell.best ? 1 : 0) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Figure series

struct FigureSeries {
  std::string x_name;
  std::vector<std::string> x;            // one label per row
  std::vector<std::string> names;        // one per series
  std::vector<std::vector<double>> y;    // [series][row]
};

/// One series per named grouped evaluation; rows follow the groups of the
/// first series, which every other series must match.
inline FigureSeries make_series(const std::vector<std::pair<std::string, std::vector<EvalResult>>>& evals,
                                const std::string& x_name,
                                const std::vector<std::string>& x_labels = {}) {
  if (evals.empty()) throw UsageError("no series to plot");
  FigureSeries fs;
  fs.x_name = x_name;
  const auto& first = evals.front().second;
  if (first.empty()) throw UsageError("series '" + evals.front().first + "' is empty");
  for (std::size_t i = 0; i < first.size(); ++i) {
    const int g = first[i].group_value;
    if (!x_labels.empty() && g >= 1 && static_cast<std::size_t>(g) <= x_labels.size())
      fs.x.push_back(x_labels[static_cast<std::size_t>(g) - 1]);
    else
      fs.x.push_back(std::to_string(g));
  }
  for (const auto& [name, results] : evals) {
    if (results.empty()) throw UsageError("series '" + name + "' is empty");
    if (results.size() != first.size())
      throw UsageError("series '" + name + "' has " + std::to_string(results.size()) +
                       " points, expected " + std::to_string(first.size()));
    std::vector<double> ys;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i].grouping != first[i].grouping)
        throw UsageError("series '" + name + "' groups do not match");
      ys.push_back(results[i].eer_percent());
    }
    fs.names.push_back(name);
    fs.y.push_back(std::move(ys));
  }
  return fs;
}

inline void write_series_csv(std::ostream& out, const FigureSeries& fs) {
  out << fs.x_name;
  for (const auto& n : fs.names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < fs.x.size(); ++i) {
    out << fs.x[i];
    for (const auto& ys : fs.y) out << ',' << text::format_double(ys[i]);
    out << '\n';
  }
}

namespace detail {
inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
inline std::string fx(double v) { return text::format_fixed(v, 2); }
inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}
}  // namespace detail

/// Self-contained SVG line plot of EER (%) per x label. Output depends only
/// on the series, so re-rendering is byte-identical.
inline void write_series_svg(std::ostream& out, const FigureSeries& fs, const std::string& title) {
  using detail::fx;
  constexpr double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  double ymax = 0.0;
  for (const auto& ys : fs.y)
    for (double v : ys) ymax = std::max(ymax, v);
  ymax = ymax > 0.0 ? ymax * 1.1 : 1.0;
  const std::size_t n = fs.x.size();
  auto px = [&](std::size_t i) { return L + (n > 1 ? pw * static_cast<double>(i) / (n - 1) : pw / 2); };
  auto py = [&](double v) { return T + ph * (1.0 - v / ymax); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fx(W) << "\" height=\"" << fx(H)
      << "\" viewBox=\"0 0 " << fx(W) << ' ' << fx(H) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << fx(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << detail::escape(title) << "</text>\n"
      << "<line x1=\"" << fx(L) << "\" y1=\"" << fx(T + ph) << "\" x2=\"" << fx(L + pw) << "\" y2=\""
      << fx(T + ph) << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << fx(L) << "\" y1=\"" << fx(T) << "\" x2=\"" << fx(L) << "\" y2=\""
      << fx(T + ph) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymax * k / 4.0;
    out << "<text x=\"" << fx(L - 6) << "\" y=\"" << fx(py(v) + 4)
        << "\" text-anchor=\"end\" font-size=\"10\">" << fx(v) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i)
    out << "<text x=\"" << fx(px(i)) << "\" y=\"" << fx(T + ph + 16)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << detail::escape(fs.x[i]) << "</text>\n";
  out << "<text x=\"" << fx(L + pw / 2) << "\" y=\"" << fx(H - 10)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << detail::escape(fs.x_name) << "</text>\n"
      << "<text x=\"14\" y=\"" << fx(T + ph / 2) << "\" font-size=\"11\" transform=\"rotate(-90 14 "
      << fx(T + ph / 2) << ")\" text-anchor=\"middle\">EER (%)</text>\n";
  for (std::size_t s = 0; s < fs.y.size(); ++s) {
    const char* color = detail::kPalette[s % std::size(detail::kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) out << (i ? " " : "") << fx(px(i)) << ',' << fx(py(fs.y[s][i]));
    out << "\"/>\n";
    const double ly = T + 14.0 * static_cast<double>(s) + 6;
    out << "<line x1=\"" << fx(L + pw + 12) << "\" y1=\"" << fx(ly) << "\" x2=\"" << fx(L + pw + 30)
        << "\" y2=\"" << fx(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << fx(L + pw + 34) << "\" y=\"" << fx(ly + 4) << "\" font-size=\"10\">"
        << detail::escape(fs.names[s]) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace verikit::report
