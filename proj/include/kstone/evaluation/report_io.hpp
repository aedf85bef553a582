#pragma once

// Report files.
//
// report.tsv    "# kstone-report v1" header, "# key=value" metadata lines,
//               one column-name line, then one row per evaluated cell:
//               axis values, per-class precision/recall/F1, weighted
//               precision/recall/F1, accuracy, sample count.
// confusion.txt one K x K integer grid per cell (rows = true class).
// summary.txt   plain-text digest.
// Plots are static SVG.

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kstone/dataset.hpp"
#include "kstone/error.hpp"
#include "kstone/evaluation/ablation.hpp"
#include "kstone/evaluation/metrics.hpp"
#include "kstone/evaluation/pca.hpp"

namespace kstone {

inline constexpr std::string_view kReportMagic = "# kstone-report v1";
inline constexpr std::string_view kEmbeddingMagic = "# kstone-embedding v1";

struct ReportRow {
  std::vector<std::pair<std::string, std::string>> axes;
  EvalReport report;
};

inline std::vector<ReportRow> rows_from_cells(const std::vector<AblationCell>& cells) {
  std::vector<ReportRow> rows;
  for (const auto& c : cells) {
    rows.push_back({{{"combo", to_string(c.combo)},
                     {"patch_side", std::to_string(c.patch_side)},
                     {"view", std::string(to_string(c.view))}},
                    c.report});
  }
  return rows;
}

namespace detail {
inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string axis_label(const ReportRow& row) {
  std::string out;
  for (const auto& [k, v] : row.axes) out += (out.empty() ? "" : " ") + k + "=" + v;
  return out.empty() ? "all" : out;
}
}  // namespace detail

// Metadata shared by every row goes to the header; the rest is per row.
inline std::string format_report_table(const std::vector<ReportRow>& rows,
                                       const std::map<std::string, std::string>& extra = {}) {
  if (rows.empty()) fail(errc::kInvalidArgument, "report has no rows");
  const auto& classes = rows.front().report.classes;
  for (const auto& r : rows) {
    if (r.report.classes != classes) fail(errc::kInvalidArgument, "report rows use different class lists");
    if (r.axes.size() != rows.front().axes.size()) fail(errc::kInvalidArgument, "report rows use different axes");
  }
  std::map<std::string, std::string> meta = extra;
  for (const auto& [k, v] : rows.front().report.metadata) {
    bool shared = true;
    for (const auto& r : rows) {
      auto it = r.report.metadata.find(k);
      if (it == r.report.metadata.end() || it->second != v) shared = false;
    }
    if (shared) meta.emplace(k, v);
  }
  std::string out(kReportMagic);
  out += "\n";
  for (const auto& [k, v] : meta) out += "# " + k + "=" + v + "\n";

  std::vector<std::string> cols;
  for (const auto& [k, v] : rows.front().axes) cols.push_back(k);
  for (const auto& c : classes) {
    for (const char* m : {"precision", "recall", "f1"}) cols.push_back(c + "_" + m);
  }
  for (const char* m : {"weighted_precision", "weighted_recall", "weighted_f1", "accuracy", "n"}) cols.emplace_back(m);
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "\t" : "") + cols[i];
  out += "\n";

  for (const auto& r : rows) {
    std::vector<std::string> f;
    for (const auto& [k, v] : r.axes) f.push_back(v);
    for (const auto& m : r.report.per_class) {
      f.push_back(detail::fixed6(m.precision));
      f.push_back(detail::fixed6(m.recall));
      f.push_back(detail::fixed6(m.f1));
    }
    f.push_back(detail::fixed6(r.report.weighted_precision));
    f.push_back(detail::fixed6(r.report.weighted_recall));
    f.push_back(detail::fixed6(r.report.weighted_f1));
    f.push_back(detail::fixed6(r.report.accuracy));
    f.push_back(std::to_string(r.report.total));
    for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "\t" : "") + f[i];
    out += "\n";
  }
  return out;
}

struct ReportTable {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> columns;
  std::vector<std::map<std::string, std::string>> rows;
};

inline ReportTable parse_report_table(std::string_view text, const std::string& origin = "<report>") {
  ReportTable t;
  std::size_t line_no = 0;
  bool first = true;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const auto line = detail::trim_cr(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (first) {
      if (line != kReportMagic) fail(errc::kParse, origin + ":1: missing report header");
      first = false;
      continue;
    }
    if (detail::is_blank(line)) continue;
    if (line.starts_with("# ")) {
      const auto kv = line.substr(2);
      const auto eq = kv.find('=');
      if (eq != std::string_view::npos) t.metadata[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
      continue;
    }
    auto fields = detail::split(line, '\t');
    if (t.columns.empty()) {
      t.columns = std::move(fields);
      continue;
    }
    if (fields.size() != t.columns.size()) {
      fail(errc::kParse, origin + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(t.columns.size()) + " fields");
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < fields.size(); ++i) row[t.columns[i]] = fields[i];
    t.rows.push_back(std::move(row));
  }
  if (first) fail(errc::kParse, origin + ": empty report");
  return t;
}

inline std::string format_confusion(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += "## " + detail::axis_label(r) + "\n";
    out += "true\\pred";
    for (const auto& c : r.report.classes) out += "\t" + c;
    out += "\n";
    for (std::size_t t = 0; t < r.report.classes.size(); ++t) {
      out += r.report.classes[t];
      for (std::size_t p = 0; p < r.report.classes.size(); ++p) {
        out += "\t" + std::to_string(r.report.confusion[t][p]);
      }
      out += "\n";
    }
  }
  return out;
}

inline std::string format_summary(const std::vector<ReportRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    const auto& rep = r.report;
    out += detail::axis_label(r) + "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "  weighted P %.4f  R %.4f  F1 %.4f  accuracy %.4f  (n = %zu)\n",
                  rep.weighted_precision, rep.weighted_recall, rep.weighted_f1, rep.accuracy, rep.total);
    out += buf;
    for (std::size_t c = 0; c < rep.classes.size(); ++c) {
      const auto& m = rep.per_class[c];
      std::snprintf(buf, sizeof buf, "  %-4s P %.4f  R %.4f  F1 %.4f  support %zu\n", rep.classes[c].c_str(),
                    m.precision, m.recall, m.f1, m.support);
      out += buf;
    }
    for (std::size_t f = 0; f < rep.folds.size(); ++f) {
      std::snprintf(buf, sizeof buf, "  fold %zu: weighted F1 %.4f  accuracy %.4f  (n = %zu)\n", f,
                    rep.folds[f].weighted_f1, rep.folds[f].accuracy, rep.folds[f].total);
      out += buf;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding export: header with the explained-variance ratios, then
// CLASS<TAB>VIEW<TAB>c1<TAB>c2<TAB>c3 per sample.

inline std::string format_embedding(const EmbeddingExport& e) {
  std::string out(kEmbeddingMagic);
  out += " method=pca out_dim=" + std::to_string(e.out_dim) + " explained=";
  for (std::size_t c = 0; c < e.out_dim; ++c) out += (c ? "," : "") + detail::fixed6(e.explained_variance[c]);
  out += " rank=" + std::to_string(e.rank) + (e.rank_deficient ? " rank_deficient=1" : " rank_deficient=0");
  out += "\n";
  for (std::size_t i = 0; i < e.coords.rows; ++i) {
    out += i < e.classes.size() ? std::string(to_string(e.classes[i])) : "-";
    out += "\t";
    out += i < e.views.size() ? std::string(to_string(e.views[i])) : "-";
    for (std::size_t c = 0; c < e.out_dim; ++c) out += "\t" + format_component(e.coords(i, c));
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG plots

namespace detail {
inline const char* series_colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return palette[i % 7];
}

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Frame {
  double left = 60, top = 30, width = 520, height = 300;
  double y(double v) const { return top + height * (1.0 - std::clamp(v, 0.0, 1.0)); }
};

inline std::string svg_open(const std::string& title, const Frame& f) {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.left + f.width + 170) +
                    "\" height=\"" + num(f.top + f.height + 60) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<text x=\"" + num(f.left) + "\" y=\"18\" font-size=\"13\">" + svg_escape(title) + "</text>\n";
  for (int t = 0; t <= 10; t += 2) {
    const double v = t / 10.0;
    out += "<line x1=\"" + num(f.left) + "\" x2=\"" + num(f.left + f.width) + "\" y1=\"" + num(f.y(v)) +
           "\" y2=\"" + num(f.y(v)) + "\" stroke=\"#ddd\"/>\n";
    out += "<text x=\"" + num(f.left - 8) + "\" y=\"" + num(f.y(v) + 4) + "\" text-anchor=\"end\">" +
           num(v) + "</text>\n";
  }
  out += "<rect x=\"" + num(f.left) + "\" y=\"" + num(f.top) + "\" width=\"" + num(f.width) + "\" height=\"" +
         num(f.height) + "\" fill=\"none\" stroke=\"#333\"/>\n";
  return out;
}
}  // namespace detail

// Accuracy against patch side, one line per (view, combo) series.
inline std::string svg_patch_size_plot(const std::vector<AblationCell>& cells) {
  std::vector<int> sides;
  std::vector<std::string> series;
  for (const auto& c : cells) {
    if (std::find(sides.begin(), sides.end(), c.patch_side) == sides.end()) sides.push_back(c.patch_side);
    const auto name = std::string(to_string(c.view)) + " " + to_string(c.combo);
    if (std::find(series.begin(), series.end(), name) == series.end()) series.push_back(name);
  }
  std::sort(sides.begin(), sides.end());
  detail::Frame f;
  auto x_of = [&](std::size_t i) {
    return sides.size() == 1 ? f.left + f.width / 2 : f.left + 20 + (f.width - 40) * i / (sides.size() - 1);
  };
  std::string out = detail::svg_open("Accuracy by patch side", f);
  for (std::size_t i = 0; i < sides.size(); ++i) {
    out += "<text x=\"" + detail::num(x_of(i)) + "\" y=\"" + detail::num(f.top + f.height + 16) +
           "\" text-anchor=\"middle\">" + std::to_string(sides[i]) + "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string pts;
    for (std::size_t i = 0; i < sides.size(); ++i) {
      for (const auto& c : cells) {
        if (c.patch_side != sides[i] || std::string(to_string(c.view)) + " " + to_string(c.combo) != series[s]) {
          continue;
        }
        pts += detail::num(x_of(i)) + "," + detail::num(f.y(c.report.accuracy)) + " ";
        out += "<circle cx=\"" + detail::num(x_of(i)) + "\" cy=\"" + detail::num(f.y(c.report.accuracy)) +
               "\" r=\"3\" fill=\"" + detail::series_colour(s) + "\"/>\n";
      }
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::series_colour(s)) + "\" points=\"" + pts +
           "\"/>\n";
    out += "<text x=\"" + detail::num(f.left + f.width + 10) + "\" y=\"" + detail::num(f.top + 12 + 14.0 * s) +
           "\" fill=\"" + detail::series_colour(s) + "\">" + detail::svg_escape(series[s]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

// Per-class F1 bars, one group per row.
inline std::string svg_class_bars(const std::vector<ReportRow>& rows) {
  if (rows.empty()) fail(errc::kInvalidArgument, "nothing to plot");
  const auto& classes = rows.front().report.classes;
  detail::Frame f;
  std::string out = detail::svg_open("Per-class F1", f);
  const double group_w = f.width / static_cast<double>(rows.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(classes.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double gx = f.left + group_w * r + group_w * 0.1;
    for (std::size_t c = 0; c < classes.size() && c < rows[r].report.per_class.size(); ++c) {
      const double v = rows[r].report.per_class[c].f1;
      out += "<rect x=\"" + detail::num(gx + bar_w * c) + "\" y=\"" + detail::num(f.y(v)) + "\" width=\"" +
             detail::num(bar_w * 0.9) + "\" height=\"" + detail::num(f.top + f.height - f.y(v)) + "\" fill=\"" +
             detail::series_colour(c) + "\"/>\n";
    }
    out += "<text x=\"" + detail::num(gx + group_w * 0.4) + "\" y=\"" + detail::num(f.top + f.height + 16) +
           "\" text-anchor=\"middle\" font-size=\"9\">" + detail::svg_escape(detail::axis_label(rows[r])) +
           "</text>\n";
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    out += "<text x=\"" + detail::num(f.left + f.width + 10) + "\" y=\"" + detail::num(f.top + 12 + 14.0 * c) +
           "\" fill=\"" + detail::series_colour(c) + "\">" + detail::svg_escape(classes[c]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace kstone
