#include "ptmotion/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ptmotion::report {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

struct Range {
  double lo = 0.0, hi = 1.0;
};

// Smallest "nice" tick step (1/2/5 times a power of ten) giving <= target
// intervals over the range.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double m = raw / mag;
  if (m <= 1.0) return mag;
  if (m <= 2.0) return 2.0 * mag;
  if (m <= 5.0) return 5.0 * mag;
  return 10.0 * mag;
}

Range data_range(const std::vector<Series>& series, bool use_x) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Series& s : series)
    for (double v : use_x ? s.x : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(lo <= hi)) return {0.0, 1.0};  // no points at all
  if (lo == hi) {                      // flat data still needs a visible band
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg_plot(const std::vector<Series>& series, const PlotOptions& opt) {
  for (const Series& s : series)
    if (s.x.size() != s.y.size())
      throw Error("plot series \"" + s.label + "\" has mismatched x/y lengths: " +
                  std::to_string(s.x.size()) + " vs " + std::to_string(s.y.size()));

  const double w = opt.width, h = opt.height;
  const double ml = 64.0, mr = 16.0, mt = opt.title.empty() ? 14.0 : 34.0, mb = 46.0;
  const double pw = w - ml - mr, ph = h - mt - mb;
  const Range rx = data_range(series, true);
  const Range ry = data_range(series, false);

  auto sx = [&](double x) { return ml + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto sy = [&](double y) { return mt + ph - (y - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) +
         "\" height=\"" + std::to_string(opt.height) + "\" viewBox=\"0 0 " +
         std::to_string(opt.width) + " " + std::to_string(opt.height) + "\">\n";
  if (!opt.provenance.empty()) svg += "  <desc>" + xml_escape(opt.provenance) + "</desc>\n";
  svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    svg += "  <text x=\"" + num(w / 2) +
           "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
           xml_escape(opt.title) + "</text>\n";

  // Grid lines and tick labels on nice-step positions.
  const double step_x = nice_step(rx.hi - rx.lo, 6);
  const double step_y = nice_step(ry.hi - ry.lo, 5);
  svg += "  <g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
  for (double t = std::ceil(rx.lo / step_x) * step_x; t <= rx.hi + 1e-12 * step_x;
       t += step_x) {
    const double px = sx(t);
    svg += "    <line x1=\"" + num(px) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(px) +
           "\" y2=\"" + num(mt + ph) + "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    svg += "    <text x=\"" + num(px) + "\" y=\"" + num(mt + ph + 16) +
           "\" text-anchor=\"middle\">" + tick_label(t) + "</text>\n";
  }
  for (double t = std::ceil(ry.lo / step_y) * step_y; t <= ry.hi + 1e-12 * step_y;
       t += step_y) {
    const double py = sy(t);
    svg += "    <line x1=\"" + num(ml) + "\" y1=\"" + num(py) + "\" x2=\"" + num(ml + pw) +
           "\" y2=\"" + num(py) + "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    svg += "    <text x=\"" + num(ml - 6) + "\" y=\"" + num(py + 4) +
           "\" text-anchor=\"end\">" + tick_label(t) + "</text>\n";
  }
  svg += "  </g>\n";

  // Axes frame and labels.
  svg += "  <rect x=\"" + num(ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(pw) +
         "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  svg += "  <g font-family=\"sans-serif\" font-size=\"12\" fill=\"#111\">\n";
  if (!opt.x_label.empty())
    svg += "    <text x=\"" + num(ml + pw / 2) + "\" y=\"" + num(h - 8) +
           "\" text-anchor=\"middle\">" + xml_escape(opt.x_label) + "</text>\n";
  if (!opt.y_label.empty())
    svg += "    <text x=\"14\" y=\"" + num(mt + ph / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " + num(mt + ph / 2) +
           ")\">" + xml_escape(opt.y_label) + "</text>\n";
  svg += "  </g>\n";

  bool any_label = false;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kPalette[k % kPaletteSize];
    if (s.lines && s.x.size() > 1) {
      std::string pts;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!pts.empty()) pts += ' ';
        pts += num(sx(s.x[i])) + "," + num(sy(s.y[i]));
      }
      svg += "  <polyline fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    }
    if (s.markers || s.x.size() == 1) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        svg += "  <circle cx=\"" + num(sx(s.x[i])) + "\" cy=\"" + num(sy(s.y[i])) +
               "\" r=\"2.5\" fill=\"" + std::string(color) + "\"/>\n";
    }
    if (!s.label.empty()) any_label = true;
  }

  if (any_label) {
    double ly = mt + 14.0;
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (series[k].label.empty()) continue;
      const char* color = kPalette[k % kPaletteSize];
      svg += "  <rect x=\"" + num(ml + pw - 130) + "\" y=\"" + num(ly - 9) +
             "\" width=\"10\" height=\"10\" fill=\"" + std::string(color) + "\"/>\n";
      svg += "  <text x=\"" + num(ml + pw - 115) + "\" y=\"" + num(ly) +
             "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#111\">" +
             xml_escape(series[k].label) + "</text>\n";
      ly += 15.0;
    }
  }

  svg += "</svg>\n";
  return svg;
}

namespace {

std::string md_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '|') out += "\\|";
    else out += c;
  }
  return out;
}

}  // namespace

std::string markdown_table(const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows) {
  if (header.empty()) throw Error("markdown table needs at least one column");
  std::string out = "|";
  for (const std::string& h : header) out += " " + md_escape(h) + " |";
  out += "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out += " --- |";
  out += "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw Error("markdown table row has " + std::to_string(row.size()) +
                  " cells, header has " + std::to_string(header.size()));
    out += "|";
    for (const std::string& cell : row) out += " " + md_escape(cell) + " |";
    out += "\n";
  }
  return out;
}

std::string csv_table(const std::vector<std::string>& comments,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  if (header.empty()) throw Error("csv table needs at least one column");
  std::string out;
  for (const std::string& c : comments) out += "# " + c + "\n";
  auto emit_row = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find(',') != std::string::npos)
        throw Error("csv cell contains a comma: \"" + cells[i] + "\"");
      if (i > 0) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  emit_row(header);
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw Error("csv row has " + std::to_string(row.size()) + " cells, header has " +
                  std::to_string(header.size()));
    emit_row(row);
  }
  return out;
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace ptmotion::report
