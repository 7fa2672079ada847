#pragma once

#include "ptmotion/types.hpp"

#include <string>
#include <vector>

namespace ptmotion::report {

// One plotted data set; x and y must have equal lengths.
struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::string label;
  bool lines = true;     // connect points with a polyline
  bool markers = false;  // draw a small circle at every point
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 900;
  int height = 460;
  // Embedded verbatim in a <desc> element so every plot file carries its
  // provenance (config hash, seed) without affecting rendering.
  std::string provenance;
};

// Self-contained SVG document: axes with tick labels, the series in a small
// fixed palette, and a legend when any series is labelled. Dependency-free
// line/scatter output, not a plotting framework.
std::string render_svg_plot(const std::vector<Series>& series, const PlotOptions& opt);

// GitHub-style pipe table. Cells are used verbatim except '|' which is
// escaped; the caller does any number formatting.
std::string markdown_table(const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows);

// Comma-separated table with one leading "# ..." comment line per entry of
// `comments` (used for provenance stamps). Cells must not contain commas.
std::string csv_table(const std::vector<std::string>& comments,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

// Fixed-point formatting helper shared by report writers ("%.3f" style).
std::string format_fixed(double v, int decimals);

}  // namespace ptmotion::report
