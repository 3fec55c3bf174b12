#pragma once

// Minimal static line-plot writer. Output depends only on the inputs, so
// identical data gives byte-identical files.

#include <optional>
#include <string>
#include <vector>

namespace popform::cli {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool markers = false;
};

struct ShadedBand {
  std::vector<double> x;
  std::vector<double> lower;
  std::vector<double> upper;
  std::string color = "#1f77b4";
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<ShadedBand> bands;
  std::vector<Series> series;
  std::optional<double> threshold;  // horizontal dashed line
  std::string comment;              // emitted as an XML comment after the root tag
};

std::string render_svg(const Plot& plot);

// Categorical palette, cycled.
const std::string& palette(std::size_t i);

}  // namespace popform::cli
