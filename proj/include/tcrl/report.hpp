#pragma once

#include "tcrl/core.hpp"
#include "tcrl/optim.hpp"

#include <string>
#include <vector>

namespace tcrl {

std::string report_json(const EvalReport& report, double threshold);

/// Header row then one row per line, decimal text with '.' radix.
std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);
std::string matrix_csv(const Matrix& m);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Static SVG line chart. `log_y` plots log10 of positive values.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series, bool log_y = false);

/// Static SVG heatmap on a symmetric diverging scale around zero.
std::string svg_heatmap(const std::string& title, const Matrix& m);

std::string loss_plot(const std::vector<LossRecord>& curve);

}  // namespace tcrl
