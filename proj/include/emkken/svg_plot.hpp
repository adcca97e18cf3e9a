#pragma once

#include <string>
#include <vector>

namespace emkken::plot {

struct Series {
    std::string name;  // legend label (e.g. split name)
    std::vector<double> x;
    std::vector<double> y;
};

/// Hand-emitted SVG line chart; no rendering dependency, byte-deterministic
/// for identical inputs.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

struct PlotOutput {
    std::string metric;    // column name
    std::string filename;  // <metric>.svg
    std::string svg;
};

/// Parses a history (epoch,split,metric...) or sweep (axis_value,metric...)
/// CSV and renders one chart per metric column. Throws ParseError on
/// malformed input.
std::vector<PlotOutput> charts_from_csv(const std::string& csv_text);

}  // namespace emkken::plot
