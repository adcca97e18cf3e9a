#include "emkken/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "emkken/errors.hpp"
#include "emkken/io_util.hpp"

namespace emkken::plot {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 60;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 32;
constexpr int kMarginBottom = 44;

const char* kPalette[] = {"#1f6eb4", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e"};

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    bool first = true;
    for (const Series& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                first = false;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    auto sx = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
    auto sy = [&](double y) { return kMarginTop + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
    svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"14\">" << title << "</text>\n";
    // axes
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft << "\" y2=\""
        << kMarginTop + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\"" << kMarginLeft + plot_w
        << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"black\"/>\n";
    // ticks: 5 per axis
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        svg << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << kMarginTop + plot_h + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(xv) << "</text>\n";
        svg << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << fmt(sy(yv) + 3)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(yv) << "</text>\n";
    }
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label << "</text>\n";
    svg << "<text x=\"14\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
        << kHeight / 2 << ")\">" << y_label << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) svg << " ";
            svg << fmt(sx(s.x[i])) << "," << fmt(sy(s.y[i]));
        }
        svg << "\"/>\n";
        // single points still need visible output
        if (s.x.size() == 1)
            svg << "<circle cx=\"" << fmt(sx(s.x[0])) << "\" cy=\"" << fmt(sy(s.y[0])) << "\" r=\"3\" fill=\""
                << color << "\"/>\n";
        svg << "<text x=\"" << kMarginLeft + plot_w - 4 << "\" y=\"" << kMarginTop + 14 + 14 * static_cast<int>(si)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">"
            << s.name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::vector<PlotOutput> charts_from_csv(const std::string& csv_text) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("plot input: empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = io::split_csv_line(line);
    if (header.size() < 2) throw ParseError("plot input: need an x column plus at least one metric");

    const bool has_split = header.size() > 1 && header[1] == "split";
    const std::size_t first_metric = has_split ? 2 : 1;
    if (first_metric >= header.size()) throw ParseError("plot input: no metric columns");

    struct Row {
        double x;
        std::string split;
        std::vector<double> values;
    };
    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto fields = io::split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError("plot input: row " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                             " fields, header has " + std::to_string(header.size()));
        Row r;
        r.x = io::parse_double(fields[0], "csv line " + std::to_string(lineno));
        if (has_split) r.split = fields[1];
        for (std::size_t i = first_metric; i < fields.size(); ++i)
            r.values.push_back(io::parse_double(fields[i], "csv line " + std::to_string(lineno)));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ParseError("plot input: no data rows");

    std::vector<std::string> split_names;
    for (const Row& r : rows)
        if (std::find(split_names.begin(), split_names.end(), r.split) == split_names.end())
            split_names.push_back(r.split);

    std::vector<PlotOutput> outputs;
    for (std::size_t mi = first_metric; mi < header.size(); ++mi) {
        std::vector<Series> series;
        for (const std::string& split : split_names) {
            Series s;
            s.name = split.empty() ? header[mi] : split;
            for (const Row& r : rows)
                if (r.split == split) {
                    s.x.push_back(r.x);
                    s.y.push_back(r.values[mi - first_metric]);
                }
            series.push_back(std::move(s));
        }
        PlotOutput out;
        out.metric = header[mi];
        out.filename = header[mi] + ".svg";
        out.svg = line_chart_svg(header[mi], header[0], header[mi], series);
        outputs.push_back(std::move(out));
    }
    return outputs;
}

}  // namespace emkken::plot
