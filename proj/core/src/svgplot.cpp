#include "dnadiff/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dnadiff/tensor.hpp"

namespace dnadiff {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Frame {
    double x0, x1, y0, y1;      // data ranges
    double px0, px1, py0, py1;  // pixel ranges (py0 = bottom)
    double X(double x) const {
        return x1 == x0 ? (px0 + px1) / 2 : px0 + (x - x0) / (x1 - x0) * (px1 - px0);
    }
    double Y(double y) const {
        return y1 == y0 ? (py0 + py1) / 2 : py0 - (y - y0) / (y1 - y0) * (py0 - py1);
    }
};

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

void check_series(const std::vector<double>& x, const std::vector<PlotSeries>& series) {
    if (x.empty()) throw ValueError("svg chart: empty x axis");
    if (series.empty()) throw ValueError("svg chart: no series");
    for (const auto& s : series)
        if (s.y.size() != x.size())
            throw ShapeError("svg chart: series '" + s.name + "' length " + std::to_string(s.y.size()) +
                             " does not match x length " + std::to_string(x.size()));
}

Frame make_frame(const std::vector<double>& x, const std::vector<PlotSeries>& series, int width, int height,
                 bool include_zero) {
    Frame f;
    f.x0 = *std::min_element(x.begin(), x.end());
    f.x1 = *std::max_element(x.begin(), x.end());
    f.y0 = include_zero ? 0.0 : series[0].y[0];
    f.y1 = series[0].y[0];
    for (const auto& s : series)
        for (double v : s.y) {
            f.y0 = std::min(f.y0, v);
            f.y1 = std::max(f.y1, v);
        }
    if (f.y1 == f.y0) f.y1 = f.y0 + 1.0;
    f.px0 = 60;
    f.px1 = width - 20;
    f.py0 = height - 40;
    f.py1 = 30;
    return f;
}

void emit_header(std::ostream& os, const std::string& title, const Frame& f, int width, int height) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << (f.px0 + f.px1) / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
       << "</text>\n";
    // axes
    os << "<line x1=\"" << f.px0 << "\" y1=\"" << f.py0 << "\" x2=\"" << f.px1 << "\" y2=\"" << f.py0
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << f.px0 << "\" y1=\"" << f.py0 << "\" x2=\"" << f.px0 << "\" y2=\"" << f.py1
       << "\" stroke=\"black\"/>\n";
    // ticks: 5 per axis
    for (int t = 0; t <= 4; ++t) {
        double xv = f.x0 + (f.x1 - f.x0) * t / 4.0;
        double yv = f.y0 + (f.y1 - f.y0) * t / 4.0;
        os << "<text x=\"" << f.X(xv) << "\" y=\"" << f.py0 + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
           << fmt(xv) << "</text>\n";
        os << "<text x=\"" << f.px0 - 6 << "\" y=\"" << f.Y(yv) + 3
           << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(yv) << "</text>\n";
    }
}

void emit_legend(std::ostream& os, const std::vector<PlotSeries>& series, const Frame& f) {
    double lx = f.px0 + 10, ly = f.py1 + 6;
    for (size_t i = 0; i < series.size(); ++i) {
        const char* color = kColors[i % 6];
        os << "<rect x=\"" << lx << "\" y=\"" << ly + 14.0 * static_cast<double>(i) << "\" width=\"10\" height=\"10\" fill=\""
           << color << "\"/>\n";
        os << "<text x=\"" << lx + 14 << "\" y=\"" << ly + 14.0 * static_cast<double>(i) + 9 << "\" font-size=\"11\">"
           << series[i].name << "</text>\n";
    }
}

}  // namespace

void svg_line_chart(const std::string& path, const std::string& title, const std::vector<double>& x,
                    const std::vector<PlotSeries>& series, int width, int height) {
    check_series(x, series);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    Frame f = make_frame(x, series, width, height, false);
    emit_header(os, title, f, width, height);
    for (size_t i = 0; i < series.size(); ++i) {
        os << "<polyline fill=\"none\" stroke=\"" << kColors[i % 6] << "\" stroke-width=\"1.5\" points=\"";
        for (size_t j = 0; j < x.size(); ++j) os << f.X(x[j]) << ',' << f.Y(series[i].y[j]) << ' ';
        os << "\"/>\n";
    }
    emit_legend(os, series, f);
    os << "</svg>\n";
    if (!os) throw IoError("write failed for '" + path + "'");
}

void svg_bar_chart(const std::string& path, const std::string& title, const std::vector<double>& x,
                   const std::vector<PlotSeries>& series, int width, int height) {
    check_series(x, series);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    Frame f = make_frame(x, series, width, height, true);
    emit_header(os, title, f, width, height);
    double slot = (f.px1 - f.px0) / static_cast<double>(x.size());
    double bar = std::max(1.0, slot * 0.8);
    for (size_t i = 0; i < series.size(); ++i) {
        const char* color = kColors[i % 6];
        for (size_t j = 0; j < x.size(); ++j) {
            double cx = f.px0 + slot * (static_cast<double>(j) + 0.5);
            double top = f.Y(series[i].y[j]);
            double base = f.Y(0.0);
            if (top > base) std::swap(top, base);
            os << "<rect x=\"" << cx - bar / 2 << "\" y=\"" << top << "\" width=\"" << bar << "\" height=\""
               << std::max(0.0, base - top) << "\" fill=\"" << color << "\" fill-opacity=\"0.55\"/>\n";
        }
    }
    emit_legend(os, series, f);
    os << "</svg>\n";
    if (!os) throw IoError("write failed for '" + path + "'");
}

}  // namespace dnadiff
