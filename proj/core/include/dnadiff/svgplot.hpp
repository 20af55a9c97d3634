#pragma once

// Tiny dependency-free SVG chart emission for histogram and metric-curve
// artifacts.

#include <string>
#include <vector>

namespace dnadiff {

struct PlotSeries {
    std::string name;
    std::vector<double> y;
};

// Polyline chart; all series share the x axis and must match its length.
void svg_line_chart(const std::string& path, const std::string& title, const std::vector<double>& x,
                    const std::vector<PlotSeries>& series, int width = 820, int height = 460);

// Grouped bar chart (semi-transparent overlap for 2+ series).
void svg_bar_chart(const std::string& path, const std::string& title, const std::vector<double>& x,
                   const std::vector<PlotSeries>& series, int width = 820, int height = 460);

}  // namespace dnadiff
