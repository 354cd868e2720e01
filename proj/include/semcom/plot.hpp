#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semcom/data.hpp"

namespace semcom {

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

// Static line chart: white canvas, framed plot area, per-series colors,
// square markers at data points, legend swatches top-left. Deterministic.
void plotLines(const std::filesystem::path& path, const std::vector<PlotSeries>& series, const std::string& title,
               int width = 480, int height = 320);

}  // namespace semcom
