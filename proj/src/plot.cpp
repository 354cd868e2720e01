#include "semcom/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semcom {

namespace {

struct Color {
    float r, g, b;
};

constexpr Color kPalette[] = {
    {0.85f, 0.20f, 0.15f}, {0.15f, 0.35f, 0.80f}, {0.10f, 0.60f, 0.25f},
    {0.80f, 0.55f, 0.10f}, {0.55f, 0.20f, 0.70f}, {0.10f, 0.60f, 0.60f},
};

void putPixel(Tensor& img, int x, int y, const Color& c) {
    if (x < 0 || y < 0 || x >= img.w() || y >= img.h()) return;
    img(x, y, 0) = c.r;
    img(x, y, 1) = c.g;
    img(x, y, 2) = c.b;
}

void drawLine(Tensor& img, int x0, int y0, int x1, int y1, const Color& c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        putPixel(img, x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void drawMarker(Tensor& img, int x, int y, const Color& c) {
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) putPixel(img, x + dx, y + dy, c);
}

}  // namespace

void plotLines(const std::filesystem::path& path, const std::vector<PlotSeries>& series, const std::string& title,
               int width, int height) {
    (void)title;  // encoded in the file name; no text rasterizer
    Tensor img(width, height, 3);
    img.flat().setConstant(1.0f);

    const int mx = 40, my = 24;  // plot-area margins
    const int px0 = mx, py0 = my, px1 = width - mx, py1 = height - my;
    const Color frame{0.25f, 0.25f, 0.25f};
    drawLine(img, px0, py0, px1, py0, frame);
    drawLine(img, px0, py1, px1, py1, frame);
    drawLine(img, px0, py0, px0, py1, frame);
    drawLine(img, px1, py0, px1, py1, frame);

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!std::isfinite(xmin)) {
        savePng(path, img);
        return;
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;

    auto toX = [&](double v) {
        return px0 + static_cast<int>(std::lround((v - xmin) / (xmax - xmin) * (px1 - px0)));
    };
    auto toY = [&](double v) {
        return py1 - static_cast<int>(std::lround((v - ymin) / (ymax - ymin) * (py1 - py0)));
    };

    for (size_t si = 0; si < series.size(); ++si) {
        const Color c = kPalette[si % std::size(kPalette)];
        const auto& s = series[si];
        for (size_t i = 0; i + 1 < s.x.size(); ++i)
            drawLine(img, toX(s.x[i]), toY(s.y[i]), toX(s.x[i + 1]), toY(s.y[i + 1]), c);
        for (size_t i = 0; i < s.x.size(); ++i) drawMarker(img, toX(s.x[i]), toY(s.y[i]), c);
        // legend swatch
        const int ly = py0 + 6 + static_cast<int>(si) * 8;
        for (int dx = 0; dx < 12; ++dx) putPixel(img, px0 + 6 + dx, ly, c);
    }
    savePng(path, img);
}

}  // namespace semcom
