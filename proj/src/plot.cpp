#include "cadd/plot.hpp"

#include <algorithm>
#include <cmath>

namespace cadd {

namespace {

void put(RgbImage& img, int x, int y, const std::array<std::uint8_t, 3>& c) {
  if (!img.in_bounds(x, y)) return;
  for (int ch = 0; ch < 3; ++ch) img(x, y, ch) = c[static_cast<std::size_t>(ch)];
}

void line(RgbImage& img, double x0, double y0, double x1, double y1, const std::array<std::uint8_t, 3>& c, int thick) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = -thick / 2; dy <= thick / 2; ++dy)
      for (int dx = -thick / 2; dx <= thick / 2; ++dx) put(img, x + dx, y + dy, c);
  }
}

}  // namespace

std::array<std::uint8_t, 3> plot_color(std::size_t i) {
  static const std::array<std::array<std::uint8_t, 3>, 6> palette = {
      {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}, {140, 86, 75}}};
  return palette[i % palette.size()];
}

RgbImage render_cdf_plot(const std::vector<std::pair<std::string, CdfResult>>& curves, double cutoff, int width,
                         int height) {
  RgbImage img(width, height, 3);
  std::fill(img.values().begin(), img.values().end(), std::uint8_t{255});
  const int left = 40, right = width - 60, top = 20, bottom = height - 30;
  auto px = [&](double t) { return left + (right - left) * t / cutoff; };
  auto py = [&](double f) { return bottom - (bottom - top) * f; };
  const std::array<std::uint8_t, 3> grid{225, 225, 225}, axis{0, 0, 0};
  for (double t = 0.05; t < cutoff + 1e-9; t += 0.05) line(img, px(t), top, px(t), bottom, grid, 1);
  for (double f = 0.25; f <= 1.0 + 1e-9; f += 0.25) line(img, left, py(f), right, py(f), grid, 1);
  line(img, left, bottom, right, bottom, axis, 1);
  line(img, left, top, left, bottom, axis, 1);

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto color = plot_color(i);
    const CdfResult& cdf = curves[i].second;
    const int samples = right - left;
    double prev_x = px(0.0), prev_y = py(cdf.fraction_within(0.0));
    for (int s = 1; s <= samples; ++s) {
      const double t = cutoff * s / samples;
      const double x = px(t), y = py(cdf.fraction_within(t));
      line(img, prev_x, prev_y, x, y, color, 2);
      prev_x = x;
      prev_y = y;
    }
    const int sy = top + 4 + static_cast<int>(i) * 14;
    for (int y = sy; y < sy + 10; ++y)
      for (int x = right + 15; x < right + 35; ++x) put(img, x, y, color);
  }
  return img;
}

}  // namespace cadd
