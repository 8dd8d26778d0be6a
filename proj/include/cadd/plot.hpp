#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cadd/evaluation.hpp"
#include "cadd/image.hpp"

namespace cadd {

/// Line plot of error CDFs over [0, cutoff] on a white canvas with axes and a 0.05 grid.
/// Curves take colors from a fixed palette in order; the legend is a colored swatch column.
RgbImage render_cdf_plot(const std::vector<std::pair<std::string, CdfResult>>& curves, double cutoff = 0.2,
                         int width = 480, int height = 360);

/// Palette color used for curve i (RGB).
std::array<std::uint8_t, 3> plot_color(std::size_t i);

}  // namespace cadd
