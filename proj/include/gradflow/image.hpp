#pragma once

#include <gradflow/eval.hpp>
#include <gradflow/types.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gradflow {

/// Writes an 8-bit RGB PNG. Output bytes depend only on the pixel data.
void writePng(const std::filesystem::path& path, int width, int height,
              const std::vector<std::uint8_t>& rgb);

/// Viridis-mapped heatmap of the grid, one pixel per cell, value range
/// taken over non-floored cells. `linear_scale` maps exp(values) instead.
void renderHeatmap(const DensityGrid& grid, const std::filesystem::path& path,
                   bool linear_scale = false);

/// Points as 2x2-pixel dots on a white canvas.
void renderScatter(const Mat& points, const std::filesystem::path& path,
                   const GridBounds& bounds = {}, int canvas = 600);

}  // namespace gradflow
