#include <gradflow/image.hpp>

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace gradflow {

namespace {

void pushU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void pushChunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
  pushU32(out, static_cast<std::uint32_t>(payload.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const auto crc = crc32(0, out.data() + start,
                         static_cast<uInt>(out.size() - start));
  pushU32(out, static_cast<std::uint32_t>(crc));
}

// Anchors of the viridis colormap; linearly interpolated.
constexpr std::uint8_t kViridis[][3] = {
    {68, 1, 84},    {71, 44, 122},  {59, 81, 139},  {44, 113, 142},
    {33, 144, 141}, {39, 173, 129}, {92, 200, 99},  {170, 220, 50},
    {253, 231, 37},
};
constexpr int kViridisN = sizeof(kViridis) / sizeof(kViridis[0]);

void viridisColor(double t, std::uint8_t* rgb) {
  t = std::clamp(t, 0.0, 1.0) * (kViridisN - 1);
  const int i = std::min(static_cast<int>(t), kViridisN - 2);
  const double f = t - i;
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<std::uint8_t>(
        std::lround((1.0 - f) * kViridis[i][c] + f * kViridis[i + 1][c]));
}

}  // namespace

void writePng(const std::filesystem::path& path, int width, int height,
              const std::vector<std::uint8_t>& rgb) {
  if (width < 1 || height < 1 ||
      rgb.size() != static_cast<size_t>(width) * height * 3)
    throw UsageError("writePng: bad image dimensions");

  // Raw scanlines, filter byte 0 per row.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const auto* row = rgb.data() + static_cast<size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
  }

  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> zdata(zlen);
  if (compress2(zdata.data(), &zlen, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("PNG deflate failed");
  zdata.resize(zlen);

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A,
                                   '\n'};
  std::vector<std::uint8_t> ihdr;
  pushU32(ihdr, static_cast<std::uint32_t>(width));
  pushU32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  pushChunk(png, "IHDR", ihdr);
  pushChunk(png, "IDAT", zdata);
  pushChunk(png, "IEND", {});

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(png.data()),
            static_cast<std::streamsize>(png.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void renderHeatmap(const DensityGrid& grid, const std::filesystem::path& path,
                   bool linear_scale) {
  const Index nx = grid.nx;
  const Index ny = grid.ny;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Index iy = 0; iy < ny; ++iy)
    for (Index ix = 0; ix < nx; ++ix) {
      if (grid.floored(ix, iy)) continue;
      const double v =
          linear_scale ? std::exp(grid.values(ix, iy)) : grid.values(ix, iy);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  const double span = (hi > lo) ? hi - lo : 1.0;

  std::vector<std::uint8_t> rgb(static_cast<size_t>(nx) * ny * 3);
  for (Index iy = 0; iy < ny; ++iy)
    for (Index ix = 0; ix < nx; ++ix) {
      const double v =
          linear_scale ? std::exp(grid.values(ix, iy)) : grid.values(ix, iy);
      const double t = (std::clamp(v, lo, hi) - lo) / span;
      // top pixel row = largest y
      const size_t px = (static_cast<size_t>(ny - 1 - iy) * nx + ix) * 3;
      viridisColor(t, &rgb[px]);
    }
  writePng(path, static_cast<int>(nx), static_cast<int>(ny), rgb);
}

void renderScatter(const Mat& points, const std::filesystem::path& path,
                   const GridBounds& bounds, int canvas) {
  std::vector<std::uint8_t> rgb(static_cast<size_t>(canvas) * canvas * 3,
                                255);
  const double sx = canvas / (bounds.xmax - bounds.xmin);
  const double sy = canvas / (bounds.ymax - bounds.ymin);
  for (Index i = 0; i < points.cols(); ++i) {
    const int px =
        static_cast<int>(std::floor((points(0, i) - bounds.xmin) * sx));
    const int py = canvas - 1 -
                   static_cast<int>(std::floor((points(1, i) - bounds.ymin) * sy));
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int x = px + dx;
        const int y = py + dy;
        if (x < 0 || x >= canvas || y < 0 || y >= canvas) continue;
        const size_t at = (static_cast<size_t>(y) * canvas + x) * 3;
        rgb[at] = 31;
        rgb[at + 1] = 58;
        rgb[at + 2] = 147;
      }
  }
  writePng(path, canvas, canvas, rgb);
}

}  // namespace gradflow
