#include "maskfeat/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "maskfeat/error.hpp"

namespace maskfeat {

Image<double> render_hog_glyphs(const HogFeatureMap<double>& map, int cell_px, bool signed_orientation) {
  if (cell_px < 3) throw InvalidInput("glyph cell size must be >= 3 pixels");
  Image<double> out(map.cells_x() * cell_px, map.cells_y() * cell_px, 1);

  // Bin weights summed over channels, [cell_y][cell_x][bin].
  Eigen::ArrayXd weights = Eigen::ArrayXd::Zero(Eigen::Index(map.cells_y()) * map.cells_x() * map.num_bins());
  for (int c = 0; c < map.channels(); ++c) {
    weights += map.data().segment(map.offset(c, 0, 0), weights.size()).array();
  }
  const double peak = weights.maxCoeff();
  if (!(peak > 0.0)) return out;

  const double range = signed_orientation ? 360.0 : 180.0;
  const double half = 0.5 * (cell_px - 1);
  for (int cy = 0; cy < map.cells_y(); ++cy) {
    for (int cx = 0; cx < map.cells_x(); ++cx) {
      const double ox = cx * cell_px + half;
      const double oy = cy * cell_px + half;
      for (int b = 0; b < map.num_bins(); ++b) {
        const double w = weights[(Eigen::Index(cy) * map.cells_x() + cx) * map.num_bins() + b] / peak;
        if (w <= 0.0) continue;
        const double theta = (b + 0.5) * range / map.num_bins() * std::numbers::pi / 180.0;
        const double dx = std::cos(theta), dy = std::sin(theta);
        const double len = w * half;
        const int steps = std::max(1, static_cast<int>(std::ceil(len * 4)));
        for (int s = -steps; s <= steps; ++s) {
          const double t = len * s / steps;
          const int x = static_cast<int>(std::lround(ox + t * dx));
          const int y = static_cast<int>(std::lround(oy + t * dy));
          if (x < 0 || y < 0 || x >= out.width() || y >= out.height()) continue;
          out(0, y, x) = std::max(out(0, y, x), w);
        }
      }
    }
  }
  return out;
}

Image<double> render_masked_input(const Image<double>& img, const MaskMap& mask, int patch_size, int slice) {
  if (patch_size < 1 || mask.h() * patch_size != img.height() || mask.w() * patch_size != img.width()) {
    throw InvalidInput("mask grid does not tile the image with the given patch size");
  }
  if (slice < 0 || slice >= mask.t()) throw InvalidInput("mask slice out of range");
  Image<double> out = img;
  for (int py = 0; py < mask.h(); ++py) {
    for (int px = 0; px < mask.w(); ++px) {
      if (!mask(slice, py, px)) continue;
      for (int c = 0; c < out.channels(); ++c) {
        out.plane(c).block(py * patch_size, px * patch_size, patch_size, patch_size).setConstant(0.5);
      }
    }
  }
  return out;
}

}  // namespace maskfeat
