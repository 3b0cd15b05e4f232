#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "maskfeat/error.hpp"
#include "maskfeat/image.hpp"

namespace maskfeat {

enum class HogNorm { None, L1, L2 };
enum class ColorMode { Gray, RGB, Opponent };

struct HogConfig {
  int num_bins = 9;
  int cell_size = 8;
  HogNorm norm = HogNorm::L2;
  ColorMode color_mode = ColorMode::RGB;
  bool signed_orientation = false;  // false: orientations folded into [0, 180)
  double epsilon = 1e-10;

  void validate() const {
    if (num_bins < 1) throw InvalidInput("num_bins must be >= 1");
    if (cell_size < 1) throw InvalidInput("cell_size must be >= 1");
    if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be > 0");
  }

  int channels() const noexcept { return color_mode == ColorMode::Gray ? 1 : 3; }
  double orientation_range() const noexcept { return signed_orientation ? 360.0 : 180.0; }
};

/// Dense per-cell orientation histograms, indexed [channel][cell_y][cell_x][bin].
template <typename Scalar>
class HogFeatureMap {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  HogFeatureMap() = default;
  HogFeatureMap(int channels, int cells_y, int cells_x, int num_bins)
      : channels_(channels), cells_y_(cells_y), cells_x_(cells_x), num_bins_(num_bins) {
    data_.setZero(Eigen::Index(channels) * cells_y * cells_x * num_bins);
  }

  int channels() const noexcept { return channels_; }
  int cells_y() const noexcept { return cells_y_; }
  int cells_x() const noexcept { return cells_x_; }
  int num_bins() const noexcept { return num_bins_; }

  Eigen::Index offset(int c, int cy, int cx) const noexcept {
    return ((Eigen::Index(c) * cells_y_ + cy) * cells_x_ + cx) * num_bins_;
  }

  Scalar& operator()(int c, int cy, int cx, int bin) { return data_[offset(c, cy, cx) + bin]; }
  Scalar operator()(int c, int cy, int cx, int bin) const { return data_[offset(c, cy, cx) + bin]; }

  auto histogram(int c, int cy, int cx) { return data_.segment(offset(c, cy, cx), num_bins_); }
  auto histogram(int c, int cy, int cx) const { return data_.segment(offset(c, cy, cx), num_bins_); }

  Vector& data() noexcept { return data_; }
  const Vector& data() const noexcept { return data_; }

 private:
  int channels_ = 0;
  int cells_y_ = 0;
  int cells_x_ = 0;
  int num_bins_ = 0;
  Vector data_;
};

template <typename Scalar>
struct Gradients {
  Plane<Scalar> gx;
  Plane<Scalar> gy;
};

/// Centered differences [-1, 0, 1] with replicate padding at the borders.
template <typename Derived>
Gradients<typename Derived::Scalar> plane_gradients(const Eigen::ArrayBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index h = p.rows(), w = p.cols();
  if (h < 2 || w < 2) throw InvalidInput("gradients need width >= 2 and height >= 2");
  Gradients<Scalar> g{Plane<Scalar>(h, w), Plane<Scalar>(h, w)};
  if (w > 2) g.gx.middleCols(1, w - 2) = p.rightCols(w - 2) - p.leftCols(w - 2);
  g.gx.col(0) = p.col(1) - p.col(0);
  g.gx.col(w - 1) = p.col(w - 1) - p.col(w - 2);
  if (h > 2) g.gy.middleRows(1, h - 2) = p.bottomRows(h - 2) - p.topRows(h - 2);
  g.gy.row(0) = p.row(1) - p.row(0);
  g.gy.row(h - 1) = p.row(h - 1) - p.row(h - 2);
  return g;
}

template <typename Scalar>
Gradients<Scalar> compute_gradients(const Image<Scalar>& img) {
  if (img.channels() != 1) throw InvalidInput("compute_gradients expects a single-channel image");
  return plane_gradients(img.plane(0));
}

/// Applies the configured color transform; the result has cfg.channels() planes.
template <typename Scalar>
Image<Scalar> hog_input_channels(const Image<Scalar>& img, const HogConfig& cfg) {
  switch (cfg.color_mode) {
    case ColorMode::Gray:
      if (img.channels() == 1) return img;
      return to_grayscale(img);
    case ColorMode::RGB:
      if (img.channels() != 3) throw InvalidInput("RGB HOG needs a 3-channel image");
      return img;
    case ColorMode::Opponent:
      if (img.channels() != 3) throw InvalidInput("opponent HOG needs a 3-channel image");
      return to_opponent(img);
  }
  throw InvalidInput("unknown color mode");
}

namespace detail {

inline void check_cell_divisibility(int width, int height, const HogConfig& cfg) {
  if (width % cfg.cell_size != 0 || height % cfg.cell_size != 0) {
    throw InvalidInput("image " + std::to_string(width) + "x" + std::to_string(height) +
                       " is not divisible by cell size " + std::to_string(cfg.cell_size));
  }
}

}  // namespace detail

/// Unnormalized per-cell histograms. Each pixel votes its gradient magnitude
/// into the two bins whose centers bracket its orientation, linearly
/// weighted by angular distance; bins wrap around the orientation range.
template <typename Scalar>
HogFeatureMap<Scalar> hog_histograms(const Image<Scalar>& img, const HogConfig& cfg) {
  cfg.validate();
  detail::check_cell_divisibility(img.width(), img.height(), cfg);
  const Image<Scalar> src = hog_input_channels(img, cfg);

  const int cell = cfg.cell_size;
  const int bins = cfg.num_bins;
  const int cells_y = img.height() / cell;
  const int cells_x = img.width() / cell;
  const Scalar range = Scalar(cfg.orientation_range());
  const Scalar bins_per_degree = Scalar(bins) / range;
  const Scalar to_degrees = Scalar(180) / std::numbers::pi_v<Scalar>;

  HogFeatureMap<Scalar> map(src.channels(), cells_y, cells_x, bins);
  for (int c = 0; c < src.channels(); ++c) {
    const Gradients<Scalar> g = plane_gradients(src.plane(c));
    const Plane<Scalar> magnitude = (g.gx.square() + g.gy.square()).sqrt();
    const Plane<Scalar> angle =
        g.gy.binaryExpr(g.gx, [](Scalar y, Scalar x) { return std::atan2(y, x); }) * to_degrees;

    for (int y = 0; y < img.height(); ++y) {
      const int cy = y / cell;
      for (int x = 0; x < img.width(); ++x) {
        const Scalar m = magnitude(y, x);
        if (m == Scalar(0)) continue;
        Scalar theta = angle(y, x);
        if (theta < 0) theta += range;
        if (theta >= range) theta -= range;
        // Position in bin units relative to the first bin center.
        const Scalar pos = theta * bins_per_degree - Scalar(0.5);
        const Scalar floor_pos = std::floor(pos);
        const Scalar frac = pos - floor_pos;
        int lo = static_cast<int>(floor_pos) % bins;
        if (lo < 0) lo += bins;
        const int hi = (lo + 1) % bins;
        const Eigen::Index base = map.offset(c, cy, x / cell);
        map.data()[base + lo] += m * (Scalar(1) - frac);
        map.data()[base + hi] += m * frac;
      }
    }
  }
  return map;
}

/// Normalizes every cell histogram in place as v / (||v|| + epsilon).
template <typename Scalar>
void normalize_cells(HogFeatureMap<Scalar>& map, HogNorm norm, double epsilon) {
  if (norm == HogNorm::None) return;
  for (int c = 0; c < map.channels(); ++c) {
    for (int cy = 0; cy < map.cells_y(); ++cy) {
      for (int cx = 0; cx < map.cells_x(); ++cx) {
        auto h = map.histogram(c, cy, cx);
        const Scalar n = norm == HogNorm::L1 ? h.template lpNorm<1>() : h.norm();
        h /= n + Scalar(epsilon);
      }
    }
  }
}

/// Dense HOG over a whole image. Output dims: cfg.channels() x H/cell x W/cell x bins.
template <typename Scalar>
HogFeatureMap<Scalar> hog_dense(const Image<Scalar>& img, const HogConfig& cfg) {
  HogFeatureMap<Scalar> map = hog_histograms(img, cfg);
  normalize_cells(map, cfg.norm, cfg.epsilon);
  return map;
}

inline int hog_target_dim(const HogConfig& cfg, int patch_size) {
  cfg.validate();
  if (patch_size < 1 || patch_size % cfg.cell_size != 0) {
    throw InvalidInput("patch size " + std::to_string(patch_size) + " is not divisible by cell size " +
                       std::to_string(cfg.cell_size));
  }
  const int per_side = patch_size / cfg.cell_size;
  return per_side * per_side * cfg.num_bins * cfg.channels();
}

/// One flattened target vector per patch; row index = patch_y * cols + patch_x.
template <typename Scalar>
struct PatchGrid {
  int rows = 0;
  int cols = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> vectors;
};

/// Splits a whole-image feature map into per-patch target vectors. Each vector
/// is laid out channel-major, then cell row-major within the patch, then bin.
template <typename Scalar>
PatchGrid<Scalar> split_into_patch_targets(const HogFeatureMap<Scalar>& map, int patch_size, const HogConfig& cfg) {
  const int dim = hog_target_dim(cfg, patch_size);
  if (map.num_bins() != cfg.num_bins || map.channels() != cfg.channels()) {
    throw InvalidInput("feature map does not match HOG config");
  }
  const int per_side = patch_size / cfg.cell_size;
  if (map.cells_y() % per_side != 0 || map.cells_x() % per_side != 0) {
    throw InvalidInput("image is not divisible by patch size " + std::to_string(patch_size));
  }
  PatchGrid<Scalar> grid;
  grid.rows = map.cells_y() / per_side;
  grid.cols = map.cells_x() / per_side;
  grid.vectors.resize(Eigen::Index(grid.rows) * grid.cols, dim);
  const int bins = map.num_bins();
  for (int py = 0; py < grid.rows; ++py) {
    for (int px = 0; px < grid.cols; ++px) {
      auto row = grid.vectors.row(Eigen::Index(py) * grid.cols + px);
      Eigen::Index k = 0;
      for (int c = 0; c < map.channels(); ++c) {
        for (int dy = 0; dy < per_side; ++dy) {
          for (int dx = 0; dx < per_side; ++dx, k += bins) {
            row.segment(k, bins) = map.histogram(c, py * per_side + dy, px * per_side + dx).transpose();
          }
        }
      }
    }
  }
  return grid;
}

/// Inverse of split_into_patch_targets: scatters per-patch vectors back into
/// a dense map. Rows flagged false in `present` (if given) stay zero.
template <typename Scalar>
HogFeatureMap<Scalar> merge_patch_targets(const PatchGrid<Scalar>& grid, int patch_size, const HogConfig& cfg,
                                          const std::vector<bool>* present = nullptr) {
  const int dim = hog_target_dim(cfg, patch_size);
  if (grid.vectors.cols() != dim || grid.vectors.rows() != Eigen::Index(grid.rows) * grid.cols) {
    throw InvalidInput("patch grid does not match HOG config");
  }
  const int per_side = patch_size / cfg.cell_size;
  const int bins = cfg.num_bins;
  HogFeatureMap<Scalar> map(cfg.channels(), grid.rows * per_side, grid.cols * per_side, bins);
  for (int py = 0; py < grid.rows; ++py) {
    for (int px = 0; px < grid.cols; ++px) {
      const Eigen::Index idx = Eigen::Index(py) * grid.cols + px;
      if (present && !(*present)[static_cast<std::size_t>(idx)]) continue;
      const auto row = grid.vectors.row(idx);
      Eigen::Index k = 0;
      for (int c = 0; c < cfg.channels(); ++c) {
        for (int dy = 0; dy < per_side; ++dy) {
          for (int dx = 0; dx < per_side; ++dx, k += bins) {
            map.histogram(c, py * per_side + dy, px * per_side + dx) = row.segment(k, bins).transpose();
          }
        }
      }
    }
  }
  return map;
}

}  // namespace maskfeat
