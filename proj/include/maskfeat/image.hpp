#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "maskfeat/error.hpp"

namespace maskfeat {

/// Row-major height x width plane of one channel.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense channel-planar raster. Channel c occupies the contiguous range
/// [c*h*w, (c+1)*h*w) of data(), each plane stored row-major.
template <typename Scalar>
class Image {
 public:
  using PlaneMap = Eigen::Map<Plane<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const Plane<Scalar>>;

  Image() = default;

  Image(int width, int height, int channels) : width_(width), height_(height), channels_(channels) {
    if (width < 1 || height < 1) throw InvalidInput("image dimensions must be >= 1");
    if (channels != 1 && channels != 3) throw InvalidInput("image must have 1 or 3 channels");
    data_.setZero(Eigen::Index(width) * height * channels);
  }

  static Image constant(int width, int height, int channels, Scalar value) {
    Image img(width, height, channels);
    img.data_.setConstant(value);
    return img;
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  Eigen::Index plane_size() const noexcept { return Eigen::Index(width_) * height_; }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& data() noexcept { return data_; }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& data() const noexcept { return data_; }

  PlaneMap plane(int c) { return PlaneMap(data_.data() + c * plane_size(), height_, width_); }
  ConstPlaneMap plane(int c) const {
    return ConstPlaneMap(data_.data() + c * plane_size(), height_, width_);
  }

  Scalar& operator()(int c, int y, int x) { return data_[c * plane_size() + Eigen::Index(y) * width_ + x]; }
  Scalar operator()(int c, int y, int x) const {
    return data_[c * plane_size() + Eigen::Index(y) * width_ + x];
  }

  template <typename NewScalar>
  Image<NewScalar> cast() const {
    Image<NewScalar> out(width_, height_, channels_);
    out.data() = data_.template cast<NewScalar>();
    return out;
  }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> data_;
};

/// Ordered frames sharing one shape. An image is a clip with one frame.
template <typename Scalar>
class VideoClip {
 public:
  VideoClip() = default;

  explicit VideoClip(std::vector<Image<Scalar>> frames) : frames_(std::move(frames)) {
    if (frames_.empty()) throw InvalidInput("video clip needs at least one frame");
    for (const auto& f : frames_) {
      if (!f.same_shape(frames_.front())) throw InvalidInput("video clip frames differ in shape");
    }
  }

  static VideoClip single(Image<Scalar> frame) { return VideoClip(std::vector<Image<Scalar>>{std::move(frame)}); }

  int frame_count() const noexcept { return static_cast<int>(frames_.size()); }
  int width() const { return frames_.front().width(); }
  int height() const { return frames_.front().height(); }
  int channels() const { return frames_.front().channels(); }

  const Image<Scalar>& frame(int i) const { return frames_.at(static_cast<std::size_t>(i)); }
  const std::vector<Image<Scalar>>& frames() const noexcept { return frames_; }

 private:
  std::vector<Image<Scalar>> frames_;
};

/// Per-channel normalization statistics; every std entry is strictly positive.
template <typename Scalar>
struct ChannelStats {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> std;

  int channels() const noexcept { return static_cast<int>(mean.size()); }

  void validate() const {
    if (mean.size() != std.size() || mean.size() == 0) throw InvalidStats("mean/std channel counts differ");
    for (Eigen::Index c = 0; c < std.size(); ++c) {
      if (!(std[c] > Scalar(0))) throw InvalidStats("channel " + std::to_string(c) + " has non-positive std");
    }
  }
};

// BT.601 luma weights.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

template <typename Scalar>
Image<Scalar> to_grayscale(const Image<Scalar>& img) {
  if (img.channels() != 3) throw InvalidInput("to_grayscale expects 3 channels");
  Image<Scalar> out(img.width(), img.height(), 1);
  out.plane(0) = Scalar(kLumaR) * img.plane(0) + Scalar(kLumaG) * img.plane(1) + Scalar(kLumaB) * img.plane(2);
  return out;
}

/// Orthonormal opponent basis:
///   O1 = (R - G) / sqrt(2)
///   O2 = (R + G - 2B) / sqrt(6)
///   O3 = (R + G + B) / sqrt(3)
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> opponent_matrix() {
  using std::sqrt;
  const Scalar s2 = sqrt(Scalar(2)), s6 = sqrt(Scalar(6)), s3 = sqrt(Scalar(3));
  Eigen::Matrix<Scalar, 3, 3> m;
  m << 1 / s2, -1 / s2, 0,
       1 / s6, 1 / s6, -2 / s6,
       1 / s3, 1 / s3, 1 / s3;
  return m;
}

template <typename Scalar>
Image<Scalar> to_opponent(const Image<Scalar>& img) {
  if (img.channels() != 3) throw InvalidInput("to_opponent expects 3 channels");
  const auto m = opponent_matrix<Scalar>();
  Image<Scalar> out(img.width(), img.height(), 3);
  for (int o = 0; o < 3; ++o) {
    out.plane(o) = m(o, 0) * img.plane(0) + m(o, 1) * img.plane(1) + m(o, 2) * img.plane(2);
  }
  return out;
}

template <typename Scalar>
Image<Scalar> normalize_channels(const Image<Scalar>& img, const ChannelStats<Scalar>& stats) {
  stats.validate();
  if (stats.channels() != img.channels()) throw InvalidInput("stats channel count does not match image");
  Image<Scalar> out(img.width(), img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c) out.plane(c) = (img.plane(c) - stats.mean[c]) / stats.std[c];
  return out;
}

/// Inverse of normalize_channels.
template <typename Scalar>
Image<Scalar> denormalize_channels(const Image<Scalar>& img, const ChannelStats<Scalar>& stats) {
  stats.validate();
  if (stats.channels() != img.channels()) throw InvalidInput("stats channel count does not match image");
  Image<Scalar> out(img.width(), img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c) out.plane(c) = img.plane(c) * stats.std[c] + stats.mean[c];
  return out;
}

/// Per-channel mean and population standard deviation over every pixel of
/// every image. Images may differ in size but must agree on channel count.
template <typename Scalar>
ChannelStats<Scalar> compute_dataset_stats(std::span<const Image<Scalar>> imgs) {
  if (imgs.empty()) throw InvalidInput("compute_dataset_stats needs at least one image");
  const int channels = imgs.front().channels();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sum = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(channels);
  Eigen::Index count = 0;
  for (const auto& img : imgs) {
    if (img.channels() != channels) throw InvalidInput("images disagree on channel count");
    for (int c = 0; c < channels; ++c) sum[c] += img.plane(c).sum();
    count += img.plane_size();
  }
  ChannelStats<Scalar> stats;
  stats.mean = sum / Scalar(count);
  // Two-pass variance.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sq = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(channels);
  for (const auto& img : imgs) {
    for (int c = 0; c < channels; ++c) sq[c] += (img.plane(c) - stats.mean[c]).square().sum();
  }
  stats.std = (sq / Scalar(count)).cwiseSqrt();
  stats.validate();
  return stats;
}

template <typename Scalar>
ChannelStats<Scalar> compute_dataset_stats(const std::vector<Image<Scalar>>& imgs) {
  return compute_dataset_stats(std::span<const Image<Scalar>>(imgs));
}

using Imaged = Image<double>;
using VideoClipd = VideoClip<double>;
using ChannelStatsd = ChannelStats<double>;

}  // namespace maskfeat
