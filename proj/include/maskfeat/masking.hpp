#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maskfeat/rng.hpp"

namespace maskfeat {

/// Boolean grid over token positions, indexed [t][y][x]; true = masked.
class MaskMap {
 public:
  MaskMap() = default;
  MaskMap(int t, int h, int w);

  int t() const noexcept { return t_; }
  int h() const noexcept { return h_; }
  int w() const noexcept { return w_; }
  Eigen::Index size() const noexcept { return bits_.size(); }

  Eigen::Index index(int ti, int y, int x) const noexcept {
    return (Eigen::Index(ti) * h_ + y) * w_ + x;
  }
  bool operator()(int ti, int y, int x) const { return bits_[index(ti, y, x)]; }
  bool& operator()(int ti, int y, int x) { return bits_[index(ti, y, x)]; }

  Eigen::Array<bool, Eigen::Dynamic, 1>& bits() noexcept { return bits_; }
  const Eigen::Array<bool, Eigen::Dynamic, 1>& bits() const noexcept { return bits_; }

  Eigen::Index count() const { return bits_.count(); }
  double ratio() const { return static_cast<double>(count()) / static_cast<double>(size()); }
  double frame_ratio(int ti) const;

  /// Flat indices of masked positions in ascending order.
  std::vector<Eigen::Index> masked_indices() const;

  friend bool operator==(const MaskMap& a, const MaskMap& b) {
    return a.t_ == b.t_ && a.h_ == b.h_ && a.w_ == b.w_ && (a.bits_ == b.bits_).all();
  }

 private:
  int t_ = 0;
  int h_ = 0;
  int w_ = 0;
  Eigen::Array<bool, Eigen::Dynamic, 1> bits_;
};

enum class MaskStrategy { Block2D, Frame, Tube, Cube };

struct MaskConfig {
  double target_ratio = 0.40;
  MaskStrategy strategy = MaskStrategy::Block2D;
  int min_block_tokens = 4;
  std::pair<double, double> aspect_range{0.3, 1.0 / 0.3};
  /// Consecutive block draws that add no new masked token before giving up.
  int max_attempts = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One sampled box, recorded before it is unioned into the mask.
struct MaskBox {
  int t0 = 0, y0 = 0, x0 = 0;
  int dt = 1, dh = 1, dw = 1;
};

/// Optional sink for the boxes a sampler draws.
using MaskTrace = std::vector<MaskBox>;

/// Union of random rectangles until the masked fraction reaches
/// cfg.target_ratio. Rectangle area is uniform in
/// [min_block, max(min_block, tokens still needed)], aspect ratio is
/// log-uniform over cfg.aspect_range, position uniform among placements
/// that fit. The final block may overshoot the target.
MaskMap block_mask_2d(int h, int w, const MaskConfig& cfg, Rng& rng, MaskTrace* trace = nullptr);

/// Independent block_mask_2d per temporal slice.
MaskMap frame_mask(int t, int h, int w, const MaskConfig& cfg, Rng& rng, MaskTrace* trace = nullptr);

/// One block_mask_2d replicated across all temporal slices.
MaskMap tube_mask(int t, int h, int w, const MaskConfig& cfg, Rng& rng, MaskTrace* trace = nullptr);

/// Union of random space-time boxes: a 2-D block at a uniform start time,
/// extended over a uniform number of frames in [1, t - start]. Start and
/// extent are drawn first; the block's area cap is the tokens still needed
/// divided by the extent (rounded up), so one cube cannot overshoot by more
/// than about extent * min_block tokens.
MaskMap cube_mask(int t, int h, int w, const MaskConfig& cfg, Rng& rng, MaskTrace* trace = nullptr);

/// Dispatches on cfg.strategy with a generator seeded from cfg.seed.
/// Block2D requires t == 1.
MaskMap generate_mask(int t, int h, int w, const MaskConfig& cfg, MaskTrace* trace = nullptr);

/// Nearest-neighbor upsampling by integer factors; each source bit becomes
/// a (new_h/h) x (new_w/w) block in every temporal slice.
MaskMap resize_mask_nearest(const MaskMap& m, int new_h, int new_w);

MaskStrategy parse_mask_strategy(const std::string& name);
std::string to_string(MaskStrategy s);

}  // namespace maskfeat
