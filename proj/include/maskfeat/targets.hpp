#pragma once

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

#include "maskfeat/error.hpp"
#include "maskfeat/hog.hpp"
#include "maskfeat/image.hpp"
#include "maskfeat/masking.hpp"

namespace maskfeat {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PatchSpec {
  int patch_size = 16;
  int cube_frames = 2;  // 1 for images

  void validate() const {
    if (patch_size < 1) throw InvalidInput("patch_size must be >= 1");
    if (cube_frames < 1) throw InvalidInput("cube_frames must be >= 1");
  }

  /// Index of the temporally centered frame within a cube.
  int center_offset() const noexcept { return cube_frames / 2; }
};

enum class TargetKind { Pixel, Hog };
enum class TargetDesign { CenterPatch, FullCube };

inline std::string to_string(TargetKind k) { return k == TargetKind::Pixel ? "pixel" : "hog"; }

struct TargetComponent {
  TargetKind kind = TargetKind::Hog;
  double weight = 1.0;
};

/// A single component is a plain target; several form a multi-task target
/// whose components are kept separate and combined at loss time.
template <typename Scalar>
struct TargetSpec {
  std::vector<TargetComponent> components{TargetComponent{}};
  HogConfig hog;
  ChannelStats<Scalar> stats;
  TargetDesign design = TargetDesign::CenterPatch;

  void validate() const {
    if (components.empty()) throw InvalidInput("target spec needs at least one component");
    for (const auto& c : components) {
      if (!(c.weight >= 0.0)) throw InvalidInput("target weights must be >= 0");
    }
  }
};

/// Flattened cube vectors, one row per token; row = (ti * h + y) * w + x.
/// Each row is ordered (time, channel, row, col).
template <typename Scalar>
struct TokenGrid {
  int t = 0;
  int h = 0;
  int w = 0;
  RowMatrix<Scalar> tokens;

  Eigen::Index size() const noexcept { return Eigen::Index(t) * h * w; }
  Eigen::Index dim() const noexcept { return tokens.cols(); }
};

template <typename Scalar>
struct TargetSet {
  TargetKind kind = TargetKind::Hog;
  double weight = 1.0;
  RowMatrix<Scalar> values;  // one row per masked token, in masked_indices order

  Eigen::Index dim() const noexcept { return values.cols(); }
};

template <typename Scalar>
struct TrainingSample {
  TokenGrid<Scalar> tokens;
  MaskMap mask;
  std::vector<Eigen::Index> masked_indices;
  std::vector<TargetSet<Scalar>> targets;
};

namespace detail {

inline void check_token_divisibility(int frames, int height, int width, const PatchSpec& spec) {
  spec.validate();
  if (height % spec.patch_size != 0 || width % spec.patch_size != 0) {
    throw InvalidInput("frame " + std::to_string(width) + "x" + std::to_string(height) +
                       " is not divisible by patch size " + std::to_string(spec.patch_size));
  }
  if (frames % spec.cube_frames != 0) {
    throw InvalidInput(std::to_string(frames) + " frames are not divisible by cube_frames " +
                       std::to_string(spec.cube_frames));
  }
}

// Writes the (channel, row, col) pixels of one patch into `out`.
template <typename Scalar, typename Row>
void copy_patch(const Image<Scalar>& img, int patch, int py, int px, Row&& out) {
  Eigen::Index k = 0;
  for (int c = 0; c < img.channels(); ++c) {
    const auto block = img.plane(c).block(py * patch, px * patch, patch, patch);
    for (int y = 0; y < patch; ++y) {
      out.segment(k, patch) = block.row(y).matrix();
      k += patch;
    }
  }
}

}  // namespace detail

template <typename Scalar>
TokenGrid<Scalar> tokenize(const VideoClip<Scalar>& clip, const PatchSpec& spec, const ChannelStats<Scalar>& stats) {
  detail::check_token_divisibility(clip.frame_count(), clip.height(), clip.width(), spec);
  const int p = spec.patch_size;
  TokenGrid<Scalar> grid;
  grid.t = clip.frame_count() / spec.cube_frames;
  grid.h = clip.height() / p;
  grid.w = clip.width() / p;
  const Eigen::Index frame_len = Eigen::Index(clip.channels()) * p * p;
  grid.tokens.resize(grid.size(), frame_len * spec.cube_frames);
  for (int f = 0; f < clip.frame_count(); ++f) {
    const Image<Scalar> norm = normalize_channels(clip.frame(f), stats);
    const int ti = f / spec.cube_frames;
    const Eigen::Index col = (f % spec.cube_frames) * frame_len;
    for (int py = 0; py < grid.h; ++py) {
      for (int px = 0; px < grid.w; ++px) {
        const Eigen::Index row = (Eigen::Index(ti) * grid.h + py) * grid.w + px;
        detail::copy_patch(norm, p, py, px, grid.tokens.row(row).segment(col, frame_len));
      }
    }
  }
  return grid;
}

/// Per-token target dimension for one component.
template <typename Scalar>
int target_dim(const TargetComponent& component, const PatchSpec& pspec, const TargetSpec<Scalar>& tspec,
               int channels) {
  const int frames = tspec.design == TargetDesign::FullCube ? pspec.cube_frames : 1;
  if (component.kind == TargetKind::Hog) return frames * hog_target_dim(tspec.hog, pspec.patch_size);
  return frames * channels * pspec.patch_size * pspec.patch_size;
}

/// Tokenizes the clip and collects the targets of masked tokens. Targets
/// are taken from the cube's center frame (index cube_frames / 2) or, for
/// FullCube, concatenated over the cube's frames in temporal order. HOG
/// targets come from a whole-frame feature map split into patches.
template <typename Scalar>
TrainingSample<Scalar> assemble_targets(const VideoClip<Scalar>& clip, const MaskMap& mask, const PatchSpec& pspec,
                                        const TargetSpec<Scalar>& tspec) {
  tspec.validate();
  TrainingSample<Scalar> sample;
  sample.tokens = tokenize(clip, pspec, tspec.stats);
  const auto& grid = sample.tokens;
  if (mask.t() != grid.t || mask.h() != grid.h || mask.w() != grid.w) {
    throw InvalidInput("mask " + std::to_string(mask.t()) + "x" + std::to_string(mask.h()) + "x" +
                       std::to_string(mask.w()) + " does not match token grid " + std::to_string(grid.t) + "x" +
                       std::to_string(grid.h) + "x" + std::to_string(grid.w));
  }
  sample.mask = mask;
  sample.masked_indices = mask.masked_indices();

  const int p = pspec.patch_size;
  const bool full_cube = tspec.design == TargetDesign::FullCube;
  const int frames_per_target = full_cube ? pspec.cube_frames : 1;

  // Frames each masked token needs, keyed by frame index, computed once.
  std::map<int, PatchGrid<Scalar>> hog_cache;
  auto hog_patches = [&](int f) -> const PatchGrid<Scalar>& {
    auto it = hog_cache.find(f);
    if (it == hog_cache.end()) {
      const auto map = hog_dense(clip.frame(f), tspec.hog);
      it = hog_cache.emplace(f, split_into_patch_targets(map, p, tspec.hog)).first;
    }
    return it->second;
  };
  std::map<int, Image<Scalar>> norm_cache;
  auto normalized = [&](int f) -> const Image<Scalar>& {
    auto it = norm_cache.find(f);
    if (it == norm_cache.end()) it = norm_cache.emplace(f, normalize_channels(clip.frame(f), tspec.stats)).first;
    return it->second;
  };

  for (const auto& component : tspec.components) {
    TargetSet<Scalar> set;
    set.kind = component.kind;
    set.weight = component.weight;
    const int dim = target_dim(component, pspec, tspec, clip.channels());
    const int per_frame = dim / frames_per_target;
    set.values.resize(static_cast<Eigen::Index>(sample.masked_indices.size()), dim);
    for (std::size_t i = 0; i < sample.masked_indices.size(); ++i) {
      const Eigen::Index token = sample.masked_indices[i];
      const int ti = static_cast<int>(token / (Eigen::Index(grid.h) * grid.w));
      const int py = static_cast<int>((token / grid.w) % grid.h);
      const int px = static_cast<int>(token % grid.w);
      for (int k = 0; k < frames_per_target; ++k) {
        const int f = ti * pspec.cube_frames + (full_cube ? k : pspec.center_offset());
        auto dst = set.values.row(Eigen::Index(i)).segment(Eigen::Index(k) * per_frame, per_frame);
        if (component.kind == TargetKind::Hog) {
          dst = hog_patches(f).vectors.row(Eigen::Index(py) * grid.w + px);
        } else {
          detail::copy_patch(normalized(f), p, py, px, dst);
        }
      }
    }
    sample.targets.push_back(std::move(set));
  }
  return sample;
}

/// Replaces the rows of masked tokens with `embedding`.
template <typename Scalar, typename Derived>
RowMatrix<Scalar> apply_mask_tokens(const RowMatrix<Scalar>& tokens, const MaskMap& mask,
                                    const Eigen::MatrixBase<Derived>& embedding) {
  if (mask.size() != tokens.rows()) throw InvalidInput("mask size does not match token count");
  if (embedding.size() != tokens.cols()) throw InvalidInput("mask embedding length does not match token length");
  RowMatrix<Scalar> out = tokens;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask.bits()[i]) out.row(i) = embedding.transpose();
  }
  return out;
}

}  // namespace maskfeat
