#include "maskfeat/masking.hpp"

#include <cmath>
#include <optional>

#include "maskfeat/error.hpp"

namespace maskfeat {

MaskMap::MaskMap(int t, int h, int w) : t_(t), h_(h), w_(w) {
  if (t < 1 || h < 1 || w < 1) throw InvalidInput("mask dimensions must be >= 1");
  bits_.setConstant(Eigen::Index(t) * h * w, false);
}

double MaskMap::frame_ratio(int ti) const {
  const Eigen::Index plane = Eigen::Index(h_) * w_;
  return static_cast<double>(bits_.segment(ti * plane, plane).count()) / static_cast<double>(plane);
}

std::vector<Eigen::Index> MaskMap::masked_indices() const {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(count()));
  for (Eigen::Index i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(i);
  }
  return out;
}

void MaskConfig::validate() const {
  if (!(target_ratio > 0.0 && target_ratio < 1.0)) throw InvalidInput("target_ratio must lie in (0, 1)");
  if (min_block_tokens < 1) throw InvalidInput("min_block_tokens must be >= 1");
  if (max_attempts < 1) throw InvalidInput("max_attempts must be >= 1");
  const auto [lo, hi] = aspect_range;
  if (!(lo > 0.0 && hi >= lo)) throw InvalidInput("aspect_range must be positive and ordered");
  if (std::abs(lo * hi - 1.0) > 1e-9) throw InvalidInput("aspect_range must be symmetric (low * high == 1)");
}

namespace {

// Smallest masked count whose fraction of `total` reaches `ratio`.
Eigen::Index required_count(double ratio, Eigen::Index total) {
  auto k = static_cast<Eigen::Index>(std::ceil(ratio * static_cast<double>(total)));
  while (k > 0 && static_cast<double>(k - 1) / static_cast<double>(total) >= ratio) --k;
  while (static_cast<double>(k) / static_cast<double>(total) < ratio) ++k;
  return k;
}

struct BlockShape {
  int h;
  int w;
};

std::optional<BlockShape> draw_block_shape(int h, int w, const MaskConfig& cfg, Eigen::Index remaining, Rng& rng) {
  const double min_area = cfg.min_block_tokens;
  const double max_area = std::max(min_area, static_cast<double>(remaining));
  const double area = rng.uniform(min_area, max_area);
  const double aspect =
      std::exp(rng.uniform(std::log(cfg.aspect_range.first), std::log(cfg.aspect_range.second)));
  const auto bh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
  const auto bw = static_cast<int>(std::lround(std::sqrt(area / aspect)));
  if (bh < 1 || bw < 1 || bh > h || bw > w) return std::nullopt;
  return BlockShape{bh, bw};
}

Eigen::Index paint(MaskMap& m, const MaskBox& box) {
  Eigen::Index added = 0;
  for (int ti = box.t0; ti < box.t0 + box.dt; ++ti) {
    for (int y = box.y0; y < box.y0 + box.dh; ++y) {
      for (int x = box.x0; x < box.x0 + box.dw; ++x) {
        bool& bit = m(ti, y, x);
        if (!bit) {
          bit = true;
          ++added;
        }
      }
    }
  }
  return added;
}

[[noreturn]] void throw_partial(const MaskMap& m, const MaskConfig& cfg) {
  throw PartialMask("mask generation stalled at ratio " + std::to_string(m.ratio()) + " below target " +
                        std::to_string(cfg.target_ratio) + " after " + std::to_string(cfg.max_attempts) +
                        " unproductive attempts",
                    m.ratio());
}

// Shared sampling loop. `temporal` selects cube sampling over t slices;
// otherwise blocks are placed in slice `slice` only.
void fill_blocks(MaskMap& m, const MaskConfig& cfg, Rng& rng, bool temporal, int slice, MaskTrace* trace) {
  const Eigen::Index total = temporal ? m.size() : Eigen::Index(m.h()) * m.w();
  const Eigen::Index need = required_count(cfg.target_ratio, total);
  Eigen::Index masked = 0;
  int unproductive = 0;
  while (masked < need) {
    if (unproductive >= cfg.max_attempts) throw_partial(m, cfg);
    MaskBox box;
    if (temporal) {
      box.t0 = static_cast<int>(rng.uniform_int(0, m.t() - 1));
      box.dt = static_cast<int>(rng.uniform_int(1, m.t() - box.t0));
    } else {
      box.t0 = slice;
      box.dt = 1;
    }
    // The footprint budget is spread over the cube's extent; otherwise a
    // long cube built on a block sized for the whole remainder overshoots
    // the target by up to a factor of t.
    const Eigen::Index budget = (need - masked + box.dt - 1) / box.dt;
    const auto shape = draw_block_shape(m.h(), m.w(), cfg, budget, rng);
    if (!shape) {
      ++unproductive;
      continue;
    }
    box.dh = shape->h;
    box.dw = shape->w;
    box.y0 = static_cast<int>(rng.uniform_int(0, m.h() - box.dh));
    box.x0 = static_cast<int>(rng.uniform_int(0, m.w() - box.dw));
    if (trace) trace->push_back(box);
    const Eigen::Index added = paint(m, box);
    if (added == 0) {
      ++unproductive;
    } else {
      unproductive = 0;
      masked += added;
    }
  }
}

void check_spatial(int h, int w, const MaskConfig& cfg) {
  cfg.validate();
  if (h < 1 || w < 1) throw InvalidInput("mask dimensions must be >= 1");
  if (Eigen::Index(h) * w < cfg.min_block_tokens) {
    throw InvalidInput("grid " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than min_block_tokens");
  }
}

}  // namespace

MaskMap block_mask_2d(int h, int w, const MaskConfig& cfg, Rng& rng, MaskTrace* trace) {
  check_spatial(h, w, cfg);
  MaskMap m(1, h, w);
  fill_blocks(m, cfg, rng, false, 0, trace);
  return m;
}

MaskMap frame_mask(int t, int h, int w, const MaskConfig& cfg, Rng& rng, MaskTrace* trace) {
  check_spatial(h, w, cfg);
  MaskMap m(t, h, w);
  for (int ti = 0; ti < t; ++ti) fill_blocks(m, cfg, rng, false, ti, trace);
  return m;
}

MaskMap tube_mask(int t, int h, int w, const MaskConfig& cfg, Rng& rng, MaskTrace* trace) {
  MaskTrace slice_trace;
  const MaskMap slice = block_mask_2d(h, w, cfg, rng, trace ? &slice_trace : nullptr);
  MaskMap m(t, h, w);
  const Eigen::Index plane = Eigen::Index(h) * w;
  for (int ti = 0; ti < t; ++ti) m.bits().segment(ti * plane, plane) = slice.bits();
  if (trace) {
    for (MaskBox box : slice_trace) {
      box.t0 = 0;
      box.dt = t;
      trace->push_back(box);
    }
  }
  return m;
}

MaskMap cube_mask(int t, int h, int w, const MaskConfig& cfg, Rng& rng, MaskTrace* trace) {
  cfg.validate();
  MaskMap m(t, h, w);
  if (m.size() < cfg.min_block_tokens) throw InvalidInput("token grid is smaller than min_block_tokens");
  fill_blocks(m, cfg, rng, true, 0, trace);
  return m;
}

MaskMap generate_mask(int t, int h, int w, const MaskConfig& cfg, MaskTrace* trace) {
  Rng rng(cfg.seed);
  switch (cfg.strategy) {
    case MaskStrategy::Block2D:
      if (t != 1) throw InvalidInput("block masking is 2-D; use frame, tube or cube for t > 1");
      return block_mask_2d(h, w, cfg, rng, trace);
    case MaskStrategy::Frame:
      return frame_mask(t, h, w, cfg, rng, trace);
    case MaskStrategy::Tube:
      return tube_mask(t, h, w, cfg, rng, trace);
    case MaskStrategy::Cube:
      return cube_mask(t, h, w, cfg, rng, trace);
  }
  throw InvalidInput("unknown mask strategy");
}

MaskMap resize_mask_nearest(const MaskMap& m, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1 || new_h % m.h() != 0 || new_w % m.w() != 0) {
    throw InvalidInput("resize target " + std::to_string(new_h) + "x" + std::to_string(new_w) +
                       " is not an integer multiple of " + std::to_string(m.h()) + "x" + std::to_string(m.w()));
  }
  const int fy = new_h / m.h();
  const int fx = new_w / m.w();
  MaskMap out(m.t(), new_h, new_w);
  for (int ti = 0; ti < m.t(); ++ti) {
    for (int y = 0; y < new_h; ++y) {
      for (int x = 0; x < new_w; ++x) out(ti, y, x) = m(ti, y / fy, x / fx);
    }
  }
  return out;
}

MaskStrategy parse_mask_strategy(const std::string& name) {
  if (name == "block") return MaskStrategy::Block2D;
  if (name == "frame") return MaskStrategy::Frame;
  if (name == "tube") return MaskStrategy::Tube;
  if (name == "cube") return MaskStrategy::Cube;
  throw InvalidInput("unknown mask strategy '" + name + "'");
}

std::string to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::Block2D: return "block";
    case MaskStrategy::Frame: return "frame";
    case MaskStrategy::Tube: return "tube";
    case MaskStrategy::Cube: return "cube";
  }
  return "unknown";
}

}  // namespace maskfeat
