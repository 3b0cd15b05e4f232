#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "maskfeat/image.hpp"
#include "maskfeat/rng.hpp"

namespace maskfeat {

/// Oriented sinusoidal bars used by the toy training loop.
///
/// Every image picks one of four orientations uniformly; its wave vector is
/// (1,0), (1,1), (0,1) or (1,-1) cycles per `period` pixels, so with the
/// default period of 8 the pattern repeats exactly every 8 pixels along both
/// axes. Intensity is 0.5 + 0.35 sin(2 pi (kx x + ky y) / period) in every
/// channel plus independent uniform noise in [-noise, noise].
struct OrientedBarsConfig {
  int count = 256;
  int size = 32;
  int period = 8;
  double noise = 0.05;
  std::uint64_t seed = 7;
};

struct OrientedBar {
  Image<double> image;
  int orientation = 0;  // 0: 0 deg, 1: 45 deg, 2: 90 deg, 3: 135 deg (gradient direction)
};

inline std::vector<OrientedBar> oriented_bars(const OrientedBarsConfig& cfg) {
  static constexpr int kWave[4][2] = {{1, 0}, {1, 1}, {0, 1}, {1, -1}};
  Rng rng(cfg.seed);
  std::vector<OrientedBar> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (int n = 0; n < cfg.count; ++n) {
    OrientedBar bar;
    bar.orientation = static_cast<int>(rng.uniform_int(0, 3));
    bar.image = Image<double>(cfg.size, cfg.size, 3);
    const auto [kx, ky] = kWave[bar.orientation];
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < cfg.size; ++y) {
        for (int x = 0; x < cfg.size; ++x) {
          const double phase = 2.0 * std::numbers::pi * double(kx * x + ky * y) / double(cfg.period);
          bar.image(c, y, x) = 0.5 + 0.35 * std::sin(phase) + rng.uniform(-cfg.noise, cfg.noise);
        }
      }
    }
    out.push_back(std::move(bar));
  }
  return out;
}

}  // namespace maskfeat
