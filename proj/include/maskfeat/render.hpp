#pragma once

#include "maskfeat/hog.hpp"
#include "maskfeat/image.hpp"
#include "maskfeat/masking.hpp"

namespace maskfeat {

/// Grayscale glyph rendering of a HOG map: each cell becomes a
/// cell_px x cell_px tile holding one line per bin through the tile center,
/// drawn along the bin's center orientation (gradient direction, image y
/// axis pointing down). Line length and brightness scale with the bin
/// weight summed over channels, relative to the largest weight in the map.
/// An all-zero map renders black.
Image<double> render_hog_glyphs(const HogFeatureMap<double>& map, int cell_px, bool signed_orientation = false);

/// Copy of `img` with every masked patch of temporal slice `slice` painted
/// mid-gray (0.5).
Image<double> render_masked_input(const Image<double>& img, const MaskMap& mask, int patch_size, int slice = 0);

}  // namespace maskfeat
