#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "maskfeat/hog.hpp"
#include "maskfeat/image.hpp"
#include "maskfeat/masking.hpp"
#include "maskfeat/predictor.hpp"

// Byte layouts are documented in FORMATS.md. Every multi-byte field is
// little-endian. Decoders reject wrong magic, unknown versions, truncation
// and trailing bytes.
namespace maskfeat::io {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::uint32_t kFormatVersion = 1;

enum class DType : std::uint32_t { F32 = 0, F64 = 1 };

/// Row-major tensor (last axis fastest). Values are held as doubles; F32
/// tensors are rounded to float when encoded.
struct Tensor {
  DType dtype = DType::F64;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;

  std::uint64_t element_count() const;
};

Bytes encode_tensor(const Tensor& t);
Tensor decode_tensor(ByteView bytes);

Bytes encode_mask(const MaskMap& m);
MaskMap decode_mask(ByteView bytes);

/// Quantizes to 8 bits (round to nearest, clamped to [0, 255]).
Bytes encode_clip(const VideoClip<double>& clip);
/// Values are mapped to [0, 1] as v / 255.
VideoClip<double> decode_clip(ByteView bytes);

/// Binary PGM (P5) for 1 channel, PPM (P6) for 3 channels, maxval 255.
Bytes encode_pnm(const Image<double>& img);
Image<double> decode_pnm(ByteView bytes);

Bytes encode_checkpoint(const LinearPredictor<double>& model);
LinearPredictor<double> decode_checkpoint(ByteView bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, ByteView bytes);

inline Tensor read_tensor(const std::filesystem::path& p) { return decode_tensor(read_file(p)); }
inline void write_tensor(const std::filesystem::path& p, const Tensor& t) { write_file(p, encode_tensor(t)); }
inline MaskMap read_mask(const std::filesystem::path& p) { return decode_mask(read_file(p)); }
inline void write_mask(const std::filesystem::path& p, const MaskMap& m) { write_file(p, encode_mask(m)); }
inline VideoClip<double> read_clip(const std::filesystem::path& p) { return decode_clip(read_file(p)); }
inline void write_clip(const std::filesystem::path& p, const VideoClip<double>& c) { write_file(p, encode_clip(c)); }
inline Image<double> read_pnm(const std::filesystem::path& p) { return decode_pnm(read_file(p)); }
inline void write_pnm(const std::filesystem::path& p, const Image<double>& img) { write_file(p, encode_pnm(img)); }
inline LinearPredictor<double> read_checkpoint(const std::filesystem::path& p) { return decode_checkpoint(read_file(p)); }
inline void write_checkpoint(const std::filesystem::path& p, const LinearPredictor<double>& m) {
  write_file(p, encode_checkpoint(m));
}

/// HOG map as an F64 tensor of dims [channels, cells_y, cells_x, bins].
Tensor hog_to_tensor(const HogFeatureMap<double>& map);
HogFeatureMap<double> tensor_to_hog(const Tensor& t);

/// Loads a PPM/PGM or raw clip file, detected by its leading bytes.
VideoClip<double> read_any_clip(const std::filesystem::path& path);

}  // namespace maskfeat::io
