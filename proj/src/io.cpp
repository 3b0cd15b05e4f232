#include "maskfeat/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>

#include "maskfeat/error.hpp"

namespace maskfeat::io {

namespace {

constexpr std::string_view kTensorMagic = "MFTN";
constexpr std::string_view kMaskMagic = "MFMK";
constexpr std::string_view kClipMagic = "MFVC";
constexpr std::string_view kCheckpointMagic = "MFTP";

constexpr std::uint64_t kMaxRank = 32;

class Writer {
 public:
  void magic(std::string_view m) { out_.insert(out_.end(), m.begin(), m.end()); }

  template <typename T>
  void le(T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void text(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(ByteView bytes, std::string_view what) : bytes_(bytes), what_(what) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, std::string_view field) const {
    if (remaining() < n) {
      fail(std::string("truncated ") + std::string(field) + ": expected " + std::to_string(n) + " bytes, got " +
           std::to_string(remaining()));
    }
  }

  void magic(std::string_view m) {
    need(m.size(), "magic");
    if (std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0) fail("bad magic, expected '" + std::string(m) + "'");
    pos_ += m.size();
  }

  template <typename T>
  T le(std::string_view field) {
    need(sizeof(T), field);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double f64(std::string_view field) { return std::bit_cast<double>(le<std::uint64_t>(field)); }
  float f32(std::string_view field) { return std::bit_cast<float>(le<std::uint32_t>(field)); }
  std::uint8_t u8(std::string_view field) {
    need(1, field);
    return bytes_[pos_++];
  }

  void version() {
    const std::size_t at = pos_;
    const auto v = le<std::uint32_t>("version");
    if (v != kFormatVersion) throw FormatError(std::string(what_) + ": unsupported version " + std::to_string(v), at);
  }

  void finish() const {
    if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes after payload");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(std::string(what_) + ": " + msg, pos_); }

 private:
  ByteView bytes_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

// Product of dims, or nullopt-like failure via the reader on overflow.
std::uint64_t checked_product(const std::vector<std::uint64_t>& dims, const Reader* r) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      if (r) r->fail("dimension product overflows");
      throw InvalidInput("tensor dimension product overflows");
    }
    n *= d;
  }
  return n;
}

std::uint8_t quantize(double v) {
  const double q = std::nearbyint(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(q);
}

}  // namespace

std::uint64_t Tensor::element_count() const { return checked_product(dims, nullptr); }

Bytes encode_tensor(const Tensor& t) {
  if (t.dims.size() > kMaxRank) throw InvalidInput("tensor rank exceeds " + std::to_string(kMaxRank));
  if (t.element_count() != t.values.size()) throw InvalidInput("tensor value count does not match dims");
  Writer w;
  w.magic(kTensorMagic);
  w.le(kFormatVersion);
  w.le(static_cast<std::uint32_t>(t.dtype));
  w.le(static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) w.le(d);
  for (double v : t.values) {
    if (t.dtype == DType::F32) {
      w.f32(static_cast<float>(v));
    } else {
      w.f64(v);
    }
  }
  return w.take();
}

Tensor decode_tensor(ByteView bytes) {
  Reader r(bytes, "tensor");
  r.magic(kTensorMagic);
  r.version();
  Tensor t;
  const auto dtype = r.le<std::uint32_t>("dtype");
  if (dtype > 1) r.fail("unknown dtype " + std::to_string(dtype));
  t.dtype = static_cast<DType>(dtype);
  const auto rank = r.le<std::uint32_t>("rank");
  if (rank > kMaxRank) r.fail("rank " + std::to_string(rank) + " exceeds " + std::to_string(kMaxRank));
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(r.le<std::uint64_t>("dims"));
  const std::uint64_t count = checked_product(t.dims, &r);
  const std::uint64_t width = t.dtype == DType::F32 ? 4 : 8;
  if (count > std::numeric_limits<std::uint64_t>::max() / width) r.fail("payload size overflows");
  r.need(static_cast<std::size_t>(count * width), "payload");
  t.values.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    t.values.push_back(t.dtype == DType::F32 ? double(r.f32("payload")) : r.f64("payload"));
  }
  r.finish();
  return t;
}

Bytes encode_mask(const MaskMap& m) {
  Writer w;
  w.magic(kMaskMagic);
  w.le(kFormatVersion);
  w.le(static_cast<std::uint32_t>(m.t()));
  w.le(static_cast<std::uint32_t>(m.h()));
  w.le(static_cast<std::uint32_t>(m.w()));
  const int row_bytes = (m.w() + 7) / 8;
  for (int ti = 0; ti < m.t(); ++ti) {
    for (int y = 0; y < m.h(); ++y) {
      for (int b = 0; b < row_bytes; ++b) {
        std::uint8_t byte = 0;
        for (int bit = 0; bit < 8 && b * 8 + bit < m.w(); ++bit) {
          if (m(ti, y, b * 8 + bit)) byte |= static_cast<std::uint8_t>(1u << bit);
        }
        w.u8(byte);
      }
    }
  }
  return w.take();
}

MaskMap decode_mask(ByteView bytes) {
  Reader r(bytes, "mask");
  r.magic(kMaskMagic);
  r.version();
  const auto t = r.le<std::uint32_t>("t");
  const auto h = r.le<std::uint32_t>("h");
  const auto w = r.le<std::uint32_t>("w");
  constexpr std::uint32_t kMaxDim = 1u << 16;
  if (t < 1 || h < 1 || w < 1 || t > kMaxDim || h > kMaxDim || w > kMaxDim) r.fail("mask dimensions out of range");
  const std::uint64_t row_bytes = (w + 7) / 8;
  r.need(static_cast<std::size_t>(std::uint64_t(t) * h * row_bytes), "payload");
  MaskMap m(static_cast<int>(t), static_cast<int>(h), static_cast<int>(w));
  for (std::uint32_t ti = 0; ti < t; ++ti) {
    for (std::uint32_t y = 0; y < h; ++y) {
      for (std::uint64_t b = 0; b < row_bytes; ++b) {
        const std::uint8_t byte = r.u8("payload");
        for (int bit = 0; bit < 8; ++bit) {
          const std::uint64_t x = b * 8 + std::uint64_t(bit);
          const bool set = (byte >> bit) & 1u;
          if (x < w) {
            m(int(ti), int(y), int(x)) = set;
          } else if (set) {
            r.fail("nonzero padding bit");
          }
        }
      }
    }
  }
  r.finish();
  return m;
}

Bytes encode_clip(const VideoClip<double>& clip) {
  Writer w;
  w.magic(kClipMagic);
  w.le(kFormatVersion);
  w.le(static_cast<std::uint32_t>(clip.frame_count()));
  w.le(static_cast<std::uint32_t>(clip.height()));
  w.le(static_cast<std::uint32_t>(clip.width()));
  w.le(static_cast<std::uint32_t>(clip.channels()));
  for (const auto& f : clip.frames()) {
    for (Eigen::Index i = 0; i < f.data().size(); ++i) w.u8(quantize(f.data()[i]));
  }
  return w.take();
}

VideoClip<double> decode_clip(ByteView bytes) {
  Reader r(bytes, "clip");
  r.magic(kClipMagic);
  r.version();
  const auto frames = r.le<std::uint32_t>("frames");
  const auto height = r.le<std::uint32_t>("height");
  const auto width = r.le<std::uint32_t>("width");
  const auto channels = r.le<std::uint32_t>("channels");
  constexpr std::uint32_t kMaxDim = 1u << 16;
  if (frames < 1 || height < 1 || width < 1 || frames > kMaxDim || height > kMaxDim || width > kMaxDim) {
    r.fail("clip dimensions out of range");
  }
  if (channels != 1 && channels != 3) r.fail("clip must have 1 or 3 channels");
  r.need(static_cast<std::size_t>(std::uint64_t(frames) * channels * height * width), "payload");
  std::vector<Image<double>> out;
  out.reserve(frames);
  for (std::uint32_t f = 0; f < frames; ++f) {
    Image<double> img{int(width), int(height), int(channels)};
    for (Eigen::Index i = 0; i < img.data().size(); ++i) img.data()[i] = r.u8("payload") / 255.0;
    out.push_back(std::move(img));
  }
  r.finish();
  return VideoClip<double>(std::move(out));
}

Bytes encode_pnm(const Image<double>& img) {
  Writer w;
  w.text(img.channels() == 1 ? "P5\n" : "P6\n");
  w.text(std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n");
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) w.u8(quantize(img(c, y, x)));
    }
  }
  return w.take();
}

namespace {

bool is_pnm_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Skips whitespace and '#' comments, then parses a decimal header field.
// `start` receives the offset of the field's first digit.
std::uint64_t pnm_field(ByteView bytes, std::size_t& pos, const char* name, std::size_t* start = nullptr) {
  while (pos < bytes.size()) {
    if (is_pnm_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size()) throw FormatError(std::string("pnm: truncated header, missing ") + name, pos);
  if (bytes[pos] < '0' || bytes[pos] > '9') throw FormatError(std::string("pnm: malformed ") + name, pos);
  if (start) *start = pos;
  std::uint64_t v = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    v = v * 10 + (bytes[pos] - '0');
    if (v > (1u << 24)) throw FormatError(std::string("pnm: ") + name + " too large", pos);
    ++pos;
  }
  return v;
}

}  // namespace

Image<double> decode_pnm(ByteView bytes) {
  if (bytes.size() < 2) throw FormatError("pnm: truncated magic", bytes.size());
  if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) throw FormatError("pnm: expected P5 or P6 magic", 0);
  const int channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  const auto width = pnm_field(bytes, pos, "width");
  const auto height = pnm_field(bytes, pos, "height");
  std::size_t maxval_pos = 0;
  const auto maxval = pnm_field(bytes, pos, "maxval", &maxval_pos);
  if (width < 1 || height < 1) throw FormatError("pnm: zero image dimension", maxval_pos);
  if (maxval != 255) throw FormatError("pnm: unsupported maxval " + std::to_string(maxval), maxval_pos);
  if (pos >= bytes.size() || !is_pnm_space(bytes[pos])) throw FormatError("pnm: missing whitespace after maxval", pos);
  ++pos;
  const std::uint64_t expected = width * height * std::uint64_t(channels);
  const std::uint64_t actual = bytes.size() - pos;
  if (actual < expected) {
    throw FormatError("pnm: truncated payload, expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(actual),
                      bytes.size());
  }
  if (actual > expected) throw FormatError("pnm: " + std::to_string(actual - expected) + " trailing bytes", pos + expected);
  Image<double> img(int(width), int(height), channels);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) img(c, y, x) = bytes[pos++] / 255.0;
    }
  }
  return img;
}

Bytes encode_checkpoint(const LinearPredictor<double>& model) {
  model.validate();
  Writer w;
  w.magic(kCheckpointMagic);
  w.le(kFormatVersion);
  w.le(static_cast<std::uint32_t>(model.target_dim()));
  w.le(static_cast<std::uint32_t>(model.token_dim()));
  for (Eigen::Index r = 0; r < model.W.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.W.cols(); ++c) w.f64(model.W(r, c));
  }
  for (Eigen::Index i = 0; i < model.b.size(); ++i) w.f64(model.b[i]);
  for (Eigen::Index i = 0; i < model.mask_embedding.size(); ++i) w.f64(model.mask_embedding[i]);
  return w.take();
}

LinearPredictor<double> decode_checkpoint(ByteView bytes) {
  Reader r(bytes, "checkpoint");
  r.magic(kCheckpointMagic);
  r.version();
  const auto target_dim = r.le<std::uint32_t>("target_dim");
  const auto token_dim = r.le<std::uint32_t>("token_dim");
  if (target_dim < 1 || token_dim < 1) r.fail("zero predictor dimension");
  const std::uint64_t count = std::uint64_t(target_dim) * 2 * token_dim + target_dim + token_dim;
  if (count > r.remaining() / 8) r.need(static_cast<std::size_t>(count * 8), "payload");
  LinearPredictor<double> m;
  m.W.resize(target_dim, 2 * Eigen::Index(token_dim));
  m.b.resize(target_dim);
  m.mask_embedding.resize(token_dim);
  for (Eigen::Index i = 0; i < m.W.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.W.cols(); ++j) m.W(i, j) = r.f64("W");
  }
  for (Eigen::Index i = 0; i < m.b.size(); ++i) m.b[i] = r.f64("b");
  for (Eigen::Index i = 0; i < m.mask_embedding.size(); ++i) m.mask_embedding[i] = r.f64("mask_embedding");
  r.finish();
  return m;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return out;
}

void write_file(const std::filesystem::path& path, ByteView bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

Tensor hog_to_tensor(const HogFeatureMap<double>& map) {
  Tensor t;
  t.dtype = DType::F64;
  t.dims = {std::uint64_t(map.channels()), std::uint64_t(map.cells_y()), std::uint64_t(map.cells_x()),
            std::uint64_t(map.num_bins())};
  t.values.assign(map.data().data(), map.data().data() + map.data().size());
  return t;
}

HogFeatureMap<double> tensor_to_hog(const Tensor& t) {
  if (t.dims.size() != 4) throw InvalidInput("HOG tensor must have rank 4 [channels, cells_y, cells_x, bins]");
  for (auto d : t.dims) {
    if (d < 1 || d > (1u << 20)) throw InvalidInput("HOG tensor dimension out of range");
  }
  HogFeatureMap<double> map(int(t.dims[0]), int(t.dims[1]), int(t.dims[2]), int(t.dims[3]));
  if (static_cast<std::uint64_t>(map.data().size()) != t.values.size()) {
    throw InvalidInput("HOG tensor value count does not match dims");
  }
  std::copy(t.values.begin(), t.values.end(), map.data().data());
  return map;
}

VideoClip<double> read_any_clip(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kClipMagic.data(), 4) == 0) return decode_clip(bytes);
  return VideoClip<double>::single(decode_pnm(bytes));
}

}  // namespace maskfeat::io
