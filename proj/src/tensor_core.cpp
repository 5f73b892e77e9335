#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include "tfcount/error.hpp"
#include "tfcount/mask.hpp"
#include "tfcount/tensor.hpp"
#include "tfcount/types.hpp"

namespace tfcount {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedRle: return "malformed-rle";
    case ErrorCode::kMalformedTensor: return "malformed-tensor";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kNoComponent: return "no-component";
    case ErrorCode::kNoReference: return "no-reference";
    case ErrorCode::kUndefinedScore: return "undefined-score";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kUnknownFeature: return "unknown-feature";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kBackendUnreachable: return "backend-unreachable";
    case ErrorCode::kBackendFailure: return "backend-failure";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// TensorBlob

namespace {

constexpr std::uint8_t kTensorVersion = 1;
constexpr char kTensorMagic[4] = {'T', 'N', 'S', 'R'};

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::size_t shape_product(const std::vector<std::uint32_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void validate_shape(const std::vector<std::uint32_t>& shape) {
  if (shape.empty() || shape.size() > 255)
    throw Error(ErrorCode::kMalformedTensor, "tensor rank must be in [1,255]");
  for (auto d : shape)
    if (d < 1) throw Error(ErrorCode::kMalformedTensor, "tensor dims must be >= 1");
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kU8: return 1;
    case DType::kF32: return 4;
  }
  throw Error(ErrorCode::kMalformedTensor, "unknown dtype");
}

TensorBlob::TensorBlob(DType dtype, std::vector<std::uint32_t> shape,
                       std::vector<std::uint8_t> data)
    : dtype_(dtype), shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_product(shape_) * dtype_size(dtype_))
    throw Error(ErrorCode::kMalformedTensor, "tensor byte length does not match shape");
}

TensorBlob TensorBlob::from_f32(std::vector<std::uint32_t> shape,
                                std::span<const float> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return TensorBlob(DType::kF32, std::move(shape), std::move(bytes));
}

TensorBlob TensorBlob::from_u8(std::vector<std::uint32_t> shape,
                               std::span<const std::uint8_t> values) {
  return TensorBlob(DType::kU8, std::move(shape),
                    std::vector<std::uint8_t>(values.begin(), values.end()));
}

std::size_t TensorBlob::element_count() const { return shape_product(shape_); }

std::vector<float> TensorBlob::to_f32() const {
  const std::size_t n = element_count();
  std::vector<float> out(n);
  if (dtype_ == DType::kU8) {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(data_[i]);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::bit_cast<float>(get_u32le(data_.data() + i * 4));
  return out;
}

std::vector<std::uint8_t> TensorBlob::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(7 + shape_.size() * 4 + data_.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  out.push_back(kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(dtype_));
  out.push_back(static_cast<std::uint8_t>(shape_.size()));
  for (auto d : shape_) put_u32le(out, d);
  out.insert(out.end(), data_.begin(), data_.end());
  return out;
}

TensorBlob TensorBlob::deserialize(std::span<const std::uint8_t> buffer) {
  if (buffer.size() < 7 || std::memcmp(buffer.data(), kTensorMagic, 4) != 0)
    throw Error(ErrorCode::kMalformedTensor, "missing TNSR magic");
  if (buffer[4] != kTensorVersion)
    throw Error(ErrorCode::kMalformedTensor, "unsupported TNSR version " + std::to_string(buffer[4]));
  if (buffer[5] > 1) throw Error(ErrorCode::kMalformedTensor, "unknown dtype code");
  const auto dtype = static_cast<DType>(buffer[5]);
  const std::size_t rank = buffer[6];
  if (buffer.size() < 7 + rank * 4) throw Error(ErrorCode::kMalformedTensor, "truncated TNSR header");
  std::vector<std::uint32_t> shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = get_u32le(buffer.data() + 7 + i * 4);
  validate_shape(shape);
  const std::size_t offset = 7 + rank * 4;
  const std::size_t expected = shape_product(shape) * dtype_size(dtype);
  if (buffer.size() - offset != expected)
    throw Error(ErrorCode::kMalformedTensor, "TNSR payload length mismatch");
  return TensorBlob(dtype, std::move(shape),
                    std::vector<std::uint8_t>(buffer.begin() + offset, buffer.end()));
}

// ---------------------------------------------------------------------------
// Image / Box

Image::Image(int w, int h)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * kChannels, 0) {}

bool Image::valid() const {
  return width >= 1 && height >= 1 &&
         rgb.size() == static_cast<std::size_t>(width) * height * kChannels;
}

Box Box::clamped(int w, int h) const {
  Box b{std::clamp(x0, 0, w), std::clamp(y0, 0, h), std::clamp(x1, 0, w),
        std::clamp(y1, 0, h)};
  return b;
}

double box_iou(const Box& a, const Box& b) {
  const long long ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const long long iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const long long inter = ix * iy;
  const long long uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// BinaryMask

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0)
    throw Error(ErrorCode::kInvalidArgument, "mask dimensions must be non-negative");
  words_.assign((static_cast<std::size_t>(width) * height + 63) / 64, 0);
}

void BinaryMask::set(int x, int y, bool value) {
  const std::size_t i = index(x, y);
  auto& word = words_[i >> 6];
  const std::uint64_t bit = std::uint64_t{1} << (i & 63);
  const bool was = word & bit;
  if (was == value) return;
  if (value) {
    word |= bit;
    if (area_ == 0 && !extent_.valid()) {
      extent_ = Box{x, y, x + 1, y + 1};
    } else {
      extent_.x0 = std::min(extent_.x0, x);
      extent_.y0 = std::min(extent_.y0, y);
      extent_.x1 = std::max(extent_.x1, x + 1);
      extent_.y1 = std::max(extent_.y1, y + 1);
    }
    ++area_;
  } else {
    word &= ~bit;
    --area_;
  }
}

void BinaryMask::merge(const BinaryMask& other) {
  if (!same_shape(other))
    throw Error(ErrorCode::kDimensionMismatch, "mask merge: dimension mismatch");
  if (other.empty()) return;
  long long area = 0;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    words_[i] |= other.words_[i];
    area += std::popcount(words_[i]);
  }
  area_ = area;
  const Box e = other.extent_;
  if (!extent_.valid()) {
    extent_ = e;
  } else {
    extent_ = Box{std::min(extent_.x0, e.x0), std::min(extent_.y0, e.y0),
                  std::max(extent_.x1, e.x1), std::max(extent_.y1, e.y1)};
  }
}

Box BinaryMask::tight_bounds() const {
  if (area_ == 0) return Box{};
  Box b{width_, height_, 0, 0};
  for (int y = extent_.y0; y < extent_.y1; ++y)
    for (int x = extent_.x0; x < extent_.x1; ++x)
      if (get(x, y)) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x + 1);
        b.y1 = std::max(b.y1, y + 1);
      }
  return b;
}

long long intersection_area(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b))
    throw Error(ErrorCode::kDimensionMismatch, "mask dimension mismatch");
  if (a.empty() || b.empty()) return 0;
  const Box ea = a.extent_, eb = b.extent_;
  const int x0 = std::max(ea.x0, eb.x0), x1 = std::min(ea.x1, eb.x1);
  const int y0 = std::max(ea.y0, eb.y0), y1 = std::min(ea.y1, eb.y1);
  if (x0 >= x1 || y0 >= y1) return 0;
  // Any pixel set in both lies inside the extent intersection, so counting
  // every word spanning its first..last pixel is exact.
  const std::size_t first = a.index(x0, y0) >> 6;
  const std::size_t last = a.index(x1 - 1, y1 - 1) >> 6;
  long long n = 0;
  for (std::size_t w = first; w <= last; ++w) n += std::popcount(a.words_[w] & b.words_[w]);
  return n;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  const long long inter = intersection_area(a, b);
  const long long uni = a.area() + b.area() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// RLE

RleMask rle_encode(const BinaryMask& mask) {
  RleMask rle{mask.width(), mask.height(), {}};
  const std::size_t n = static_cast<std::size_t>(mask.width()) * mask.height();
  bool current = false;
  std::uint32_t run = 0;
  const auto& words = mask.words();
  for (std::size_t i = 0; i < n; ++i) {
    const bool bit = (words[i >> 6] >> (i & 63)) & 1u;
    if (bit != current) {
      rle.counts.push_back(run);
      run = 0;
      current = bit;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask rle_decode(const RleMask& rle) {
  if (rle.width < 0 || rle.height < 0)
    throw Error(ErrorCode::kMalformedRle, "negative RLE dimensions");
  const std::uint64_t n = static_cast<std::uint64_t>(rle.width) * rle.height;
  std::uint64_t total = 0;
  for (auto c : rle.counts) total += c;
  if (total != n)
    throw Error(ErrorCode::kMalformedRle, "RLE counts sum to " + std::to_string(total) +
                                              ", expected " + std::to_string(n));
  BinaryMask mask(rle.width, rle.height);
  std::uint64_t pos = 0;
  bool value = false;
  for (auto c : rle.counts) {
    if (value) {
      for (std::uint64_t i = pos; i < pos + c; ++i)
        mask.set(static_cast<int>(i % rle.width), static_cast<int>(i / rle.width));
    }
    pos += c;
    value = !value;
  }
  return mask;
}

}  // namespace tfcount
