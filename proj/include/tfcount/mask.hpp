#pragma once

#include <cstdint>
#include <vector>

#include "tfcount/types.hpp"

namespace tfcount {

/// Bit-packed binary mask (row-major, bit i = pixel y * width + x).
///
/// area() is maintained exactly on every write. extent() is a conservative
/// bounding box of set pixels: it grows on set() but is not shrunk on clear,
/// so it may be larger than tight_bounds(). It is used to bound overlap
/// computations only.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  long long area() const { return area_; }
  bool empty() const { return area_ == 0; }

  bool get(int x, int y) const {
    const std::size_t i = index(x, y);
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set(int x, int y, bool value = true);

  // In-place union. Dimensions must match.
  void merge(const BinaryMask& other);

  Box extent() const { return extent_; }
  Box tight_bounds() const;
  bool same_shape(const BinaryMask& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  const std::vector<std::uint64_t>& words() const { return words_; }

  friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.area_ == b.area_ && a.words_ == b.words_;
  }

  friend long long intersection_area(const BinaryMask& a, const BinaryMask& b);

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  long long area_ = 0;
  Box extent_{};
  std::vector<std::uint64_t> words_;
};

/// Uncompressed run-length mask: alternating runs over the row-major scan,
/// starting with a (possibly empty) run of zeros.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const RleMask& rle);

long long intersection_area(const BinaryMask& a, const BinaryMask& b);

/// |a & b| / |a | b|; 0 when both masks are empty.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace tfcount
