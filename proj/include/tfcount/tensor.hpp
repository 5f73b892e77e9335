#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tfcount {

enum class DType : std::uint8_t { kU8 = 0, kF32 = 1 };

std::size_t dtype_size(DType dtype);

/// Dense row-major tensor carried over the wire and in feature caches.
///
/// On-disk / wire layout ("TNSR" container, version 1):
///   "TNSR" | u8 version | u8 dtype | u8 rank | rank x u32le dims | raw data
/// Data is little-endian regardless of host order.
class TensorBlob {
 public:
  TensorBlob() = default;
  TensorBlob(DType dtype, std::vector<std::uint32_t> shape,
             std::vector<std::uint8_t> data);

  static TensorBlob from_f32(std::vector<std::uint32_t> shape,
                             std::span<const float> values);
  static TensorBlob from_u8(std::vector<std::uint32_t> shape,
                            std::span<const std::uint8_t> values);

  DType dtype() const { return dtype_; }
  const std::vector<std::uint32_t>& shape() const { return shape_; }
  const std::vector<std::uint8_t>& bytes() const { return data_; }
  std::size_t element_count() const;

  std::vector<float> to_f32() const;

  std::vector<std::uint8_t> serialize() const;
  static TensorBlob deserialize(std::span<const std::uint8_t> buffer);

  friend bool operator==(const TensorBlob&, const TensorBlob&) = default;

 private:
  DType dtype_ = DType::kU8;
  std::vector<std::uint32_t> shape_;
  std::vector<std::uint8_t> data_;
};

}  // namespace tfcount
