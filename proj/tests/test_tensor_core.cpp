#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tfcount/error.hpp"
#include "tfcount/mask.hpp"
#include "tfcount/tensor.hpp"

using namespace tfcount;
using testing::random_mask;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected tfcount::Error");
  return ErrorCode::kIo;
}

BinaryMask row_mask(std::initializer_list<int> bits) {
  BinaryMask m(static_cast<int>(bits.size()), 1);
  int x = 0;
  for (int b : bits) m.set(x++, 0, b != 0);
  return m;
}

}  // namespace

TEST_CASE("TNSR layout is little-endian with the documented header") {
  const std::vector<float> v{1.0f, -2.5f};
  const auto bytes = TensorBlob::from_f32({2}, v).serialize();
  REQUIRE(bytes.size() == 4 + 3 + 4 + 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TNSR");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 1);
  CHECK(bytes[7] == 2);
  CHECK(bytes[8] == 0);
  // 1.0f = 0x3f800000
  CHECK(bytes[11] == 0x00);
  CHECK(bytes[13] == 0x80);
  CHECK(bytes[14] == 0x3f);
}

TEST_CASE("TNSR round trip") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(-10, 10);
  for (int i = 0; i < 50; ++i) {
    const std::uint32_t a = 1 + rng() % 5, b = 1 + rng() % 7;
    std::vector<float> v(a * b);
    for (auto& x : v) x = u(rng);
    const auto t = TensorBlob::from_f32({a, b}, v);
    const auto back = TensorBlob::deserialize(t.serialize());
    CHECK(back == t);
    CHECK(back.to_f32() == v);
  }
  const std::vector<std::uint8_t> px{1, 2, 3, 4, 5, 6};
  const auto u8 = TensorBlob::from_u8({2, 3}, px);
  CHECK(TensorBlob::deserialize(u8.serialize()) == u8);
  CHECK(u8.to_f32() == std::vector<float>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("TNSR rejects malformed buffers") {
  auto bytes = TensorBlob::from_f32({3}, std::vector<float>{1, 2, 3}).serialize();
  auto bad = bytes;
  bad[0] = 'X';
  CHECK(code_of([&] { TensorBlob::deserialize(bad); }) == ErrorCode::kMalformedTensor);
  bad = bytes;
  bad[4] = 2;
  CHECK(code_of([&] { TensorBlob::deserialize(bad); }) == ErrorCode::kMalformedTensor);
  bad = bytes;
  bad.pop_back();
  CHECK(code_of([&] { TensorBlob::deserialize(bad); }) == ErrorCode::kMalformedTensor);
  bad = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 9);
  CHECK(code_of([&] { TensorBlob::deserialize(bad); }) == ErrorCode::kMalformedTensor);
  CHECK(code_of([] { TensorBlob(DType::kU8, {2, 0}, {}); }) == ErrorCode::kMalformedTensor);
  CHECK(code_of([] { TensorBlob(DType::kF32, {2}, std::vector<std::uint8_t>(7)); }) ==
        ErrorCode::kMalformedTensor);
}

TEST_CASE("RLE examples") {
  CHECK(rle_encode(row_mask({0, 1, 1, 0})).counts == std::vector<std::uint32_t>{1, 2, 1});
  CHECK(rle_encode(BinaryMask(2, 2)).counts == std::vector<std::uint32_t>{4});
  CHECK(rle_decode(RleMask{4, 1, {1, 2, 1}}) == row_mask({0, 1, 1, 0}));
  const auto full = rle_decode(RleMask{2, 2, {0, 4}});
  CHECK(full.area() == 4);
  CHECK(rle_encode(full).counts == std::vector<std::uint32_t>{0, 4});
  CHECK(code_of([] { rle_decode(RleMask{4, 1, {3}}); }) == ErrorCode::kMalformedRle);
  CHECK(code_of([] { rle_decode(RleMask{4, 1, {3, 2}}); }) == ErrorCode::kMalformedRle);
}

TEST_CASE("RLE round trip on random masks") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const int w = 1 + static_cast<int>(rng() % 70), h = 1 + static_cast<int>(rng() % 20);
    const double density = (rng() % 11) / 10.0;
    const auto m = random_mask(rng, w, h, density);
    const auto rle = rle_encode(m);
    std::uint64_t sum = 0;
    for (auto c : rle.counts) sum += c;
    REQUIRE(sum == static_cast<std::uint64_t>(w) * h);
    for (std::size_t k = 1; k < rle.counts.size(); ++k) REQUIRE(rle.counts[k] > 0);
    REQUIRE(rle_decode(rle) == m);
  }
}

TEST_CASE("BinaryMask keeps area and bounds exact") {
  std::mt19937_64 rng(3);
  BinaryMask m(67, 9);
  for (int i = 0; i < 2000; ++i) {
    const int x = static_cast<int>(rng() % 67), y = static_cast<int>(rng() % 9);
    m.set(x, y, rng() % 3 != 0);
  }
  CHECK(m.area() == testing::count_set(m));
  Box tight{67, 9, 0, 0};
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 67; ++x)
      if (m.get(x, y)) tight = Box{std::min(tight.x0, x), std::min(tight.y0, y),
                                   std::max(tight.x1, x + 1), std::max(tight.y1, y + 1)};
  CHECK(m.tight_bounds() == tight);

  auto other = random_mask(rng, 67, 9, 0.3);
  auto merged = m;
  merged.merge(other);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 67; ++x) REQUIRE(merged.get(x, y) == (m.get(x, y) || other.get(x, y)));
  CHECK(merged.area() == testing::count_set(merged));
  CHECK(code_of([&] { merged.merge(BinaryMask(3, 3)); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("mask IoU examples") {
  const auto a = testing::box_mask(8, 8, {0, 0, 2, 2});
  const auto b = testing::box_mask(8, 8, {1, 0, 3, 2});
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, testing::box_mask(8, 8, {4, 4, 6, 6})) == 0.0);
  CHECK(mask_iou(a, b) == doctest::Approx(2.0 / 6.0));
  CHECK(mask_iou(BinaryMask(4, 4), BinaryMask(4, 4)) == 0.0);
}

TEST_CASE("mask IoU algebra against a pixel-count oracle") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const int w = 1 + static_cast<int>(rng() % 90), h = 1 + static_cast<int>(rng() % 12);
    const auto a = random_mask(rng, w, h, (rng() % 10) / 10.0);
    const auto b = random_mask(rng, w, h, (rng() % 10) / 10.0);
    long long inter = 0, uni = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        inter += a.get(x, y) && b.get(x, y);
        uni += a.get(x, y) || b.get(x, y);
      }
    REQUIRE(intersection_area(a, b) == inter);
    const double expected = uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
    REQUIRE(mask_iou(a, b) == doctest::Approx(expected).epsilon(1e-12));
    REQUIRE(mask_iou(a, b) == mask_iou(b, a));
    REQUIRE(mask_iou(a, b) >= 0.0);
    REQUIRE(mask_iou(a, b) <= 1.0);
    if (!a.empty()) REQUIRE(mask_iou(a, a) == 1.0);
  }
}

TEST_CASE("box IoU") {
  CHECK(box_iou({0, 0, 4, 4}, {0, 0, 4, 4}) == 1.0);
  CHECK(box_iou({0, 0, 2, 2}, {2, 0, 4, 2}) == 0.0);
  CHECK(box_iou({0, 0, 2, 2}, {1, 0, 3, 2}) == doctest::Approx(2.0 / 6.0));

  std::mt19937_64 rng(9);
  auto rand_box = [&] {
    const int x0 = static_cast<int>(rng() % 20), y0 = static_cast<int>(rng() % 20);
    return Box{x0, y0, x0 + 1 + static_cast<int>(rng() % 10), y0 + 1 + static_cast<int>(rng() % 10)};
  };
  for (int i = 0; i < 500; ++i) {
    const Box a = rand_box(), b = rand_box();
    const auto ma = testing::box_mask(40, 40, a), mb = testing::box_mask(40, 40, b);
    REQUIRE(box_iou(a, b) == doctest::Approx(mask_iou(ma, mb)).epsilon(1e-12));
    REQUIRE(box_iou(a, b) == box_iou(b, a));
  }
}

TEST_CASE("Box clamping") {
  CHECK(Box{-3, -2, 5, 9}.clamped(4, 4) == Box{0, 0, 4, 4});
  CHECK(Box{1, 1, 3, 3}.area() == 4);
  CHECK_FALSE(Box{2, 2, 2, 5}.valid());
}
