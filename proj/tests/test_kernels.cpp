#include <doctest.h>

#include <omp.h>

#include <random>

#include "support.hpp"
#include "tfcount/kernels.hpp"

using namespace tfcount;
namespace k = tfcount::kernels;

namespace {

std::vector<float> random_values(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("omp kernels agree with the serial reference at any thread count") {
  std::mt19937_64 rng(123);
  const int saved = omp_get_max_threads();
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    for (int trial = 0; trial < 20; ++trial) {
      const int gw = 1 + static_cast<int>(rng() % 30), gh = 1 + static_cast<int>(rng() % 30);
      const int c = 1 + static_cast<int>(rng() % 9);
      auto feats = random_values(rng, static_cast<std::size_t>(gw) * gh * c);
      for (int z = 0; z < c; ++z) feats[z] = 0.0f;  // one zero-norm cell
      const auto ref = random_values(rng, c);
      REQUIRE(k::omp::cosine_map(feats, c, ref) == k::serial::cosine_map(feats, c, ref));

      const int dw = gw + static_cast<int>(rng() % 50), dh = gh + static_cast<int>(rng() % 50);
      const auto src = random_values(rng, static_cast<std::size_t>(gw) * gh);
      const auto up = k::serial::bilinear_resize(src, gw, gh, dw, dh);
      REQUIRE(k::omp::bilinear_resize(src, gw, gh, dw, dh) == up);
      REQUIRE(k::omp::min_max(up) == k::serial::min_max(up));

      const auto mask = testing::random_mask(rng, dw, dh, 0.3);
      REQUIRE(k::omp::masked_sum(up, mask) == k::serial::masked_sum(up, mask));

      const k::CellGrid grid{(dw + 3) / 4, (dh + 3) / 4, 4};
      REQUIRE(k::omp::cell_coverage(mask, grid) == k::serial::cell_coverage(mask, grid));

      std::vector<std::uint8_t> sel(static_cast<std::size_t>(gw) * gh);
      for (auto& s : sel) s = rng() % 2;
      sel[0] = 1;
      REQUIRE(k::omp::selected_mean(feats, c, sel) == k::serial::selected_mean(feats, c, sel));
    }
  }
  omp_set_num_threads(saved);
}

TEST_CASE("serial kernels against direct formulas") {
  const std::vector<float> feats{1, 0, 0, 1, -1, 0, 3, 4};
  const std::vector<float> ref{1, 0};
  const auto cos = k::serial::cosine_map(feats, 2, ref);
  CHECK(cos[0] == doctest::Approx(1.0));
  CHECK(cos[1] == doctest::Approx(0.0));
  CHECK(cos[2] == doctest::Approx(-1.0));
  CHECK(cos[3] == doctest::Approx(0.6));

  // 1x2 -> 1x4 with half-pixel centres: samples at -0.25, 0.25, 0.75, 1.25.
  const auto row = k::serial::bilinear_resize(std::vector<float>{0, 1}, 2, 1, 4, 1);
  CHECK(row == std::vector<float>{0.0f, 0.25f, 0.75f, 1.0f});
  CHECK(k::serial::min_max(row) == std::pair{0.0f, 1.0f});

  BinaryMask m(5, 5);
  m.set(0, 0);
  m.set(4, 4);
  m.set(3, 4);
  const auto cov = k::serial::cell_coverage(m, {3, 3, 2});
  CHECK(cov == std::vector<std::uint32_t>{1, 0, 0, 0, 0, 0, 0, 1, 1});
  CHECK(k::max_threads() >= 1);
}
