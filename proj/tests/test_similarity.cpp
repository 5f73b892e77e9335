#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tfcount/error.hpp"
#include "tfcount/similarity.hpp"

using namespace tfcount;
using namespace tfcount::similarity;

namespace {

FeatureMap random_features(std::mt19937_64& rng, int gw, int gh, int c, int stride) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  FeatureMap f{c, gh, gw, stride, {}};
  f.values.resize(f.cell_count() * c);
  for (auto& v : f.values) v = d(rng);
  return f;
}

// Mask downsampled to a cell indicator (cell at least half covered by the
// in-image pixels it spans), multiplied into the features, then averaged.
std::vector<double> pool_oracle(const FeatureMap& f, const BinaryMask& m) {
  std::vector<double> ind(f.cell_count(), 0.0);
  for (int cy = 0; cy < f.grid_h; ++cy)
    for (int cx = 0; cx < f.grid_w; ++cx) {
      int in = 0, all = 0;
      for (int y = cy * f.stride; y < (cy + 1) * f.stride; ++y)
        for (int x = cx * f.stride; x < (cx + 1) * f.stride; ++x)
          if (x < m.width() && y < m.height()) {
            ++all;
            in += m.get(x, y);
          }
      ind[cy * f.grid_w + cx] = (all > 0 && 2 * in >= all) ? 1.0 : 0.0;
    }
  std::vector<double> sum(f.channels, 0.0);
  double n = 0;
  for (std::size_t i = 0; i < f.cell_count(); ++i) {
    for (int c = 0; c < f.channels; ++c) sum[c] += ind[i] * f.values[i * f.channels + c];
    n += ind[i];
  }
  for (auto& s : sum) s /= n;
  return sum;
}

}  // namespace

TEST_CASE("masked average pool examples") {
  FeatureMap f{2, 1, 2, 2, {1, 0, 0, 1}};
  BinaryMask left(4, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) left.set(x, y);
  CHECK(masked_average_pool(f, left).values == std::vector<float>{1, 0});
  BinaryMask both(4, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) both.set(x, y);
  CHECK(masked_average_pool(f, both).values == std::vector<float>{0.5f, 0.5f});

  // A mask too small to half-cover any cell falls back to its centroid cell.
  BinaryMask speck(4, 2);
  speck.set(3, 1);
  CHECK(masked_average_pool(f, speck).values == std::vector<float>{0, 1});
  CHECK_THROWS_AS(masked_average_pool(f, BinaryMask(4, 2)), Error);
}

TEST_CASE("masked average pool equals the Hadamard-then-mean oracle") {
  std::mt19937_64 rng(8);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const int stride = 1 + static_cast<int>(rng() % 5);
    const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
    const int gw = (w + stride - 1) / stride, gh = (h + stride - 1) / stride;
    const auto f = random_features(rng, gw, gh, 1 + static_cast<int>(rng() % 6), stride);
    const auto m = testing::random_mask(rng, w, h, 0.3 + (rng() % 60) / 100.0);
    const auto oracle = pool_oracle(f, m);
    if (std::isnan(oracle[0])) continue;  // no half-covered cell: fallback path
    const auto got = masked_average_pool(f, m);
    for (int c = 0; c < f.channels; ++c) REQUIRE(got.values[c] == doctest::Approx(oracle[c]).epsilon(1e-5));
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("cosine similarity map") {
  FeatureMap f{2, 1, 4, 1, {2, 0, 0, 3, -5, 0, 0, 0}};
  const auto m = cosine_similarity_map(f, Embedding{{1, 0}});
  CHECK(m.width == 4);
  CHECK(m.values[0] == doctest::Approx(1.0));
  CHECK(m.values[1] == doctest::Approx(0.0));
  CHECK(m.values[2] == doctest::Approx(-1.0));
  CHECK(m.values[3] == 0.0f);
  CHECK_FALSE(m.normalized);
  CHECK_THROWS_AS(cosine_similarity_map(f, Embedding{{1, 0, 0}}), Error);
  CHECK_THROWS_AS(cosine_similarity_map(f, Embedding{{0, 0}}), Error);
}

TEST_CASE("fusing exemplar maps") {
  const SimilarityMap a{2, 1, {0.2f, 1.0f}, false}, b{2, 1, {0.8f, 0.0f}, false};
  const std::vector<SimilarityMap> one{a};
  CHECK(fuse_exemplar_maps(one) == a);
  const std::vector<SimilarityMap> two{a, b};
  const auto f = fuse_exemplar_maps(two);
  CHECK(f.values[0] == doctest::Approx(0.5));
  CHECK(f.values[1] == doctest::Approx(0.5));
  const std::vector<SimilarityMap> same{a, a, a};
  CHECK(fuse_exemplar_maps(same).values == a.values);
  CHECK_THROWS_AS(fuse_exemplar_maps(std::vector<SimilarityMap>{}), Error);
  const std::vector<SimilarityMap> bad{a, SimilarityMap{1, 1, {0.0f}, false}};
  CHECK_THROWS_AS(fuse_exemplar_maps(bad), Error);
}

TEST_CASE("upsample and normalize") {
  const auto flat = upsample_and_normalize(SimilarityMap{2, 2, {0.3f, 0.3f, 0.3f, 0.3f}, false}, 5, 5);
  CHECK(flat.normalized);
  for (float v : flat.values) CHECK(v == 0.0f);

  const auto row = upsample_and_normalize(SimilarityMap{2, 1, {0.0f, 1.0f}, false}, 4, 1);
  for (int x = 1; x < 4; ++x) CHECK(row.values[x] >= row.values[x - 1]);

  std::mt19937_64 rng(4);
  std::normal_distribution<float> d;
  for (int i = 0; i < 50; ++i) {
    SimilarityMap raw{1 + static_cast<int>(rng() % 9), 1 + static_cast<int>(rng() % 9), {}, false};
    raw.values.resize(static_cast<std::size_t>(raw.width) * raw.height);
    for (auto& v : raw.values) v = d(rng);
    raw.values[0] = -5.0f;
    raw.values.back() = 5.0f;
    const auto n = upsample_and_normalize(raw, raw.width * 3 + 1, raw.height * 2);
    const auto [lo, hi] = std::minmax_element(n.values.begin(), n.values.end());
    REQUIRE(*lo == 0.0f);
    REQUIRE(*hi == 1.0f);
  }
  CHECK_THROWS_AS(upsample_and_normalize(SimilarityMap{4, 4, std::vector<float>(16), false}, 3, 8), Error);
}

TEST_CASE("mask score") {
  const SimilarityMap u{4, 4, std::vector<float>(16, 0.7f), true};
  CHECK(mask_score(u, testing::box_mask(4, 4, {1, 1, 3, 2})) == doctest::Approx(0.7));

  SimilarityMap half{4, 1, {0.0f, 0.0f, 1.0f, 1.0f}, true};
  CHECK(mask_score(half, testing::box_mask(4, 1, {0, 0, 4, 1})) == doctest::Approx(0.5));
  CHECK(mask_score(half, testing::box_mask(4, 1, {1, 0, 3, 1})) == doctest::Approx(0.5));
  CHECK_THROWS_AS(mask_score(half, BinaryMask(4, 1)), Error);
  CHECK_THROWS_AS(mask_score(half, BinaryMask(3, 1)), Error);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> d(0, 1);
  for (int i = 0; i < 200; ++i) {
    const int w = 1 + static_cast<int>(rng() % 30), h = 1 + static_cast<int>(rng() % 30);
    SimilarityMap s{w, h, std::vector<float>(static_cast<std::size_t>(w) * h), true};
    for (auto& v : s.values) v = d(rng);
    auto m = testing::random_mask(rng, w, h, 0.4);
    m.set(0, 0);
    double sum = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) sum += m.get(x, y) * s.at(x, y);
    REQUIRE(mask_score(s, m) == doctest::Approx(sum / testing::count_set(m)).epsilon(1e-9));
  }
}
