#pragma once

#include <random>
#include <vector>

#include "tfcount/mask.hpp"
#include "tfcount/synthetic.hpp"

namespace tfcount::testing {

inline BinaryMask random_mask(std::mt19937_64& rng, int w, int h, double density) {
  std::bernoulli_distribution on(density);
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (on(rng)) m.set(x, y);
  return m;
}

inline BinaryMask box_mask(int w, int h, Box b) {
  BinaryMask m(w, h);
  for (int y = b.y0; y < b.y1; ++y)
    for (int x = b.x0; x < b.x1; ++x) m.set(x, y);
  return m;
}

inline long long count_set(const BinaryMask& m) {
  long long n = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) n += m.get(x, y);
  return n;
}

// Scene with the default backend config and the given blobs.
inline synthetic::Scene scene_of(std::vector<synthetic::Blob> blobs, int w = 128, int h = 128) {
  synthetic::Scene s;
  s.width = w;
  s.height = h;
  s.class_names = {{"circle", 2}, {"square", 3}};
  s.blobs = std::move(blobs);
  return s;
}

}  // namespace tfcount::testing
