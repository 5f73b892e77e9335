#include "tfcount/imageops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tfcount/error.hpp"

namespace tfcount::imageops {

// ---------------------------------------------------------------------------
// Thresholding

int otsu_threshold(const Histogram256& hist) {
  std::uint64_t total = 0;
  std::uint64_t weighted = 0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    weighted += static_cast<std::uint64_t>(i) * hist[i];
  }
  if (total == 0) throw Error(ErrorCode::kEmptyInput, "otsu: empty histogram");

  // sigma_b^2 * N^2 = (S0 * N - S * n0)^2 / (n0 * n1), computed from exact
  // integer prefix sums so runs of empty bins produce bit-identical values.
  std::uint64_t n0 = 0;
  std::uint64_t s0 = 0;
  long double best = 0.0L;
  int best_t = -1;
  for (int t = 0; t < 256; ++t) {
    n0 += hist[t];
    s0 += static_cast<std::uint64_t>(t) * hist[t];
    const std::uint64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const __int128 diff = static_cast<__int128>(s0) * total - static_cast<__int128>(weighted) * n0;
    const long double d = static_cast<long double>(diff);
    const long double var = d * d / (static_cast<long double>(n0) * static_cast<long double>(n1));
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  if (best_t >= 0) return best_t;
  // Single occupied bin.
  for (int i = 0; i < 256; ++i)
    if (hist[i] != 0) return i;
  return 0;
}

int quantize_unit(float v) {
  if (!(v > 0.0f)) return 0;
  const int bin = static_cast<int>(v * 256.0f);
  return std::min(bin, 255);
}

Histogram256 histogram_of(const SimilarityMap& normalized) {
  Histogram256 h{};
  for (float v : normalized.values) ++h[quantize_unit(v)];
  return h;
}

BinaryMask binarize(const SimilarityMap& map, float t) {
  BinaryMask mask(map.width, map.height);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      if (map.at(x, y) > t) mask.set(x, y);
  return mask;
}

BinaryMask otsu_binarize(const SimilarityMap& normalized) {
  const int t = otsu_threshold(histogram_of(normalized));
  BinaryMask mask(normalized.width, normalized.height);
  for (int y = 0; y < normalized.height; ++y)
    for (int x = 0; x < normalized.width; ++x)
      if (quantize_unit(normalized.at(x, y)) > t) mask.set(x, y);
  return mask;
}

// ---------------------------------------------------------------------------
// Connected components (two-pass union-find)

namespace {

struct DisjointSet {
  std::vector<std::int32_t> parent;

  std::int32_t make() {
    parent.push_back(static_cast<std::int32_t>(parent.size()));
    return parent.back();
  }
  std::int32_t find(std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;
  }
};

}  // namespace

LabelMap connected_components(const BinaryMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    throw Error(ErrorCode::kInvalidArgument, "connectivity must be 4 or 8");
  const int w = mask.width(), h = mask.height();
  LabelMap out{w, h, std::vector<std::int32_t>(static_cast<std::size_t>(w) * h, -1), 0};
  DisjointSet sets;
  auto provisional = [&](int x, int y) -> std::int32_t {
    if (x < 0 || y < 0 || x >= w) return -1;
    return out.labels[static_cast<std::size_t>(y) * w + x];
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.get(x, y)) continue;
      std::int32_t neighbours[4];
      int count = 0;
      neighbours[count++] = provisional(x - 1, y);
      neighbours[count++] = provisional(x, y - 1);
      if (connectivity == 8) {
        neighbours[count++] = provisional(x - 1, y - 1);
        neighbours[count++] = provisional(x + 1, y - 1);
      }
      std::int32_t label = -1;
      for (int i = 0; i < count; ++i) {
        if (neighbours[i] < 0) continue;
        if (label < 0)
          label = neighbours[i];
        else
          sets.unite(label, neighbours[i]);
      }
      if (label < 0) label = sets.make();
      out.labels[static_cast<std::size_t>(y) * w + x] = label;
    }
  }

  std::vector<std::int32_t> final_label(sets.parent.size(), 0);
  for (auto& l : out.labels) {
    if (l < 0) {
      l = 0;
      continue;
    }
    const std::int32_t root = sets.find(l);
    if (final_label[root] == 0) final_label[root] = ++out.num_components;
    l = final_label[root];
  }
  return out;
}

BinaryMask component_mask(const LabelMap& labels, std::int32_t label) {
  BinaryMask mask(labels.width, labels.height);
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x)
      if (labels.at(x, y) == label) mask.set(x, y);
  return mask;
}

BinaryMask largest_component(const LabelMap& labels) {
  if (labels.num_components < 1)
    throw Error(ErrorCode::kNoComponent, "label map has no components");
  std::vector<long long> area(labels.num_components + 1, 0);
  for (auto l : labels.labels)
    if (l > 0) ++area[l];
  std::int32_t best = 1;
  for (std::int32_t l = 2; l <= labels.num_components; ++l)
    if (area[l] > area[best]) best = l;
  return component_mask(labels, best);
}

// ---------------------------------------------------------------------------
// Contours

namespace {

// Clockwise ring with y pointing down: E, SE, S, SW, W, NW, N, NE.
constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

int direction_of(int dx, int dy) {
  for (int d = 0; d < 8; ++d)
    if (kDx[d] == dx && kDy[d] == dy) return d;
  return -1;
}

}  // namespace

Contour trace_contour(const BinaryMask& component) {
  if (component.empty()) throw Error(ErrorCode::kEmptyInput, "trace_contour: empty mask");
  const int w = component.width(), h = component.height();
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && component.get(x, y);
  };

  Point start{};
  const Box e = component.extent();
  bool found = false;
  for (int y = e.y0; y < e.y1 && !found; ++y)
    for (int x = e.x0; x < e.x1 && !found; ++x)
      if (component.get(x, y)) {
        start = {x, y};
        found = true;
      }

  struct Step {
    Point next;
    int backtrack;  // direction from next to the last background pixel examined
    bool ok;
  };
  auto step = [&](Point c, int backtrack) -> Step {
    for (int k = 1; k <= 8; ++k) {
      const int d = (backtrack + k) % 8;
      const Point n{c.x + kDx[d], c.y + kDy[d]};
      if (!inside(n.x, n.y)) continue;
      const int prev = (d + 7) % 8;
      const int bx = c.x + kDx[prev] - n.x;
      const int by = c.y + kDy[prev] - n.y;
      return {n, direction_of(bx, by), true};
    }
    return {c, backtrack, false};
  };

  Contour contour{start};
  // The west neighbour of the top-most, left-most pixel is background.
  Step first = step(start, 4);
  if (!first.ok) return contour;

  const Point second = first.next;
  Point current = first.next;
  int backtrack = first.backtrack;
  const long long limit = 8 * component.area() + 16;
  for (long long iter = 0; iter < limit; ++iter) {
    const Step s = step(current, backtrack);
    if (current == start && s.next == second) return contour;
    contour.push_back(current);
    current = s.next;
    backtrack = s.backtrack;
  }
  throw Error(ErrorCode::kInvalidArgument, "trace_contour did not close");
}

std::vector<Contour> split_contour(const Contour& contour, int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "split_contour: k must be >= 1");
  const std::size_t n = contour.size();
  if (static_cast<std::size_t>(k) > n)
    throw Error(ErrorCode::kInvalidArgument, "split_contour: k=" + std::to_string(k) +
                                                 " exceeds contour length " + std::to_string(n));
  std::vector<Contour> runs;
  runs.reserve(k);
  const std::size_t base = n / k, extra = n % k;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    runs.emplace_back(contour.begin() + pos, contour.begin() + pos + len);
    pos += len;
  }
  return runs;
}

std::vector<Box> boxes_from_runs(std::span<const Contour> runs, int width, int height) {
  std::vector<Box> boxes;
  boxes.reserve(runs.size());
  for (const auto& run : runs) {
    if (run.empty()) throw Error(ErrorCode::kInvalidArgument, "boxes_from_runs: empty run");
    Box b{run[0].x, run[0].y, run[0].x + 1, run[0].y + 1};
    for (const auto& p : run) {
      b.x0 = std::min(b.x0, p.x);
      b.y0 = std::min(b.y0, p.y);
      b.x1 = std::max(b.x1, p.x + 1);
      b.y1 = std::max(b.y1, p.y + 1);
    }
    b = b.clamped(width, height);
    if (b.x1 <= b.x0) {
      b.x0 = std::min(b.x0, width - 1);
      b.x1 = b.x0 + 1;
    }
    if (b.y1 <= b.y0) {
      b.y0 = std::min(b.y0, height - 1);
      b.y1 = b.y0 + 1;
    }
    boxes.push_back(b);
  }
  return boxes;
}

// ---------------------------------------------------------------------------
// NMS

std::vector<std::size_t> greedy_suppress(
    std::span<const double> scores, double threshold,
    const std::function<double(std::size_t, std::size_t)>& overlap) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t j : kept)
      if (overlap(i, j) > threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size())
    throw Error(ErrorCode::kDimensionMismatch, "nms: boxes and scores differ in length");
  return greedy_suppress(scores, iou_threshold, [&](std::size_t a, std::size_t b) {
    return box_iou(boxes[a], boxes[b]);
  });
}

}  // namespace tfcount::imageops
