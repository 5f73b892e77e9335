#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tfcount/mask.hpp"
#include "tfcount/types.hpp"

namespace tfcount::imageops {

using Histogram256 = std::array<std::uint64_t, 256>;

/// Threshold bin t maximizing between-class variance, class 0 = bins <= t.
/// Ties resolve to the smallest t. A histogram with a single occupied bin
/// returns that bin.
int otsu_threshold(const Histogram256& hist);

/// Bin of a value in [0,1]: min(255, floor(v * 256)).
int quantize_unit(float v);

Histogram256 histogram_of(const SimilarityMap& normalized);

/// Pixels with value strictly greater than t.
BinaryMask binarize(const SimilarityMap& map, float t);

/// Otsu label map of a normalized similarity field: pixel positive iff its
/// 256-bin quantized value lies above the Otsu bin.
BinaryMask otsu_binarize(const SimilarityMap& normalized);

struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;  // 0 = background, 1..num_components
  int num_components = 0;

  std::int32_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

/// Labels are assigned in raster-scan order of each component's first pixel.
LabelMap connected_components(const BinaryMask& mask, int connectivity = 8);

/// Component of maximal area; ties go to the smallest label.
BinaryMask largest_component(const LabelMap& labels);

BinaryMask component_mask(const LabelMap& labels, std::int32_t label);

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Contour = std::vector<Point>;

/// Outer boundary by Moore-neighbour tracing. Starts at the top-most then
/// left-most pixel and walks clockwise (image y axis pointing down). Stops on
/// re-entering the start pixel heading for the second contour point.
Contour trace_contour(const BinaryMask& component);

/// Balanced partition into k contiguous runs; the first n % k runs get the
/// extra point.
std::vector<Contour> split_contour(const Contour& contour, int k);

/// Half-open bounding box of each run, clamped to a width x height image.
std::vector<Box> boxes_from_runs(std::span<const Contour> runs, int width, int height);

/// Greedy descending-score suppression. A candidate is dropped when its IoU
/// with an already kept box exceeds iou_threshold. Equal scores keep the lower
/// index first. Returned indices are in keep order (descending score).
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold);

/// Same greedy rule over an arbitrary pairwise overlap.
std::vector<std::size_t> greedy_suppress(
    std::span<const double> scores, double threshold,
    const std::function<double(std::size_t, std::size_t)>& overlap);

}  // namespace tfcount::imageops
