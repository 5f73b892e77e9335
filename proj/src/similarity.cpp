#include "tfcount/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "tfcount/error.hpp"
#include "tfcount/kernels.hpp"

namespace tfcount::similarity {

Embedding masked_average_pool(const FeatureMap& features, const BinaryMask& ref_mask) {
  if (ref_mask.empty())
    throw Error(ErrorCode::kEmptyInput, "masked_average_pool: empty reference mask");
  const kernels::CellGrid grid{features.grid_w, features.grid_h, features.stride};
  const auto coverage = kernels::omp::cell_coverage(ref_mask, grid);

  const int w = ref_mask.width(), h = ref_mask.height();
  std::vector<std::uint8_t> selected(features.cell_count(), 0);
  bool any = false;
  for (int cy = 0; cy < features.grid_h; ++cy) {
    const int rows = std::max(0, std::min(features.stride, h - cy * features.stride));
    for (int cx = 0; cx < features.grid_w; ++cx) {
      const int cols = std::max(0, std::min(features.stride, w - cx * features.stride));
      const std::size_t i = static_cast<std::size_t>(cy) * features.grid_w + cx;
      const long long pixels = static_cast<long long>(rows) * cols;
      if (pixels > 0 && 2LL * coverage[i] >= pixels) {
        selected[i] = 1;
        any = true;
      }
    }
  }
  if (!any) {
    double sx = 0.0, sy = 0.0;
    const Box e = ref_mask.extent();
    for (int y = e.y0; y < e.y1; ++y)
      for (int x = e.x0; x < e.x1; ++x)
        if (ref_mask.get(x, y)) {
          sx += x + 0.5;
          sy += y + 0.5;
        }
    const double n = static_cast<double>(ref_mask.area());
    const int cx = std::clamp(static_cast<int>(sx / n) / features.stride, 0, features.grid_w - 1);
    const int cy = std::clamp(static_cast<int>(sy / n) / features.stride, 0, features.grid_h - 1);
    selected[static_cast<std::size_t>(cy) * features.grid_w + cx] = 1;
  }
  return Embedding{kernels::omp::selected_mean(features.values, features.channels, selected)};
}

SimilarityMap cosine_similarity_map(const FeatureMap& features, const Embedding& ref) {
  if (ref.dim() != static_cast<std::size_t>(features.channels))
    throw Error(ErrorCode::kDimensionMismatch, "reference dim does not match feature channels");
  const bool zero = std::all_of(ref.values.begin(), ref.values.end(),
                                [](float v) { return v == 0.0f; });
  if (zero) throw Error(ErrorCode::kInvalidArgument, "zero reference vector");
  SimilarityMap map;
  map.width = features.grid_w;
  map.height = features.grid_h;
  map.values = kernels::omp::cosine_map(features.values, features.channels, ref.values);
  return map;
}

SimilarityMap fuse_exemplar_maps(std::span<const SimilarityMap> maps) {
  if (maps.empty()) throw Error(ErrorCode::kEmptyInput, "fuse_exemplar_maps: no maps");
  if (maps.size() == 1) return maps.front();
  SimilarityMap out;
  out.width = maps.front().width;
  out.height = maps.front().height;
  out.normalized = false;
  std::vector<double> acc(maps.front().values.size(), 0.0);
  for (const auto& m : maps) {
    if (m.width != out.width || m.height != out.height)
      throw Error(ErrorCode::kDimensionMismatch, "fuse_exemplar_maps: dimension mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.values[i];
  }
  out.values.resize(acc.size());
  const double n = static_cast<double>(maps.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i] / n);
  return out;
}

SimilarityMap upsample_and_normalize(const SimilarityMap& raw, int width, int height) {
  if (raw.width < 1 || raw.height < 1 || width < raw.width || height < raw.height)
    throw Error(ErrorCode::kInvalidArgument, "upsample target must not be smaller than source");
  SimilarityMap out;
  out.width = width;
  out.height = height;
  out.normalized = true;
  out.values = kernels::omp::bilinear_resize(raw.values, raw.width, raw.height, width, height);

  const auto [lo, hi] = kernels::omp::min_max(out.values);
  const auto n = static_cast<std::ptrdiff_t>(out.values.size());
  if (!(hi > lo)) {
    std::fill(out.values.begin(), out.values.end(), 0.0f);
    return out;
  }
  const float range = hi - lo;
  float* v = out.values.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) v[i] = (v[i] - lo) / range;
  return out;
}

double mask_score(const SimilarityMap& sim, const BinaryMask& mask) {
  if (sim.width != mask.width() || sim.height != mask.height())
    throw Error(ErrorCode::kDimensionMismatch, "mask_score: dimension mismatch");
  if (mask.empty()) throw Error(ErrorCode::kUndefinedScore, "mask_score: empty mask");
  return kernels::omp::masked_sum(sim.values, mask) / static_cast<double>(mask.area());
}

}  // namespace tfcount::similarity
