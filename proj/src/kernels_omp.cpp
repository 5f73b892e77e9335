#include <algorithm>
#include <cmath>
#include <limits>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "tfcount/kernels.hpp"

namespace tfcount::kernels {

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace omp {

std::vector<float> cosine_map(std::span<const float> features, int channels,
                              std::span<const float> ref) {
  const auto cells = static_cast<std::ptrdiff_t>(features.size() / channels);
  double ref_norm = 0.0;
  for (float r : ref) ref_norm += static_cast<double>(r) * r;
  ref_norm = std::sqrt(ref_norm);

  std::vector<float> out(cells, 0.0f);
  if (ref_norm == 0.0) return out;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < cells; ++i) {
    const float* f = features.data() + i * channels;
    double dot = 0.0, norm = 0.0;
    for (int c = 0; c < channels; ++c) {
      dot += static_cast<double>(f[c]) * ref[c];
      norm += static_cast<double>(f[c]) * f[c];
    }
    if (norm != 0.0)
      out[i] = static_cast<float>(std::clamp(dot / (std::sqrt(norm) * ref_norm), -1.0, 1.0));
  }
  return out;
}

std::vector<float> bilinear_resize(std::span<const float> src, int src_w, int src_h,
                                   int dst_w, int dst_h) {
  std::vector<float> out(static_cast<std::size_t>(dst_w) * dst_h);
  const double scale_x = static_cast<double>(src_w) / dst_w;
  const double scale_y = static_cast<double>(src_h) / dst_h;

  // Column taps are shared by every row.
  std::vector<int> col0(dst_w), col1(dst_w);
  std::vector<double> wx(dst_w);
  for (int x = 0; x < dst_w; ++x) {
    const double sx = std::max(0.0, (x + 0.5) * scale_x - 0.5);
    col0[x] = std::min(static_cast<int>(sx), src_w - 1);
    col1[x] = std::min(col0[x] + 1, src_w - 1);
    wx[x] = sx - col0[x];
  }

#pragma omp parallel for schedule(static)
  for (int y = 0; y < dst_h; ++y) {
    const double sy = std::max(0.0, (y + 0.5) * scale_y - 0.5);
    const int y0 = std::min(static_cast<int>(sy), src_h - 1);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double ly = sy - y0;
    const float* r0 = src.data() + static_cast<std::size_t>(y0) * src_w;
    const float* r1 = src.data() + static_cast<std::size_t>(y1) * src_w;
    float* dst = out.data() + static_cast<std::size_t>(y) * dst_w;
    for (int x = 0; x < dst_w; ++x) {
      const double lx = wx[x];
      const double top = (1.0 - lx) * r0[col0[x]] + lx * r0[col1[x]];
      const double bottom = (1.0 - lx) * r1[col0[x]] + lx * r1[col1[x]];
      dst[x] = static_cast<float>((1.0 - ly) * top + ly * bottom);
    }
  }
  return out;
}

std::pair<float, float> min_max(std::span<const float> values) {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  const auto n = static_cast<std::ptrdiff_t>(values.size());
#pragma omp parallel for schedule(static) reduction(min : lo) reduction(max : hi)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  return {lo, hi};
}

double masked_sum(std::span<const float> values, const BinaryMask& mask) {
  if (mask.empty()) return 0.0;
  const Box e = mask.extent();
  const int w = mask.width();
  std::vector<double> rows(e.height(), 0.0);
#pragma omp parallel for schedule(static)
  for (int y = e.y0; y < e.y1; ++y) {
    double s = 0.0;
    for (int x = e.x0; x < e.x1; ++x)
      if (mask.get(x, y)) s += values[static_cast<std::size_t>(y) * w + x];
    rows[y - e.y0] = s;
  }
  double sum = 0.0;
  for (double r : rows) sum += r;
  return sum;
}

std::vector<std::uint32_t> cell_coverage(const BinaryMask& mask, CellGrid grid) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(grid.grid_w) * grid.grid_h, 0);
  if (mask.empty()) return out;
  const Box e = mask.extent();
  // One cell row per iteration, so no two threads touch the same counter.
#pragma omp parallel for schedule(static)
  for (int cy = 0; cy < grid.grid_h; ++cy) {
    const int ya = std::max(e.y0, cy * grid.stride);
    const int yb = cy == grid.grid_h - 1 ? e.y1 : std::min(e.y1, (cy + 1) * grid.stride);
    for (int y = ya; y < yb; ++y)
      for (int x = e.x0; x < e.x1; ++x)
        if (mask.get(x, y)) {
          const int cx = std::min(x / grid.stride, grid.grid_w - 1);
          ++out[static_cast<std::size_t>(cy) * grid.grid_w + cx];
        }
  }
  return out;
}

std::vector<float> selected_mean(std::span<const float> features, int channels,
                                 std::span<const std::uint8_t> selected) {
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < selected.size(); ++i)
    if (selected[i]) cells.push_back(i);
  std::vector<float> out(channels, 0.0f);
  if (cells.empty()) return out;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t i : cells) s += features[i * channels + c];
    out[c] = static_cast<float>(s / cells.size());
  }
  return out;
}

}  // namespace omp
}  // namespace tfcount::kernels
