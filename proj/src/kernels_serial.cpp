#include <algorithm>
#include <cmath>
#include <limits>

#include "tfcount/kernels.hpp"

namespace tfcount::kernels::serial {

std::vector<float> cosine_map(std::span<const float> features, int channels,
                              std::span<const float> ref) {
  const std::size_t cells = features.size() / channels;
  double ref_norm = 0.0;
  for (float r : ref) ref_norm += static_cast<double>(r) * r;
  ref_norm = std::sqrt(ref_norm);

  std::vector<float> out(cells, 0.0f);
  for (std::size_t i = 0; i < cells; ++i) {
    const float* f = features.data() + i * channels;
    double dot = 0.0, norm = 0.0;
    for (int c = 0; c < channels; ++c) {
      dot += static_cast<double>(f[c]) * ref[c];
      norm += static_cast<double>(f[c]) * f[c];
    }
    if (norm == 0.0 || ref_norm == 0.0) continue;
    out[i] = static_cast<float>(std::clamp(dot / (std::sqrt(norm) * ref_norm), -1.0, 1.0));
  }
  return out;
}

std::vector<float> bilinear_resize(std::span<const float> src, int src_w, int src_h,
                                   int dst_w, int dst_h) {
  std::vector<float> out(static_cast<std::size_t>(dst_w) * dst_h);
  const double scale_x = static_cast<double>(src_w) / dst_w;
  const double scale_y = static_cast<double>(src_h) / dst_h;
  for (int y = 0; y < dst_h; ++y) {
    const double sy = std::max(0.0, (y + 0.5) * scale_y - 0.5);
    const int y0 = std::min(static_cast<int>(sy), src_h - 1);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double ly = sy - y0;
    for (int x = 0; x < dst_w; ++x) {
      const double sx = std::max(0.0, (x + 0.5) * scale_x - 0.5);
      const int x0 = std::min(static_cast<int>(sx), src_w - 1);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double lx = sx - x0;
      const double top = (1.0 - lx) * src[static_cast<std::size_t>(y0) * src_w + x0] +
                         lx * src[static_cast<std::size_t>(y0) * src_w + x1];
      const double bottom = (1.0 - lx) * src[static_cast<std::size_t>(y1) * src_w + x0] +
                            lx * src[static_cast<std::size_t>(y1) * src_w + x1];
      out[static_cast<std::size_t>(y) * dst_w + x] =
          static_cast<float>((1.0 - ly) * top + ly * bottom);
    }
  }
  return out;
}

std::pair<float, float> min_max(std::span<const float> values) {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (float v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

double masked_sum(std::span<const float> values, const BinaryMask& mask) {
  double sum = 0.0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.get(x, y)) sum += values[static_cast<std::size_t>(y) * mask.width() + x];
  return sum;
}

std::vector<std::uint32_t> cell_coverage(const BinaryMask& mask, CellGrid grid) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(grid.grid_w) * grid.grid_h, 0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.get(x, y)) continue;
      const int cx = std::min(x / grid.stride, grid.grid_w - 1);
      const int cy = std::min(y / grid.stride, grid.grid_h - 1);
      ++out[static_cast<std::size_t>(cy) * grid.grid_w + cx];
    }
  return out;
}

std::vector<float> selected_mean(std::span<const float> features, int channels,
                                 std::span<const std::uint8_t> selected) {
  std::vector<double> sum(channels, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (!selected[i]) continue;
    ++n;
    for (int c = 0; c < channels; ++c) sum[c] += features[i * channels + c];
  }
  std::vector<float> out(channels, 0.0f);
  if (n == 0) return out;
  for (int c = 0; c < channels; ++c) out[c] = static_cast<float>(sum[c] / n);
  return out;
}

}  // namespace tfcount::kernels::serial
