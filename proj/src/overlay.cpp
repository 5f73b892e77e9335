#include "tfcount/overlay.hpp"

#include <array>
#include <string>

#include "tfcount/error.hpp"

namespace tfcount {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 6> kColors{{
    {255, 64, 64}, {64, 200, 255}, {255, 200, 32}, {120, 255, 120}, {255, 96, 255}, {255, 255, 255},
}};

// 3x5 digits, one row per entry, high bit = left column.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits{{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

void put(Image& img, int x, int y, const std::array<std::uint8_t, 3>& c, double alpha) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  const auto off = img.pixel_offset(x, y);
  for (int k = 0; k < 3; ++k) {
    const double v = (1.0 - alpha) * img.rgb[off + k] + alpha * c[k];
    img.rgb[off + k] = static_cast<std::uint8_t>(v + 0.5);
  }
}

bool boundary(const BinaryMask& m, int x, int y) {
  static constexpr int dx[] = {1, -1, 0, 0};
  static constexpr int dy[] = {0, 0, 1, -1};
  for (int k = 0; k < 4; ++k) {
    const int nx = x + dx[k], ny = y + dy[k];
    if (nx < 0 || ny < 0 || nx >= m.width() || ny >= m.height() || !m.get(nx, ny)) return true;
  }
  return false;
}

void stamp_count(Image& img, long long count) {
  const std::string text = std::to_string(count);
  const int scale = std::max(1, std::min(img.width, img.height) / 64);
  const int pad = scale;
  const int w = static_cast<int>(text.size()) * 4 * scale + pad;
  const int h = 5 * scale + 2 * pad;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w + pad; ++x) put(img, x, y, {0, 0, 0}, 0.7);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto& glyph = kDigits[text[i] - '0'];
    const int ox = pad + static_cast<int>(i) * 4 * scale;
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 3; ++c)
        if (glyph[r] & (4 >> c))
          for (int sy = 0; sy < scale; ++sy)
            for (int sx = 0; sx < scale; ++sx)
              put(img, ox + c * scale + sx, pad + r * scale + sy, {255, 255, 255}, 1.0);
  }
}

}  // namespace

Image render_overlay(const Image& base, const std::vector<ScoredMask>& masks, long long count) {
  if (!base.valid()) throw Error(ErrorCode::kInvalidArgument, "overlay: invalid base image");
  Image out = base;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& m = masks[i].mask;
    if (m.width() != base.width || m.height() != base.height)
      throw Error(ErrorCode::kDimensionMismatch, "overlay: mask size differs from image");
    const auto& color = kColors[i % kColors.size()];
    const Box e = m.extent();
    for (int y = e.y0; y < e.y1; ++y)
      for (int x = e.x0; x < e.x1; ++x)
        if (m.get(x, y)) put(out, x, y, color, boundary(m, x, y) ? 1.0 : 0.35);
  }
  stamp_count(out, count);
  return out;
}

}  // namespace tfcount
