#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tfcount {

/// 8-bit interleaved RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // width * height * 3

  static constexpr int kChannels = 3;

  Image() = default;
  Image(int w, int h);

  bool valid() const;
  std::size_t pixel_offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * kChannels;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Axis-aligned box, half-open on the max edges: [x0,x1) x [y0,y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool valid() const { return x0 < x1 && y0 < y1; }
  long long area() const {
    return valid() ? static_cast<long long>(x1 - x0) * (y1 - y0) : 0;
  }
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool contains(int x, int y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
  Box clamped(int w, int h) const;

  friend bool operator==(const Box&, const Box&) = default;
};

double box_iou(const Box& a, const Box& b);

enum class PointLabel : std::uint8_t { kNegative = 0, kPositive = 1 };

struct PromptPoint {
  int x = 0;
  int y = 0;
  PointLabel label = PointLabel::kPositive;

  friend bool operator==(const PromptPoint&, const PromptPoint&) = default;
};

struct PromptSet {
  std::vector<PromptPoint> points;
  std::vector<Box> boxes;
  std::optional<std::string> text;

  bool empty() const {
    return points.empty() && boxes.empty() && (!text || text->empty());
  }
  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

/// Backbone features, cell-major: values[(row * grid_w + col) * channels + c].
struct FeatureMap {
  int channels = 0;
  int grid_h = 0;
  int grid_w = 0;
  int stride = 1;  // image pixels per feature cell along each axis
  std::vector<float> values;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(grid_h) * grid_w;
  }
  const float* cell(std::size_t index) const {
    return values.data() + index * channels;
  }
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Reference object feature (masked pooled backbone feature).
struct Embedding {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

/// Row-major scalar field. Raw cosine values lie in [-1,1]; normalized maps in
/// [0,1].
struct SimilarityMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  bool normalized = false;

  float at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  friend bool operator==(const SimilarityMap&, const SimilarityMap&) = default;
};

}  // namespace tfcount
