#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfcount/backend.hpp"
#include "tfcount/imageops.hpp"

namespace tfcount::synthetic {

// Oracle world: solid ellipses painted in per-class palette colours on a
// uniform background. The backend recovers class identity from pixel colour,
// so decoded masks equal the painted blobs exactly.

constexpr int kMaxClasses = 15;

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Colour of class id (0 = background, 1..kMaxClasses).
Rgb class_color(int class_id);

struct Blob {
  double cx = 0, cy = 0;  // centre, pixels
  double ax = 1, ay = 1;  // semi-axes, pixels
  int class_id = 1;

  bool contains(int x, int y) const;
  Box bounds(int width, int height) const;
};

struct Scene {
  int width = 256;
  int height = 256;
  int stride = 4;     // feature cell size
  int channels = 8;   // one-hot feature width; class ids < channels
  double noise_sigma = 0.05;
  double text_noise_sigma = 0.1;
  int text_stride = 4;          // cell size of the text map
  double text_confusion = 0.3;  // text response on other foreground classes
  bool multimask = false;  // also emit the point's quadrant sub-part (no semantic)
  std::map<std::string, int> class_names;
  std::vector<Blob> blobs;

  long long count_of(int class_id) const;
  void validate() const;
};

nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
Scene load_scene(const std::filesystem::path& path);
void save_scene(const Scene& scene, const std::filesystem::path& path);

Image render(const Scene& scene);

struct SceneSpec {
  int targets = 5;
  int distractors = 3;
  int width = 256;
  int height = 256;
  double min_radius = 6.0;
  double max_radius = 11.0;
  double gap = 4.0;  // minimum clearance between blob bounding circles
  double noise_sigma = 0.05;
  double text_noise_sigma = 0.1;
  int text_stride = 4;
  double text_confusion = 0.3;
  bool multimask = false;
  int target_class = 2;
  int distractor_class = 3;
};

/// Random non-overlapping scene. Throws if the blobs cannot be placed.
/// Registers "circle" -> class 2, "square" -> class 3 and "class<k>" names.
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Axis-aligned bounding box of the first blob of the class.
Box exemplar_box(const Scene& scene, int class_id);

/// Strips the "the photo of many" template, lower-cases, and resolves simple
/// plurals. Returns 0 for unknown names.
int resolve_class(const std::map<std::string, int>& names, const std::string& text);

class SyntheticBackend final : public Backend {
 public:
  explicit SyntheticBackend(Scene config, std::size_t cache_capacity = 64);

  BackendCapabilities capabilities() const override;
  EncodedImage encode_image(const Image& image) override;
  std::vector<ScoredMask> decode_masks(const DecodeRequest& request) override;
  SimilarityMap text_similarity(const std::string& feature_id,
                                const std::string& text) override;

  const Scene& config() const { return config_; }

 private:
  struct Instance {
    int class_id = 0;
    BinaryMask mask;
    double cx = 0, cy = 0;  // centroid (pixel centres)
  };
  struct Entry {
    EncodedImage encoded;
    std::vector<std::uint8_t> classes;   // per-pixel class id
    std::vector<std::int32_t> instance;  // per-pixel instance index + 1 (0 = none)
    std::vector<Instance> instances;
  };

  std::shared_ptr<const Entry> lookup(const std::string& feature_id) const;

  Scene config_;
  std::size_t cache_capacity_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const Entry>> cache_;
  std::vector<std::string> insertion_order_;
};

}  // namespace tfcount::synthetic
