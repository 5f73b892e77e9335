#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tfcount/similarity.hpp"
#include "tfcount/types.hpp"

namespace tfcount {

struct BackendCapabilities {
  std::string name;
  bool supports_semantic_prior = false;
  bool supports_text = false;
  int input_resolution = 0;  // long side the model sees; 0 = native resolution
  int feature_channels = 0;
  int feature_stride = 1;

  friend bool operator==(const BackendCapabilities&, const BackendCapabilities&) = default;
};

struct EncodedImage {
  std::string feature_id;
  FeatureMap features;
  int image_width = 0;
  int image_height = 0;

  friend bool operator==(const EncodedImage&, const EncodedImage&) = default;
};

/// One promptable decode: a small point set and/or one box against a cached
/// image encoding, optionally conditioned on a reference embedding.
struct DecodeRequest {
  std::string feature_id;
  std::vector<PromptPoint> points;
  std::optional<Box> box;
  std::optional<Embedding> semantic;

  friend bool operator==(const DecodeRequest&, const DecodeRequest&) = default;
};

/// Inference backend contract. Implementations must allow concurrent
/// decode_masks / text_similarity calls against one cached encoding.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendCapabilities capabilities() const = 0;
  virtual EncodedImage encode_image(const Image& image) = 0;
  /// Masks at image resolution with quality in [0,1]; score is left at 0.
  virtual std::vector<ScoredMask> decode_masks(const DecodeRequest& request) = 0;
  /// Raw text-image similarity at feature resolution.
  virtual SimilarityMap text_similarity(const std::string& feature_id,
                                        const std::string& text) = 0;
};

/// Stable 64-bit FNV-1a content hash of an image, as 16 hex digits.
std::string content_hash(const Image& image);

/// Backend from a URL: `synthetic:<scene.json>` or `http(s)://host:port`.
std::unique_ptr<Backend> make_backend(const std::string& url);

}  // namespace tfcount
