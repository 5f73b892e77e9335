#pragma once

#include <span>
#include <vector>

#include "tfcount/mask.hpp"
#include "tfcount/types.hpp"

namespace tfcount {

/// A candidate object mask with its similarity score and the backend's own
/// quality estimate.
struct ScoredMask {
  BinaryMask mask;
  double score = 0.0;
  double quality = 0.0;

  friend bool operator==(const ScoredMask&, const ScoredMask&) = default;
};

namespace similarity {

/// Reference feature: mean feature over the cells at least half covered by
/// the mask (falls back to the cell holding the mask centroid).
Embedding masked_average_pool(const FeatureMap& features, const BinaryMask& ref_mask);

/// Cosine similarity of every feature cell with the reference, at feature
/// resolution. Cells with zero-norm features score 0.
SimilarityMap cosine_similarity_map(const FeatureMap& features, const Embedding& ref);

/// Per-pixel mean of equally sized maps.
SimilarityMap fuse_exemplar_maps(std::span<const SimilarityMap> maps);

/// Bilinear upsampling (half-pixel centres) to width x height, then min-max
/// normalization to [0,1]. Constant maps become all zeros.
SimilarityMap upsample_and_normalize(const SimilarityMap& raw, int width, int height);

/// Mean similarity under the mask.
double mask_score(const SimilarityMap& sim, const BinaryMask& mask);

}  // namespace similarity
}  // namespace tfcount
