#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfcount/backend.hpp"
#include "tfcount/similarity.hpp"

namespace tfcount {

enum class CountMode { kVanilla, kPriorGuided };

const char* to_string(CountMode mode);
CountMode parse_count_mode(const std::string& text);  // "vanilla" | "prior" | "prior_guided"

struct PipelineConfig {
  double epsilon = 0.5;
  std::optional<int> points_per_side;  // overrides the grid density t
  int points_per_batch = 64;
  double mask_nms_iou = 0.7;
  long long min_mask_area = 10;
  double min_quality = 0.5;
  int contour_splits = 8;
  double box_nms_iou = 0.5;
  CountMode mode = CountMode::kPriorGuided;

  // Ablation switches for prior-guided mode.
  bool similarity_prior = true;
  bool segment_prior = true;
  bool semantic_prior = true;
  // Mask score > epsilon filter. Unset: on for vanilla, off for prior-guided.
  std::optional<bool> score_filter;
  // Count the exemplar masks themselves (they are instances of the target).
  bool include_reference_masks = true;

  bool score_filter_enabled() const {
    return score_filter.value_or(mode == CountMode::kVanilla);
  }
  void validate() const;
};

/// Applies the keys present in `overrides` (same names as the fields, mode as
/// "vanilla"/"prior") on top of `base`.
PipelineConfig apply_overrides(PipelineConfig base, const nlohmann::json& overrides);
nlohmann::json to_json(const PipelineConfig& cfg);

struct RunStats {
  int t = 0;
  long long grid_points = 0;
  long long decoder_calls = 0;
  long long points_pruned_by_segment_prior = 0;
  long long points_pruned_by_similarity_prior = 0;
  long long batches_total = 0;
  long long batches_skipped = 0;
  double wall_time_ms = 0.0;

  friend bool operator==(const RunStats&, const RunStats&) = default;
};

struct CountResult {
  long long count = 0;
  std::vector<ScoredMask> masks;
  RunStats stats;
  std::vector<std::string> warnings;
};

/// JSON summary of a result; wall time is omitted unless include_timing.
nlohmann::json to_json(const CountResult& result, bool include_timing = true,
                       bool include_rle = false);

// ---------------------------------------------------------------------------
// Grid scheduling

/// t = (floor(32 / o_size) + 1) * 32, clamped to [32, 128].
int auto_grid_size(int o_size);

/// Centres of a t x t partition of the image, row-major, all positive.
std::vector<PromptPoint> grid_points(int t, int width, int height);

struct GridSpec {
  int t = 0;
  int o_size = 0;
  std::vector<std::vector<PromptPoint>> batches;
};

GridSpec make_grid(int t, int o_size, int width, int height, int points_per_batch);

// ---------------------------------------------------------------------------
// Reference objects

struct ReferenceSet {
  std::vector<BinaryMask> masks;
  std::vector<Embedding> embeddings;
  std::optional<Embedding> semantic;  // mean of embeddings
  SimilarityMap similarity;           // fused, upsampled, normalized
  int min_size = 0;                   // O_size at backend input resolution, 0 if unknown
  std::vector<std::string> warnings;
};

/// One decode per point / box prompt; each non-empty result contributes its
/// best-quality mask and the pooled feature under it.
ReferenceSet reference_from_prompts(Backend& backend, const EncodedImage& encoded,
                                    const PromptSet& prompts);

// ---------------------------------------------------------------------------
// Counting

/// Grid stage for an already built reference (dispatches on cfg.mode).
CountResult count_with_reference(Backend& backend, const EncodedImage& encoded,
                                 const ReferenceSet& reference, const PipelineConfig& cfg);

CountResult vanilla_count(Backend& backend, const Image& image, const PromptSet& prompts,
                          const PipelineConfig& cfg);
CountResult prior_guided_count(Backend& backend, const Image& image, const PromptSet& prompts,
                               const PipelineConfig& cfg);

/// Text stage one: coarse text map -> Otsu -> largest component -> contour
/// runs -> boxes -> NMS. Scores for NMS are mean normalized similarity in box.
std::vector<Box> select_reference_boxes_from_text(Backend& backend, const EncodedImage& encoded,
                                                  const std::string& text,
                                                  const PipelineConfig& cfg);

/// Two-stage text counting: selected boxes become exemplar prompts. When no
/// reference object can be found the count is 0 with a warning.
/// `similarity_out`, when given, receives the similarity map the grid used.
CountResult text_count(Backend& backend, const Image& image, const std::string& text,
                       const PipelineConfig& cfg, SimilarityMap* similarity_out = nullptr);

/// Text counting without reference selection: the normalized coarse text map
/// is used directly as the similarity prior (no exemplar, no semantic prior).
CountResult coarse_text_count(Backend& backend, const Image& image, const std::string& text,
                              const PipelineConfig& cfg);

/// Entry point used by the CLI and service: text when only text is given,
/// otherwise exemplar prompts in cfg.mode.
CountResult count_objects(Backend& backend, const Image& image, const PromptSet& prompts,
                          const PipelineConfig& cfg, SimilarityMap* similarity_out = nullptr);

}  // namespace tfcount
