#include "tfcount/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>

#include "tfcount/error.hpp"
#include "tfcount/imageops.hpp"

namespace tfcount {

namespace {

constexpr int kDefaultGrid = 32;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "pipeline config: " + what);
}

std::vector<std::vector<ScoredMask>> decode_all(Backend& backend,
                                                const std::vector<DecodeRequest>& requests) {
  std::vector<std::vector<ScoredMask>> out(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  const auto n = static_cast<std::ptrdiff_t>(requests.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = backend.decode_masks(requests[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// Greedy quality-ordered dedup shared by both modes. Candidates of one batch
// are ranked by quality (stable in point order) and compared against every
// mask accepted so far, whether from this batch or an earlier one.
class MaskAccumulator {
 public:
  MaskAccumulator(const SimilarityMap& sim, const PipelineConfig& cfg) : sim_(sim), cfg_(cfg) {}

  void seed_reference(const BinaryMask& mask) {
    if (mask.area() < cfg_.min_mask_area || duplicate(mask)) return;
    accepted_.push_back(ScoredMask{mask, similarity::mask_score(sim_, mask), 1.0});
    reference_.push_back(true);
  }

  /// Returns the number of masks accepted from this batch.
  std::size_t offer(std::vector<ScoredMask> candidates) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const ScoredMask& a, const ScoredMask& b) { return a.quality > b.quality; });
    std::size_t added = 0;
    for (auto& c : candidates) {
      if (c.mask.width() != sim_.width || c.mask.height() != sim_.height)
        throw Error(ErrorCode::kBackendFailure, "backend returned a mask of the wrong size");
      if (c.quality < cfg_.min_quality || c.mask.area() < cfg_.min_mask_area) continue;
      if (duplicate(c.mask)) continue;
      c.score = similarity::mask_score(sim_, c.mask);
      accepted_.push_back(std::move(c));
      reference_.push_back(false);
      ++added;
    }
    return added;
  }

  const std::vector<ScoredMask>& accepted() const { return accepted_; }

  std::vector<ScoredMask> finish(bool score_filter) && {
    if (!score_filter) return std::move(accepted_);
    std::vector<ScoredMask> out;
    for (std::size_t i = 0; i < accepted_.size(); ++i)
      if (reference_[i] || accepted_[i].score > cfg_.epsilon) out.push_back(std::move(accepted_[i]));
    return out;
  }

 private:
  bool duplicate(const BinaryMask& mask) const {
    for (const auto& a : accepted_)
      if (mask_iou(mask, a.mask) > cfg_.mask_nms_iou) return true;
    return false;
  }

  const SimilarityMap& sim_;
  const PipelineConfig& cfg_;
  std::vector<ScoredMask> accepted_;
  std::vector<bool> reference_;
};

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

CountResult finish_result(std::vector<ScoredMask> masks, RunStats stats,
                          std::vector<std::string> warnings) {
  CountResult r;
  r.count = static_cast<long long>(masks.size());
  r.masks = std::move(masks);
  r.stats = stats;
  r.warnings = std::move(warnings);
  return r;
}

CountResult run_vanilla(Backend& backend, const EncodedImage& encoded, const ReferenceSet& reference,
                        const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const int t = cfg.points_per_side.value_or(kDefaultGrid);
  const GridSpec grid = make_grid(t, reference.min_size, encoded.image_width, encoded.image_height,
                                  cfg.points_per_batch);
  RunStats stats;
  stats.t = t;
  stats.grid_points = static_cast<long long>(t) * t;
  stats.batches_total = static_cast<long long>(grid.batches.size());

  MaskAccumulator acc(reference.similarity, cfg);
  if (cfg.include_reference_masks)
    for (const auto& m : reference.masks) acc.seed_reference(m);

  for (const auto& batch : grid.batches) {
    std::vector<DecodeRequest> requests;
    requests.reserve(batch.size());
    for (const auto& p : batch) requests.push_back(DecodeRequest{encoded.feature_id, {p}, std::nullopt, std::nullopt});
    auto results = decode_all(backend, requests);
    stats.decoder_calls += static_cast<long long>(requests.size());
    std::vector<ScoredMask> candidates;
    for (auto& r : results)
      for (auto& m : r) candidates.push_back(std::move(m));
    acc.offer(std::move(candidates));
  }

  auto masks = std::move(acc).finish(cfg.score_filter_enabled());
  stats.wall_time_ms = elapsed_ms(start);
  return finish_result(std::move(masks), stats, reference.warnings);
}

CountResult run_prior_guided(Backend& backend, const EncodedImage& encoded,
                             const ReferenceSet& reference, const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const int w = encoded.image_width, h = encoded.image_height;
  const int t = cfg.points_per_side.value_or(
      reference.min_size > 0 ? auto_grid_size(reference.min_size) : kDefaultGrid);
  const GridSpec grid = make_grid(t, reference.min_size, w, h, cfg.points_per_batch);

  RunStats stats;
  stats.t = t;
  stats.grid_points = static_cast<long long>(t) * t;
  stats.batches_total = static_cast<long long>(grid.batches.size());
  std::vector<std::string> warnings = reference.warnings;

  std::optional<BinaryMask> positive;
  if (cfg.similarity_prior) {
    positive = imageops::otsu_binarize(reference.similarity);
    bool any = false;
    for (const auto& batch : grid.batches)
      for (const auto& p : batch) any = any || positive->get(p.x, p.y);
    if (!any) warnings.emplace_back("similarity prior marks no grid point positive");
  }

  std::optional<Embedding> semantic;
  if (cfg.semantic_prior && reference.semantic) {
    if (backend.capabilities().supports_semantic_prior)
      semantic = reference.semantic;
    else
      warnings.emplace_back("backend does not support the semantic prior; decoding without it");
  }

  MaskAccumulator acc(reference.similarity, cfg);
  BinaryMask segment_map(w, h);
  if (cfg.include_reference_masks)
    for (const auto& m : reference.masks) acc.seed_reference(m);
  if (cfg.segment_prior)
    for (const auto& m : acc.accepted()) segment_map.merge(m.mask);

  for (const auto& batch : grid.batches) {
    std::vector<DecodeRequest> requests;
    for (const auto& p : batch) {
      if (cfg.segment_prior && segment_map.get(p.x, p.y)) {
        ++stats.points_pruned_by_segment_prior;
        continue;
      }
      if (positive && !positive->get(p.x, p.y)) {
        ++stats.points_pruned_by_similarity_prior;
        continue;
      }
      requests.push_back(DecodeRequest{encoded.feature_id, {p}, std::nullopt, semantic});
    }
    if (requests.empty()) {
      ++stats.batches_skipped;
      continue;
    }
    auto results = decode_all(backend, requests);
    stats.decoder_calls += static_cast<long long>(requests.size());
    std::vector<ScoredMask> candidates;
    for (auto& r : results)
      for (auto& m : r) candidates.push_back(std::move(m));
    const std::size_t before = acc.accepted().size();
    acc.offer(std::move(candidates));
    if (cfg.segment_prior)
      for (std::size_t i = before; i < acc.accepted().size(); ++i) segment_map.merge(acc.accepted()[i].mask);
  }

  auto masks = std::move(acc).finish(cfg.score_filter_enabled());
  stats.wall_time_ms = elapsed_ms(start);
  return finish_result(std::move(masks), stats, std::move(warnings));
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

const char* to_string(CountMode mode) {
  return mode == CountMode::kVanilla ? "vanilla" : "prior";
}

CountMode parse_count_mode(const std::string& text) {
  if (text == "vanilla") return CountMode::kVanilla;
  if (text == "prior" || text == "prior_guided" || text == "prior-guided") return CountMode::kPriorGuided;
  throw Error(ErrorCode::kInvalidArgument, "mode must be 'vanilla' or 'prior', got '" + text + "'");
}

void PipelineConfig::validate() const {
  require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must be in [0,1]");
  require(mask_nms_iou >= 0.0 && mask_nms_iou <= 1.0, "mask_nms_iou must be in [0,1]");
  require(box_nms_iou >= 0.0 && box_nms_iou <= 1.0, "box_nms_iou must be in [0,1]");
  require(min_quality >= 0.0 && min_quality <= 1.0, "min_quality must be in [0,1]");
  require(points_per_batch >= 1, "points_per_batch must be >= 1");
  require(!points_per_side || *points_per_side >= 1, "points_per_side must be >= 1");
  require(contour_splits >= 1, "contour_splits must be >= 1");
  require(min_mask_area >= 0, "min_mask_area must be >= 0");
}

PipelineConfig apply_overrides(PipelineConfig cfg, const nlohmann::json& overrides) {
  if (overrides.is_null()) return cfg;
  if (!overrides.is_object()) throw Error(ErrorCode::kInvalidArgument, "config overrides must be an object");
  try {
    for (const auto& [key, value] : overrides.items()) {
      if (key == "epsilon") cfg.epsilon = value.get<double>();
      else if (key == "points_per_side") {
        if (value.is_null()) cfg.points_per_side.reset();
        else cfg.points_per_side = value.get<int>();
      }
      else if (key == "points_per_batch") cfg.points_per_batch = value.get<int>();
      else if (key == "mask_nms_iou") cfg.mask_nms_iou = value.get<double>();
      else if (key == "min_mask_area") cfg.min_mask_area = value.get<long long>();
      else if (key == "min_quality") cfg.min_quality = value.get<double>();
      else if (key == "contour_splits") cfg.contour_splits = value.get<int>();
      else if (key == "box_nms_iou") cfg.box_nms_iou = value.get<double>();
      else if (key == "mode") cfg.mode = parse_count_mode(value.get<std::string>());
      else if (key == "similarity_prior") cfg.similarity_prior = value.get<bool>();
      else if (key == "segment_prior") cfg.segment_prior = value.get<bool>();
      else if (key == "semantic_prior") cfg.semantic_prior = value.get<bool>();
      else if (key == "score_filter") {
        if (value.is_null()) cfg.score_filter.reset();
        else cfg.score_filter = value.get<bool>();
      }
      else if (key == "include_reference_masks") cfg.include_reference_masks = value.get<bool>();
      else throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config overrides: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  return {{"epsilon", cfg.epsilon},
          {"points_per_side", cfg.points_per_side ? nlohmann::json(*cfg.points_per_side) : nlohmann::json()},
          {"points_per_batch", cfg.points_per_batch},
          {"mask_nms_iou", cfg.mask_nms_iou},
          {"min_mask_area", cfg.min_mask_area},
          {"min_quality", cfg.min_quality},
          {"contour_splits", cfg.contour_splits},
          {"box_nms_iou", cfg.box_nms_iou},
          {"mode", to_string(cfg.mode)},
          {"similarity_prior", cfg.similarity_prior},
          {"segment_prior", cfg.segment_prior},
          {"semantic_prior", cfg.semantic_prior},
          {"score_filter", cfg.score_filter_enabled()},
          {"include_reference_masks", cfg.include_reference_masks}};
}

nlohmann::json to_json(const CountResult& result, bool include_timing, bool include_rle) {
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& m : result.masks) {
    const Box b = m.mask.tight_bounds();
    nlohmann::json jm = {{"score", m.score},
                         {"quality", m.quality},
                         {"area", m.mask.area()},
                         {"bbox", {b.x0, b.y0, b.x1, b.y1}}};
    if (include_rle) {
      const auto rle = rle_encode(m.mask);
      jm["rle"] = {{"width", rle.width}, {"height", rle.height}, {"counts", rle.counts}};
    }
    masks.push_back(std::move(jm));
  }
  const auto& s = result.stats;
  nlohmann::json stats = {{"t", s.t},
                          {"grid_points", s.grid_points},
                          {"decoder_calls", s.decoder_calls},
                          {"points_pruned_by_segment_prior", s.points_pruned_by_segment_prior},
                          {"points_pruned_by_similarity_prior", s.points_pruned_by_similarity_prior},
                          {"batches_total", s.batches_total},
                          {"batches_skipped", s.batches_skipped}};
  if (include_timing) stats["wall_time_ms"] = s.wall_time_ms;
  return {{"count", result.count}, {"masks", masks}, {"stats", stats}, {"warnings", result.warnings}};
}

// ---------------------------------------------------------------------------
// Grid

int auto_grid_size(int o_size) {
  if (o_size < 1) throw Error(ErrorCode::kInvalidArgument, "auto_grid_size: o_size must be >= 1");
  const int t = (32 / o_size + 1) * 32;
  return std::clamp(t, 32, 128);
}

std::vector<PromptPoint> grid_points(int t, int width, int height) {
  if (t < 1) throw Error(ErrorCode::kInvalidArgument, "grid_points: t must be >= 1");
  std::vector<PromptPoint> points;
  points.reserve(static_cast<std::size_t>(t) * t);
  for (int j = 0; j < t; ++j) {
    const int y = static_cast<int>(std::floor((j + 0.5) * height / t));
    for (int i = 0; i < t; ++i) {
      const int x = static_cast<int>(std::floor((i + 0.5) * width / t));
      points.push_back(PromptPoint{x, y, PointLabel::kPositive});
    }
  }
  return points;
}

GridSpec make_grid(int t, int o_size, int width, int height, int points_per_batch) {
  if (points_per_batch < 1) throw Error(ErrorCode::kInvalidArgument, "points_per_batch must be >= 1");
  GridSpec spec{t, o_size, {}};
  const auto points = grid_points(t, width, height);
  for (std::size_t i = 0; i < points.size(); i += points_per_batch)
    spec.batches.emplace_back(points.begin() + i,
                              points.begin() + std::min(points.size(), i + points_per_batch));
  return spec;
}

// ---------------------------------------------------------------------------
// Reference objects

ReferenceSet reference_from_prompts(Backend& backend, const EncodedImage& encoded,
                                    const PromptSet& prompts) {
  std::vector<PromptPoint> negatives;
  std::vector<DecodeRequest> requests;
  for (const auto& p : prompts.points)
    if (p.label == PointLabel::kNegative) negatives.push_back(p);
  for (const auto& b : prompts.boxes)
    requests.push_back(DecodeRequest{encoded.feature_id, negatives, b, std::nullopt});
  for (const auto& p : prompts.points) {
    if (p.label != PointLabel::kPositive) continue;
    std::vector<PromptPoint> pts{p};
    pts.insert(pts.end(), negatives.begin(), negatives.end());
    requests.push_back(DecodeRequest{encoded.feature_id, std::move(pts), std::nullopt, std::nullopt});
  }
  if (requests.empty())
    throw Error(ErrorCode::kInvalidArgument, "reference prompts need at least one positive point or box");

  const auto results = decode_all(backend, requests);
  ReferenceSet ref;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.empty() || std::all_of(r.begin(), r.end(), [](const ScoredMask& m) { return m.mask.empty(); })) {
      ref.warnings.push_back("exemplar prompt " + std::to_string(i) + " produced no mask; skipped");
      continue;
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.size(); ++k)
      if (r[k].quality > r[best].quality && !r[k].mask.empty()) best = k;
    ref.masks.push_back(r[best].mask);
  }
  if (ref.masks.empty())
    throw Error(ErrorCode::kNoReference, "no exemplar prompt produced a reference mask");

  const int scale_num = backend.capabilities().input_resolution;
  const int long_side = std::max(encoded.image_width, encoded.image_height);
  std::vector<SimilarityMap> maps;
  int min_size = 0;
  for (const auto& m : ref.masks) {
    ref.embeddings.push_back(similarity::masked_average_pool(encoded.features, m));
    maps.push_back(similarity::cosine_similarity_map(encoded.features, ref.embeddings.back()));
    const Box b = m.tight_bounds();
    int side = std::min(b.width(), b.height());
    if (scale_num > 0)
      side = std::max(1, static_cast<int>(std::lround(static_cast<double>(side) * scale_num / long_side)));
    min_size = min_size == 0 ? side : std::min(min_size, side);
  }
  ref.min_size = min_size;

  Embedding fused;
  fused.values.assign(encoded.features.channels, 0.0f);
  for (const auto& e : ref.embeddings)
    for (std::size_t c = 0; c < e.values.size(); ++c) fused.values[c] += e.values[c];
  for (auto& v : fused.values) v /= static_cast<float>(ref.embeddings.size());
  ref.semantic = std::move(fused);

  ref.similarity = similarity::upsample_and_normalize(similarity::fuse_exemplar_maps(maps),
                                                      encoded.image_width, encoded.image_height);
  return ref;
}

// ---------------------------------------------------------------------------
// Counting

CountResult count_with_reference(Backend& backend, const EncodedImage& encoded,
                                 const ReferenceSet& reference, const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.mode == CountMode::kVanilla) return run_vanilla(backend, encoded, reference, cfg);
  return run_prior_guided(backend, encoded, reference, cfg);
}

CountResult vanilla_count(Backend& backend, const Image& image, const PromptSet& prompts,
                          const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  c.mode = CountMode::kVanilla;
  const auto encoded = backend.encode_image(image);
  return count_with_reference(backend, encoded, reference_from_prompts(backend, encoded, prompts), c);
}

CountResult prior_guided_count(Backend& backend, const Image& image, const PromptSet& prompts,
                               const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  c.mode = CountMode::kPriorGuided;
  const auto encoded = backend.encode_image(image);
  return count_with_reference(backend, encoded, reference_from_prompts(backend, encoded, prompts), c);
}

std::vector<Box> select_reference_boxes_from_text(Backend& backend, const EncodedImage& encoded,
                                                  const std::string& text,
                                                  const PipelineConfig& cfg) {
  if (!backend.capabilities().supports_text)
    throw Error(ErrorCode::kUnsupported, "backend does not support text prompts");
  const int w = encoded.image_width, h = encoded.image_height;
  const auto sim = similarity::upsample_and_normalize(backend.text_similarity(encoded.feature_id, text), w, h);
  const auto positive = imageops::otsu_binarize(sim);
  if (positive.empty())
    throw Error(ErrorCode::kNoReference, "text similarity map has no positive region");

  const auto component = imageops::largest_component(imageops::connected_components(positive, 8));
  const auto contour = imageops::trace_contour(component);
  const int k = std::min<int>(cfg.contour_splits, static_cast<int>(contour.size()));
  const auto runs = imageops::split_contour(contour, k);
  const auto boxes = imageops::boxes_from_runs(runs, w, h);

  std::vector<double> scores;
  scores.reserve(boxes.size());
  for (const auto& b : boxes) {
    double s = 0.0;
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x) s += sim.at(x, y);
    scores.push_back(s / static_cast<double>(b.area()));
  }
  std::vector<Box> kept;
  for (std::size_t i : imageops::nms(boxes, scores, cfg.box_nms_iou)) kept.push_back(boxes[i]);
  return kept;
}

CountResult text_count(Backend& backend, const Image& image, const std::string& text,
                       const PipelineConfig& cfg, SimilarityMap* similarity_out) {
  const auto encoded = backend.encode_image(image);
  ReferenceSet reference;
  try {
    PromptSet prompts;
    prompts.boxes = select_reference_boxes_from_text(backend, encoded, text, cfg);
    reference = reference_from_prompts(backend, encoded, prompts);
  } catch (const Error& e) {
    // Nothing in the image matches the text: that is a count of zero.
    if (e.code() != ErrorCode::kNoReference) throw;
    CountResult empty;
    empty.warnings.push_back(std::string("no reference object found for text: ") + e.what());
    return empty;
  }
  if (similarity_out) *similarity_out = reference.similarity;
  return count_with_reference(backend, encoded, reference, cfg);
}

CountResult coarse_text_count(Backend& backend, const Image& image, const std::string& text,
                              const PipelineConfig& cfg) {
  if (!backend.capabilities().supports_text)
    throw Error(ErrorCode::kUnsupported, "backend does not support text prompts");
  const auto encoded = backend.encode_image(image);
  ReferenceSet reference;
  reference.similarity = similarity::upsample_and_normalize(
      backend.text_similarity(encoded.feature_id, text), encoded.image_width, encoded.image_height);
  return count_with_reference(backend, encoded, reference, cfg);
}

CountResult count_objects(Backend& backend, const Image& image, const PromptSet& prompts,
                          const PipelineConfig& cfg, SimilarityMap* similarity_out) {
  if (!prompts.points.empty() || !prompts.boxes.empty()) {
    const auto encoded = backend.encode_image(image);
    const auto reference = reference_from_prompts(backend, encoded, prompts);
    if (similarity_out) *similarity_out = reference.similarity;
    return count_with_reference(backend, encoded, reference, cfg);
  }
  if (prompts.text && !prompts.text->empty())
    return text_count(backend, image, *prompts.text, cfg, similarity_out);
  throw Error(ErrorCode::kInvalidArgument, "no prompt given: need points, boxes, or text");
}

}  // namespace tfcount
