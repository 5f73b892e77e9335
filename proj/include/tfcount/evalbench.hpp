#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfcount/backend.hpp"
#include "tfcount/pipelines.hpp"

namespace tfcount::eval {

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;  // absolute after loading
  std::string class_name;
  std::vector<Box> exemplar_boxes;
  long long gt_count = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

/// {"entries": [{"id"?, "image_path", "class_name", "exemplar_boxes": [[x0,y0,x1,y1]...],
/// "gt_count"}]}. Relative image paths resolve against `base_dir`.
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const DatasetManifest& manifest, const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double nae = 0.0;
  double sre = 0.0;
  std::size_t nae_excluded = 0;  // pairs with y <= 0, left out of NAE and SRE
};

/// MAE, RMSE, NAE, SRE over paired counts.
Metrics metrics(const std::vector<double>& y, const std::vector<double>& yhat);

enum class PromptType { kBox, kPoint, kText };
const char* to_string(PromptType type);
PromptType parse_prompt_type(const std::string& text);

/// Prompt set the benchmark sends for one entry: the exemplar boxes, their
/// centres as positive points, or the templated class name.
PromptSet prompts_for(const ManifestEntry& entry, PromptType type);
std::string text_prompt(const std::string& class_name);

struct ReportRow {
  std::string id;
  long long gt = 0;
  std::optional<long long> pred;  // empty when the image failed
  std::string error;

  double abs_err() const { return pred ? std::abs(static_cast<double>(*pred - gt)) : 0.0; }
};

struct EvalReport {
  std::vector<ReportRow> rows;
  Metrics aggregate;
  std::size_t n = 0;       // rows contributing to the aggregate
  std::size_t failed = 0;
  std::vector<std::string> warnings;
};

using ImageLoader = std::function<Image(const std::filesystem::path&)>;

/// Runs the counting pipeline on every entry (concurrently) and aggregates.
/// Throws kUnsupported before any work when the backend lacks text support
/// for a text benchmark; per-image failures become error rows.
EvalReport run_benchmark(Backend& backend, const DatasetManifest& manifest, const PipelineConfig& cfg,
                         PromptType type, const ImageLoader& loader = {});

/// Recomputes the aggregate from the report's own rows.
Metrics recompute(const EvalReport& report);

std::string report_csv(const EvalReport& report);
nlohmann::json report_summary(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

}  // namespace tfcount::eval
