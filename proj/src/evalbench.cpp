#include "tfcount/evalbench.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>

#include "tfcount/error.hpp"
#include "tfcount/png_io.hpp"

namespace tfcount::eval {

namespace fs = std::filesystem;

namespace {

Box box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4)
    throw Error(ErrorCode::kInvalidArgument, "manifest: exemplar box must be [x0,y0,x1,y1]");
  Box b{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  if (!b.valid()) throw Error(ErrorCode::kInvalidArgument, "manifest: degenerate exemplar box");
  return b;
}

}  // namespace

DatasetManifest manifest_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  DatasetManifest m;
  try {
    const auto& entries = j.at("entries");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      ManifestEntry entry;
      entry.image_path = e.at("image_path").get<std::string>();
      if (entry.image_path.is_relative()) entry.image_path = base_dir / entry.image_path;
      entry.id = e.contains("id") ? e.at("id").get<std::string>() : entry.image_path.stem().string();
      entry.class_name = e.value("class_name", "");
      if (e.contains("exemplar_boxes"))
        for (const auto& b : e.at("exemplar_boxes")) entry.exemplar_boxes.push_back(box_from_json(b));
      entry.gt_count = e.at("gt_count").get<long long>();
      if (entry.gt_count < 0)
        throw Error(ErrorCode::kInvalidArgument, "manifest: negative gt_count for " + entry.id);
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("manifest: ") + e.what());
  }
  return m;
}

nlohmann::json to_json(const DatasetManifest& manifest, const fs::path& base_dir) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : e.exemplar_boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    const fs::path rel = base_dir.empty() ? e.image_path : e.image_path.lexically_relative(base_dir);
    entries.push_back({{"id", e.id},
                       {"image_path", rel.generic_string()},
                       {"class_name", e.class_name},
                       {"exemplar_boxes", boxes},
                       {"gt_count", e.gt_count}});
  }
  return {{"entries", entries}};
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j, fs::absolute(path).parent_path());
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest " + path.string());
  out << to_json(manifest, fs::absolute(path).parent_path()).dump(2) << '\n';
}

Metrics metrics(const std::vector<double>& y, const std::vector<double>& yhat) {
  if (y.size() != yhat.size())
    throw Error(ErrorCode::kDimensionMismatch, "metrics: y and yhat differ in length");
  if (y.empty()) throw Error(ErrorCode::kEmptyInput, "metrics: no samples");
  Metrics m;
  double abs_sum = 0, sq_sum = 0, rel_abs = 0, rel_sq = 0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
    if (y[i] > 0) {
      rel_abs += std::abs(d) / y[i];
      rel_sq += d * d / y[i];
      ++valid;
    }
  }
  const double n = static_cast<double>(y.size());
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.nae_excluded = y.size() - valid;
  if (valid == 0) {
    m.nae = m.sre = std::numeric_limits<double>::quiet_NaN();
  } else {
    m.nae = rel_abs / static_cast<double>(valid);
    m.sre = std::sqrt(rel_sq / static_cast<double>(valid));
  }
  return m;
}

const char* to_string(PromptType type) {
  switch (type) {
    case PromptType::kBox: return "box";
    case PromptType::kPoint: return "point";
    case PromptType::kText: return "text";
  }
  return "?";
}

PromptType parse_prompt_type(const std::string& text) {
  if (text == "box") return PromptType::kBox;
  if (text == "point") return PromptType::kPoint;
  if (text == "text") return PromptType::kText;
  throw Error(ErrorCode::kInvalidArgument, "prompt type must be box, point or text, got '" + text + "'");
}

std::string text_prompt(const std::string& class_name) { return "the photo of many " + class_name; }

PromptSet prompts_for(const ManifestEntry& entry, PromptType type) {
  PromptSet p;
  switch (type) {
    case PromptType::kBox:
      p.boxes = entry.exemplar_boxes;
      break;
    case PromptType::kPoint:
      for (const auto& b : entry.exemplar_boxes)
        p.points.push_back(PromptPoint{(b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2, PointLabel::kPositive});
      break;
    case PromptType::kText:
      p.text = text_prompt(entry.class_name);
      break;
  }
  return p;
}

EvalReport run_benchmark(Backend& backend, const DatasetManifest& manifest, const PipelineConfig& cfg,
                         PromptType type, const ImageLoader& loader) {
  if (manifest.entries.empty()) throw Error(ErrorCode::kEmptyInput, "benchmark: manifest has no entries");
  if (type == PromptType::kText && !backend.capabilities().supports_text)
    throw Error(ErrorCode::kUnsupported, "benchmark: backend does not support text prompts");
  cfg.validate();
  const ImageLoader load = loader ? loader : ImageLoader([](const fs::path& p) { return png::read(p); });

  EvalReport report;
  report.rows.resize(manifest.entries.size());
  std::vector<std::exception_ptr> fatal(manifest.entries.size());
  const auto n = static_cast<std::ptrdiff_t>(manifest.entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& entry = manifest.entries[i];
    auto& row = report.rows[i];
    row.id = entry.id;
    row.gt = entry.gt_count;
    try {
      const Image image = load(entry.image_path);
      row.pred = count_objects(backend, image, prompts_for(entry, type), cfg).count;
    } catch (const Error& e) {
      // An unreachable backend fails every image; stop rather than report noise.
      if (e.code() == ErrorCode::kBackendUnreachable) fatal[i] = std::current_exception();
      row.error = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  }
  for (const auto& e : fatal)
    if (e) std::rethrow_exception(e);

  for (const auto& row : report.rows) row.pred ? ++report.n : ++report.failed;
  if (report.n > 0) {
    report.aggregate = recompute(report);
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.aggregate = Metrics{nan, nan, nan, nan, 0};
  }
  if (report.failed > 0)
    report.warnings.push_back(std::to_string(report.failed) + " image(s) failed and were excluded");
  if (report.aggregate.nae_excluded > 0)
    report.warnings.push_back(std::to_string(report.aggregate.nae_excluded) +
                              " image(s) with zero ground truth excluded from NAE/SRE");
  return report;
}

Metrics recompute(const EvalReport& report) {
  std::vector<double> y, yhat;
  for (const auto& row : report.rows)
    if (row.pred) {
      y.push_back(static_cast<double>(row.gt));
      yhat.push_back(static_cast<double>(*row.pred));
    }
  if (y.empty()) throw Error(ErrorCode::kEmptyInput, "benchmark: every image failed");
  return metrics(y, yhat);
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "id,gt,pred,abs_err\n";
  for (const auto& row : report.rows) {
    out << row.id << ',' << row.gt << ',';
    if (row.pred) out << *row.pred << ',' << std::llabs(*row.pred - row.gt);
    else out << ',';
    out << '\n';
  }
  return out.str();
}

nlohmann::json report_summary(const EvalReport& report) {
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& row : report.rows)
    if (!row.pred) errors.push_back({{"id", row.id}, {"error", row.error}});
  const auto& m = report.aggregate;
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json() : nlohmann::json(v); };
  return {{"n", report.n},           {"mae", num(m.mae)},
          {"rmse", num(m.rmse)},     {"nae", num(m.nae)},
          {"sre", num(m.sre)},       {"failed", report.failed},
          {"nae_excluded", m.nae_excluded}, {"errors", errors},
          {"warnings", report.warnings}};
}

void write_report(const EvalReport& report, const fs::path& csv_path, const fs::path& json_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw Error(ErrorCode::kIo, "cannot write " + csv_path.string());
  csv << report_csv(report);
  std::ofstream js(json_path);
  if (!js) throw Error(ErrorCode::kIo, "cannot write " + json_path.string());
  js << report_summary(report).dump(2) << '\n';
}

}  // namespace tfcount::eval
