#include "tfcount/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "tfcount/error.hpp"
#include "tfcount/evalbench.hpp"
#include "tfcount/http_backend.hpp"
#include "tfcount/overlay.hpp"
#include "tfcount/pipelines.hpp"
#include "tfcount/png_io.hpp"
#include "tfcount/service.hpp"
#include "tfcount/synthetic.hpp"

namespace tfcount {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitUnreachable = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<int> parse_ints(const std::string& text, std::size_t min_n, std::size_t max_n,
                            const std::string& flag) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + text + "' is not a comma-separated integer list");
    }
  }
  if (v.size() < min_n || v.size() > max_n) throw UsageError(flag + ": wrong number of values in '" + text + "'");
  return v;
}

struct ConfigFlags {
  std::string mode = "prior";
  std::optional<double> epsilon;
  std::optional<int> points_per_side;
  std::optional<int> points_per_batch;

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "vanilla or prior")->check(CLI::IsMember({"vanilla", "prior"}));
    app->add_option("--epsilon", epsilon, "mask score threshold for vanilla mode");
    app->add_option("--points-per-side", points_per_side, "grid density t (default: automatic)");
    app->add_option("--points-per-batch", points_per_batch, "grid points per decoder batch");
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    cfg.mode = parse_count_mode(mode);
    if (epsilon) cfg.epsilon = *epsilon;
    if (points_per_side) cfg.points_per_side = *points_per_side;
    if (points_per_batch) cfg.points_per_batch = *points_per_batch;
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

std::string resolve_backend_url(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kBackendEnv); env && *env) return env;
  throw UsageError(std::string("no backend: pass --backend or set ") + kBackendEnv);
}

std::unique_ptr<Backend> open_backend(const std::string& flag) {
  auto backend = make_backend(resolve_backend_url(flag));
  backend->capabilities();  // probe: fails fast when unreachable
  return backend;
}

nlohmann::json count_output(const CountResult& r, bool timing) {
  return to_json(r, timing, false);
}

int cmd_count(const std::string& backend_url, const std::string& image_path,
              const std::vector<std::string>& point_flags, const std::vector<std::string>& box_flags,
              const std::optional<std::string>& text, const ConfigFlags& flags,
              const std::string& overlay_path, bool timing, std::ostream& out) {
  PromptSet prompts;
  for (const auto& p : point_flags) {
    const auto v = parse_ints(p, 2, 3, "--point");
    prompts.points.push_back(
        PromptPoint{v[0], v[1], v.size() == 3 && v[2] == 0 ? PointLabel::kNegative : PointLabel::kPositive});
  }
  for (const auto& b : box_flags) {
    const auto v = parse_ints(b, 4, 4, "--box");
    prompts.boxes.push_back(Box{v[0], v[1], v[2], v[3]});
    if (!prompts.boxes.back().valid()) throw UsageError("--box: degenerate box '" + b + "'");
  }
  if (text) prompts.text = *text;
  const int families = !prompts.points.empty() + !prompts.boxes.empty() + (text.has_value() && !text->empty());
  if (families != 1) throw UsageError("give exactly one prompt family: --point, --box, or --text");

  const PipelineConfig cfg = flags.build();
  const Image image = png::read(image_path);
  auto backend = open_backend(backend_url);
  const CountResult result = count_objects(*backend, image, prompts, cfg);
  out << count_output(result, timing).dump(2) << '\n';
  if (!overlay_path.empty()) png::write(overlay_path, render_overlay(image, result.masks, result.count));
  return kExitOk;
}

int cmd_bench(const std::string& backend_url, const std::string& manifest_path,
              const std::string& prompt_type, const ConfigFlags& flags, const std::string& csv_path,
              const std::string& json_path, std::ostream& out) {
  const auto type = eval::parse_prompt_type(prompt_type);
  const PipelineConfig cfg = flags.build();
  const auto manifest = eval::load_manifest(manifest_path);
  auto backend = open_backend(backend_url);
  const auto report = eval::run_benchmark(*backend, manifest, cfg, type);
  eval::write_report(report, csv_path, json_path);
  out << eval::report_summary(report).dump(2) << '\n';
  return kExitOk;
}

int cmd_serve(const std::string& backend_url, const std::string& host, int port,
              const std::string& static_dir, std::ostream& out) {
  std::shared_ptr<Backend> backend = open_backend(backend_url);
  CountService service(backend);
  ApiServer server(service, static_dir);
  const int bound = server.bind(host, port);
  out << "serving on http://" << host << ':' << bound << std::endl;
  server.serve();
  return kExitOk;
}

int cmd_serve_backend(const std::string& backend_url, const std::string& host, int port,
                      std::ostream& out) {
  auto backend = open_backend(backend_url);
  BackendServer server(*backend);
  const int bound = server.bind(host, port);
  out << "backend protocol on http://" << host << ':' << bound << std::endl;
  server.serve();
  return kExitOk;
}

int cmd_render(const std::string& scene_path, const std::string& out_path) {
  png::write(out_path, synthetic::render(synthetic::load_scene(scene_path)));
  return kExitOk;
}

struct SynthFlags {
  std::string out_dir;
  int scenes = 20;
  std::uint64_t seed = 1;
  int min_targets = 1;
  int max_targets = 50;
  int max_distractors = 20;
  bool multimask = false;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  if (f.scenes < 1 || f.min_targets < 1 || f.max_targets < f.min_targets || f.max_distractors < 0)
    throw UsageError("synth: need scenes >= 1, 1 <= min-targets <= max-targets, max-distractors >= 0");
  fs::create_directories(f.out_dir);
  eval::DatasetManifest manifest;
  synthetic::Scene config;
  for (int i = 0; i < f.scenes; ++i) {
    synthetic::SceneSpec spec;
    spec.targets = f.min_targets + i % (f.max_targets - f.min_targets + 1);
    spec.distractors = i % (f.max_distractors + 1);
    spec.multimask = f.multimask;
    const auto scene = synthetic::generate_scene(spec, f.seed + static_cast<std::uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03d", i);
    const fs::path png_path = fs::path(f.out_dir) / (std::string(name) + ".png");
    png::write(png_path, synthetic::render(scene));
    synthetic::save_scene(scene, fs::path(f.out_dir) / (std::string(name) + ".json"));
    manifest.entries.push_back(eval::ManifestEntry{name, fs::absolute(png_path), "circle",
                                                   {synthetic::exemplar_box(scene, spec.target_class)},
                                                   scene.count_of(spec.target_class)});
    if (i == 0) {
      config = scene;
      config.blobs.clear();
    }
  }
  synthetic::save_scene(config, fs::path(f.out_dir) / "backend.json");
  eval::save_manifest(manifest, fs::path(f.out_dir) / "manifest.json");
  out << "wrote " << f.scenes << " scenes, manifest.json and backend.json to " << f.out_dir << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Training-free prompt-based object counting"};
  app.name("tfcount");
  app.require_subcommand(1);

  std::string backend_url;
  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--backend", backend_url,
                    std::string("synthetic:<scene.json> or http://host:port (default $") + kBackendEnv + ")");
  };

  std::string image_path, overlay_path;
  std::vector<std::string> point_flags, box_flags;
  std::optional<std::string> text;
  bool no_timing = false;
  ConfigFlags count_cfg;
  auto* count = app.add_subcommand("count", "count objects in one image");
  count->add_option("--image", image_path, "input PNG")->required();
  count->add_option("--point", point_flags, "x,y[,label] point prompt (repeatable)")->take_all();
  count->add_option("--box", box_flags, "x0,y0,x1,y1 box prompt (repeatable)")->take_all();
  count->add_option("--text", text, "text prompt");
  count->add_option("--overlay", overlay_path, "write an overlay PNG");
  count->add_flag("--no-timing", no_timing, "omit wall time from the output");
  count_cfg.add(count);
  add_backend(count);

  std::string manifest_path, prompt_type = "box", csv_path = "report.csv", json_path = "report.json";
  ConfigFlags bench_cfg;
  auto* bench = app.add_subcommand("bench", "evaluate a dataset manifest");
  bench->add_option("--manifest", manifest_path, "manifest JSON")->required();
  bench->add_option("--prompt-type", prompt_type, "box, point or text")
      ->check(CLI::IsMember({"box", "point", "text"}));
  bench->add_option("--csv", csv_path, "per-image CSV output");
  bench->add_option("--json", json_path, "aggregate JSON output");
  bench_cfg.add(bench);
  add_backend(bench);

  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the counting HTTP API");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--static-dir", static_dir, "directory served at /");
  add_backend(serve);

  auto* serve_backend = app.add_subcommand("serve-backend", "expose a backend over the /v1 protocol");
  serve_backend->add_option("--host", host);
  serve_backend->add_option("--port", port);
  add_backend(serve_backend);

  std::string scene_path, render_out;
  auto* render = app.add_subcommand("render", "render a synthetic scene to PNG");
  render->add_option("--scene", scene_path)->required();
  render->add_option("--out", render_out)->required();

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "generate synthetic scenes with a manifest");
  synth->add_option("--out-dir", synth_flags.out_dir)->required();
  synth->add_option("--scenes", synth_flags.scenes);
  synth->add_option("--seed", synth_flags.seed);
  synth->add_option("--min-targets", synth_flags.min_targets);
  synth->add_option("--max-targets", synth_flags.max_targets);
  synth->add_option("--max-distractors", synth_flags.max_distractors);
  synth->add_flag("--multimask", synth_flags.multimask);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*count)
      return cmd_count(backend_url, image_path, point_flags, box_flags, text, count_cfg, overlay_path,
                       !no_timing, out);
    if (*bench) return cmd_bench(backend_url, manifest_path, prompt_type, bench_cfg, csv_path, json_path, out);
    if (*serve) return cmd_serve(backend_url, host, port, static_dir, out);
    if (*serve_backend) return cmd_serve_backend(backend_url, host, port, out);
    if (*render) return cmd_render(scene_path, render_out);
    if (*synth) return cmd_synth(synth_flags, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::kBackendUnreachable ? kExitUnreachable : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace tfcount
