#include <doctest.h>
#include <httplib.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "tfcount/cli.hpp"
#include "tfcount/error.hpp"
#include "tfcount/http_backend.hpp"
#include "tfcount/png_io.hpp"
#include "tfcount/service.hpp"
#include "tfcount/synthetic.hpp"
#include "tfcount/tensor.hpp"
#include "tfcount/wire.hpp"

using namespace tfcount;
namespace fs = std::filesystem;

namespace {

const fs::path kTestDir = TFCOUNT_TEST_DIR;
const fs::path kScene = kTestDir / "data" / "four_blobs.json";

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string scene_png(const TempDir& dir) {
  const auto p = dir.path / "scene.png";
  if (!fs::exists(p)) png::write(p, synthetic::render(synthetic::load_scene(kScene)));
  return p.string();
}

std::string synthetic_url() { return "synthetic:" + kScene.string(); }

// Numbers compare to 1e-9, everything else exactly.
void check_json_close(const nlohmann::json& a, const nlohmann::json& b, const std::string& at = "$") {
  INFO(at);
  if (a.is_number() && b.is_number()) {
    CHECK(std::abs(a.get<double>() - b.get<double>()) <= 1e-9);
    return;
  }
  REQUIRE(a.type() == b.type());
  if (a.is_object()) {
    REQUIRE(a.size() == b.size());
    for (auto it = a.begin(); it != a.end(); ++it) {
      REQUIRE(b.contains(it.key()));
      check_json_close(it.value(), b.at(it.key()), at + "." + it.key());
    }
  } else if (a.is_array()) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) check_json_close(a[i], b[i], at + "[" + std::to_string(i) + "]");
  } else {
    CHECK(a == b);
  }
}

class TextlessBackend final : public Backend {
 public:
  explicit TextlessBackend(synthetic::Scene s) : inner_(std::move(s)) {}
  BackendCapabilities capabilities() const override {
    auto c = inner_.capabilities();
    c.supports_text = false;
    return c;
  }
  EncodedImage encode_image(const Image& img) override { return inner_.encode_image(img); }
  std::vector<ScoredMask> decode_masks(const DecodeRequest& r) override { return inner_.decode_masks(r); }
  SimilarityMap text_similarity(const std::string&, const std::string&) override {
    throw Error(ErrorCode::kUnsupported, "no text model");
  }

 private:
  synthetic::SyntheticBackend inner_;
};

template <typename Server>
struct Serving {
  Server& server;
  int port;
  std::thread thread;
  explicit Serving(Server& s) : server(s), port(s.bind("127.0.0.1", 0)), thread([this] { server.serve(); }) {
    httplib::Client probe("127.0.0.1", port);
    for (int i = 0; i < 200 && !probe.Get("/nowhere"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~Serving() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("count command") {
  TempDir dir("tfcount_cli_count");
  const auto img = scene_png(dir);

  const auto box = cli({"count", "--image", img, "--box", "16,16,35,35", "--mode", "prior", "--backend", synthetic_url()});
  REQUIRE(box.code == 0);
  const auto j = nlohmann::json::parse(box.out);
  CHECK(j["count"].is_number_integer());
  CHECK(j["count"] == 4);
  CHECK(j["stats"].contains("wall_time_ms"));

  const auto text = cli({"count", "--image", img, "--text", "circle", "--backend", synthetic_url()});
  REQUIRE(text.code == 0);
  CHECK(nlohmann::json::parse(text.out)["count"] == 4);

  const auto point = cli({"count", "--image", img, "--point", "25,25", "--point", "65,62,0", "--backend",
                          synthetic_url(), "--mode", "vanilla"});
  REQUIRE(point.code == 0);
  CHECK(nlohmann::json::parse(point.out)["count"] == 4);

  ::setenv(kBackendEnv, synthetic_url().c_str(), 1);
  const auto env = cli({"count", "--image", img, "--box", "16,16,35,35"});
  ::unsetenv(kBackendEnv);
  CHECK(env.code == 0);
}

TEST_CASE("count output matches the golden file") {
  TempDir dir("tfcount_cli_golden");
  const auto r = cli({"count", "--image", scene_png(dir), "--box", "16,16,35,35", "--no-timing", "--backend",
                      synthetic_url()});
  REQUIRE(r.code == 0);
  std::ifstream golden(kTestDir / "golden" / "count_output.json");
  REQUIRE(golden);
  check_json_close(nlohmann::json::parse(r.out), nlohmann::json::parse(golden));
}

TEST_CASE("overlay output") {
  TempDir dir("tfcount_cli_overlay");
  const auto out = (dir.path / "overlay.png").string();
  REQUIRE(cli({"count", "--image", scene_png(dir), "--text", "circle", "--overlay", out, "--backend", synthetic_url()})
              .code == 0);
  const auto overlay = png::read(out);
  const auto base = png::read(scene_png(dir));
  CHECK(overlay.width == base.width);
  CHECK(overlay.height == base.height);
  CHECK(overlay.rgb != base.rgb);
}

TEST_CASE("usage errors exit 2") {
  TempDir dir("tfcount_cli_usage");
  const auto img = scene_png(dir);
  ::unsetenv(kBackendEnv);
  CHECK(cli({"count", "--image", img, "--backend", synthetic_url()}).code == 2);
  CHECK(cli({"count", "--image", img, "--box", "1,1,9,9", "--text", "circle", "--backend", synthetic_url()}).code == 2);
  CHECK(cli({"count", "--image", img, "--box", "1,1,9", "--backend", synthetic_url()}).code == 2);
  CHECK(cli({"count", "--image", img, "--box", "9,9,1,1", "--backend", synthetic_url()}).code == 2);
  CHECK(cli({"count", "--image", img, "--box", "1,1,9,9"}).code == 2);  // no backend anywhere
  CHECK(cli({"count", "--image", img, "--box", "1,1,9,9", "--mode", "fast", "--backend", synthetic_url()}).code == 2);
  CHECK(cli({"count", "--image", img, "--box", "1,1,9,9", "--epsilon", "3", "--backend", synthetic_url()}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);
  const auto help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("count") != std::string::npos);
}

TEST_CASE("runtime errors") {
  TempDir dir("tfcount_cli_errors");
  const auto img = scene_png(dir);
  CHECK(cli({"count", "--image", img, "--box", "1,1,9,9", "--backend", "http://127.0.0.1:1"}).code == 3);
  CHECK(cli({"count", "--image", (dir.path / "missing.png").string(), "--box", "1,1,9,9", "--backend",
             synthetic_url()})
            .code == 1);
  const auto bg = cli({"count", "--image", img, "--box", "0,0,4,4", "--backend", synthetic_url()});
  CHECK(bg.code == 1);
  CHECK(bg.err.find("no-reference") != std::string::npos);
}

TEST_CASE("bench command") {
  TempDir dir("tfcount_cli_bench");
  REQUIRE(cli({"synth", "--out-dir", dir.path.string(), "--scenes", "6", "--max-targets", "12", "--max-distractors",
               "4", "--seed", "3"})
              .code == 0);
  const auto manifest = (dir.path / "manifest.json").string();
  const auto backend = "synthetic:" + (dir.path / "backend.json").string();
  const auto csv = (dir.path / "r.csv").string(), js = (dir.path / "r.json").string();

  const auto r = cli({"bench", "--manifest", manifest, "--prompt-type", "box", "--csv", csv, "--json", js, "--backend",
                      backend});
  REQUIRE(r.code == 0);
  std::ifstream summary(js);
  const auto j = nlohmann::json::parse(summary);
  CHECK(j["mae"] == 0.0);
  CHECK(j["n"] == 6);
  CHECK(nlohmann::json::parse(r.out) == j);
  std::ifstream csv_in(csv);
  std::string header;
  std::getline(csv_in, header);
  CHECK(header == "id,gt,pred,abs_err");

  CHECK(cli({"bench", "--manifest", (dir.path / "nope.json").string(), "--backend", backend}).code == 1);
  CHECK(cli({"bench", "--manifest", manifest, "--prompt-type", "lasso", "--backend", backend}).code == 2);

  TextlessBackend textless(synthetic::load_scene(dir.path / "backend.json"));
  BackendServer server(textless);
  Serving serving(server);
  const auto t = cli({"bench", "--manifest", manifest, "--prompt-type", "text", "--csv", csv, "--json", js,
                      "--backend", serving.url()});
  CHECK(t.code == 1);
  CHECK(t.err.find("unsupported") != std::string::npos);
}

TEST_CASE("higher epsilon never counts more in vanilla mode") {
  TempDir dir("tfcount_cli_eps");
  REQUIRE(cli({"synth", "--out-dir", dir.path.string(), "--scenes", "4", "--min-targets", "3", "--max-targets", "9",
               "--max-distractors", "6", "--multimask", "--seed", "17"})
              .code == 0);
  const auto backend = "synthetic:" + (dir.path / "backend.json").string();
  std::ifstream in(dir.path / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  for (const auto& e : manifest["entries"]) {
    const auto b = e["exemplar_boxes"][0];
    const std::string box = std::to_string(b[0].get<int>()) + "," + std::to_string(b[1].get<int>()) + "," +
                            std::to_string(b[2].get<int>()) + "," + std::to_string(b[3].get<int>());
    const std::string image = (dir.path / e["image_path"].get<std::string>()).string();
    auto count_at = [&](const char* eps) {
      const auto r = cli({"count", "--image", image, "--box", box, "--mode", "vanilla", "--epsilon", eps,
                          "--points-per-batch", "256", "--backend", backend});
      REQUIRE(r.code == 0);
      return nlohmann::json::parse(r.out)["count"].get<long long>();
    };
    CHECK(count_at("0.9") <= count_at("0.5"));
  }
}

TEST_CASE("prompt parsing for the API") {
  const auto p = prompts_from_json(nlohmann::json::parse(
      R"({"points": [{"x": 3, "y": 4}, [5, 6, 0]], "boxes": [[1, 2, 3, 4], {"x0": 0, "y0": 0, "x1": 9, "y1": 9}], "text": "cat"})"));
  REQUIRE(p.points.size() == 2);
  CHECK(p.points[0].label == PointLabel::kPositive);
  CHECK(p.points[1].label == PointLabel::kNegative);
  CHECK(p.boxes.size() == 2);
  CHECK(p.text == "cat");
  CHECK_THROWS_AS(prompts_from_json(nlohmann::json::parse(R"({"boxes": [[1, 2, 3]]})")), Error);
  CHECK_THROWS_AS(prompts_from_json(nlohmann::json::parse(R"({"boxes": [[5, 5, 1, 1]]})")), Error);
  CHECK_THROWS_AS(prompts_from_json(nlohmann::json::parse(R"({"points": [{"x": 1}]})")), Error);
}

TEST_CASE("counting service over HTTP") {
  const auto scene = synthetic::load_scene(kScene);
  auto backend = std::make_shared<synthetic::SyntheticBackend>(scene);
  CountService service(backend);
  ApiServer api(service);
  Serving serving(api);
  httplib::Client client("127.0.0.1", serving.port);

  const auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(nlohmann::json::parse(health->body)["status"] == "ok");

  const auto png_bytes = png::encode(synthetic::render(scene));
  const auto up = client.Post("/api/images", reinterpret_cast<const char*>(png_bytes.data()), png_bytes.size(),
                              "image/png");
  REQUIRE(up);
  REQUIRE(up->status == 200);
  const std::string sid = nlohmann::json::parse(up->body)["session_id"];
  CHECK(service.session_count() == 1);

  const nlohmann::json req = {{"session_id", sid},
                              {"prompts", {{"boxes", {{16, 16, 35, 35}}}}},
                              {"similarity_preview", true}};
  const auto res = client.Post("/api/count", req.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const auto j = nlohmann::json::parse(res->body);
  CHECK(j["count"] == 4);
  REQUIRE(j["masks"].size() == 4);
  for (const auto& m : j["masks"]) {
    const auto rle = wire::rle_from_json(m["rle"]);
    CHECK(rle.width == 128);
    CHECK(m["score"].get<double>() > 0.5);
    CHECK(m.contains("quality"));
  }
  CHECK(j["stats"]["decoder_calls"].get<long long>() > 0);
  const auto preview = TensorBlob::deserialize(wire::base64_decode(j["similarity_preview"].get<std::string>()));
  CHECK(preview.shape() == std::vector<std::uint32_t>{128, 128});
  CHECK(service.session(sid)->last_result == j);

  const nlohmann::json with_cfg = {{"session_id", sid},
                                   {"prompts", {{"text", "circle"}}},
                                   {"config", {{"mode", "vanilla"}}}};
  const auto text = client.Post("/api/count", with_cfg.dump(), "application/json");
  REQUIRE(text);
  CHECK(text->status == 200);
  CHECK(nlohmann::json::parse(text->body)["count"] == 4);
  CHECK(service.session(sid)->config.mode == CountMode::kVanilla);

  auto status_of = [&](const std::string& body) {
    const auto r = client.Post("/api/count", body, "application/json");
    REQUIRE(r);
    return r->status;
  };
  CHECK(status_of(R"({"session_id": "0000000000000000", "prompts": {"boxes": [[1,1,9,9]]}})") == 404);
  CHECK(status_of("{not json") == 400);
  CHECK(status_of(nlohmann::json{{"session_id", sid}}.dump()) == 400);
  CHECK(status_of(nlohmann::json{{"session_id", sid}, {"prompts", {{"boxes", {{1, 1, 9, 9}}}}}, {"config", {{"x", 1}}}}
                      .dump()) == 400);
  CHECK(status_of(nlohmann::json{{"session_id", sid}, {"prompts", {{"boxes", {{0, 0, 4, 4}}}}}}.dump()) == 422);

  const auto bad_png = client.Post("/api/images", "not a png", "image/png");
  REQUIRE(bad_png);
  CHECK(bad_png->status == 400);
}

TEST_CASE("backend going down gives 503") {
  const auto scene = synthetic::load_scene(kScene);
  synthetic::SyntheticBackend real(scene);
  auto backend_server = std::make_unique<BackendServer>(real);
  auto backend_serving = std::make_unique<Serving<BackendServer>>(*backend_server);

  CountService service(std::make_shared<HttpBackend>(backend_serving->url(), 5));
  ApiServer api(service);
  Serving serving(api);
  httplib::Client client("127.0.0.1", serving.port);

  const auto png_bytes = png::encode(synthetic::render(scene));
  const auto up = client.Post("/api/images", reinterpret_cast<const char*>(png_bytes.data()), png_bytes.size(),
                              "image/png");
  REQUIRE(up);
  REQUIRE(up->status == 200);
  const std::string sid = nlohmann::json::parse(up->body)["session_id"];

  backend_serving.reset();
  backend_server.reset();

  const nlohmann::json req = {{"session_id", sid}, {"prompts", {{"boxes", {{16, 16, 35, 35}}}}}};
  const auto res = client.Post("/api/count", req.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 503);
  CHECK(nlohmann::json::parse(res->body)["error"] == "backend-unreachable");
  const auto again = client.Post("/api/images", reinterpret_cast<const char*>(png_bytes.data()), png_bytes.size(),
                                 "image/png");
  REQUIRE(again);
  CHECK(again->status == 503);
  CHECK(nlohmann::json::parse(client.Get("/api/health")->body)["status"] == "degraded");
}

TEST_CASE("concurrent sessions stay isolated") {
  synthetic::SceneSpec a_spec, b_spec;
  a_spec.targets = 6;
  a_spec.distractors = 3;
  b_spec.targets = 11;
  b_spec.distractors = 5;
  const auto a = synthetic::generate_scene(a_spec, 100);
  const auto b = synthetic::generate_scene(b_spec, 200);
  CountService service(std::make_shared<synthetic::SyntheticBackend>(a));
  ApiServer api(service);
  Serving serving(api);

  struct Job {
    const synthetic::Scene* scene;
    long long expected;
    std::string sid;
  };
  std::vector<Job> jobs{{&a, 6, {}}, {&b, 11, {}}};
  for (auto& job : jobs) job.sid = service.create_session(synthetic::render(*job.scene));

  std::vector<std::thread> threads;
  std::vector<long long> got(8, -1);
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&, i] {
      const auto& job = jobs[i % 2];
      const auto box = synthetic::exemplar_box(*job.scene, 2);
      const nlohmann::json req = {{"session_id", job.sid},
                                  {"prompts", {{"boxes", {{box.x0, box.y0, box.x1, box.y1}}}}},
                                  {"config", {{"points_per_batch", 16 << (i % 3)}}}};
      httplib::Client client("127.0.0.1", serving.port);
      client.set_read_timeout(60);
      const auto res = client.Post("/api/count", req.dump(), "application/json");
      if (res && res->status == 200) got[i] = nlohmann::json::parse(res->body)["count"].get<long long>();
    });
  for (auto& t : threads) t.join();
  for (int i = 0; i < 8; ++i) CHECK(got[i] == jobs[i % 2].expected);
  CHECK(service.session(jobs[0].sid)->last_result->at("count") == 6);
  CHECK(service.session(jobs[1].sid)->last_result->at("count") == 11);
}
