#include "tfcount/service.hpp"

#include <httplib.h>

#include <cstdio>

#include "tfcount/error.hpp"
#include "tfcount/png_io.hpp"
#include "tfcount/tensor.hpp"
#include "tfcount/wire.hpp"

namespace tfcount {

namespace {

Error bad_request(const std::string& what) { return Error(ErrorCode::kInvalidArgument, "count request: " + what); }

PromptPoint point_from_json(const nlohmann::json& j) {
  if (j.is_array()) {
    if (j.size() < 2 || j.size() > 3) throw bad_request("point must be [x,y] or [x,y,label]");
    const int label = j.size() == 3 ? j[2].get<int>() : 1;
    return PromptPoint{j[0].get<int>(), j[1].get<int>(), label ? PointLabel::kPositive : PointLabel::kNegative};
  }
  const int label = j.value("label", 1);
  return PromptPoint{j.at("x").get<int>(), j.at("y").get<int>(),
                     label ? PointLabel::kPositive : PointLabel::kNegative};
}

Box box_from_json(const nlohmann::json& j) {
  if (j.is_array() && j.size() == 4) return Box{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  if (j.is_object()) return Box{j.at("x0").get<int>(), j.at("y0").get<int>(), j.at("x1").get<int>(), j.at("y1").get<int>()};
  throw bad_request("box must be [x0,y0,x1,y1]");
}

}  // namespace

PromptSet prompts_from_json(const nlohmann::json& j) {
  PromptSet p;
  if (j.is_null()) return p;
  try {
    if (j.contains("points"))
      for (const auto& pt : j.at("points")) p.points.push_back(point_from_json(pt));
    if (j.contains("boxes"))
      for (const auto& b : j.at("boxes")) p.boxes.push_back(box_from_json(b));
    if (j.contains("text") && !j.at("text").is_null()) p.text = j.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw bad_request(e.what());
  }
  for (const auto& b : p.boxes)
    if (!b.valid()) throw bad_request("degenerate box");
  return p;
}

CountService::CountService(std::shared_ptr<Backend> backend, PipelineConfig defaults)
    : backend_(std::move(backend)), defaults_(defaults), rng_(std::random_device{}()) {
  if (!backend_) throw Error(ErrorCode::kInvalidArgument, "CountService needs a backend");
  defaults_.validate();
}

std::string CountService::create_session(const std::string& png_bytes) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(png_bytes.data());
  return create_session(png::decode(std::span<const std::uint8_t>(p, png_bytes.size())));
}

std::string CountService::create_session(const Image& image) {
  auto state = std::make_shared<SessionState>();
  state->image = image;
  state->feature_id = backend_->encode_image(image).feature_id;
  state->config = defaults_;
  std::lock_guard lock(mutex_);
  do {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng_()));
    state->id = buf;
  } while (sessions_.count(state->id));
  sessions_.emplace(state->id, state);
  return state->id;
}

nlohmann::json CountService::count(const nlohmann::json& request) {
  if (!request.is_object() || !request.contains("session_id") || !request.at("session_id").is_string())
    throw bad_request("missing session_id");
  const std::string id = request.at("session_id").get<std::string>();
  std::shared_ptr<SessionState> state;
  {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::kUnknownFeature, "unknown session " + id);
    state = it->second;
  }
  const PromptSet prompts = prompts_from_json(request.value("prompts", nlohmann::json()));
  if (prompts.empty()) throw bad_request("no prompts");
  const PipelineConfig cfg = apply_overrides(defaults_, request.value("config", nlohmann::json()));
  const bool want_preview = request.value("similarity_preview", false);

  SimilarityMap sim;
  const CountResult result = count_objects(*backend_, state->image, prompts, cfg, want_preview ? &sim : nullptr);
  nlohmann::json out = to_json(result, true, true);
  if (want_preview && !sim.values.empty()) {
    const TensorBlob blob = TensorBlob::from_f32({static_cast<std::uint32_t>(sim.height),
                                                  static_cast<std::uint32_t>(sim.width)},
                                                 sim.values);
    out["similarity_preview"] = wire::base64_encode(blob.serialize());
  }
  std::lock_guard lock(mutex_);
  state->config = cfg;
  state->last_result = out;
  return out;
}

nlohmann::json CountService::health() const {
  nlohmann::json j = {{"status", "ok"}, {"sessions", session_count()}};
  try {
    j["backend"] = wire::capabilities_to_json(backend_->capabilities());
  } catch (const Error& e) {
    j["status"] = "degraded";
    j["backend_error"] = e.what();
  }
  return j;
}

std::optional<SessionState> CountService::session(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return std::nullopt;
  return *it->second;
}

std::size_t CountService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

// ---------------------------------------------------------------------------

struct ApiServer::Impl {
  CountService& service;
  httplib::Server server;

  explicit Impl(CountService& s) : service(s) {}

  template <typename F>
  void handle(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const Error& e) {
      res.status = wire::http_status(e.code());
      res.set_content(wire::error_body(e.code(), e.what()), "application/json");
    } catch (const nlohmann::json::exception& e) {
      res.status = 400;
      res.set_content(wire::error_body(ErrorCode::kInvalidArgument, e.what()), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(wire::error_body(ErrorCode::kBackendFailure, e.what()), "application/json");
    }
  }
};

ApiServer::ApiServer(CountService& service, std::string static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  Impl* impl = impl_.get();
  srv.Post("/api/images", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->handle(res, [&] {
      const std::string id = impl->service.create_session(req.body);
      res.set_content(nlohmann::json{{"session_id", id}}.dump(), "application/json");
    });
  });
  srv.Post("/api/count", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->handle(res, [&] {
      const auto body = nlohmann::json::parse(req.body);
      res.set_content(impl->service.count(body).dump(), "application/json");
    });
  });
  srv.Get("/api/health", [impl](const httplib::Request&, httplib::Response& res) {
    impl->handle(res, [&] { res.set_content(impl->service.health().dump(), "application/json"); });
  });
  if (!static_dir.empty() && !srv.set_mount_point("/", static_dir))
    throw Error(ErrorCode::kIo, "static directory not found: " + static_dir);
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ApiServer::serve() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace tfcount
