#include "tfcount/http_backend.hpp"

#include <httplib.h>

#include <fstream>

#include "tfcount/error.hpp"
#include "tfcount/png_io.hpp"
#include "tfcount/synthetic.hpp"
#include "tfcount/wire.hpp"

namespace tfcount {

namespace {

ErrorCode code_for_status(int status) {
  switch (status) {
    case 400: return ErrorCode::kInvalidArgument;
    case 404: return ErrorCode::kUnknownFeature;
    case 501: return ErrorCode::kUnsupported;
    case 503: return ErrorCode::kBackendUnreachable;
    default: return ErrorCode::kBackendFailure;
  }
}

std::string error_message(const httplib::Result& res) {
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.value("message", res->body);
  } catch (...) {
    return res->body;
  }
}

httplib::Result check(httplib::Result res, const std::string& what) {
  if (!res)
    throw Error(ErrorCode::kBackendUnreachable, what + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(code_for_status(res->status),
                what + " failed (" + std::to_string(res->status) + "): " + error_message(res));
  return res;
}

std::unique_ptr<httplib::Client> make_client(const std::string& url, int timeout_seconds) {
  // One client per call: httplib::Client is not shared between threads.
  auto client = std::make_unique<httplib::Client>(url);
  client->set_connection_timeout(5);
  client->set_read_timeout(timeout_seconds);
  client->set_write_timeout(timeout_seconds);
  return client;
}

}  // namespace

// ---------------------------------------------------------------------------
// Client

HttpBackend::HttpBackend(std::string base_url, int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

BackendCapabilities HttpBackend::capabilities() const {
  auto client = make_client(base_url_, timeout_seconds_);
  const auto res = check(client->Get("/v1/capabilities"), "capabilities");
  try {
    return wire::capabilities_from_json(nlohmann::json::parse(res->body));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBackendFailure, std::string("capabilities: ") + e.what());
  }
}

EncodedImage HttpBackend::encode_image(const Image& image) {
  const auto png_bytes = png::encode(image);
  auto client = make_client(base_url_, timeout_seconds_);
  const auto res = check(client->Post("/v1/encode", reinterpret_cast<const char*>(png_bytes.data()),
                                      png_bytes.size(), "image/png"),
                          "encode");
  return wire::parse_encode_response(res->body);
}

std::vector<ScoredMask> HttpBackend::decode_masks(const DecodeRequest& request) {
  const auto msg = wire::encode_decode_request(request);
  httplib::MultipartFormDataItems items{{"header", msg.header, "", "application/json"}};
  if (msg.embedding)
    items.push_back({"embedding", std::string(msg.embedding->begin(), msg.embedding->end()),
                     "embedding.tnsr", "application/octet-stream"});
  auto client = make_client(base_url_, timeout_seconds_);
  const auto res = check(client->Post("/v1/decode", items), "decode");
  return wire::parse_decode_response(res->body);
}

SimilarityMap HttpBackend::text_similarity(const std::string& feature_id, const std::string& text) {
  auto client = make_client(base_url_, timeout_seconds_);
  const auto res = check(client->Post("/v1/text_sim", wire::encode_text_request(feature_id, text),
                                      "application/json"),
                          "text_sim");
  const auto* p = reinterpret_cast<const std::uint8_t*>(res->body.data());
  return wire::parse_similarity(std::span<const std::uint8_t>(p, res->body.size()));
}

// ---------------------------------------------------------------------------
// Server

struct BackendServer::Impl {
  Backend& backend;
  httplib::Server server;

  explicit Impl(Backend& b) : backend(b) {}

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

  void routes() {
    server.Get("/v1/capabilities", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] {
        res.set_content(wire::capabilities_to_json(backend.capabilities()).dump(), "application/json");
      });
    });
    server.Post("/v1/encode", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const auto* p = reinterpret_cast<const std::uint8_t*>(req.body.data());
        const Image img = png::decode(std::span<const std::uint8_t>(p, req.body.size()));
        res.set_content(wire::encode_encode_response(backend.encode_image(img)), "application/json");
      });
    });
    server.Post("/v1/decode", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        if (!req.has_file("header"))
          throw Error(ErrorCode::kInvalidArgument, "decode: missing multipart 'header' part");
        std::optional<std::vector<std::uint8_t>> embedding;
        if (req.has_file("embedding")) {
          const auto& part = req.get_file_value("embedding").content;
          embedding.emplace(part.begin(), part.end());
        }
        const auto request = wire::parse_decode_request(req.get_file_value("header").content, embedding);
        res.set_content(wire::encode_decode_response(backend.decode_masks(request)), "application/json");
      });
    });
    server.Post("/v1/text_sim", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorCode::kInvalidArgument, std::string("text_sim: ") + e.what());
        }
        if (!backend.capabilities().supports_text)
          throw Error(ErrorCode::kUnsupported, "backend does not support text prompts");
        std::string feature_id;
        if (j.contains("image")) {
          const auto bytes = wire::base64_decode(j.at("image").get<std::string>());
          feature_id = backend.encode_image(png::decode(bytes)).feature_id;
        } else {
          feature_id = j.at("feature_id").get<std::string>();
        }
        const auto bytes = wire::encode_similarity(backend.text_similarity(feature_id, j.value("text", "")));
        res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
      });
    });
  }
};

BackendServer::BackendServer(Backend& backend) : impl_(std::make_unique<Impl>(backend)) {
  impl_->routes();
}

BackendServer::~BackendServer() { stop(); }

int BackendServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void BackendServer::serve() { impl_->server.listen_after_bind(); }

void BackendServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

// ---------------------------------------------------------------------------
// Factory

std::string content_hash(const Image& image) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (int v : {image.width, image.height})
    for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(v >> (8 * i)));
  for (auto b : image.rgb) mix(b);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = kHex[h & 15];
  return out;
}

std::unique_ptr<Backend> make_backend(const std::string& url) {
  static const std::string kSynthetic = "synthetic:";
  if (url.rfind(kSynthetic, 0) == 0)
    return std::make_unique<synthetic::SyntheticBackend>(
        synthetic::load_scene(url.substr(kSynthetic.size())));
  if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0)
    return std::make_unique<HttpBackend>(url);
  throw Error(ErrorCode::kInvalidArgument,
              "backend URL must be synthetic:<scene.json> or http(s)://host:port, got '" + url + "'");
}

}  // namespace tfcount
