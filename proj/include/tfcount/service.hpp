#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include <json.hpp>

#include "tfcount/backend.hpp"
#include "tfcount/pipelines.hpp"

namespace tfcount {

struct SessionState {
  std::string id;
  Image image;
  std::string feature_id;
  PipelineConfig config;
  std::optional<nlohmann::json> last_result;
};

/// HTTP-independent core of the counting API. Sessions are isolated; count
/// runs for different sessions proceed concurrently.
class CountService {
 public:
  explicit CountService(std::shared_ptr<Backend> backend, PipelineConfig defaults = {});

  /// Decodes the PNG, encodes it with the backend and returns the session id.
  std::string create_session(const std::string& png_bytes);
  std::string create_session(const Image& image);

  /// Body of POST /api/count. Throws Error (kUnknownFeature for an unknown
  /// session, kInvalidArgument for malformed requests).
  nlohmann::json count(const nlohmann::json& request);

  nlohmann::json health() const;
  std::optional<SessionState> session(const std::string& id) const;
  std::size_t session_count() const;

 private:
  std::shared_ptr<Backend> backend_;
  PipelineConfig defaults_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<SessionState>> sessions_;
  std::mt19937_64 rng_;
};

/// Parses {points:[{x,y,label?}], boxes:[[x0,y0,x1,y1]], text?}.
PromptSet prompts_from_json(const nlohmann::json& j);

/// httplib front end for CountService:
///   POST /api/images (PNG body) -> {session_id}
///   POST /api/count            -> {count, masks:[{rle,score,quality,bbox}], stats, warnings,
///                                  similarity_preview?}
///   GET  /api/health
class ApiServer {
 public:
  explicit ApiServer(CountService& service, std::string static_dir = {});
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  int bind(const std::string& host, int port);  // port 0 picks a free port
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tfcount
