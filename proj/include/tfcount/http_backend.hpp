#pragma once

#include <memory>
#include <string>

#include "tfcount/backend.hpp"

namespace tfcount {

/// Client side of the /v1 wire protocol.
class HttpBackend final : public Backend {
 public:
  /// base_url like "http://127.0.0.1:8000". Capabilities are probed lazily.
  explicit HttpBackend(std::string base_url, int timeout_seconds = 60);

  BackendCapabilities capabilities() const override;
  EncodedImage encode_image(const Image& image) override;
  std::vector<ScoredMask> decode_masks(const DecodeRequest& request) override;
  SimilarityMap text_similarity(const std::string& feature_id, const std::string& text) override;

  const std::string& base_url() const { return base_url_; }

 private:
  std::string base_url_;
  int timeout_seconds_;
};

/// Serves any Backend over the /v1 wire protocol.
class BackendServer {
 public:
  explicit BackendServer(Backend& backend);
  ~BackendServer();
  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tfcount
