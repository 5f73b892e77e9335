#pragma once

// Backend wire protocol (HTTP/1.1):
//
//   GET  /v1/capabilities -> JSON BackendCapabilities
//   POST /v1/encode       body: PNG bytes
//                         -> JSON {feature_id, image_width, image_height, stride,
//                                  features: base64(TNSR f32 [grid_h, grid_w, C])}
//   POST /v1/decode       multipart/form-data:
//                           "header":    JSON {feature_id, points:[{x,y,label}],
//                                              box:[x0,y0,x1,y1]|null, has_semantic}
//                           "embedding": TNSR f32 [C]   (iff has_semantic)
//                         -> JSON [{rle:{width,height,counts}, quality}]
//   POST /v1/text_sim     JSON {feature_id | image: base64(PNG), text}
//                         -> TNSR f32 [grid_h, grid_w] (raw similarity)
//
// Errors come back as JSON {error, message} with 400/404/501/500 status.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tfcount/backend.hpp"
#include "tfcount/error.hpp"
#include "tfcount/mask.hpp"

namespace tfcount::wire {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

nlohmann::json capabilities_to_json(const BackendCapabilities& caps);
BackendCapabilities capabilities_from_json(const nlohmann::json& j);

nlohmann::json rle_to_json(const RleMask& rle);
RleMask rle_from_json(const nlohmann::json& j);

struct DecodeMessage {
  std::string header;
  std::optional<std::vector<std::uint8_t>> embedding;  // serialized TNSR

  friend bool operator==(const DecodeMessage&, const DecodeMessage&) = default;
};

DecodeMessage encode_decode_request(const DecodeRequest& request);
DecodeRequest parse_decode_request(std::string_view header,
                                   const std::optional<std::vector<std::uint8_t>>& embedding);

std::string encode_decode_response(const std::vector<ScoredMask>& masks);
std::vector<ScoredMask> parse_decode_response(std::string_view body);

std::string encode_encode_response(const EncodedImage& encoded);
EncodedImage parse_encode_response(std::string_view body);

std::string encode_text_request(const std::string& feature_id, const std::string& text);

std::vector<std::uint8_t> encode_similarity(const SimilarityMap& map);
SimilarityMap parse_similarity(std::span<const std::uint8_t> bytes);

/// JSON error body and the HTTP status for an error code.
int http_status(ErrorCode code);
std::string error_body(ErrorCode code, const std::string& message);

}  // namespace tfcount::wire
