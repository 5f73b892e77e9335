#include "tfcount/wire.hpp"

#include <array>

#include "tfcount/tensor.hpp"

namespace tfcount::wire {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

nlohmann::json parse_json(std::string_view text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + ": " + e.what());
  }
}

template <typename F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = b64_value(c);
    if (v < 0) throw Error(ErrorCode::kInvalidArgument, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

nlohmann::json capabilities_to_json(const BackendCapabilities& caps) {
  return {{"name", caps.name},
          {"supports_semantic_prior", caps.supports_semantic_prior},
          {"supports_text", caps.supports_text},
          {"input_resolution", caps.input_resolution},
          {"feature_channels", caps.feature_channels},
          {"feature_stride", caps.feature_stride}};
}

BackendCapabilities capabilities_from_json(const nlohmann::json& j) {
  return guarded("capabilities", [&] {
    return BackendCapabilities{j.value("name", std::string{}),
                               j.at("supports_semantic_prior").get<bool>(),
                               j.at("supports_text").get<bool>(),
                               j.at("input_resolution").get<int>(),
                               j.at("feature_channels").get<int>(),
                               j.at("feature_stride").get<int>()};
  });
}

nlohmann::json rle_to_json(const RleMask& rle) {
  return {{"width", rle.width}, {"height", rle.height}, {"counts", rle.counts}};
}

RleMask rle_from_json(const nlohmann::json& j) {
  return guarded("rle", [&] {
    return RleMask{j.at("width").get<int>(), j.at("height").get<int>(),
                   j.at("counts").get<std::vector<std::uint32_t>>()};
  });
}

DecodeMessage encode_decode_request(const DecodeRequest& request) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : request.points)
    points.push_back({{"x", p.x}, {"y", p.y}, {"label", static_cast<int>(p.label)}});
  nlohmann::json header = {{"feature_id", request.feature_id},
                           {"points", points},
                           {"box", nullptr},
                           {"has_semantic", request.semantic.has_value()}};
  if (request.box) {
    const Box& b = *request.box;
    header["box"] = {b.x0, b.y0, b.x1, b.y1};
  }
  DecodeMessage msg{header.dump(), std::nullopt};
  if (request.semantic) {
    const auto& v = request.semantic->values;
    msg.embedding = TensorBlob::from_f32({static_cast<std::uint32_t>(v.size())}, v).serialize();
  }
  return msg;
}

DecodeRequest parse_decode_request(std::string_view header,
                                   const std::optional<std::vector<std::uint8_t>>& embedding) {
  const auto j = parse_json(header, "decode header");
  DecodeRequest req = guarded("decode header", [&] {
    DecodeRequest r;
    r.feature_id = j.at("feature_id").get<std::string>();
    for (const auto& p : j.at("points")) {
      const int label = p.value("label", 1);
      if (label != 0 && label != 1) throw Error(ErrorCode::kInvalidArgument, "point label must be 0 or 1");
      r.points.push_back(PromptPoint{p.at("x").get<int>(), p.at("y").get<int>(),
                                     static_cast<PointLabel>(label)});
    }
    if (j.contains("box") && !j.at("box").is_null()) {
      const auto b = j.at("box").get<std::array<int, 4>>();
      r.box = Box{b[0], b[1], b[2], b[3]};
    }
    return r;
  });
  const bool has_semantic = j.value("has_semantic", false);
  if (has_semantic != embedding.has_value())
    throw Error(ErrorCode::kInvalidArgument, "has_semantic does not match embedding part");
  if (embedding) {
    const auto blob = TensorBlob::deserialize(*embedding);
    if (blob.dtype() != DType::kF32 || blob.shape().size() != 1)
      throw Error(ErrorCode::kInvalidArgument, "embedding must be a rank-1 f32 tensor");
    req.semantic = Embedding{blob.to_f32()};
  }
  return req;
}

std::string encode_decode_response(const std::vector<ScoredMask>& masks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : masks) out.push_back({{"rle", rle_to_json(rle_encode(m.mask))}, {"quality", m.quality}});
  return out.dump();
}

std::vector<ScoredMask> parse_decode_response(std::string_view body) {
  const auto j = parse_json(body, "decode response");
  return guarded("decode response", [&] {
    std::vector<ScoredMask> out;
    for (const auto& m : j) {
      ScoredMask sm;
      sm.mask = rle_decode(rle_from_json(m.at("rle")));
      sm.quality = m.at("quality").get<double>();
      out.push_back(std::move(sm));
    }
    return out;
  });
}

std::string encode_encode_response(const EncodedImage& encoded) {
  const auto& f = encoded.features;
  const auto blob = TensorBlob::from_f32({static_cast<std::uint32_t>(f.grid_h),
                                          static_cast<std::uint32_t>(f.grid_w),
                                          static_cast<std::uint32_t>(f.channels)},
                                         f.values);
  nlohmann::json j = {{"feature_id", encoded.feature_id},
                      {"image_width", encoded.image_width},
                      {"image_height", encoded.image_height},
                      {"stride", f.stride},
                      {"features", base64_encode(blob.serialize())}};
  return j.dump();
}

EncodedImage parse_encode_response(std::string_view body) {
  const auto j = parse_json(body, "encode response");
  return guarded("encode response", [&] {
    EncodedImage e;
    e.feature_id = j.at("feature_id").get<std::string>();
    e.image_width = j.at("image_width").get<int>();
    e.image_height = j.at("image_height").get<int>();
    const auto blob = TensorBlob::deserialize(base64_decode(j.at("features").get<std::string>()));
    if (blob.dtype() != DType::kF32 || blob.shape().size() != 3)
      throw Error(ErrorCode::kInvalidArgument, "features must be a rank-3 f32 tensor");
    e.features.grid_h = static_cast<int>(blob.shape()[0]);
    e.features.grid_w = static_cast<int>(blob.shape()[1]);
    e.features.channels = static_cast<int>(blob.shape()[2]);
    e.features.stride = j.at("stride").get<int>();
    e.features.values = blob.to_f32();
    return e;
  });
}

std::string encode_text_request(const std::string& feature_id, const std::string& text) {
  return nlohmann::json{{"feature_id", feature_id}, {"text", text}}.dump();
}

std::vector<std::uint8_t> encode_similarity(const SimilarityMap& map) {
  return TensorBlob::from_f32({static_cast<std::uint32_t>(map.height), static_cast<std::uint32_t>(map.width)},
                              map.values)
      .serialize();
}

SimilarityMap parse_similarity(std::span<const std::uint8_t> bytes) {
  const auto blob = TensorBlob::deserialize(bytes);
  if (blob.dtype() != DType::kF32 || blob.shape().size() != 2)
    throw Error(ErrorCode::kInvalidArgument, "similarity must be a rank-2 f32 tensor");
  SimilarityMap m;
  m.height = static_cast<int>(blob.shape()[0]);
  m.width = static_cast<int>(blob.shape()[1]);
  m.values = blob.to_f32();
  return m;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownFeature: return 404;
    case ErrorCode::kUnsupported: return 501;
    case ErrorCode::kBackendUnreachable: return 503;
    case ErrorCode::kMalformedRle:
    case ErrorCode::kMalformedTensor:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kEmptyInput:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kIo: return 400;
    case ErrorCode::kNoComponent:
    case ErrorCode::kNoReference:
    case ErrorCode::kUndefinedScore: return 422;
    case ErrorCode::kBackendFailure: return 502;
  }
  return 500;
}

std::string error_body(ErrorCode code, const std::string& message) {
  return nlohmann::json{{"error", to_string(code)}, {"message", message}}.dump();
}

}  // namespace tfcount::wire
