#include "tfcount/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>

#include "tfcount/error.hpp"

namespace tfcount::synthetic {

namespace {

constexpr Rgb kBackground{24, 24, 24};

constexpr std::array<Rgb, kMaxClasses> kPalette{{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},   {245, 130, 48},
    {145, 30, 180},  {70, 240, 240},  {240, 50, 230}, {210, 245, 60},  {250, 190, 212},
    {0, 128, 128},   {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
}};

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint32_t pack(Rgb c) { return (std::uint32_t{c.r} << 16) | (std::uint32_t{c.g} << 8) | c.b; }

std::string lower_trim(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  const auto a = out.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = out.find_last_not_of(" \t\r\n");
  return out.substr(a, b - a + 1);
}

}  // namespace

Rgb class_color(int class_id) {
  if (class_id <= 0 || class_id > kMaxClasses) return kBackground;
  return kPalette[class_id - 1];
}

bool Blob::contains(int x, int y) const {
  const double dx = (x + 0.5 - cx) / ax;
  const double dy = (y + 0.5 - cy) / ay;
  return dx * dx + dy * dy <= 1.0;
}

Box Blob::bounds(int width, int height) const {
  Box b{static_cast<int>(std::floor(cx - ax)), static_cast<int>(std::floor(cy - ay)),
        static_cast<int>(std::ceil(cx + ax)), static_cast<int>(std::ceil(cy + ay))};
  return b.clamped(width, height);
}

long long Scene::count_of(int class_id) const {
  return std::count_if(blobs.begin(), blobs.end(),
                       [&](const Blob& b) { return b.class_id == class_id; });
}

void Scene::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, "scene: " + what); };
  if (width < 1 || height < 1) fail("canvas must be at least 1x1");
  if (stride < 1) fail("stride must be >= 1");
  if (channels < 2 || channels > kMaxClasses + 1) fail("channels must be in [2,16]");
  if (noise_sigma < 0 || text_noise_sigma < 0) fail("noise must be non-negative");
  if (text_stride < 1) fail("text_stride must be >= 1");
  if (text_confusion < 0 || text_confusion > 1) fail("text_confusion must be in [0,1]");
  for (const auto& b : blobs) {
    if (b.class_id < 1 || b.class_id >= channels) fail("blob class id out of range");
    if (b.ax <= 0 || b.ay <= 0) fail("blob axes must be positive");
    if (b.cx < 0 || b.cy < 0 || b.cx > width || b.cy > height) fail("blob centre outside canvas");
  }
  for (const auto& [name, id] : class_names)
    if (id < 1 || id >= channels) fail("class name '" + name + "' maps outside channel range");
}

nlohmann::json to_json(const Scene& scene) {
  nlohmann::json blobs = nlohmann::json::array();
  for (const auto& b : scene.blobs)
    blobs.push_back({{"cx", b.cx}, {"cy", b.cy}, {"ax", b.ax}, {"ay", b.ay}, {"class", b.class_id}});
  return {{"width", scene.width},
          {"height", scene.height},
          {"stride", scene.stride},
          {"channels", scene.channels},
          {"noise_sigma", scene.noise_sigma},
          {"text_noise_sigma", scene.text_noise_sigma},
          {"text_stride", scene.text_stride},
          {"text_confusion", scene.text_confusion},
          {"multimask", scene.multimask},
          {"classes", scene.class_names},
          {"blobs", blobs}};
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.stride = j.value("stride", s.stride);
  s.channels = j.value("channels", s.channels);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.text_noise_sigma = j.value("text_noise_sigma", s.text_noise_sigma);
  s.text_stride = j.value("text_stride", s.text_stride);
  s.text_confusion = j.value("text_confusion", s.text_confusion);
  s.multimask = j.value("multimask", s.multimask);
  if (j.contains("classes")) s.class_names = j.at("classes").get<std::map<std::string, int>>();
  if (j.contains("blobs"))
    for (const auto& b : j.at("blobs"))
      s.blobs.push_back(Blob{b.at("cx").get<double>(), b.at("cy").get<double>(),
                             b.at("ax").get<double>(), b.at("ay").get<double>(),
                             b.at("class").get<int>()});
  s.validate();
  return s;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open scene file " + path.string());
  try {
    return scene_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "bad scene file " + path.string() + ": " + e.what());
  }
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write scene file " + path.string());
  out << to_json(scene).dump(2) << '\n';
}

Image render(const Scene& scene) {
  scene.validate();
  Image img(scene.width, scene.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto off = img.pixel_offset(x, y);
      img.rgb[off] = kBackground.r;
      img.rgb[off + 1] = kBackground.g;
      img.rgb[off + 2] = kBackground.b;
    }
  for (const auto& blob : scene.blobs) {
    const Rgb c = class_color(blob.class_id);
    const Box b = blob.bounds(scene.width, scene.height);
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x)
        if (blob.contains(x, y)) {
          const auto off = img.pixel_offset(x, y);
          img.rgb[off] = c.r;
          img.rgb[off + 1] = c.g;
          img.rgb[off + 2] = c.b;
        }
  }
  return img;
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  Scene scene;
  scene.width = spec.width;
  scene.height = spec.height;
  scene.noise_sigma = spec.noise_sigma;
  scene.text_noise_sigma = spec.text_noise_sigma;
  scene.text_stride = spec.text_stride;
  scene.text_confusion = spec.text_confusion;
  scene.multimask = spec.multimask;
  scene.class_names = {{"circle", 2}, {"square", 3}};
  for (int k = 1; k < scene.channels; ++k) scene.class_names["class" + std::to_string(k)] = k;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius(spec.min_radius, spec.max_radius);
  std::uniform_real_distribution<double> aspect(0.8, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto place = [&](int class_id) {
    for (int attempt = 0; attempt < 5000; ++attempt) {
      const double ax = radius(rng);
      const double ay = unit(rng) < 0.5 ? ax * aspect(rng) : ax;
      const double r = std::max(ax, ay);
      const double cx = r + 1 + unit(rng) * (spec.width - 2 * r - 2);
      const double cy = r + 1 + unit(rng) * (spec.height - 2 * r - 2);
      bool clear = true;
      for (const auto& o : scene.blobs) {
        const double need = r + std::max(o.ax, o.ay) + spec.gap;
        if ((o.cx - cx) * (o.cx - cx) + (o.cy - cy) * (o.cy - cy) < need * need) {
          clear = false;
          break;
        }
      }
      if (clear) {
        scene.blobs.push_back(Blob{cx, cy, ax, ay, class_id});
        return;
      }
    }
    throw Error(ErrorCode::kInvalidArgument, "generate_scene: could not place all blobs");
  };
  for (int i = 0; i < spec.targets; ++i) place(spec.target_class);
  for (int i = 0; i < spec.distractors; ++i) place(spec.distractor_class);
  scene.validate();
  return scene;
}

Box exemplar_box(const Scene& scene, int class_id) {
  for (const auto& b : scene.blobs)
    if (b.class_id == class_id) return b.bounds(scene.width, scene.height);
  throw Error(ErrorCode::kInvalidArgument, "scene has no blob of class " + std::to_string(class_id));
}

int resolve_class(const std::map<std::string, int>& names, const std::string& text) {
  std::string key = lower_trim(text);
  static const std::string kTemplate = "the photo of many";
  if (key.rfind(kTemplate, 0) == 0) key = lower_trim(key.substr(kTemplate.size()));
  if (auto it = names.find(key); it != names.end()) return it->second;
  if (key.size() > 1 && key.back() == 's') {
    if (auto it = names.find(key.substr(0, key.size() - 1)); it != names.end()) return it->second;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// SyntheticBackend

SyntheticBackend::SyntheticBackend(Scene config, std::size_t cache_capacity)
    : config_(std::move(config)), cache_capacity_(std::max<std::size_t>(1, cache_capacity)) {
  config_.validate();
}

BackendCapabilities SyntheticBackend::capabilities() const {
  return BackendCapabilities{"synthetic", true, true, 0, config_.channels, config_.stride};
}

EncodedImage SyntheticBackend::encode_image(const Image& image) {
  if (!image.valid()) throw Error(ErrorCode::kInvalidArgument, "encode_image: invalid image");
  const std::string id = content_hash(image);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(id); it != cache_.end()) return it->second->encoded;
  }

  auto entry = std::make_shared<Entry>();
  const int w = image.width, h = image.height;
  const std::size_t npix = static_cast<std::size_t>(w) * h;

  std::map<std::uint32_t, int> by_color;
  for (int c = 1; c < config_.channels; ++c) by_color.emplace(pack(class_color(c)), c);
  entry->classes.assign(npix, 0);
  for (std::size_t i = 0; i < npix; ++i) {
    const Rgb px{image.rgb[i * 3], image.rgb[i * 3 + 1], image.rgb[i * 3 + 2]};
    if (auto it = by_color.find(pack(px)); it != by_color.end())
      entry->classes[i] = static_cast<std::uint8_t>(it->second);
  }

  // Instances: 8-connected components of each class.
  entry->instance.assign(npix, 0);
  for (int c = 1; c < config_.channels; ++c) {
    BinaryMask cls(w, h);
    for (std::size_t i = 0; i < npix; ++i)
      if (entry->classes[i] == c) cls.set(static_cast<int>(i % w), static_cast<int>(i / w));
    if (cls.empty()) continue;
    const auto labels = imageops::connected_components(cls, 8);
    const std::size_t base = entry->instances.size();
    entry->instances.resize(base + labels.num_components);
    for (int k = 0; k < labels.num_components; ++k) {
      entry->instances[base + k].class_id = c;
      entry->instances[base + k].mask = BinaryMask(w, h);
    }
    std::vector<double> sx(labels.num_components, 0.0), sy(labels.num_components, 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto l = labels.at(x, y);
        if (l == 0) continue;
        auto& inst = entry->instances[base + l - 1];
        inst.mask.set(x, y);
        sx[l - 1] += x + 0.5;
        sy[l - 1] += y + 0.5;
        entry->instance[static_cast<std::size_t>(y) * w + x] = static_cast<std::int32_t>(base + l);
      }
    for (int k = 0; k < labels.num_components; ++k) {
      auto& inst = entry->instances[base + k];
      inst.cx = sx[k] / static_cast<double>(inst.mask.area());
      inst.cy = sy[k] / static_cast<double>(inst.mask.area());
    }
  }

  // Features: per-cell class histogram (one-hot mixture) plus seeded noise.
  FeatureMap& f = entry->encoded.features;
  f.channels = config_.channels;
  f.stride = config_.stride;
  f.grid_w = (w + config_.stride - 1) / config_.stride;
  f.grid_h = (h + config_.stride - 1) / config_.stride;
  f.values.assign(f.cell_count() * f.channels, 0.0f);
  std::mt19937_64 rng(fnv1a(id, 0x9e3779b97f4a7c15ULL));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int cy = 0; cy < f.grid_h; ++cy)
    for (int cx = 0; cx < f.grid_w; ++cx) {
      std::vector<double> hist(f.channels, 0.0);
      int n = 0;
      for (int y = cy * f.stride; y < std::min(h, (cy + 1) * f.stride); ++y)
        for (int x = cx * f.stride; x < std::min(w, (cx + 1) * f.stride); ++x) {
          hist[entry->classes[static_cast<std::size_t>(y) * w + x]] += 1.0;
          ++n;
        }
      float* cell = f.values.data() + (static_cast<std::size_t>(cy) * f.grid_w + cx) * f.channels;
      for (int c = 0; c < f.channels; ++c) {
        double v = hist[c] / n;
        if (config_.noise_sigma > 0) v += config_.noise_sigma * noise(rng);
        cell[c] = static_cast<float>(v);
      }
    }

  entry->encoded.feature_id = id;
  entry->encoded.image_width = w;
  entry->encoded.image_height = h;

  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(id); it != cache_.end()) return it->second->encoded;
  if (cache_.size() >= cache_capacity_) {
    cache_.erase(insertion_order_.front());
    insertion_order_.erase(insertion_order_.begin());
  }
  cache_.emplace(id, entry);
  insertion_order_.push_back(id);
  return entry->encoded;
}

std::shared_ptr<const SyntheticBackend::Entry> SyntheticBackend::lookup(
    const std::string& feature_id) const {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(feature_id);
  if (it == cache_.end()) throw Error(ErrorCode::kUnknownFeature, "unknown feature id " + feature_id);
  return it->second;
}

std::vector<ScoredMask> SyntheticBackend::decode_masks(const DecodeRequest& request) {
  const auto entry = lookup(request.feature_id);
  const int w = entry->encoded.image_width, h = entry->encoded.image_height;
  if (request.points.empty() && !request.box)
    throw Error(ErrorCode::kInvalidArgument, "decode: request carries no prompt");
  for (const auto& p : request.points)
    if (p.x < 0 || p.y < 0 || p.x >= w || p.y >= h)
      throw Error(ErrorCode::kInvalidArgument, "decode: point outside image");
  if (request.box && !request.box->valid())
    throw Error(ErrorCode::kInvalidArgument, "decode: degenerate box");
  if (request.semantic && request.semantic->dim() != static_cast<std::size_t>(config_.channels))
    throw Error(ErrorCode::kInvalidArgument, "decode: semantic embedding has wrong dimension");

  auto instance_at = [&](int x, int y) {
    return entry->instance[static_cast<std::size_t>(y) * w + x];
  };

  std::int32_t target = 0;
  const PromptPoint* anchor = nullptr;
  if (request.box) {
    const Box b = request.box->clamped(w, h);
    std::map<std::int32_t, long long> overlap;
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x)
        if (auto id = instance_at(x, y); id > 0) ++overlap[id];
    long long best = 0;
    for (const auto& [id, n] : overlap)
      if (n > best) {
        best = n;
        target = id;
      }
  } else {
    for (const auto& p : request.points)
      if (p.label == PointLabel::kPositive) {
        anchor = &p;
        target = instance_at(p.x, p.y);
        break;
      }
  }
  if (target == 0) return {};
  for (const auto& p : request.points)
    if (p.label == PointLabel::kNegative && instance_at(p.x, p.y) == target) return {};

  const Instance& inst = entry->instances[target - 1];
  if (request.semantic) {
    double norm = 0.0;
    for (float v : request.semantic->values) norm += static_cast<double>(v) * v;
    if (norm == 0.0) return {};
    const double cosine = request.semantic->values[inst.class_id] / std::sqrt(norm);
    if (!(cosine > 0.5)) return {};
  }

  std::vector<ScoredMask> out;
  out.push_back(ScoredMask{inst.mask, 0.0, 1.0});
  if (config_.multimask && !request.semantic && anchor != nullptr) {
    const bool right = anchor->x + 0.5 >= inst.cx;
    const bool below = anchor->y + 0.5 >= inst.cy;
    BinaryMask part(w, h);
    const Box e = inst.mask.extent();
    for (int y = e.y0; y < e.y1; ++y)
      for (int x = e.x0; x < e.x1; ++x)
        if (inst.mask.get(x, y) && (x + 0.5 >= inst.cx) == right && (y + 0.5 >= inst.cy) == below)
          part.set(x, y);
    if (!part.empty() && part.area() < inst.mask.area()) out.push_back(ScoredMask{std::move(part), 0.0, 0.75});
  }
  return out;
}

SimilarityMap SyntheticBackend::text_similarity(const std::string& feature_id,
                                                const std::string& text) {
  const auto entry = lookup(feature_id);
  const int w = entry->encoded.image_width, h = entry->encoded.image_height;
  const int stride = config_.text_stride;
  SimilarityMap map;
  map.width = (w + stride - 1) / stride;
  map.height = (h + stride - 1) / stride;
  map.values.assign(static_cast<std::size_t>(map.width) * map.height, 0.0f);
  // Unknown text and classes absent from the image give a flat, noiseless map.
  const int class_id = resolve_class(config_.class_names, text);
  if (class_id == 0 ||
      std::find(entry->classes.begin(), entry->classes.end(), class_id) == entry->classes.end())
    return map;

  std::mt19937_64 rng(fnv1a(feature_id + '\n' + std::to_string(class_id), 0x2545f4914f6cdd1dULL));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int cy = 0; cy < map.height; ++cy)
    for (int cx = 0; cx < map.width; ++cx) {
      double hit = 0.0;
      int n = 0;
      for (int y = cy * stride; y < std::min(h, (cy + 1) * stride); ++y)
        for (int x = cx * stride; x < std::min(w, (cx + 1) * stride); ++x) {
          const int c = entry->classes[static_cast<std::size_t>(y) * w + x];
          hit += c == class_id ? 1.0 : (c != 0 ? config_.text_confusion : 0.0);
          ++n;
        }
      double v = hit / n;
      if (config_.text_noise_sigma > 0) v += config_.text_noise_sigma * noise(rng);
      map.values[static_cast<std::size_t>(cy) * map.width + cx] = static_cast<float>(v);
    }
  return map;
}

}  // namespace tfcount::synthetic
