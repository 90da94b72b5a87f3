#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ocf/core/image_io.hpp"
#include "ocf/core/rng.hpp"
#include "ocf/core/tensor.hpp"

namespace ocf::datagen {

using Color = std::array<double, 3>;

// ---------------------------------------------------------------------------
// Scene description. World coordinates span [-1,1] on both axes with the
// origin at the image centre; an object's local frame is the unit-diameter
// box [-0.5,0.5]^2, scaled then rotated then translated into the world.

enum class ShapeId { Square, Ellipse, Heart };

inline const char* shape_name(ShapeId s) {
  switch (s) {
    case ShapeId::Square: return "square";
    case ShapeId::Ellipse: return "ellipse";
    case ShapeId::Heart: return "heart";
  }
  return "?";
}
inline ShapeId shape_from_name(const std::string& s) {
  if (s == "square") return ShapeId::Square;
  if (s == "ellipse") return ShapeId::Ellipse;
  if (s == "heart") return ShapeId::Heart;
  throw std::invalid_argument("unknown shape '" + s + "'");
}

struct SolidTexture {
  Color color{};
};
struct ChessTexture {
  Color c1{}, c2{};
  double cell = 0.14;  // local units
};
struct WoodTexture {
  Color c1{}, c2{};
  double freq = 3.0;       // stripe cycles across the world span
  double dir = 0.0;        // stripe normal direction, radians
  double phase = 0.0;
  double noise_amp = 0.6;  // radians of phase distortion
  uint32_t noise_seed = 0;
};
struct AssetTexture {
  int index = 0;           // into AssetLibrary foregrounds/backgrounds
  std::string name;        // informational
  double intensity = 1.0;  // multiplicative jitter
};

using TextureSpec = std::variant<SolidTexture, ChessTexture, WoodTexture, AssetTexture>;

struct ObjectSpec {
  std::optional<ShapeId> shape;  // empty => asset cutout (texture holds the reference)
  TextureSpec texture = SolidTexture{};
  double x = 0.0, y = 0.0;  // world position
  double scale = 0.4;       // world diameter of the local unit box
  double rotation = 0.0;    // radians
  int z = 0;                // higher z occludes lower
};

struct SceneSpec {
  uint64_t seed = 0;
  TextureSpec background = SolidTexture{};
  std::vector<ObjectSpec> objects;

  void validate(int max_objects) const {
    if (static_cast<int>(objects.size()) > max_objects)
      throw std::invalid_argument("SceneSpec: object count exceeds max_objects");
    std::vector<bool> seen(objects.size(), false);
    for (const auto& o : objects) {
      if (o.scale <= 0.0) throw std::invalid_argument("SceneSpec: scale must be > 0");
      if (o.z < 0 || o.z >= static_cast<int>(objects.size()) || seen[o.z])
        throw std::invalid_argument("SceneSpec: z values must form a permutation of 0..n-1");
      seen[o.z] = true;
    }
  }
};

struct GroundTruth {
  int height = 0, width = 0;
  std::vector<int> label_map;                        // 0 = background, i = i-th object
  std::vector<std::vector<uint8_t>> per_object_masks;  // visible masks, one per object
  std::vector<double> visible_fraction;              // visible / in-frame footprint

  int label(int i, int j) const { return label_map[static_cast<size_t>(i) * width + j]; }
};

struct SequenceSpec {
  SceneSpec base;
  int frames = 1;
  std::vector<std::array<double, 2>> velocity;  // per object, world units per frame
};

// ---------------------------------------------------------------------------
// Asset library: directory of RGBA cutouts plus background photographs.

struct AssetLibrary {
  std::vector<Image8> backgrounds;
  std::vector<std::string> background_names;
  std::vector<Image8> foregrounds;
  std::vector<std::string> foreground_names;

  static AssetLibrary load(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    AssetLibrary lib;
    fs::path bg = root / "backgrounds";
    fs::path fg = root / "foregrounds";
    std::vector<fs::path> bg_files, fg_files;
    if (fs::is_directory(bg))
      for (const auto& e : fs::recursive_directory_iterator(bg))
        if (e.is_regular_file() && e.path().extension() == ".png") bg_files.push_back(e.path());
    if (fs::is_directory(fg))
      for (const auto& e : fs::recursive_directory_iterator(fg))
        if (e.is_regular_file() && e.path().extension() == ".png") fg_files.push_back(e.path());
    std::sort(bg_files.begin(), bg_files.end());
    std::sort(fg_files.begin(), fg_files.end());
    for (const auto& p : bg_files) {
      lib.backgrounds.push_back(read_png(p.string()));
      lib.background_names.push_back(fs::relative(p, root).string());
    }
    for (const auto& p : fg_files) {
      Image8 img = read_png(p.string());
      if (img.channels != 4)
        throw std::invalid_argument("AssetLibrary: foreground without alpha channel: " + p.string());
      lib.foregrounds.push_back(std::move(img));
      lib.foreground_names.push_back(fs::relative(p, root).string());
    }
    if (lib.backgrounds.empty() || lib.foregrounds.empty())
      throw std::invalid_argument("AssetLibrary: empty library under " + root.string());
    return lib;
  }
};

// ---------------------------------------------------------------------------
// Dataset configuration shared by all generator families.

struct DatasetConfig {
  int image_h = 64, image_w = 64;
  int min_objects = 1, max_objects = 4;
  double scale_min = 0.34, scale_max = 0.62;
  double pos_range = 0.6;
  double color_min = 0.05, color_max = 0.95;
  double color_min_sep = 0.45;  // L1 separation between scene colors
  bool antialias = false;
  double chess_cell = 0.2;
  double wood_freq_min = 2.0, wood_freq_max = 4.5;
  double wood_noise = 0.5;
  double intensity_jitter_min = 0.7, intensity_jitter_max = 1.3;
  int heart_vertices = 64;

  void validate() const {
    if (image_h <= 0 || image_w <= 0)
      throw std::invalid_argument("DatasetConfig: image size must be positive");
    if (min_objects < 0 || max_objects < min_objects)
      throw std::invalid_argument("DatasetConfig: bad object-count range");
    if (scale_min <= 0.0 || scale_max < scale_min)
      throw std::invalid_argument("DatasetConfig: bad scale range");
    if (heart_vertices < 8) throw std::invalid_argument("DatasetConfig: heart_vertices too small");
  }
};

// ---------------------------------------------------------------------------
// Geometry.

namespace detail {

// Heart outline sampled from the classic sextic curve, normalized to the
// unit box with the point downward in image coordinates.
inline const std::vector<std::array<double, 2>>& heart_polygon(int vertices) {
  static thread_local std::vector<std::array<double, 2>> poly;
  static thread_local int cached = -1;
  if (cached != vertices) {
    poly.clear();
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    std::vector<std::array<double, 2>> raw;
    for (int i = 0; i < vertices; ++i) {
      double t = 2.0 * M_PI * i / vertices;
      double s = std::sin(t);
      double x = 16.0 * s * s * s;
      double y = 13.0 * std::cos(t) - 5.0 * std::cos(2 * t) - 2.0 * std::cos(3 * t) - std::cos(4 * t);
      raw.push_back({x, y});
      xmin = std::min(xmin, x); xmax = std::max(xmax, x);
      ymin = std::min(ymin, y); ymax = std::max(ymax, y);
    }
    double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
    double scale = 1.0 / std::max(xmax - xmin, ymax - ymin);
    for (auto& [x, y] : raw) poly.push_back({(x - cx) * scale, -(y - cy) * scale});
    cached = vertices;
  }
  return poly;
}

inline bool point_in_polygon(const std::vector<std::array<double, 2>>& poly, double u, double v) {
  bool inside = false;
  size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    double xi = poly[i][0], yi = poly[i][1];
    double xj = poly[j][0], yj = poly[j][1];
    if ((yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

inline bool inside_shape(ShapeId s, double u, double v, int heart_vertices) {
  switch (s) {
    case ShapeId::Square: return std::fabs(u) <= 0.5 && std::fabs(v) <= 0.5;
    case ShapeId::Ellipse: return u * u + v * v <= 0.25;
    case ShapeId::Heart: return point_in_polygon(heart_polygon(heart_vertices), u, v);
  }
  return false;
}

// Smooth deterministic value noise in [-1,1] on the world square.
inline double value_noise(double x, double y, uint32_t seed) {
  auto hash = [seed](int ix, int iy) {
    uint32_t h = seed;
    h ^= static_cast<uint32_t>(ix) * 0x9E3779B9u;
    h = (h ^ (h >> 16)) * 0x85EBCA6Bu;
    h ^= static_cast<uint32_t>(iy) * 0xC2B2AE35u;
    h = (h ^ (h >> 13)) * 0x27D4EB2Fu;
    h ^= h >> 16;
    return static_cast<double>(h) / 4294967295.0 * 2.0 - 1.0;
  };
  double gx = (x + 1.0) * 4.0, gy = (y + 1.0) * 4.0;  // 8x8 lattice over the world
  int ix = static_cast<int>(std::floor(gx)), iy = static_cast<int>(std::floor(gy));
  double fx = gx - ix, fy = gy - iy;
  double sx = fx * fx * (3.0 - 2.0 * fx), sy = fy * fy * (3.0 - 2.0 * fy);
  double v00 = hash(ix, iy), v10 = hash(ix + 1, iy);
  double v01 = hash(ix, iy + 1), v11 = hash(ix + 1, iy + 1);
  return (v00 * (1 - sx) + v10 * sx) * (1 - sy) + (v01 * (1 - sx) + v11 * sx) * sy;
}

struct LocalCoords {
  double u, v;
};

inline LocalCoords to_local(const ObjectSpec& o, double x, double y) {
  double dx = x - o.x, dy = y - o.y;
  double c = std::cos(o.rotation), s = std::sin(o.rotation);
  // rotation applied before translation => invert translation then rotation
  double u = (c * dx + s * dy) / o.scale;
  double v = (-s * dx + c * dy) / o.scale;
  return {u, v};
}

}  // namespace detail

// World position of a pixel centre.
inline double pixel_x(int j, int w) { return (2.0 * j + 1.0) / w - 1.0; }
inline double pixel_y(int i, int h) { return (2.0 * i + 1.0) / h - 1.0; }

// Whether the object claims world point (x,y) before occlusion; fills the
// sampled color when it does.
inline bool object_hit(const ObjectSpec& o, double x, double y, const DatasetConfig& cfg,
                       const AssetLibrary* assets, Color* color_out) {
  auto [u, v] = detail::to_local(o, x, y);
  if (o.shape) {
    if (!detail::inside_shape(*o.shape, u, v, cfg.heart_vertices)) return false;
    if (color_out) {
      if (const auto* solid = std::get_if<SolidTexture>(&o.texture)) {
        *color_out = solid->color;
      } else if (const auto* chess = std::get_if<ChessTexture>(&o.texture)) {
        long pu = static_cast<long>(std::floor((u + 0.5) / chess->cell));
        long pv = static_cast<long>(std::floor((v + 0.5) / chess->cell));
        *color_out = ((pu + pv) & 1) == 0 ? chess->c1 : chess->c2;
      } else {
        throw std::invalid_argument("object_hit: unsupported texture for a shape object");
      }
    }
    return true;
  }
  // asset cutout: bbox is the local unit box, alpha thresholded at 0.5
  const auto* at = std::get_if<AssetTexture>(&o.texture);
  if (!at) throw std::invalid_argument("object_hit: asset object requires AssetTexture");
  if (!assets) throw std::invalid_argument("object_hit: asset library required");
  if (std::fabs(u) > 0.5 || std::fabs(v) > 0.5) return false;
  const Image8& img = assets->foregrounds.at(at->index);
  int aj = std::min(img.width - 1, std::max(0, static_cast<int>((u + 0.5) * img.width)));
  int ai = std::min(img.height - 1, std::max(0, static_cast<int>((v + 0.5) * img.height)));
  if (img.at(ai, aj, 3) < 128) return false;
  if (color_out)
    for (int c = 0; c < 3; ++c) {
      double val = img.at(ai, aj, c) / 255.0 * at->intensity;
      (*color_out)[c] = std::min(1.0, std::max(0.0, val));
    }
  return true;
}

inline Color background_color_at(const TextureSpec& bg, double x, double y,
                                 const AssetLibrary* assets) {
  if (const auto* solid = std::get_if<SolidTexture>(&bg)) return solid->color;
  if (const auto* chess = std::get_if<ChessTexture>(&bg)) {
    long pu = static_cast<long>(std::floor((x + 1.0) / chess->cell));
    long pv = static_cast<long>(std::floor((y + 1.0) / chess->cell));
    return ((pu + pv) & 1) == 0 ? chess->c1 : chess->c2;
  }
  if (const auto* wood = std::get_if<WoodTexture>(&bg)) {
    double s = x * std::cos(wood->dir) + y * std::sin(wood->dir);
    double warp = wood->noise_amp * detail::value_noise(x, y, wood->noise_seed);
    double t = 0.5 + 0.5 * std::sin(M_PI * wood->freq * s + wood->phase + warp);
    Color c;
    for (int i = 0; i < 3; ++i) c[i] = wood->c1[i] * (1.0 - t) + wood->c2[i] * t;
    return c;
  }
  const auto& at = std::get<AssetTexture>(bg);
  if (!assets) throw std::invalid_argument("background_color_at: asset library required");
  const Image8& img = assets->backgrounds.at(at.index);
  int aj = std::min(img.width - 1, std::max(0, static_cast<int>((x + 1.0) * 0.5 * img.width)));
  int ai = std::min(img.height - 1, std::max(0, static_cast<int>((y + 1.0) * 0.5 * img.height)));
  Color c;
  for (int ch = 0; ch < 3; ++ch) {
    double val = img.at(ai, aj, ch) / 255.0 * at.intensity;
    c[ch] = std::min(1.0, std::max(0.0, val));
  }
  return c;
}

// Un-occluded footprint of one object on the pixel grid.
inline std::vector<uint8_t> footprint(const ObjectSpec& o, int h, int w, const DatasetConfig& cfg,
                                      const AssetLibrary* assets = nullptr) {
  std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      if (object_hit(o, pixel_x(j, w), pixel_y(i, h), cfg, assets, nullptr))
        mask[static_cast<size_t>(i) * w + j] = 1;
  return mask;
}

struct RenderResult {
  Tensor image;  // (3,H,W) in [0,1]
  GroundTruth gt;
};

// Deterministic rasterizer: hard labels from pixel-centre tests, image from
// the same tests (optionally 3x3 supersampled when cfg.antialias is set;
// masks stay hard either way).
inline RenderResult render_scene(const SceneSpec& spec, const DatasetConfig& cfg,
                                 const AssetLibrary* assets = nullptr) {
  cfg.validate();
  spec.validate(std::max<int>(cfg.max_objects, static_cast<int>(spec.objects.size())));
  const int h = cfg.image_h, w = cfg.image_w;
  const int n = static_cast<int>(spec.objects.size());

  RenderResult out;
  out.gt.height = h;
  out.gt.width = w;
  out.gt.label_map.assign(static_cast<size_t>(h) * w, 0);
  out.image = Tensor(Shape{3, h, w});

  // objects ordered back to front
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[spec.objects[i].z] = i;

  std::vector<int64_t> footprint_px(n, 0);

  auto top_color = [&](double x, double y) -> Color {
    for (int zi = n - 1; zi >= 0; --zi) {
      Color c;
      if (object_hit(spec.objects[order[zi]], x, y, cfg, assets, &c)) return c;
    }
    return background_color_at(spec.background, x, y, assets);
  };

  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double x = pixel_x(j, w), y = pixel_y(i, h);
      // painter's order for the hard label
      for (int zi = 0; zi < n; ++zi) {
        int oi = order[zi];
        if (object_hit(spec.objects[oi], x, y, cfg, assets, nullptr)) {
          ++footprint_px[oi];
          out.gt.label_map[static_cast<size_t>(i) * w + j] = oi + 1;
        }
      }
      Color c;
      if (cfg.antialias) {
        c = {0, 0, 0};
        for (int si = 0; si < 3; ++si)
          for (int sj = 0; sj < 3; ++sj) {
            double sx = (2.0 * j + (2.0 * sj + 1.0) / 3.0) / w - 1.0;
            double sy = (2.0 * i + (2.0 * si + 1.0) / 3.0) / h - 1.0;
            Color cc = top_color(sx, sy);
            for (int ch = 0; ch < 3; ++ch) c[ch] += cc[ch] / 9.0;
          }
      } else {
        c = top_color(x, y);
      }
      for (int ch = 0; ch < 3; ++ch) out.image.at(ch, i, j) = c[ch];
    }

  out.gt.per_object_masks.assign(n, std::vector<uint8_t>(static_cast<size_t>(h) * w, 0));
  std::vector<int64_t> visible_px(n, 0);
  for (size_t p = 0; p < out.gt.label_map.size(); ++p) {
    int lbl = out.gt.label_map[p];
    if (lbl > 0) {
      out.gt.per_object_masks[lbl - 1][p] = 1;
      ++visible_px[lbl - 1];
    }
  }
  out.gt.visible_fraction.resize(n);
  for (int i = 0; i < n; ++i)
    out.gt.visible_fraction[i] =
        footprint_px[i] > 0 ? static_cast<double>(visible_px[i]) / footprint_px[i] : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// JSON (de)serialization of scene specs.

inline nlohmann::json color_json(const Color& c) { return nlohmann::json{c[0], c[1], c[2]}; }
inline Color color_from_json(const nlohmann::json& j) {
  return Color{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline nlohmann::json texture_to_json(const TextureSpec& t) {
  nlohmann::json j;
  if (const auto* s = std::get_if<SolidTexture>(&t)) {
    j["kind"] = "solid";
    j["color"] = color_json(s->color);
  } else if (const auto* c = std::get_if<ChessTexture>(&t)) {
    j["kind"] = "chess";
    j["c1"] = color_json(c->c1);
    j["c2"] = color_json(c->c2);
    j["cell"] = c->cell;
  } else if (const auto* wd = std::get_if<WoodTexture>(&t)) {
    j["kind"] = "wood";
    j["c1"] = color_json(wd->c1);
    j["c2"] = color_json(wd->c2);
    j["freq"] = wd->freq;
    j["dir"] = wd->dir;
    j["phase"] = wd->phase;
    j["noise_amp"] = wd->noise_amp;
    j["noise_seed"] = wd->noise_seed;
  } else {
    const auto& a = std::get<AssetTexture>(t);
    j["kind"] = "asset";
    j["index"] = a.index;
    j["name"] = a.name;
    j["intensity"] = a.intensity;
  }
  return j;
}

inline TextureSpec texture_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "solid") return SolidTexture{color_from_json(j.at("color"))};
  if (kind == "chess")
    return ChessTexture{color_from_json(j.at("c1")), color_from_json(j.at("c2")),
                        j.at("cell").get<double>()};
  if (kind == "wood") {
    WoodTexture w;
    w.c1 = color_from_json(j.at("c1"));
    w.c2 = color_from_json(j.at("c2"));
    w.freq = j.at("freq").get<double>();
    w.dir = j.at("dir").get<double>();
    w.phase = j.at("phase").get<double>();
    w.noise_amp = j.at("noise_amp").get<double>();
    w.noise_seed = j.at("noise_seed").get<uint32_t>();
    return w;
  }
  if (kind == "asset") {
    AssetTexture a;
    a.index = j.at("index").get<int>();
    a.name = j.value("name", "");
    a.intensity = j.at("intensity").get<double>();
    return a;
  }
  throw std::invalid_argument("unknown texture kind '" + kind + "'");
}

inline nlohmann::json scene_to_json(const SceneSpec& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["background"] = texture_to_json(s.background);
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    nlohmann::json jo;
    if (o.shape) jo["shape"] = shape_name(*o.shape);
    jo["texture"] = texture_to_json(o.texture);
    jo["position"] = nlohmann::json{o.x, o.y};
    jo["scale"] = o.scale;
    jo["rotation"] = o.rotation;
    jo["z"] = o.z;
    objs.push_back(jo);
  }
  j["objects"] = objs;
  return j;
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.seed = j.at("seed").get<uint64_t>();
  s.background = texture_from_json(j.at("background"));
  for (const auto& jo : j.at("objects")) {
    ObjectSpec o;
    if (jo.contains("shape")) o.shape = shape_from_name(jo.at("shape").get<std::string>());
    o.texture = texture_from_json(jo.at("texture"));
    o.x = jo.at("position").at(0).get<double>();
    o.y = jo.at("position").at(1).get<double>();
    o.scale = jo.at("scale").get<double>();
    o.rotation = jo.at("rotation").get<double>();
    o.z = jo.at("z").get<int>();
    s.objects.push_back(o);
  }
  return s;
}

}  // namespace ocf::datagen
