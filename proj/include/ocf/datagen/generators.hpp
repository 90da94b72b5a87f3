#pragma once

#include <cmath>
#include <vector>

#include "ocf/datagen/scene.hpp"

namespace ocf::datagen {

namespace detail {

inline Color random_color(Rng& rng, const DatasetConfig& cfg) {
  return Color{rng.uniform(cfg.color_min, cfg.color_max), rng.uniform(cfg.color_min, cfg.color_max),
               rng.uniform(cfg.color_min, cfg.color_max)};
}

inline double l1_dist(const Color& a, const Color& b) {
  return std::fabs(a[0] - b[0]) + std::fabs(a[1] - b[1]) + std::fabs(a[2] - b[2]);
}

// Rejection-samples a color at least color_min_sep (L1) from every color
// already in the scene; gives up after a bounded number of tries so the
// generator stays total.
inline Color separated_color(Rng& rng, const DatasetConfig& cfg, const std::vector<Color>& taken) {
  Color c = random_color(rng, cfg);
  for (int attempt = 0; attempt < 100; ++attempt) {
    bool ok = true;
    for (const auto& t : taken)
      if (l1_dist(c, t) < cfg.color_min_sep) {
        ok = false;
        break;
      }
    if (ok) break;
    c = random_color(rng, cfg);
  }
  return c;
}

inline std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.uniform_int(0, i)]);
  return p;
}

inline void place_object(ObjectSpec& o, Rng& rng, const DatasetConfig& cfg) {
  o.x = rng.uniform(-cfg.pos_range, cfg.pos_range);
  o.y = rng.uniform(-cfg.pos_range, cfg.pos_range);
  o.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  o.rotation = rng.uniform(0.0, 2.0 * M_PI);
}

inline ShapeId random_shape(Rng& rng) {
  return static_cast<ShapeId>(rng.uniform_int(0, 2));
}

}  // namespace detail

// Multi-dSprites-style scene: flat-colored sprites on a flat background,
// sampled counts, placements and occlusion order.
inline SceneSpec sample_sprite_scene(uint64_t seed, const DatasetConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  std::vector<Color> taken;
  Color bg = detail::random_color(rng, cfg);
  taken.push_back(bg);
  spec.background = SolidTexture{bg};
  int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  auto zs = detail::random_permutation(n, rng);
  for (int i = 0; i < n; ++i) {
    ObjectSpec o;
    o.shape = detail::random_shape(rng);
    Color c = detail::separated_color(rng, cfg, taken);
    taken.push_back(c);
    o.texture = SolidTexture{c};
    detail::place_object(o, rng, cfg);
    o.z = zs[i];
    spec.objects.push_back(o);
  }
  return spec;
}

// Multi-Texture-style scene: chessboard-textured sprites on a wood-grain
// background.
inline SceneSpec sample_texture_scene(uint64_t seed, const DatasetConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  WoodTexture wood;
  wood.c1 = detail::random_color(rng, cfg);
  wood.c2 = detail::random_color(rng, cfg);
  wood.freq = rng.uniform(cfg.wood_freq_min, cfg.wood_freq_max);
  wood.dir = rng.uniform(0.0, M_PI);
  wood.phase = rng.uniform(0.0, 2.0 * M_PI);
  wood.noise_amp = cfg.wood_noise;
  wood.noise_seed = static_cast<uint32_t>(rng.next_u64());
  spec.background = wood;
  std::vector<Color> taken{wood.c1, wood.c2};
  int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  auto zs = detail::random_permutation(n, rng);
  for (int i = 0; i < n; ++i) {
    ObjectSpec o;
    o.shape = detail::random_shape(rng);
    ChessTexture chess;
    chess.c1 = detail::separated_color(rng, cfg, taken);
    taken.push_back(chess.c1);
    chess.c2 = detail::separated_color(rng, cfg, taken);
    taken.push_back(chess.c2);
    chess.cell = cfg.chess_cell;
    o.texture = chess;
    detail::place_object(o, rng, cfg);
    o.z = zs[i];
    spec.objects.push_back(o);
  }
  return spec;
}

// Flying-Animals-style scene over a user-supplied asset library: 1-5 cutouts
// scaled and placed on a random background, each component intensity-jittered.
inline SceneSpec sample_asset_scene(uint64_t seed, const AssetLibrary& assets,
                                    const DatasetConfig& cfg) {
  cfg.validate();
  if (assets.backgrounds.empty() || assets.foregrounds.empty())
    throw std::invalid_argument("sample_asset_scene: empty asset library");
  Rng rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  AssetTexture bg;
  bg.index = rng.uniform_int(0, static_cast<int>(assets.backgrounds.size()) - 1);
  bg.name = assets.background_names[bg.index];
  bg.intensity = rng.uniform(cfg.intensity_jitter_min, cfg.intensity_jitter_max);
  spec.background = bg;
  int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  auto zs = detail::random_permutation(n, rng);
  for (int i = 0; i < n; ++i) {
    ObjectSpec o;
    AssetTexture fg;
    fg.index = rng.uniform_int(0, static_cast<int>(assets.foregrounds.size()) - 1);
    fg.name = assets.foreground_names[fg.index];
    fg.intensity = rng.uniform(cfg.intensity_jitter_min, cfg.intensity_jitter_max);
    o.texture = fg;
    detail::place_object(o, rng, cfg);
    o.z = zs[i];
    spec.objects.push_back(o);
  }
  return spec;
}

inline std::tuple<Tensor, GroundTruth, SceneSpec> generate_sprite_scene(uint64_t seed,
                                                                        const DatasetConfig& cfg) {
  SceneSpec spec = sample_sprite_scene(seed, cfg);
  RenderResult r = render_scene(spec, cfg);
  return {std::move(r.image), std::move(r.gt), std::move(spec)};
}

inline std::tuple<Tensor, GroundTruth, SceneSpec> generate_texture_scene(uint64_t seed,
                                                                         const DatasetConfig& cfg) {
  SceneSpec spec = sample_texture_scene(seed, cfg);
  RenderResult r = render_scene(spec, cfg);
  return {std::move(r.image), std::move(r.gt), std::move(spec)};
}

inline std::tuple<Tensor, GroundTruth, SceneSpec> compose_assets(uint64_t seed,
                                                                 const AssetLibrary& assets,
                                                                 const DatasetConfig& cfg) {
  SceneSpec spec = sample_asset_scene(seed, assets, cfg);
  RenderResult r = render_scene(spec, cfg, &assets);
  return {std::move(r.image), std::move(r.gt), std::move(spec)};
}

// ---------------------------------------------------------------------------
// Temporally coherent sequences: identities, textures and z-order are fixed,
// only positions integrate the per-object velocity.

inline SceneSpec scene_at_frame(const SequenceSpec& seq, int t) {
  SceneSpec s = seq.base;
  for (size_t i = 0; i < s.objects.size(); ++i) {
    s.objects[i].x += seq.velocity[i][0] * t;
    s.objects[i].y += seq.velocity[i][1] * t;
  }
  return s;
}

inline std::vector<RenderResult> generate_sequence(const SequenceSpec& seq,
                                                   const DatasetConfig& cfg,
                                                   const AssetLibrary* assets = nullptr) {
  if (seq.frames < 1) throw std::invalid_argument("generate_sequence: frames must be >= 1");
  if (seq.velocity.size() != seq.base.objects.size())
    throw std::invalid_argument("generate_sequence: one velocity per object required");
  std::vector<RenderResult> frames;
  frames.reserve(seq.frames);
  for (int t = 0; t < seq.frames; ++t)
    frames.push_back(render_scene(scene_at_frame(seq, t), cfg, assets));
  return frames;
}

// Samples a base scene of the given family plus per-object velocities.
inline SequenceSpec sample_sequence(uint64_t seed, const std::string& family, int frames,
                                    double max_speed, const DatasetConfig& cfg,
                                    const AssetLibrary* assets = nullptr) {
  SequenceSpec seq;
  if (family == "sprite") seq.base = sample_sprite_scene(seed, cfg);
  else if (family == "texture") seq.base = sample_texture_scene(seed, cfg);
  else if (family == "animals") {
    if (!assets) throw std::invalid_argument("sample_sequence: animals family requires assets");
    seq.base = sample_asset_scene(seed, *assets, cfg);
  } else {
    throw std::invalid_argument("sample_sequence: unknown family '" + family + "'");
  }
  seq.frames = frames;
  Rng rng(seed ^ 0x5eeaculL);
  for (size_t i = 0; i < seq.base.objects.size(); ++i)
    seq.velocity.push_back({rng.uniform(-max_speed, max_speed), rng.uniform(-max_speed, max_speed)});
  return seq;
}

}  // namespace ocf::datagen
