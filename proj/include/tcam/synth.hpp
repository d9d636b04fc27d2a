#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcam/config.hpp"
#include "tcam/data.hpp"
#include "tcam/image.hpp"
#include "tcam/rng.hpp"

namespace tcam {

/// Procedural two-camera dataset: each identity is a striped two-colour
/// figure walking back and forth over a textured background.
struct SynthConfig {
  std::size_t num_identities = 10;
  std::size_t frames_per_track = 24;
  std::size_t width = 48;
  std::size_t height = 64;
  double noise_sigma = 6.0;      // per-pixel Gaussian noise, 0..255 scale
  double occlusion_prob = 0.2;   // chance that a frame is masked by a gray bar
  std::size_t clutter = 16;      // coloured background boxes per track
  std::uint64_t seed = 0;

  void validate() const {
    if (num_identities < 2) throw std::invalid_argument("synth: num_identities must be >= 2");
    if (frames_per_track < 2) throw std::invalid_argument("synth: frames_per_track must be >= 2");
    if (width < 16 || height < 16) throw std::invalid_argument("synth: image must be at least 16x16");
    if (noise_sigma < 0) throw std::invalid_argument("synth: noise_sigma must be >= 0");
    if (occlusion_prob < 0 || occlusion_prob > 1) {
      throw std::invalid_argument("synth: occlusion_prob must be in [0,1]");
    }
  }

  static SynthConfig from(const KeyValueConfig& kv) {
    SynthConfig c;
    c.num_identities = static_cast<std::size_t>(kv.get_int("num_identities", 10));
    c.frames_per_track = static_cast<std::size_t>(kv.get_int("frames_per_track", 24));
    c.width = static_cast<std::size_t>(kv.get_int("width", 48));
    c.height = static_cast<std::size_t>(kv.get_int("height", 64));
    c.noise_sigma = kv.get_double("noise_sigma", 6.0);
    c.occlusion_prob = kv.get_double("occlusion_prob", 0.2);
    c.clutter = static_cast<std::size_t>(kv.get_int("clutter", 16));
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    c.validate();
    return c;
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{"num_identities", "frames_per_track", "width", "height",
                                         "noise_sigma",    "occlusion_prob",   "clutter", "seed"};
    return k;
  }
};

/// Frames masked by the occluder, as written to `occlusions.csv`.
struct OcclusionRecord {
  Camera camera;
  std::string person_id;
  std::size_t frame;
};

namespace detail {

using Rgb = std::array<double, 3>;

inline Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb rgb{};
  switch (static_cast<int>(hp)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  return {255.0 * (rgb[0] + m), 255.0 * (rgb[1] + m), 255.0 * (rgb[2] + m)};
}

struct Appearance {
  Rgb top, bottom;
  double body_width;   // fraction of image width
  double stripe_period;
  double stripe_phase;
  double motion_period;  // frames
  double motion_phase;
};

inline Appearance appearance(std::uint64_t seed, std::size_t id) {
  Rng rng(mix_seed(seed, 0x5E00 + id));
  Appearance a;
  // Golden-ratio hue spacing keeps the top colours of all identities apart.
  const double hue = std::fmod(uniform01(rng) * 0.1 + 0.6180339887 * static_cast<double>(id), 1.0);
  a.top = hsv_to_rgb(hue, uniform(rng, 0.55, 0.9), uniform(rng, 0.6, 0.95));
  a.bottom = hsv_to_rgb(hue + uniform(rng, 0.3, 0.7), uniform(rng, 0.4, 0.8), uniform(rng, 0.3, 0.7));
  a.body_width = uniform(rng, 0.28, 0.46);
  a.stripe_period = uniform(rng, 3.0, 7.0);
  a.stripe_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  a.motion_period = uniform(rng, 10.0, 18.0);
  a.motion_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return a;
}

struct Clutter {
  double x0, y0, x1, y1;
  Rgb color;
};

struct Background {
  Rgb base;
  double fx, fy, phase, amplitude;
  std::vector<Clutter> clutter;
};

inline Background background(std::uint64_t seed, Camera cam, std::size_t id, std::size_t clutter,
                             double w, double h) {
  Rng rng(mix_seed(seed, (cam == Camera::A ? 0xBA00 : 0xBB00) + id));
  Background b;
  // Camera A has warm-gray walls, camera B cool-green ones.
  const Rgb base = cam == Camera::A ? Rgb{150, 135, 120} : Rgb{95, 130, 115};
  for (std::size_t c = 0; c < 3; ++c) b.base[c] = base[c] + uniform(rng, -15.0, 15.0);
  b.fx = uniform(rng, 0.15, 0.5);
  b.fy = uniform(rng, 0.1, 0.4);
  b.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  b.amplitude = uniform(rng, 15.0, 30.0);
  for (std::size_t k = 0; k < clutter; ++k) {
    Clutter c;
    const double cw = uniform(rng, 0.1, 0.4) * w, ch = uniform(rng, 0.1, 0.5) * h;
    c.x0 = uniform(rng, -0.1 * w, w - 0.5 * cw);
    c.y0 = uniform(rng, -0.1 * h, h - 0.5 * ch);
    c.x1 = c.x0 + cw;
    c.y1 = c.y0 + ch;
    c.color = hsv_to_rgb(uniform01(rng), uniform(rng, 0.3, 0.9), uniform(rng, 0.3, 0.95));
    b.clutter.push_back(c);
  }
  return b;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace detail

/// One frame of identity `id` seen by camera `cam` at time `t`. `noise_rng`
/// drives the pixel noise and `occluded` draws the gray bar at `bar_x`.
inline RawFrame render_frame(const SynthConfig& cfg, Camera cam, std::size_t id, std::size_t t,
                             Rng& noise_rng, bool occluded, double bar_x) {
  using detail::Rgb;
  const auto look = detail::appearance(cfg.seed, id);
  const double w = static_cast<double>(cfg.width), h = static_cast<double>(cfg.height);
  const auto bg = detail::background(cfg.seed, cam, id, cfg.clutter, w, h);
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / look.motion_period + look.motion_phase;
  const double cx = 0.5 * w + 0.14 * w * std::sin(phase);
  const double bob = 0.6 * std::sin(2.0 * phase);
  const double half = 0.5 * look.body_width * w;

  const double head_y = 0.14 * h + bob, head_r = 0.075 * h;
  const double torso_top = 0.24 * h + bob, torso_bottom = 0.56 * h + bob;
  const double legs_bottom = 0.93 * h + bob;
  const double stride = 0.25 * half * std::sin(phase);
  const Rgb skin{205, 170, 140};

  RawFrame frame(cfg.width, cfg.height);
  for (std::size_t y = 0; y < cfg.height; ++y) {
    for (std::size_t x = 0; x < cfg.width; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const double tex = bg.amplitude * std::sin(bg.fx * px + bg.phase) * std::cos(bg.fy * py);
      Rgb c{bg.base[0] + tex, bg.base[1] + 0.8 * tex, bg.base[2] + 0.6 * tex};
      for (const auto& box : bg.clutter) {
        if (px >= box.x0 && px < box.x1 && py >= box.y0 && py < box.y1) c = box.color;
      }
      if (std::hypot(px - cx, py - head_y) <= head_r) {
        c = skin;
      } else if (py >= torso_top && py < torso_bottom && std::abs(px - cx) <= half) {
        const double stripe = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * py / look.stripe_period + look.stripe_phase);
        for (std::size_t k = 0; k < 3; ++k) c[k] = look.top[k] * (0.7 + 0.3 * stripe);
      } else if (py >= torso_bottom && py < legs_bottom) {
        const double left = cx - 0.5 * half - stride, right = cx + 0.5 * half + stride;
        const double leg = 0.4 * half;
        if (std::abs(px - left) <= leg || std::abs(px - right) <= leg) c = look.bottom;
      }
      if (occluded && std::abs(px - bar_x) <= 0.3 * w) c = {128, 128, 128};
      for (std::size_t k = 0; k < 3; ++k) frame.at(y, x, k) = detail::to_byte(c[k]);
    }
  }

  if (cam == Camera::B) {
    // Different sensor response, then a mirrored viewpoint.
    const Rgb gain{0.82, 1.0, 1.18}, offset{12, -6, 4};
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        for (std::size_t k = 0; k < 3; ++k) {
          frame.at(y, x, k) = detail::to_byte(gain[k] * frame.at(y, x, k) + offset[k]);
        }
      }
      for (std::size_t x = 0; x < cfg.width / 2; ++x) {
        for (std::size_t k = 0; k < 3; ++k) std::swap(frame.at(y, x, k), frame.at(y, cfg.width - 1 - x, k));
      }
    }
  }
  if (cfg.noise_sigma > 0) {
    for (auto& p : frame.pixels) p = detail::to_byte(p + cfg.noise_sigma * normal01(noise_rng));
  }
  return frame;
}

inline std::string synth_person_id(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "person_%03zu", id);
  return buf;
}

/// Writes `<out>/cam_{a,b}/person_XXX/NNNN.png` plus `occlusions.csv`.
inline std::vector<OcclusionRecord> synth_generate(const SynthConfig& cfg, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  cfg.validate();
  std::vector<OcclusionRecord> occlusions;
  for (std::size_t id = 0; id < cfg.num_identities; ++id) {
    const auto person = synth_person_id(id);
    for (Camera cam : {Camera::A, Camera::B}) {
      const fs::path dir = out / camera_dir(cam) / person;
      fs::create_directories(dir);
      Rng rng(mix_seed(cfg.seed, (cam == Camera::A ? 0xA000 : 0xB000) + id));
      for (std::size_t t = 0; t < cfg.frames_per_track; ++t) {
        const bool occluded = uniform01(rng) < cfg.occlusion_prob;
        const double bar_x = uniform(rng, 0.35, 0.65) * static_cast<double>(cfg.width);
        if (occluded) occlusions.push_back({cam, person, t});
        char name[16];
        std::snprintf(name, sizeof name, "%04zu.png", t);
        write_png(dir / name, render_frame(cfg, cam, id, t, rng, occluded, bar_x));
      }
    }
  }
  std::ofstream manifest(out / "occlusions.csv");
  if (!manifest) throw ImageIoError("cannot write " + (out / "occlusions.csv").string());
  manifest << "camera,person,frame\n";
  for (const auto& o : occlusions) {
    manifest << (o.camera == Camera::A ? "a" : "b") << ',' << o.person_id << ',' << o.frame << '\n';
  }
  return occlusions;
}

/// Reads an `occlusions.csv` written by synth_generate (empty if absent).
inline std::vector<OcclusionRecord> read_occlusions(const std::filesystem::path& root) {
  std::vector<OcclusionRecord> out;
  std::ifstream in(root / "occlusions.csv");
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    if (c1 == std::string::npos || c2 == c1) throw DatasetError("malformed occlusions.csv line: " + line);
    out.push_back({line.substr(0, c1) == "a" ? Camera::A : Camera::B, line.substr(c1 + 1, c2 - c1 - 1),
                   static_cast<std::size_t>(std::stoul(line.substr(c2 + 1)))});
  }
  return out;
}

}  // namespace tcam
