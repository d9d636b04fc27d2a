#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tcam/ops.hpp"
#include "tcam/preprocessing.hpp"
#include "tcam/rng.hpp"

namespace tcam {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Three conv(5x5, pad 4) -> tanh -> maxpool(2x2) stages, then a tanh
/// projection to the per-frame feature.
struct CnnConfig {
  std::array<std::size_t, 4> channels{kFrameChannels, 16, 32, 32};
  std::size_t height = kFrameHeight;
  std::size_t width = kFrameWidth;
  std::size_t kernel = 5;
  std::size_t padding = 4;
  std::size_t pool = 2;
  std::size_t feature_dim = 128;

  struct Extent {
    std::size_t height, width;
  };

  /// Spatial extent after every conv and every pool, in order.
  std::vector<Extent> trace() const {
    std::vector<Extent> out;
    Extent e{height, width};
    for (int stage = 0; stage < 3; ++stage) {
      if (e.height + 2 * padding < kernel || e.width + 2 * padding < kernel) {
        throw DimensionError("frame too small for the CNN");
      }
      e = {e.height + 2 * padding - kernel + 1, e.width + 2 * padding - kernel + 1};
      out.push_back(e);
      if (e.height < pool || e.width < pool) throw DimensionError("frame too small for the CNN");
      e = {e.height / pool, e.width / pool};
      out.push_back(e);
    }
    return out;
  }

  std::size_t flat_dim() const {
    const auto last = trace().back();
    return channels[3] * last.height * last.width;
  }
};

struct CnnParams {
  CnnConfig config;
  std::array<Tensor, 3> conv_weight;
  std::array<Tensor, 3> conv_bias;
  Tensor fc_weight;
  Tensor fc_bias;

  std::vector<NamedTensor> named() const {
    std::vector<NamedTensor> out;
    for (std::size_t s = 0; s < 3; ++s) {
      out.push_back({"cnn.conv" + std::to_string(s + 1) + ".weight", conv_weight[s]});
      out.push_back({"cnn.conv" + std::to_string(s + 1) + ".bias", conv_bias[s]});
    }
    out.push_back({"cnn.fc.weight", fc_weight});
    out.push_back({"cnn.fc.bias", fc_bias});
    return out;
  }
};

/// Fills `t` with Uniform(-b, b), b = sqrt(1 / fan_in).
inline void init_uniform_fan_in(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.data_mut()) v = uniform(rng, -bound, bound);
}

inline CnnParams init_cnn(std::uint64_t seed, const CnnConfig& config = {}) {
  Rng rng(mix_seed(seed, 0xC1));
  CnnParams p;
  p.config = config;
  const auto& ch = config.channels;
  for (std::size_t s = 0; s < 3; ++s) {
    p.conv_weight[s] = Tensor::zeros({ch[s + 1], ch[s], config.kernel, config.kernel}, true);
    init_uniform_fan_in(p.conv_weight[s], ch[s] * config.kernel * config.kernel, rng);
    p.conv_bias[s] = Tensor::zeros({ch[s + 1]}, true);
  }
  const std::size_t flat = config.flat_dim();
  p.fc_weight = Tensor::zeros({config.feature_dim, flat}, true);
  init_uniform_fan_in(p.fc_weight, flat, rng);
  p.fc_bias = Tensor::zeros({config.feature_dim}, true);
  return p;
}

/// Frame features for a video [N,5,H,W] -> [N, feature_dim]. Frames are
/// processed independently; row i depends only on frame i.
inline Tensor forward_video(Tape& tape, const CnnParams& params, const Tensor& video) {
  const auto& cfg = params.config;
  if (video.rank() != 4 || video.dim(1) != cfg.channels[0] || video.dim(2) != cfg.height ||
      video.dim(3) != cfg.width) {
    throw DimensionError("forward_video: expected [N," + std::to_string(cfg.channels[0]) + "," +
                         std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "], got " +
                         shape_string(video.shape()));
  }
  const std::size_t n = video.dim(0);
  Tensor x = video;
  for (std::size_t s = 0; s < 3; ++s) {
    x = conv2d(tape, x, params.conv_weight[s], params.conv_bias[s], {1, 1},
               {cfg.padding, cfg.padding});
    x = tcam::tanh(tape, x);
    x = maxpool2d(tape, x, {cfg.pool, cfg.pool}, {cfg.pool, cfg.pool});
  }
  x = reshape(tape, x, {n, x.size() / n});
  return tcam::tanh(tape, linear(tape, x, params.fc_weight, params.fc_bias));
}

/// One frame [5,H,W] -> feature [feature_dim].
inline Tensor forward_frame(Tape& tape, const CnnParams& params, const Tensor& frame) {
  if (frame.rank() != 3) {
    throw DimensionError("forward_frame: expected a [C,H,W] frame, got " + shape_string(frame.shape()));
  }
  Shape batched{1, frame.dim(0), frame.dim(1), frame.dim(2)};
  Tensor video(batched, {frame.data().begin(), frame.data().end()});
  return reshape(tape, forward_video(tape, params, video), {params.config.feature_dim});
}

}  // namespace tcam
