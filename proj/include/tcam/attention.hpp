#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcam/frame_cnn.hpp"
#include "tcam/ops.hpp"
#include "tcam/rng.hpp"

namespace tcam {

/// 1D fully convolutional attention over time:
///   [conv(w1) -> tanh -> pool 2] -> [conv(w2) -> tanh -> pool 2]
///   -> 1x1 score conv -> learned x4 upsampling -> crop back to N frames.
///
/// The sequence is edge-replicated by `context` frames on both sides before
/// the first convolution and the scores for the original frames are cropped
/// out afterwards, so no zero padding ever reaches a reported score.
struct AttentionConfig {
  std::size_t feature_dim = 128;
  std::size_t w1 = 5;
  std::size_t w2 = 5;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  std::size_t upsample_stride = 4;
  std::size_t upsample_kernel = 8;
  std::size_t context = 12;
  // Normalizes scores with softmax over time instead of per-frame sigmoid.
  bool softmax = false;

  void validate() const {
    if (w1 % 2 == 0 || w2 % 2 == 0) throw std::invalid_argument("attention windows must be odd");
    if (upsample_stride != 4) {
      throw std::invalid_argument("upsample stride must equal the total pooling stride (4)");
    }
    if (upsample_kernel != 2 * upsample_stride) {
      throw std::invalid_argument("upsample kernel must be twice the upsample stride");
    }
    if (context < upsample_stride) throw std::invalid_argument("attention context too small");
  }

  /// Offset of frame 0 inside the upsampled score map.
  std::size_t crop_offset() const { return context + upsample_stride / 2; }
};

struct AttentionParams {
  AttentionConfig config;
  Tensor conv1_weight, conv1_bias;
  Tensor conv2_weight, conv2_bias;
  Tensor score_weight, score_bias;
  Tensor upsample_weight;

  std::vector<NamedTensor> named() const {
    return {{"attention.conv1.weight", conv1_weight}, {"attention.conv1.bias", conv1_bias},
            {"attention.conv2.weight", conv2_weight}, {"attention.conv2.bias", conv2_bias},
            {"attention.score.weight", score_weight}, {"attention.score.bias", score_bias},
            {"attention.upsample.weight", upsample_weight}};
  }
};

/// Per-frame attention: `alpha` before normalization, `lambda` after.
struct AttentionVector {
  Tensor alpha;
  Tensor lambda;
};

/// Linear-interpolation kernel for upsampling by `stride` (length 2*stride).
inline std::vector<double> triangular_kernel(std::size_t stride) {
  const std::size_t k = 2 * stride;
  const double center = (static_cast<double>(k) - 1.0) / 2.0;
  std::vector<double> w(k);
  for (std::size_t t = 0; t < k; ++t) {
    w[t] = 1.0 - std::abs(static_cast<double>(t) - center) / static_cast<double>(stride);
  }
  return w;
}

/// All-zero parameters: every frame gets alpha = 0, lambda = 0.5.
inline AttentionParams zero_attention(const AttentionConfig& config = {}) {
  config.validate();
  AttentionParams p;
  p.config = config;
  p.conv1_weight = Tensor::zeros({config.hidden1, config.feature_dim, config.w1}, true);
  p.conv1_bias = Tensor::zeros({config.hidden1}, true);
  p.conv2_weight = Tensor::zeros({config.hidden2, config.hidden1, config.w2}, true);
  p.conv2_bias = Tensor::zeros({config.hidden2}, true);
  p.score_weight = Tensor::zeros({1, config.hidden2, 1}, true);
  p.score_bias = Tensor::zeros({1}, true);
  p.upsample_weight = Tensor::zeros({1, 1, config.upsample_kernel}, true);
  return p;
}

/// Fan-in uniform convolutions, zero biases, triangular upsampling kernel.
inline AttentionParams init_attention(std::uint64_t seed, const AttentionConfig& config = {}) {
  AttentionParams p = zero_attention(config);
  Rng rng(mix_seed(seed, 0xA7));
  init_uniform_fan_in(p.conv1_weight, config.feature_dim * config.w1, rng);
  init_uniform_fan_in(p.conv2_weight, config.hidden1 * config.w2, rng);
  init_uniform_fan_in(p.score_weight, config.hidden2, rng);
  const auto tri = triangular_kernel(config.upsample_stride);
  std::copy(tri.begin(), tri.end(), p.upsample_weight.data_mut().begin());
  return p;
}

/// Frame features [N, feature_dim] -> attention scores for each frame.
inline AttentionVector attention_scores(Tape& tape, const AttentionParams& params,
                                        const Tensor& features) {
  const auto& cfg = params.config;
  if (features.rank() != 2 || features.dim(1) != cfg.feature_dim) {
    throw DimensionError("attention_scores: expected [N," + std::to_string(cfg.feature_dim) +
                         "] features, got " + shape_string(features.shape()));
  }
  const std::size_t n = features.dim(0);
  Tensor x = edge_pad(tape, transpose(tape, features), 1, cfg.context, cfg.context);
  x = conv1d(tape, x, params.conv1_weight, params.conv1_bias, 1, (cfg.w1 - 1) / 2);
  x = maxpool1d(tape, tcam::tanh(tape, x), 2, 2);
  x = conv1d(tape, x, params.conv2_weight, params.conv2_bias, 1, (cfg.w2 - 1) / 2);
  x = maxpool1d(tape, tcam::tanh(tape, x), 2, 2);
  x = conv1d(tape, x, params.score_weight, params.score_bias);
  x = transposed_conv1d(tape, x, params.upsample_weight, cfg.upsample_stride);
  Tensor alpha = reshape(tape, slice(tape, x, 1, cfg.crop_offset(), n), {n});
  Tensor lambda = cfg.softmax ? softmax(tape, alpha) : sigmoid(tape, alpha);
  return {alpha, lambda};
}

/// gamma = sum_i lambda_i z_i (no renormalization by sum lambda).
inline Tensor attention_pool(Tape& tape, const Tensor& features, const Tensor& lambda) {
  return weighted_row_sum(tape, features, lambda);
}

/// Temporal average of the frame features.
inline Tensor mean_pool(Tape& tape, const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("mean_pool: expected [N,D] features");
  return mean(tape, features, 0);
}

/// Video-level output of one Siamese branch.
struct VideoDescriptor {
  Tensor f;  // L2-normalized fused descriptor
  AttentionVector attention;
  Tensor features;  // [N, feature_dim]
};

/// F = l2_normalize((attention_pool + mean_pool) / 2).
inline VideoDescriptor describe_features(Tape& tape, const AttentionParams& attention,
                                         const Tensor& features) {
  auto att = attention_scores(tape, attention, features);
  Tensor gamma = attention_pool(tape, features, att.lambda);
  Tensor fused = scale(tape, add(tape, gamma, mean_pool(tape, features)), 0.5);
  return {l2_normalize(tape, fused), att, features};
}

inline VideoDescriptor video_descriptor(Tape& tape, const CnnParams& cnn,
                                        const AttentionParams& attention, const Tensor& video) {
  return describe_features(tape, attention, forward_video(tape, cnn, video));
}

}  // namespace tcam
