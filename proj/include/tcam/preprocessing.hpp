#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "tcam/image.hpp"
#include "tcam/tensor.hpp"

namespace tcam {

inline constexpr std::size_t kFrameHeight = 56;
inline constexpr std::size_t kFrameWidth = 40;
inline constexpr std::size_t kFrameChannels = 5;  // Y, U, V, flow x, flow y

/// Per-pixel displacement in pixels between two frames.
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> gx;  // horizontal
  std::vector<double> gy;  // vertical
};

struct PreprocessOptions {
  std::size_t height = kFrameHeight;
  std::size_t width = kFrameWidth;
  std::size_t lk_window = 5;
  double min_eigenvalue = 1e-6;
  double flow_clip = 8.0;  // pixels; flow is clamped then divided by this
};

/// Bilinear resampling with half-pixel-center alignment.
inline RawFrame resize_bilinear(const RawFrame& frame, std::size_t out_height = kFrameHeight,
                                std::size_t out_width = kFrameWidth) {
  if (frame.width < 2 || frame.height < 2) {
    throw std::invalid_argument("resize_bilinear: source must be at least 2x2");
  }
  if (out_width == 0 || out_height == 0) {
    throw std::invalid_argument("resize_bilinear: empty target");
  }
  if (frame.width == out_width && frame.height == out_height) return frame;

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t src, std::size_t dst) {
    std::vector<Tap> out(dst);
    const double ratio = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
      double s = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      const auto lo = static_cast<std::size_t>(std::floor(s));
      out[i] = {lo, std::min(lo + 1, src - 1), s - static_cast<double>(lo)};
    }
    return out;
  };
  const auto ys = taps(frame.height, out_height);
  const auto xs = taps(frame.width, out_width);

  RawFrame out(out_width, out_height);
  for (std::size_t y = 0; y < out_height; ++y) {
    const auto& ty = ys[y];
    for (std::size_t x = 0; x < out_width; ++x) {
      const auto& tx = xs[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - tx.frac) * frame.at(ty.lo, tx.lo, c) + tx.frac * frame.at(ty.lo, tx.hi, c);
        const double bottom =
            (1.0 - tx.frac) * frame.at(ty.hi, tx.lo, c) + tx.frac * frame.at(ty.hi, tx.hi, c);
        const double v = (1.0 - ty.frac) * top + ty.frac * bottom;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

/// BT.601 full-range YUV on [0,1]-scaled RGB.
inline FloatImage rgb_to_yuv(const RawFrame& frame) {
  FloatImage out(3, frame.height, frame.width);
  for (std::size_t y = 0; y < frame.height; ++y) {
    for (std::size_t x = 0; x < frame.width; ++x) {
      const double r = frame.at(y, x, 0) / 255.0;
      const double g = frame.at(y, x, 1) / 255.0;
      const double b = frame.at(y, x, 2) / 255.0;
      const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
      out.at(0, y, x) = luma;
      out.at(1, y, x) = 0.492 * (b - luma);
      out.at(2, y, x) = 0.877 * (r - luma);
    }
  }
  return out;
}

/// Zero-mean, unit-variance per channel, statistics pooled over every pixel
/// of every frame. Channels with std < 1e-8 are only mean-centered.
inline std::vector<FloatImage> normalize_video_channels(std::vector<FloatImage> frames) {
  if (frames.empty()) throw std::invalid_argument("normalize_video_channels: no frames");
  const std::size_t channels = frames.front().channels;
  for (std::size_t c = 0; c < channels; ++c) {
    // Shifted by the first sample so a constant channel centers to exactly 0.
    const double pivot = frames.front().data[c * frames.front().plane()];
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& f : frames) {
      for (std::size_t i = 0; i < f.plane(); ++i) total += f.data[c * f.plane() + i] - pivot;
      count += f.plane();
    }
    const double mu = pivot + total / static_cast<double>(count);
    double var = 0.0;
    for (const auto& f : frames) {
      for (std::size_t i = 0; i < f.plane(); ++i) {
        const double d = f.data[c * f.plane() + i] - mu;
        var += d * d;
      }
    }
    const double sigma = std::sqrt(var / static_cast<double>(count));
    const double inv = sigma < 1e-8 ? 1.0 : 1.0 / sigma;
    for (auto& f : frames) {
      for (std::size_t i = 0; i < f.plane(); ++i) {
        auto& v = f.data[c * f.plane() + i];
        v = (v - mu) * inv;
      }
    }
  }
  return frames;
}

/// Single-scale Lucas-Kanade on channel 0.
///
/// Spatial gradients are central differences averaged over both frames
/// (so swapping the frames exactly negates the flow); the temporal term is
/// next - prev. Pixels whose 2x2 structure tensor has smallest eigenvalue
/// below `min_eigenvalue` get zero flow.
inline FlowField lucas_kanade(const FloatImage& prev, const FloatImage& next,
                              std::size_t window = 5, double min_eigenvalue = 1e-6) {
  if (prev.height != next.height || prev.width != next.width || prev.channels == 0 ||
      next.channels == 0) {
    throw std::invalid_argument("lucas_kanade: frame shapes differ");
  }
  if (window % 2 == 0) throw std::invalid_argument("lucas_kanade: window must be odd");
  const std::size_t h = prev.height, w = prev.width;
  const auto half = static_cast<std::ptrdiff_t>(window / 2);

  std::vector<double> ix(h * w), iy(h * w), it(h * w);
  auto sample = [w](const FloatImage& img, std::size_t y, std::size_t x) { return img.data[y * w + x]; };
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t yu = y == 0 ? 0 : y - 1, yd = std::min(y + 1, h - 1);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xl = x == 0 ? 0 : x - 1, xr = std::min(x + 1, w - 1);
      const double gx0 = 0.5 * (sample(prev, y, xr) - sample(prev, y, xl));
      const double gx1 = 0.5 * (sample(next, y, xr) - sample(next, y, xl));
      const double gy0 = 0.5 * (sample(prev, yd, x) - sample(prev, yu, x));
      const double gy1 = 0.5 * (sample(next, yd, x) - sample(next, yu, x));
      ix[y * w + x] = 0.5 * (gx0 + gx1);
      iy[y * w + x] = 0.5 * (gy0 + gy1);
      it[y * w + x] = sample(next, y, x) - sample(prev, y, x);
    }
  }

  FlowField flow{h, w, std::vector<double>(h * w, 0.0), std::vector<double>(h * w, 0.0)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double a = 0, b = 0, d = 0, ex = 0, ey = 0;
      for (std::ptrdiff_t dy = -half; dy <= half; ++dy) {
        const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
          const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          const std::size_t i = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
          a += ix[i] * ix[i];
          b += ix[i] * iy[i];
          d += iy[i] * iy[i];
          ex += ix[i] * it[i];
          ey += iy[i] * it[i];
        }
      }
      const double smallest = 0.5 * (a + d - std::sqrt((a - d) * (a - d) + 4.0 * b * b));
      if (!(smallest >= min_eigenvalue)) continue;
      const double det = a * d - b * b;
      flow.gx[y * w + x] = (-d * ex + b * ey) / det;
      flow.gy[y * w + x] = (b * ex - a * ey) / det;
    }
  }
  return flow;
}

/// Resize, YUV, per-video normalization and optical flow, stacked into a
/// [N, 5, height, width] tensor (one FrameTensor per leading index). The
/// last frame reuses the flow of the pair before it.
inline Tensor build_video_tensor(const std::vector<RawFrame>& frames,
                                 const PreprocessOptions& options = {}) {
  if (frames.size() < 2) throw std::invalid_argument("build_video_tensor: need at least 2 frames");
  std::vector<FloatImage> yuv;
  yuv.reserve(frames.size());
  for (const auto& f : frames) yuv.push_back(rgb_to_yuv(resize_bilinear(f, options.height, options.width)));
  yuv = normalize_video_channels(std::move(yuv));

  const std::size_t n = frames.size(), plane = options.height * options.width;
  std::vector<double> out(n * kFrameChannels * plane);
  FlowField flow;
  for (std::size_t t = 0; t < n; ++t) {
    if (t + 1 < n) flow = lucas_kanade(yuv[t], yuv[t + 1], options.lk_window, options.min_eigenvalue);
    double* dst = out.data() + t * kFrameChannels * plane;
    std::copy(yuv[t].data.begin(), yuv[t].data.end(), dst);
    for (std::size_t i = 0; i < plane; ++i) {
      dst[3 * plane + i] = std::clamp(flow.gx[i], -options.flow_clip, options.flow_clip) / options.flow_clip;
      dst[4 * plane + i] = std::clamp(flow.gy[i], -options.flow_clip, options.flow_clip) / options.flow_clip;
    }
  }
  return Tensor({n, kFrameChannels, options.height, options.width}, std::move(out));
}

}  // namespace tcam
