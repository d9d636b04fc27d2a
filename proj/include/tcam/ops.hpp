#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tcam/tensor.hpp"

namespace tcam {

struct Window2 {
  std::size_t rows = 1;
  std::size_t cols = 1;
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Discrete choices (max-pool winners, relu activity) made by the forward
/// pass are appended here while a BranchRecorder is alive on this thread.
inline thread_local std::vector<std::size_t>* branch_log = nullptr;

class BranchRecorder {
 public:
  explicit BranchRecorder(std::vector<std::size_t>* log) : previous_(branch_log) { branch_log = log; }
  ~BranchRecorder() { branch_log = previous_; }
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

 private:
  std::vector<std::size_t>* previous_;
};

inline void log_branches(std::span<const std::size_t> choices) {
  if (branch_log) branch_log->insert(branch_log->end(), choices.begin(), choices.end());
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

// Geometry of a 2D cross-correlation on one sample.
struct ConvGeometry {
  std::size_t in_channels, in_h, in_w;
  std::size_t kernel_h, kernel_w;
  std::size_t stride_h, stride_w;
  std::size_t pad_h, pad_w;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
};

inline ConvGeometry make_geometry(std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
                                  std::size_t kw, Window2 stride, Window2 pad) {
  require(stride.rows >= 1 && stride.cols >= 1, "conv: strides must be >= 1");
  require(kh <= h + 2 * pad.rows && kw <= w + 2 * pad.cols,
          "conv: kernel larger than padded input");
  ConvGeometry g{c, h, w, kh, kw, stride.rows, stride.cols, pad.rows, pad.cols, 0, 0};
  g.out_h = (h + 2 * pad.rows - kh) / stride.rows + 1;
  g.out_w = (w + 2 * pad.cols - kw) / stride.cols + 1;
  return g;
}

// Patch matrix: row (c, ki, kj), column (oy, ox).
inline void im2col(const ConvGeometry& g, const double* x, double* cols) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        double* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ki) -
                          static_cast<std::ptrdiff_t>(g.pad_h);
          double* out = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(out, out + g.out_w, 0.0);
            continue;
          }
          const double* src = x + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kj) -
                            static_cast<std::ptrdiff_t>(g.pad_w);
            out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patch gradients back onto the input.
inline void col2im_add(const ConvGeometry& g, const double* cols, double* dx) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const double* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ki) -
                          static_cast<std::ptrdiff_t>(g.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          double* dst = dx + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          const double* in = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride_w + kj) -
                            static_cast<std::ptrdiff_t>(g.pad_w);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

// Batched lowered convolution shared by conv2d and conv1d. Every sample runs
// the same GEMM shape, so results for a sample do not depend on its position
// in the batch.
inline Tensor lowered_conv(Tape& tape, const Tensor& input, const Tensor& kernel,
                           const Tensor& bias, std::size_t batch, const ConvGeometry& g,
                           std::size_t out_channels, Shape out_shape) {
  const std::size_t patch = g.patch();
  const std::size_t positions = g.positions();
  const std::size_t in_sample = g.in_channels * g.in_h * g.in_w;
  const std::size_t out_sample = out_channels * positions;

  std::vector<double> out(batch * out_sample);
  std::vector<double> cols(patch * positions);
  ConstMatrixMap w(kernel.data().data(), static_cast<Eigen::Index>(out_channels),
                   static_cast<Eigen::Index>(patch));
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(g, input.data().data() + b * in_sample, cols.data());
    ConstMatrixMap cm(cols.data(), static_cast<Eigen::Index>(patch),
                      static_cast<Eigen::Index>(positions));
    MatrixMap om(out.data() + b * out_sample, static_cast<Eigen::Index>(out_channels),
                 static_cast<Eigen::Index>(positions));
    om.noalias() = w * cm;
    for (std::size_t oc = 0; oc < out_channels; ++oc) {
      const double bv = bias[oc];
      double* row = out.data() + b * out_sample + oc * positions;
      for (std::size_t p = 0; p < positions; ++p) row[p] += bv;
    }
  }

  return tape.record(
      Tensor(std::move(out_shape), std::move(out)), {input, kernel, bias},
      [input, kernel, batch, g, out_channels, patch, positions, in_sample, out_sample](
          std::span<const double> gout, const std::vector<std::span<double>>& gin) {
        std::vector<double> cols(patch * positions);
        std::vector<double> dcols;
        ConstMatrixMap w(kernel.data().data(), static_cast<Eigen::Index>(out_channels),
                         static_cast<Eigen::Index>(patch));
        const bool need_x = !gin[0].empty();
        const bool need_w = !gin[1].empty();
        const bool need_b = !gin[2].empty();
        if (need_x) dcols.resize(patch * positions);
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMatrixMap go(gout.data() + b * out_sample,
                            static_cast<Eigen::Index>(out_channels),
                            static_cast<Eigen::Index>(positions));
          if (need_b) {
            for (std::size_t oc = 0; oc < out_channels; ++oc) {
              double s = 0.0;
              const double* row = gout.data() + b * out_sample + oc * positions;
              for (std::size_t p = 0; p < positions; ++p) s += row[p];
              gin[2][oc] += s;
            }
          }
          if (need_w) {
            im2col(g, input.data().data() + b * in_sample, cols.data());
            ConstMatrixMap cm(cols.data(), static_cast<Eigen::Index>(patch),
                              static_cast<Eigen::Index>(positions));
            MatrixMap dw(gin[1].data(), static_cast<Eigen::Index>(out_channels),
                         static_cast<Eigen::Index>(patch));
            dw.noalias() += go * cm.transpose();
          }
          if (need_x) {
            MatrixMap dc(dcols.data(), static_cast<Eigen::Index>(patch),
                         static_cast<Eigen::Index>(positions));
            dc.noalias() = w.transpose() * go;
            col2im_add(g, dcols.data(), gin[0].data() + b * in_sample);
          }
        }
      });
}

// Splits a shape into (outer, extent, inner) around an axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class Fn, class Deriv>
Tensor unary(Tape& tape, const Tensor& x, Fn fn, Deriv deriv) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i]);
  Tensor y(x.shape(), std::move(out));
  // Derivative expressed in terms of (input, output).
  return tape.record(y, {x}, [x, y, deriv](std::span<const double> g,
                                           const std::vector<std::span<double>>& gin) {
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace detail

/// Logistic function, split on sign so neither branch overflows.
inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// 2D cross-correlation with zero padding.
///
/// `input` is [C,H,W] or a batch [B,C,H,W]; `kernel` is [Co,C,kH,kW].
inline Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     Window2 stride = {1, 1}, Window2 padding = {0, 0}) {
  using detail::require;
  require(input.rank() == 3 || input.rank() == 4, "conv2d: input must be [C,H,W] or [B,C,H,W]");
  require(kernel.rank() == 4, "conv2d: kernel must be [Co,Ci,kH,kW]");
  const bool batched = input.rank() == 4;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t c = input.dim(off), h = input.dim(off + 1), w = input.dim(off + 2);
  require(kernel.dim(1) == c, "conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                                  " input channels, input has " + std::to_string(c));
  const std::size_t co = kernel.dim(0);
  require(bias.rank() == 1 && bias.dim(0) == co, "conv2d: bias must be [Co]");
  auto g = detail::make_geometry(c, h, w, kernel.dim(2), kernel.dim(3), stride, padding);
  Shape out_shape = batched ? Shape{batch, co, g.out_h, g.out_w} : Shape{co, g.out_h, g.out_w};
  return detail::lowered_conv(tape, input, kernel, bias, batch, g, co, std::move(out_shape));
}

/// 1D cross-correlation with zero padding: input [C,N], kernel [Co,C,k].
inline Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     std::size_t stride = 1, std::size_t padding = 0) {
  using detail::require;
  require(input.rank() == 2, "conv1d: input must be [C,N]");
  require(kernel.rank() == 3, "conv1d: kernel must be [Co,Ci,k]");
  const std::size_t c = input.dim(0), n = input.dim(1);
  require(kernel.dim(1) == c, "conv1d: kernel expects " + std::to_string(kernel.dim(1)) +
                                  " input channels, input has " + std::to_string(c));
  const std::size_t co = kernel.dim(0);
  require(bias.rank() == 1 && bias.dim(0) == co, "conv1d: bias must be [Co]");
  auto g = detail::make_geometry(c, 1, n, 1, kernel.dim(2), {1, stride}, {0, padding});
  return detail::lowered_conv(tape, input, kernel, bias, 1, g, co, Shape{co, g.out_w});
}

/// Learned upsampling: input [Ci,N], kernel [Ci,Co,k] -> [Co,(N-1)*stride+k].
inline Tensor transposed_conv1d(Tape& tape, const Tensor& input, const Tensor& kernel,
                                std::size_t stride) {
  using detail::require;
  require(stride >= 1, "transposed_conv1d: stride must be >= 1");
  require(input.rank() == 2 && kernel.rank() == 3,
          "transposed_conv1d: input [Ci,N], kernel [Ci,Co,k]");
  require(kernel.dim(0) == input.dim(0), "transposed_conv1d: channel mismatch");
  const std::size_t ci = input.dim(0), n = input.dim(1);
  const std::size_t co = kernel.dim(1), k = kernel.dim(2);
  const std::size_t len = (n - 1) * stride + k;

  // Gather form: out[o,j] sums taps t with (j - t) divisible by stride.
  auto taps = [=](std::size_t j, auto&& visit) {
    for (std::size_t t = j % stride; t < k && t <= j; t += stride) {
      const std::size_t i = (j - t) / stride;
      if (i < n) visit(i, t);
    }
  };

  std::vector<double> out(co * len, 0.0);
  const auto x = input.data();
  const auto w = kernel.data();
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t j = 0; j < len; ++j) {
      double s = 0.0;
      taps(j, [&](std::size_t i, std::size_t t) {
        for (std::size_t c = 0; c < ci; ++c) s += x[c * n + i] * w[(c * co + o) * k + t];
      });
      out[o * len + j] = s;
    }
  }
  return tape.record(Tensor({co, len}, std::move(out)), {input, kernel},
                     [input, kernel, ci, n, co, k, len, taps](
                         std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       const auto x = input.data();
                       const auto w = kernel.data();
                       for (std::size_t o = 0; o < co; ++o) {
                         for (std::size_t j = 0; j < len; ++j) {
                           const double go = g[o * len + j];
                           taps(j, [&](std::size_t i, std::size_t t) {
                             for (std::size_t c = 0; c < ci; ++c) {
                               if (!gin[0].empty()) gin[0][c * n + i] += go * w[(c * co + o) * k + t];
                               if (!gin[1].empty()) gin[1][(c * co + o) * k + t] += go * x[c * n + i];
                             }
                           });
                         }
                       }
                     });
}

/// Max pooling over the last axis. Partial trailing windows are dropped;
/// the gradient goes to the first maximum in each window.
inline Tensor maxpool1d(Tape& tape, const Tensor& input, std::size_t window, std::size_t stride) {
  using detail::require;
  require(window >= 1 && stride >= 1, "maxpool1d: window and stride must be >= 1");
  const std::size_t n = input.shape().back();
  require(window <= n, "maxpool1d: window larger than input");
  const std::size_t rows = input.size() / n;
  const std::size_t out_n = (n - window) / stride + 1;
  std::vector<double> out(rows * out_n);
  std::vector<std::size_t> arg(rows * out_n);
  const auto x = input.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_n; ++o) {
      std::size_t best = r * n + o * stride;
      for (std::size_t t = 1; t < window; ++t) {
        const std::size_t idx = r * n + o * stride + t;
        if (x[idx] > x[best]) best = idx;
      }
      out[r * out_n + o] = x[best];
      arg[r * out_n + o] = best;
    }
  }
  detail::log_branches(arg);
  Shape shape = input.shape();
  shape.back() = out_n;
  return tape.record(Tensor(std::move(shape), std::move(out)), {input},
                     [arg = std::move(arg)](std::span<const double> g,
                                            const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) gin[0][arg[i]] += g[i];
                     });
}

/// Max pooling over the last two axes, row-major first-maximum tie rule.
inline Tensor maxpool2d(Tape& tape, const Tensor& input, Window2 window, Window2 stride) {
  using detail::require;
  require(input.rank() >= 2, "maxpool2d: input needs at least two axes");
  require(window.rows >= 1 && window.cols >= 1 && stride.rows >= 1 && stride.cols >= 1,
          "maxpool2d: window and stride must be >= 1");
  const std::size_t h = input.dim(input.rank() - 2), w = input.dim(input.rank() - 1);
  require(window.rows <= h && window.cols <= w, "maxpool2d: window larger than input");
  const std::size_t planes = input.size() / (h * w);
  const std::size_t oh = (h - window.rows) / stride.rows + 1;
  const std::size_t ow = (w - window.cols) / stride.cols + 1;
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> arg(out.size());
  const auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + oy * stride.rows * w + ox * stride.cols;
        for (std::size_t ky = 0; ky < window.rows; ++ky) {
          for (std::size_t kx = 0; kx < window.cols; ++kx) {
            const std::size_t idx = base + (oy * stride.rows + ky) * w + ox * stride.cols + kx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = x[best];
        arg[o] = best;
      }
    }
  }
  detail::log_branches(arg);
  Shape shape = input.shape();
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  return tape.record(Tensor(std::move(shape), std::move(out)), {input},
                     [arg = std::move(arg)](std::span<const double> g,
                                            const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) gin[0][arg[i]] += g[i];
                     });
}

inline Tensor tanh(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  return detail::unary(tape, x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

/// max(0, x); the subgradient at 0 is 0.
inline Tensor relu(Tape& tape, const Tensor& x) {
  if (detail::branch_log) {
    for (double v : x.data()) detail::branch_log->push_back(v > 0.0 ? 1 : 0);
  }
  return detail::unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor scale(Tape& tape, const Tensor& x, double c) {
  return detail::unary(
      tape, x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(Tape& tape, const Tensor& x, double c) {
  return detail::unary(
      tape, x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return tape.record(Tensor(a.shape(), std::move(out)), {a, b},
                     [](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       for (auto& gi : gin) {
                         if (gi.empty()) continue;
                         for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                       }
                     });
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return tape.record(Tensor(a.shape(), std::move(out)), {a, b},
                     [](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (!gin[0].empty()) gin[0][i] += g[i];
                         if (!gin[1].empty()) gin[1][i] -= g[i];
                       }
                     });
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return tape.record(Tensor(a.shape(), std::move(out)), {a, b},
                     [a, b](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (!gin[0].empty()) gin[0][i] += g[i] * b[i];
                         if (!gin[1].empty()) gin[1][i] += g[i] * a[i];
                       }
                     });
}

/// Sum of every element, as a 1-element tensor.
inline Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return tape.record(Tensor::scalar(s), {x},
                     [](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       for (auto& v : gin[0]) v += g[0];
                     });
}

inline Tensor mean(Tape& tape, const Tensor& x) {
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

/// Sum along one axis; the axis is removed (a rank-1 input yields [1]).
inline Tensor sum(Tape& tape, const Tensor& x, std::size_t axis) {
  detail::require(axis < x.rank(), "sum: axis " + std::to_string(axis) + " out of range for " +
                                       shape_string(x.shape()));
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += x[(o * s.extent + e) * s.inner + i];
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  return tape.record(Tensor(std::move(shape), std::move(out)), {x},
                     [s](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t e = 0; e < s.extent; ++e)
                           for (std::size_t i = 0; i < s.inner; ++i)
                             gin[0][(o * s.extent + e) * s.inner + i] += g[o * s.inner + i];
                     });
}

inline Tensor mean(Tape& tape, const Tensor& x, std::size_t axis) {
  const double n = static_cast<double>(x.dim(axis));
  return scale(tape, sum(tape, x, axis), 1.0 / n);
}

/// Affine map on a vector [d_in] or on each row of a batch [B,d_in].
inline Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  using detail::require;
  require(weight.rank() == 2, "linear: weight must be [d_out,d_in]");
  require(input.rank() == 1 || input.rank() == 2, "linear: input must be [d_in] or [B,d_in]");
  const std::size_t d_out = weight.dim(0), d_in = weight.dim(1);
  require(input.shape().back() == d_in, "linear: input width " +
                                            std::to_string(input.shape().back()) +
                                            " != weight input dim " + std::to_string(d_in));
  require(bias.rank() == 1 && bias.dim(0) == d_out, "linear: bias must be [d_out]");
  const std::size_t rows = input.rank() == 2 ? input.dim(0) : 1;
  using detail::ConstMatrixMap;
  using detail::MatrixMap;
  const auto R = static_cast<Eigen::Index>(rows);
  const auto I = static_cast<Eigen::Index>(d_in);
  const auto O = static_cast<Eigen::Index>(d_out);

  std::vector<double> out(rows * d_out);
  // Per-row products so a row's output does not depend on the batch size.
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < d_out; ++o) {
      const double* wr = weight.data().data() + o * d_in;
      const double* xr = input.data().data() + r * d_in;
      double s = 0.0;
      for (std::size_t i = 0; i < d_in; ++i) s += wr[i] * xr[i];
      out[r * d_out + o] = s + bias[o];
    }
  }
  Shape shape = input.rank() == 2 ? Shape{rows, d_out} : Shape{d_out};
  return tape.record(Tensor(std::move(shape), std::move(out)), {input, weight, bias},
                     [input, weight, R, I, O](std::span<const double> g,
                                              const std::vector<std::span<double>>& gin) {
                       ConstMatrixMap go(g.data(), R, O);
                       if (!gin[0].empty()) {
                         MatrixMap dx(gin[0].data(), R, I);
                         dx.noalias() += go * ConstMatrixMap(weight.data().data(), O, I);
                       }
                       if (!gin[1].empty()) {
                         MatrixMap dw(gin[1].data(), O, I);
                         dw.noalias() += go.transpose() * ConstMatrixMap(input.data().data(), R, I);
                       }
                       if (!gin[2].empty()) {
                         for (Eigen::Index r = 0; r < R; ++r)
                           for (Eigen::Index o = 0; o < O; ++o)
                             gin[2][static_cast<std::size_t>(o)] += go(r, o);
                       }
                     });
}

/// v / (||v||_2 + 1e-12).
inline Tensor l2_normalize(Tape& tape, const Tensor& v) {
  constexpr double eps = 1e-12;
  double sq = 0.0;
  for (double x : v.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  const double denom = norm + eps;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] / denom;
  return tape.record(Tensor(v.shape(), std::move(out)), {v},
                     [v, norm, denom](std::span<const double> g,
                                      const std::vector<std::span<double>>& gin) {
                       double dot = 0.0;
                       for (std::size_t i = 0; i < g.size(); ++i) dot += v[i] * g[i];
                       const double k = norm > 0.0 ? dot / (denom * denom * norm) : 0.0;
                       for (std::size_t i = 0; i < g.size(); ++i)
                         gin[0][i] += g[i] / denom - v[i] * k;
                     });
}

/// ||a - b||_2 as a 1-element tensor; the gradient at a == b is taken as 0.
inline Tensor euclidean_distance(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require(a.size() == b.size(), "euclidean_distance: length mismatch " +
                                            std::to_string(a.size()) + " vs " +
                                            std::to_string(b.size()));
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  const double d = std::sqrt(sq);
  return tape.record(Tensor::scalar(d), {a, b},
                     [a, b, d](std::span<const double> g,
                               const std::vector<std::span<double>>& gin) {
                       if (d == 0.0) return;
                       for (std::size_t i = 0; i < a.size(); ++i) {
                         const double s = g[0] * (a[i] - b[i]) / d;
                         if (!gin[0].empty()) gin[0][i] += s;
                         if (!gin[1].empty()) gin[1][i] -= s;
                       }
                     });
}

/// Same data under a new shape.
inline Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  detail::require(shape_size(shape) == x.size(), "reshape: cannot view " +
                                                     shape_string(x.shape()) + " as " +
                                                     shape_string(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return tape.record(Tensor(std::move(shape), std::move(out)), {x},
                     [](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                     });
}

inline Tensor transpose(Tape& tape, const Tensor& x) {
  detail::require(x.rank() == 2, "transpose: input must be 2D");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return tape.record(Tensor({c, r}, std::move(out)), {x},
                     [r, c](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) gin[0][i * c + j] += g[j * r + i];
                     });
}

/// Contiguous range [start, start+length) along an axis.
inline Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t start,
                    std::size_t length) {
  detail::require(axis < x.rank(), "slice: axis out of range");
  detail::require(length >= 1 && start + length <= x.dim(axis), "slice: range out of bounds");
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<double> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < length; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[(o * length + e) * s.inner + i] = x[(o * s.extent + start + e) * s.inner + i];
  Shape shape = x.shape();
  shape[axis] = length;
  return tape.record(Tensor(std::move(shape), std::move(out)), {x},
                     [s, start, length](std::span<const double> g,
                                        const std::vector<std::span<double>>& gin) {
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t e = 0; e < length; ++e)
                           for (std::size_t i = 0; i < s.inner; ++i)
                             gin[0][(o * s.extent + start + e) * s.inner + i] +=
                                 g[(o * length + e) * s.inner + i];
                     });
}

/// Extends an axis by repeating its first and last entries.
inline Tensor edge_pad(Tape& tape, const Tensor& x, std::size_t axis, std::size_t before,
                       std::size_t after) {
  detail::require(axis < x.rank(), "edge_pad: axis out of range");
  const auto s = detail::split_axis(x.shape(), axis);
  const std::size_t len = s.extent + before + after;
  auto source = [s, before](std::size_t e) {
    if (e < before) return std::size_t{0};
    return std::min(e - before, s.extent - 1);
  };
  std::vector<double> out(s.outer * len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < len; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[(o * len + e) * s.inner + i] = x[(o * s.extent + source(e)) * s.inner + i];
  Shape shape = x.shape();
  shape[axis] = len;
  return tape.record(Tensor(std::move(shape), std::move(out)), {x},
                     [s, len, source](std::span<const double> g,
                                      const std::vector<std::span<double>>& gin) {
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t e = 0; e < len; ++e)
                           for (std::size_t i = 0; i < s.inner; ++i)
                             gin[0][(o * s.extent + source(e)) * s.inner + i] +=
                                 g[(o * len + e) * s.inner + i];
                     });
}

/// Row-weighted sum: out[d] = sum_i weights[i] * rows[i,d].
inline Tensor weighted_row_sum(Tape& tape, const Tensor& rows, const Tensor& weights) {
  detail::require(rows.rank() == 2, "weighted_row_sum: rows must be [N,D]");
  detail::require(weights.size() == rows.dim(0),
                  "weighted_row_sum: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(rows.dim(0)) + " rows");
  const std::size_t n = rows.dim(0), d = rows.dim(1);
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += weights[i] * rows[i * d + j];
  return tape.record(Tensor({d}, std::move(out)), {rows, weights},
                     [rows, weights, n, d](std::span<const double> g,
                                           const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < n; ++i) {
                         double dw = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           if (!gin[0].empty()) gin[0][i * d + j] += weights[i] * g[j];
                           dw += rows[i * d + j] * g[j];
                         }
                         if (!gin[1].empty()) gin[1][i] += dw;
                       }
                     });
}

/// Softmax over a vector.
inline Tensor softmax(Tape& tape, const Tensor& x) {
  const double top = *std::max_element(x.data().begin(), x.data().end());
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) z += (out[i] = std::exp(x[i] - top));
  for (auto& v : out) v /= z;
  Tensor y(x.shape(), std::move(out));
  return tape.record(y, {x},
                     [y](std::span<const double> g, const std::vector<std::span<double>>& gin) {
                       double dot = 0.0;
                       for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
                       for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += y[i] * (g[i] - dot);
                     });
}

/// -log softmax(logits)[label] with a max-shifted log-sum-exp.
inline Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const double top = *std::max_element(logits.data().begin(), logits.data().end());
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - top);
  const double lse = top + std::log(z);
  const double loss = lse - logits[label];
  return tape.record(Tensor::scalar(loss), {logits},
                     [logits, lse, label](std::span<const double> g,
                                          const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < logits.size(); ++i) {
                         const double p = std::exp(logits[i] - lse);
                         gin[0][i] += g[0] * (p - (i == label ? 1.0 : 0.0));
                       }
                     });
}

}  // namespace tcam
