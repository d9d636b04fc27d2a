#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tcam {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

inline thread_local bool grad_enabled = true;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until the first gradient accumulation.
  std::vector<double> grad;
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Tensors are shared handles: copying a Tensor aliases the same storage.
/// Use clone() for a deep copy. Values produced by operations are treated
/// as immutable; only parameters are updated in place by the optimizer.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be positive");
    }
    if (shape_size(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  static Tensor from(std::vector<double> values, bool requires_grad = false) {
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values), requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }

  std::size_t dim(std::size_t axis) const {
    if (axis >= rank()) {
      throw DimensionError("axis " + std::to_string(axis) +
                           " out of range for shape " + shape_string(shape()));
    }
    return impl_->shape[axis];
  }

  std::span<const double> data() const { return impl_->data; }
  /// Mutable view for initializers and optimizers.
  std::span<double> data_mut() { return impl_->data; }

  double operator[](std::size_t i) const { return impl_->data[i]; }

  double item() const {
    if (size() != 1) {
      throw DimensionError("item() on non-scalar tensor " + shape_string(shape()));
    }
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }

  void zero_grad() {
    if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  void clear_grad() { impl_->grad.clear(); }

  void accumulate_grad(std::span<const double> g) {
    if (g.size() != size()) throw DimensionError("gradient length mismatch");
    if (impl_->grad.empty()) impl_->grad.assign(size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
  }

  Tensor clone() const {
    Tensor t(shape(), impl_->data, requires_grad());
    return t;
  }

  const void* id() const { return impl_.get(); }

 private:
  friend class Tape;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records differentiable operations and replays them in reverse.
///
/// Gradients of leaf tensors (those not produced on this tape) accumulate
/// additively across backward calls. Each backward pass first sums its own
/// contributions and then adds the total to the leaf, so replaying a tape
/// twice doubles the leaf gradients exactly.
class Tape {
 public:
  /// grad_in[i] is empty when input i does not require a gradient.
  using Backward = std::function<void(std::span<const double> grad_out,
                                      const std::vector<std::span<double>>& grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor record(Tensor output, std::vector<Tensor> inputs, Backward backward) {
#ifndef NDEBUG
    for (double v : output.data()) {
      if (!std::isfinite(v)) throw std::runtime_error("non-finite value produced by operation");
    }
#endif
    bool needs = false;
    if (detail::grad_enabled) {
      for (const auto& in : inputs) needs = needs || in.requires_grad();
    }
    output.set_requires_grad(needs);
    if (!needs) return output;
    produced_.insert(output.impl_.get());
    nodes_.push_back(Node{output, std::move(inputs), std::move(backward)});
    return output;
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(const Tensor& loss) {
    if (loss.size() != 1) {
      throw DimensionError("backward requires a scalar loss, got " +
                           shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
      throw std::logic_error("backward: loss does not depend on any parameter");
    }
    std::unordered_map<const detail::TensorImpl*, std::vector<double>> grads;
    grads[loss.impl_.get()] = {1.0};

    for (auto node = nodes_.rbegin(); node != nodes_.rend(); ++node) {
      auto found = grads.find(node->output.impl_.get());
      if (found == grads.end()) continue;
      std::vector<std::span<double>> grad_in;
      grad_in.reserve(node->inputs.size());
      for (const auto& in : node->inputs) {
        if (!in.requires_grad()) {
          grad_in.emplace_back();
          continue;
        }
        auto& buf = grads[in.impl_.get()];
        if (buf.empty()) buf.assign(in.size(), 0.0);
        grad_in.emplace_back(buf);
      }
      node->backward(found->second, grad_in);
    }

    // Deterministic leaf update order: the order leaves were first used.
    std::unordered_set<const detail::TensorImpl*> done;
    for (const auto& node : nodes_) {
      for (const auto& in : node.inputs) {
        auto* impl = in.impl_.get();
        if (!in.requires_grad() || produced_.count(impl) || done.count(impl)) continue;
        done.insert(impl);
        auto g = grads.find(impl);
        if (g == grads.end()) continue;
        Tensor leaf = in;
        leaf.accumulate_grad(g->second);
      }
    }
  }

 private:
  struct Node {
    Tensor output;
    std::vector<Tensor> inputs;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::unordered_set<const detail::TensorImpl*> produced_;
};

/// Disables recording on this thread while alive (inference only).
class NoGrad {
 public:
  NoGrad() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGrad() { detail::grad_enabled = previous_; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool previous_;
};

}  // namespace tcam
