#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "tcam/ops.hpp"
#include "tcam/rng.hpp"
#include "tcam/tensor.hpp"

namespace tcam {

/// |a - n| / max(|a|, |n|, 1e-6). Below the floor the comparison is
/// effectively absolute (1e-10 at a 1e-4 threshold), which is where central
/// differences of an O(1) loss stop resolving the derivative.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

using ScalarFunction = std::function<Tensor(Tape&)>;

/// Compares backward() against central differences for every listed
/// parameter. At most `max_coords` seeded-random coordinates are probed per
/// tensor (0 = all). Returns the maximum relative error.
///
/// When x+h or x-h lands on a different max-pool winner or relu state than
/// x itself, the difference straddles a kink; the step for that coordinate
/// is divided by 10 (up to three times) until both sides match.
inline double grad_check(const ScalarFunction& f, std::span<Tensor> params, double h = 1e-5,
                         std::size_t max_coords = 0, std::uint64_t seed = 0) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  std::vector<std::size_t> base_branches;
  {
    detail::BranchRecorder recorder(&base_branches);
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  std::vector<std::size_t> branches;
  auto evaluate = [&f, &branches] {
    branches.clear();
    detail::BranchRecorder recorder(&branches);
    Tape tape;
    return f(tape).item();
  };

  Rng rng(seed);
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords && coords.size() > max_coords) {
      for (std::size_t i = 0; i < max_coords; ++i) {
        std::swap(coords[i], coords[i + uniform_index(rng, coords.size() - i)]);
      }
      coords.resize(max_coords);
    }
    const std::vector<double> analytic = p.has_grad()
                                             ? std::vector<double>(p.grad().begin(), p.grad().end())
                                             : std::vector<double>(p.size(), 0.0);
    auto data = p.data_mut();
    for (std::size_t c : coords) {
      const double saved = data[c];
      double step = h, numeric = 0.0;
      for (int attempt = 0; attempt < 4; ++attempt, step /= 10.0) {
        data[c] = saved + step;
        const double up = evaluate();
        bool smooth = branches == base_branches;
        data[c] = saved - step;
        const double down = evaluate();
        smooth = smooth && branches == base_branches;
        numeric = (up - down) / (2.0 * step);
        if (smooth) break;
      }
      data[c] = saved;
      worst = std::max(worst, relative_error(analytic[c], numeric));
    }
  }
  return worst;
}

/// Single-point form: `point` is the only differentiated input.
inline double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor point,
                         double h = 1e-5) {
  Tensor p = point;
  std::vector<Tensor> params{p};
  return grad_check([&f, p](Tape& tape) { return f(tape, p); }, params, h);
}

}  // namespace tcam
