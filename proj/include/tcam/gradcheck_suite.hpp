#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tcam/gradcheck.hpp"
#include "tcam/losses.hpp"
#include "tcam/ops.hpp"
#include "tcam/rng.hpp"

namespace tcam {

/// A named scalar function together with the tensors it is differentiated by.
struct GradCase {
  std::string name;
  ScalarFunction f;
  std::vector<Tensor> params;
  std::size_t max_coords = 0;
};

inline Tensor seeded_uniform(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  Rng rng(mix_seed(seed, 0x6C));
  for (auto& v : t.data_mut()) v = uniform(rng, lo, hi);
  return t;
}

/// One case per differentiable operation, drawn at `seed`.
inline std::vector<GradCase> op_grad_cases(std::uint64_t seed) {
  std::vector<GradCase> cases;
  auto proj = [seed](std::size_t n) { return seeded_uniform({n}, seed + 999); };
  {
    auto x = seeded_uniform({2, 6, 5}, seed), k = seeded_uniform({3, 2, 3, 3}, seed + 1),
         b = seeded_uniform({3}, seed + 2);
    auto w = proj(3 * 6 * 3);
    cases.push_back({"conv2d",
                     [=](Tape& t) {
                       auto y = conv2d(t, x, k, b, {1, 2}, {1, 1});
                       return sum(t, mul(t, reshape(t, y, {y.size()}), w));
                     },
                     {x, k, b}});
  }
  {
    auto x = seeded_uniform({3, 9}, seed), k = seeded_uniform({2, 3, 3}, seed + 1), b = seeded_uniform({2}, seed + 2);
    auto w = proj(10);
    cases.push_back({"conv1d",
                     [=](Tape& t) { return sum(t, mul(t, reshape(t, conv1d(t, x, k, b, 2, 1), {10}), w)); },
                     {x, k, b}});
  }
  {
    auto x = seeded_uniform({2, 4}, seed), k = seeded_uniform({2, 3, 8}, seed + 1);
    auto w = proj(60);
    cases.push_back({"transposed_conv1d",
                     [=](Tape& t) { return sum(t, mul(t, reshape(t, transposed_conv1d(t, x, k, 4), {60}), w)); },
                     {x, k}});
  }
  {
    auto x = seeded_uniform({2, 5, 6}, seed);
    auto w = proj(12);
    cases.push_back({"maxpool2d",
                     [=](Tape& t) { return sum(t, mul(t, reshape(t, maxpool2d(t, x, {2, 2}, {2, 2}), {12}), w)); },
                     {x}});
    cases.push_back({"maxpool1d",
                     [=](Tape& t) {
                       auto z = maxpool1d(t, x, 3, 2);
                       return sum(t, mul(t, z, z));
                     },
                     {x}});
  }
  {
    auto x = seeded_uniform({7}, seed, -3, 3);
    auto w = proj(7);
    cases.push_back({"tanh", [=](Tape& t) { return sum(t, mul(t, tcam::tanh(t, x), w)); }, {x}});
    cases.push_back({"sigmoid", [=](Tape& t) { return sum(t, mul(t, sigmoid(t, x), w)); }, {x}});
    cases.push_back({"relu", [=](Tape& t) { return sum(t, mul(t, relu(t, x), w)); }, {x}});
    cases.push_back({"softmax", [=](Tape& t) { return sum(t, mul(t, softmax(t, x), w)); }, {x}});
    cases.push_back({"cross_entropy", [=](Tape& t) { return cross_entropy(t, x, seed % 7); }, {x}});
    cases.push_back({"l2_normalize", [=](Tape& t) { return sum(t, mul(t, l2_normalize(t, x), w)); }, {x}});
    cases.push_back({"arithmetic",
                     [=](Tape& t) {
                       auto m = mean(t, mul(t, x, w));
                       return add(t, add_scalar(t, m, 0.5), scale(t, sum(t, sub(t, x, w)), 0.3));
                     },
                     {x, w}});
  }
  {
    auto x = seeded_uniform({4, 3}, seed), v = seeded_uniform({3}, seed + 5);
    auto w = seeded_uniform({2, 3}, seed + 1), b = seeded_uniform({2}, seed + 2);
    auto p = proj(8);
    cases.push_back({"linear",
                     [=](Tape& t) {
                       auto batched = reshape(t, linear(t, x, w, b), {8});
                       return add(t, sum(t, mul(t, batched, p)), sum(t, linear(t, v, w, b)));
                     },
                     {x, v, w, b}});
  }
  {
    auto a = seeded_uniform({6}, seed), b = seeded_uniform({6}, seed + 1);
    cases.push_back({"euclidean_distance", [=](Tape& t) { return euclidean_distance(t, a, b); }, {a, b}});
  }
  {
    auto z = seeded_uniform({4, 5}, seed), l = seeded_uniform({4}, seed + 1, 0, 1);
    auto p = proj(5);
    cases.push_back({"weighted_row_sum",
                     [=](Tape& t) { return sum(t, mul(t, weighted_row_sum(t, z, l), p)); }, {z, l}});
    auto q = proj(45);
    cases.push_back({"edge_pad",
                     [=](Tape& t) {
                       auto cut = slice(t, edge_pad(t, transpose(t, z), 1, 3, 2), 1, 0, 9);
                       return sum(t, mul(t, reshape(t, cut, {45}), q));
                     },
                     {z}});
  }
  return cases;
}

/// combined_loss end to end on a toy problem: four 8x8 five-channel frames
/// per video and three identities. Positive and negative pairs.
inline std::vector<GradCase> pipeline_grad_cases(std::uint64_t seed) {
  CnnConfig cnn;
  cnn.height = 8;
  cnn.width = 8;
  auto model = init_model(seed, 3, cnn);
  for (auto& nt : model.named()) {
    if (nt.name.find("bias") == std::string::npos) continue;
    auto b = seeded_uniform(nt.tensor.shape(), seed + nt.tensor.size(), -0.05, 0.05);
    std::copy(b.data().begin(), b.data().end(), nt.tensor.data_mut().begin());
  }
  auto v1 = seeded_uniform({4, 5, 8, 8}, seed + 31);
  auto v2 = seeded_uniform({4, 5, 8, 8}, seed + 32);
  std::vector<GradCase> cases;
  for (bool positive : {true, false}) {
    cases.push_back({positive ? "combined_loss/positive" : "combined_loss/negative",
                     [=](Tape& t) { return combined_loss(t, model, v1, 1, v2, positive ? 1 : 2, 2.0).total; },
                     model.parameters(), 24});
  }
  return cases;
}

struct GradCaseResult {
  std::string name;
  double max_error = 0;
};

/// Runs every case whose name starts with `filter` (empty: all) over
/// `seeds` op seeds plus the pipeline cases.
inline std::vector<GradCaseResult> run_grad_suite(const std::string& filter = {}, std::uint64_t seeds = 10) {
  std::vector<GradCaseResult> out;
  auto run = [&](GradCase& c, std::uint64_t seed) {
    if (!filter.empty() && c.name.rfind(filter, 0) != 0) return;
    const double err = grad_check(c.f, c.params, 1e-5, c.max_coords, seed + 1);
    auto it = std::find_if(out.begin(), out.end(), [&](const GradCaseResult& r) { return r.name == c.name; });
    if (it == out.end()) {
      out.push_back({c.name, err});
    } else {
      it->max_error = std::max(it->max_error, err);
    }
  };
  for (std::uint64_t s = 0; s < seeds; ++s) {
    for (auto& c : op_grad_cases(s)) run(c, s);
  }
  for (auto& c : pipeline_grad_cases(4)) run(c, 4);
  return out;
}

}  // namespace tcam
