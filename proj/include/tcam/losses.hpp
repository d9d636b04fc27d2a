#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcam/attention.hpp"
#include "tcam/frame_cnn.hpp"
#include "tcam/ops.hpp"
#include "tcam/rng.hpp"

namespace tcam {

/// Linear identity classifier on the video descriptor, shared by both
/// Siamese branches.
struct IdentityClassifier {
  Tensor weight;  // [K, D]
  Tensor bias;    // [K]

  std::size_t num_classes() const { return weight.dim(0); }
};

inline IdentityClassifier init_classifier(std::uint64_t seed, std::size_t num_classes,
                                          std::size_t dim = 128) {
  if (num_classes < 2) throw std::invalid_argument("identity classifier needs at least 2 classes");
  Rng rng(mix_seed(seed, 0x1D));
  IdentityClassifier clf{Tensor::zeros({num_classes, dim}, true), Tensor::zeros({num_classes}, true)};
  init_uniform_fan_in(clf.weight, dim, rng);
  return clf;
}

/// Everything that is trained.
struct Model {
  CnnParams cnn;
  AttentionParams attention;
  IdentityClassifier classifier;

  std::vector<NamedTensor> named() const {
    auto out = cnn.named();
    for (auto& nt : attention.named()) out.push_back(nt);
    out.push_back({"classifier.weight", classifier.weight});
    out.push_back({"classifier.bias", classifier.bias});
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& nt : named()) out.push_back(nt.tensor);
    return out;
  }
};

inline Model init_model(std::uint64_t seed, std::size_t num_identities, const CnnConfig& cnn = {},
                        AttentionConfig attention = {}) {
  attention.feature_dim = cnn.feature_dim;
  return {init_cnn(seed, cnn), init_attention(seed, attention),
          init_classifier(seed, num_identities, cnn.feature_dim)};
}

/// Squared hinge: 0.5 * ||f1 - f2||^2 for the same identity,
/// 0.5 * max(0, m - ||f1 - f2||)^2 otherwise.
inline Tensor hinge_loss(Tape& tape, const Tensor& f1, const Tensor& f2, bool same_identity,
                         double margin) {
  if (!(margin > 0.0)) throw std::invalid_argument("hinge_loss: margin must be positive");
  if (same_identity) {
    Tensor diff = sub(tape, f1, f2);
    return scale(tape, sum(tape, mul(tape, diff, diff)), 0.5);
  }
  Tensor gap = relu(tape, add_scalar(tape, scale(tape, euclidean_distance(tape, f1, f2), -1.0), margin));
  return scale(tape, mul(tape, gap, gap), 0.5);
}

/// Softmax cross-entropy of the classifier's prediction for descriptor `f`.
inline Tensor identity_loss(Tape& tape, const Tensor& f, std::size_t label,
                            const IdentityClassifier& clf) {
  if (label >= clf.num_classes()) {
    throw std::out_of_range("identity label " + std::to_string(label) + " out of range for " +
                            std::to_string(clf.num_classes()) + " identities");
  }
  return cross_entropy(tape, linear(tape, f, clf.weight, clf.bias), label);
}

struct LossBreakdown {
  Tensor hinge;
  Tensor id1;
  Tensor id2;
  Tensor total;  // id1 + hinge + id2
  double margin = 2.0;
  VideoDescriptor branch1;
  VideoDescriptor branch2;
};

/// Both branches, the hinge term and both identity terms on one tape.
inline LossBreakdown combined_loss(Tape& tape, const Model& model, const Tensor& video1,
                                   std::size_t label1, const Tensor& video2, std::size_t label2,
                                   double margin) {
  LossBreakdown out;
  out.margin = margin;
  out.branch1 = video_descriptor(tape, model.cnn, model.attention, video1);
  out.branch2 = video_descriptor(tape, model.cnn, model.attention, video2);
  out.hinge = hinge_loss(tape, out.branch1.f, out.branch2.f, label1 == label2, margin);
  out.id1 = identity_loss(tape, out.branch1.f, label1, model.classifier);
  out.id2 = identity_loss(tape, out.branch2.f, label2, model.classifier);
  out.total = add(tape, add(tape, out.id1, out.hinge), out.id2);
  return out;
}

}  // namespace tcam
