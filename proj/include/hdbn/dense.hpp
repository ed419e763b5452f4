#pragma once

// Fully connected layers over column batches (one record per column) with
// hand-written reverse passes, plus the parameter views the optimizers and
// gradient checks walk over.

#include "hdbn/numerics.hpp"

#include <span>
#include <vector>

namespace hdbn {

enum class Activation { kIdentity, kRelu, kSoftplus };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
  }
  return "?";
}

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
  Activation activation = Activation::kIdentity;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  static DenseLayer zeros(Eigen::Index in, Eigen::Index out, Activation act) {
    return {Mat::Zero(out, in), Vec::Zero(out), act};
  }

  // Uniform(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
  static DenseLayer fan_in_uniform(Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
    DenseLayer layer = zeros(in, out, act);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = rng.uniform(-bound, bound);
    }
    return layer;
  }
};

struct DenseGrad {
  Mat weight;
  Vec bias;

  static DenseGrad like(const DenseLayer& layer) {
    return {Mat::Zero(layer.weight.rows(), layer.weight.cols()), Vec::Zero(layer.bias.size())};
  }
};

struct DenseTape {
  Mat input;
  Mat pre;
};

inline Mat apply_activation(Activation act, const Mat& pre) {
  switch (act) {
    case Activation::kIdentity: return pre;
    case Activation::kRelu: return pre.cwiseMax(0.0);
    case Activation::kSoftplus: return pre.unaryExpr([](double x) { return softplus(x); });
  }
  return pre;
}

inline Mat activation_backward(Activation act, const Mat& pre, const Mat& grad_out) {
  switch (act) {
    case Activation::kIdentity: return grad_out;
    case Activation::kRelu:
      return grad_out.cwiseProduct(pre.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; }));
    case Activation::kSoftplus:
      return grad_out.cwiseProduct(pre.unaryExpr([](double x) { return sigmoid(x); }));
  }
  return grad_out;
}

inline Mat dense_forward(const DenseLayer& layer, const Mat& x, DenseTape* tape = nullptr) {
  if (x.rows() != layer.in_dim()) {
    throw std::invalid_argument("dense_forward: input dimension " + std::to_string(x.rows()) +
                                " != " + std::to_string(layer.in_dim()));
  }
  Mat pre = layer.weight * x;
  pre.colwise() += layer.bias;
  Mat out = apply_activation(layer.activation, pre);
  if (tape != nullptr) {
    tape->input = x;
    tape->pre = std::move(pre);
  }
  return out;
}

// Accumulates parameter gradients into `grad` (if non-null) and returns the
// gradient with respect to the layer input.
inline Mat dense_backward(const DenseLayer& layer, const DenseTape& tape, const Mat& grad_out,
                          DenseGrad* grad) {
  const Mat grad_pre = activation_backward(layer.activation, tape.pre, grad_out);
  if (grad != nullptr) {
    grad->weight.noalias() += grad_pre * tape.input.transpose();
    grad->bias += grad_pre.rowwise().sum();
  }
  return layer.weight.transpose() * grad_pre;
}

struct Mlp {
  std::vector<DenseLayer> layers;

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }
};

using MlpTape = std::vector<DenseTape>;

struct MlpGrad {
  std::vector<DenseGrad> layers;

  static MlpGrad like(const Mlp& mlp) {
    MlpGrad g;
    for (const auto& l : mlp.layers) g.layers.push_back(DenseGrad::like(l));
    return g;
  }
};

inline Mat mlp_forward(const Mlp& mlp, const Mat& x, MlpTape* tape = nullptr) {
  if (tape != nullptr) tape->assign(mlp.layers.size(), DenseTape{});
  Mat h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    h = dense_forward(mlp.layers[i], h, tape != nullptr ? &(*tape)[i] : nullptr);
  }
  return h;
}

inline Mat mlp_backward(const Mlp& mlp, const MlpTape& tape, const Mat& grad_out, MlpGrad* grad) {
  Mat g = grad_out;
  for (std::size_t i = mlp.layers.size(); i-- > 0;) {
    g = dense_backward(mlp.layers[i], tape[i], g, grad != nullptr ? &grad->layers[i] : nullptr);
  }
  return g;
}

// Flat view over a set of contiguous parameter buffers.
class ParamView {
 public:
  void add(Mat& m) { blocks_.emplace_back(m.data(), static_cast<std::size_t>(m.size())); }
  void add(Vec& v) { blocks_.emplace_back(v.data(), static_cast<std::size_t>(v.size())); }
  void add(DenseLayer& l) {
    add(l.weight);
    add(l.bias);
  }
  void add(DenseGrad& g) {
    add(g.weight);
    add(g.bias);
  }
  void add(Mlp& m) {
    for (auto& l : m.layers) add(l);
  }
  void add(MlpGrad& g) {
    for (auto& l : g.layers) add(l);
  }
  void append(const ParamView& other) {
    blocks_.insert(blocks_.end(), other.blocks_.begin(), other.blocks_.end());
  }

  const std::vector<std::span<double>>& blocks() const { return blocks_; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }

  std::vector<double*> pointers() const {
    std::vector<double*> out;
    out.reserve(size());
    for (const auto& b : blocks_) {
      for (auto& x : b) out.push_back(&x);
    }
    return out;
  }

  std::vector<double> values() const {
    std::vector<double> out;
    out.reserve(size());
    for (const auto& b : blocks_) out.insert(out.end(), b.begin(), b.end());
    return out;
  }

  void fill(double value) const {
    for (const auto& b : blocks_) std::fill(b.begin(), b.end(), value);
  }

  bool all_finite() const {
    for (const auto& b : blocks_) {
      for (double x : b) {
        if (!std::isfinite(x)) return false;
      }
    }
    return true;
  }

 private:
  std::vector<std::span<double>> blocks_;
};

}  // namespace hdbn
