#pragma once

#include "hdbn/dense.hpp"

#include <string>

namespace hdbn {

enum class OptimizerKind { kSgd, kMomentum, kAdam };

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd|momentum|adam)");
}

inline const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

// First-order optimizer over a ParamView. The gradient view must have the
// same block layout as the parameter view on every call.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(const ParamView& params, const ParamView& grads) {
    const auto& pb = params.blocks();
    const auto& gb = grads.blocks();
    if (pb.size() != gb.size()) throw std::logic_error("Optimizer: block layout mismatch");
    if (kind_ != OptimizerKind::kSgd && first_.empty()) {
      first_.assign(params.size(), 0.0);
      if (kind_ == OptimizerKind::kAdam) second_.assign(params.size(), 0.0);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t k = 0;
    for (std::size_t b = 0; b < pb.size(); ++b) {
      if (pb[b].size() != gb[b].size()) throw std::logic_error("Optimizer: block size mismatch");
      for (std::size_t i = 0; i < pb[b].size(); ++i, ++k) {
        const double g = gb[b][i];
        switch (kind_) {
          case OptimizerKind::kSgd:
            pb[b][i] -= lr_ * g;
            break;
          case OptimizerKind::kMomentum:
            first_[k] = momentum_ * first_[k] + g;
            pb[b][i] -= lr_ * first_[k];
            break;
          case OptimizerKind::kAdam: {
            first_[k] = beta1_ * first_[k] + (1.0 - beta1_) * g;
            second_[k] = beta2_ * second_[k] + (1.0 - beta2_) * g * g;
            const double m_hat = first_[k] / bc1;
            const double v_hat = second_[k] / bc2;
            pb[b][i] -= lr_ * m_hat / (std::sqrt(v_hat) + adam_eps_);
            break;
          }
        }
      }
    }
  }

  OptimizerKind kind() const { return kind_; }
  double lr() const { return lr_; }

 private:
  OptimizerKind kind_;
  double lr_;
  double momentum_ = 0.9;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double adam_eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<double> first_;
  std::vector<double> second_;
};

}  // namespace hdbn
