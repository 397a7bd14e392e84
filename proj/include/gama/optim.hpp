#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gama/tensor.hpp"

namespace gama {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are bound to the parameter list
/// given at construction; a parameter without a gradient counts as zero.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamOptions opts = {}) : params_(std::move(params)), opts_(opts) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), T(0));
      v_.emplace_back(p.numel(), T(0));
    }
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (static_cast<std::size_t>(p.numel()) != m_[i].size())
        throw Error("adam: parameter " + std::to_string(i) + " changed shape");
      if (!p.has_grad()) continue;
      ensure_finite(p, "adam: parameter " + std::to_string(i));
      auto g = p.grad();
      auto w = p.data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g[j];
        m[j] = static_cast<T>(opts_.beta1 * m[j] + (1.0 - opts_.beta1) * gj);
        v[j] = static_cast<T>(opts_.beta2 * v[j] + (1.0 - opts_.beta2) * gj * gj);
        const double mhat = m[j] / bc1, vhat = v[j] / bc2;
        w[j] = static_cast<T>(w[j] - opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps));
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  long step_count() const { return step_; }
  const AdamOptions& options() const { return opts_; }
  void set_lr(double lr) { opts_.lr = lr; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  AdamOptions opts_;
  long step_ = 0;
};

}  // namespace gama
