#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "featsel/tape.hpp"

namespace featsel {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a ParameterStore; moment buffers are kept
/// in store order.
class Adam {
 public:
  Adam(const ParameterStore& store, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(store.size());
    v_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      m_.emplace_back(store[i].value.shape);
      v_.emplace_back(store[i].value.shape);
    }
  }

  std::int64_t step_count() const { return t_; }

  void step(ParameterStore& store) {
    if (store.size() != m_.size())
      throw std::invalid_argument("adam: store size changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      Parameter& p = store[i];
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t j = 0; j < p.value.numel(); ++j) {
        const double g = p.grad.data[j];
        if (!std::isfinite(g))
          throw std::runtime_error("adam: non-finite gradient in " + p.name);
        m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * g;
        v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m.data[j] / bc1;
        const double vhat = v.data[j] / bc2;
        p.value.data[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Plain SGD step, used for the gate weights.
inline void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
                     double lr) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw std::runtime_error("sgd: non-finite gradient at index " +
                               std::to_string(i));
    params[i] -= lr * grads[i];
  }
}

}  // namespace featsel
