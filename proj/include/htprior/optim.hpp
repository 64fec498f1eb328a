#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "htprior/autograd.hpp"

namespace htprior {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay. The step counter is shared by every
// parameter handed to step().
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  std::uint64_t steps() const { return step_; }
  void set_steps(std::uint64_t s) { step_ = s; }
  const AdamConfig& config() const { return cfg_; }

  // Consumes the gradients: afterwards every parameter's grad is cleared.
  template <typename T>
  void step(std::vector<Parameter<T>*> params, double lr) {
    bool any = false;
    for (const auto* p : params) any = any || p->value.has_grad();
    if (!any) throw UsageError("adam_step: no gradients populated, run backward first");

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto* p : params) {
      if (!p->value.has_grad()) continue;
      auto w = p->value.data();
      auto g = p->value.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double m = cfg_.beta1 * static_cast<double>(p->adam_m[i]) + (1.0 - cfg_.beta1) * gi;
        const double v = cfg_.beta2 * static_cast<double>(p->adam_v[i]) + (1.0 - cfg_.beta2) * gi * gi;
        p->adam_m[i] = static_cast<T>(m);
        p->adam_v[i] = static_cast<T>(v);
        const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.epsilon) +
                              cfg_.weight_decay * static_cast<double>(w[i]);
        if (lr != 0.0) w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * update);
      }
      p->value.clear_grad();
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
};

template <typename T>
void adam_step(Adam& opt, std::vector<Parameter<T>*> params, double lr) {
  opt.step(std::move(params), lr);
}

}  // namespace htprior
