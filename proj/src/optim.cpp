#include "geotext/optim.hpp"

#include <cmath>
#include <string>

#include "geotext/error.hpp"

namespace geotext {

void OptimizerConfig::validate() const {
  require(initial_lr >= 0.0 && std::isfinite(initial_lr), "optimizer: initial_lr must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0, "optimizer: beta1 must be in [0,1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "optimizer: beta2 must be in [0,1)");
  require(eps > 0.0, "optimizer: eps must be > 0");
  require(total_steps >= 1, "optimizer: total_steps must be >= 1");
}

double lr_at(const OptimizerConfig& cfg, std::uint64_t step) {
  require(step >= 1 && step <= cfg.total_steps,
          "lr_at: step " + std::to_string(step) + " outside [1, " + std::to_string(cfg.total_steps) + "]");
  return cfg.initial_lr *
         (1.0 - static_cast<double>(step - 1) / static_cast<double>(cfg.total_steps));
}

AdamState AdamState::zeros_like(std::span<Tensor* const> params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const OptimizerConfig& cfg, std::uint64_t step) {
  require(step >= 1, "adam_step: step index must be >= 1");
  require(params.size() == grads.size() && params.size() == state.m.size() && params.size() == state.v.size(),
          "adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->shape() == grads[i].shape() && params[i]->shape() == state.m[i].shape() &&
                params[i]->shape() == state.v[i].shape(),
            "adam_step: shape mismatch at parameter " + std::to_string(i));
  }
  const double lr = lr_at(cfg, step);
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.requires_grad()) continue;
    auto pd = p.data();
    const auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < pd.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      pd[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  state.steps_taken = step;
}

}  // namespace geotext
