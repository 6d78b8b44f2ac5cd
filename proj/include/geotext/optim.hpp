#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "geotext/tensor.hpp"

namespace geotext {

enum class LrSchedule { LinearDecay };

struct OptimizerConfig {
  double initial_lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t total_steps = 1;
  LrSchedule schedule = LrSchedule::LinearDecay;

  void validate() const;
};

/// Learning rate for 1-based `step`: initial_lr * (1 - (step-1)/total_steps).
/// No warmup; the schedule starts at the peak.
double lr_at(const OptimizerConfig& cfg, std::uint64_t step);

/// First/second moment estimates, one pair per parameter tensor, in the same
/// order as the parameter list handed to adam_step.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t steps_taken = 0;

  static AdamState zeros_like(std::span<Tensor* const> params);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update at lr_at(cfg, step). Tensors whose
/// requires_grad flag is off are left untouched (frozen).
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const OptimizerConfig& cfg, std::uint64_t step);

}  // namespace geotext
