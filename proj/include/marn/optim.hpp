#pragma once

#include <cstdint>
#include <vector>

#include "marn/params.hpp"

namespace marn {

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  static AdamState create(const ParamStore& params, const AdamConfig& config);
};

struct StepReport {
  double grad_norm = 0.0;     // before clipping
  double clip_scale = 1.0;    // factor applied to every gradient
  double applied_norm = 0.0;  // after clipping
  std::uint64_t step = 0;
};

// L2 norm over every parameter gradient; parameters without a gradient count
// as zero.
double global_grad_norm(const ParamStore& params);

// Global-norm clip followed by one bias-corrected Adam update at learning rate
// `lr`. A non-finite gradient throws NumericError naming the parameter and
// leaves parameters and state untouched.
StepReport adam_step(ParamStore& params, AdamState& state, double lr);
inline StepReport adam_step(ParamStore& params, AdamState& state) {
  return adam_step(params, state, state.config.lr);
}

}  // namespace marn
