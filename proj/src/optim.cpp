#include "marn/optim.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace marn {

AdamState AdamState::create(const ParamStore& params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params.items()) {
    s.first_moment.emplace_back(p.tensor.numel(), 0.0);
    s.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

double global_grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (const auto& p : params.items()) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

StepReport adam_step(ParamStore& params, AdamState& state, double lr) {
  const auto items = params.items();
  if (state.first_moment.size() != items.size()) {
    throw std::invalid_argument("adam_step: optimizer state has " +
                                std::to_string(state.first_moment.size()) +
                                " slots for " + std::to_string(items.size()) + " parameters");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& t = items[i].tensor;
    if (state.first_moment[i].size() != t.numel()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + items[i].name);
    }
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in parameter " + items[i].name);
      }
    }
  }

  StepReport report;
  report.grad_norm = global_grad_norm(params);
  const double clip = state.config.clip_norm;
  if (clip > 0.0 && report.grad_norm > clip) report.clip_scale = clip / report.grad_norm;
  report.applied_norm = report.grad_norm * report.clip_scale;
  if (clip > 0.0 && report.applied_norm > clip * (1.0 + 1e-12)) {
    throw std::logic_error("adam_step: clipped gradient norm exceeds the configured maximum");
  }

  state.step += 1;
  report.step = state.step;
  const double b1 = state.config.beta1, b2 = state.config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < items.size(); ++i) {
    auto t = items[i].tensor;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    auto values = t.mutable_values();
    const bool has = t.has_grad();
    const auto grad = has ? t.grad() : std::span<const double>{};
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has ? grad[j] * report.clip_scale : 0.0;
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + state.config.eps);
    }
  }
  return report;
}

}  // namespace marn
