#include "marn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace marn {

GradCheckResult check_gradients(std::string name, const std::function<Tensor()>& loss,
                                std::span<Tensor> wrt, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = std::move(name);

  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : wrt) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  NoGradGuard no_grad;
  for (std::size_t w = 0; w < wrt.size(); ++w) {
    auto values = wrt[w].mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + options.eps;
      const double up = loss().item();
      values[j] = saved - options.eps;
      const double down = loss().item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[w][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double err = std::abs(a - numeric) / denom;
      if (!(err <= result.max_rel_error)) result.max_rel_error = std::isnan(err) ? INFINITY : err;
      ++result.entries;
    }
  }
  result.passed = result.max_rel_error <= options.tolerance;
  return result;
}

}  // namespace marn
