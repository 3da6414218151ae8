#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "marn/tensor.hpp"

namespace marn {

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-4;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  bool passed = false;
};

// Compares the analytic gradient of the scalar `loss` with respect to each
// tensor in `wrt` against central finite differences. `loss` must rebuild its
// graph from the current values of `wrt` on every call.
GradCheckResult check_gradients(std::string name, const std::function<Tensor()>& loss,
                                std::span<Tensor> wrt, const GradCheckOptions& options = {});

// The full oracle sweep: every differentiable op on three random shapes plus
// each composite block (video/query encoder, reasoning branch, association
// module, grounding head) on tiny instances.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed,
                                                 const GradCheckOptions& options = {});

}  // namespace marn
