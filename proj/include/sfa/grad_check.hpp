#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sfa/tensor.hpp"

namespace sfa {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  long long coords_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool pass(double tol) const { return worst < tol; }
};

// Compares the analytic gradient of `f` (a scalar-valued forward pass re-run
// from the given leaf inputs) against central differences. The relative error
// for one coordinate is |a - n| / max(1, |a|, |n|). With coords_per_tensor 0
// every coordinate is checked, otherwise a deterministic sample of that many
// coordinates per tensor. Requires the 64-bit numeric mode; non-finite values
// raise an error naming the offending parameter.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& inputs,
                           double step = 1e-5,
                           long long coords_per_tensor = 0,
                           uint64_t sample_seed = 0);

}  // namespace sfa
