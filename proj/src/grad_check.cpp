#include "sfa/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "sfa/rng.hpp"

namespace sfa {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& inputs,
                           double step, long long coords_per_tensor, uint64_t sample_seed) {
  if (precision() != Precision::f64)
    throw std::logic_error("grad_check requires the 64-bit numeric mode");
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  for (const auto& [name, t] : inputs)
    if (!t.requires_grad())
      throw std::invalid_argument("grad_check: input '" + name + "' does not require grad");

  // One analytic pass.
  clear_tape();
  Tensor loss = f();
  if (loss.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("grad_check: non-finite loss");
  backward(loss);

  std::vector<std::vector<double>> analytic(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& t = inputs[i].second;
    if (!t.has_grad())
      throw std::runtime_error("grad_check: no gradient reached input '" + inputs[i].first + "'");
    auto g = t.grad();
    analytic[i].assign(g.begin(), g.end());
  }
  for (const auto& [name, t] : inputs) Tensor(t).clear_grad();

  auto eval_loss = [&f]() {
    NoGradGuard guard;
    return f().item();
  };

  GradCheckReport report;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const auto& name = inputs[i].first;
    Tensor t = inputs[i].second;
    const long long n = t.size();

    std::vector<long long> coords;
    if (coords_per_tensor <= 0 || coords_per_tensor >= n) {
      coords.resize(size_t(n));
      for (long long j = 0; j < n; ++j) coords[size_t(j)] = j;
    } else {
      Rng rng(hash_combine(sample_seed, hash_str(name)));
      std::unordered_set<long long> seen;
      while ((long long)coords.size() < coords_per_tensor) {
        long long j = rng.next_int(0, n - 1);
        if (seen.insert(j).second) coords.push_back(j);
      }
    }

    GradCheckEntry entry{name, 0.0, (long long)coords.size()};
    auto buf = t.raw_data();
    for (long long j : coords) {
      const double saved = buf[size_t(j)];
      buf[size_t(j)] = saved + step;
      const double up = eval_loss();
      buf[size_t(j)] = saved - step;
      const double down = eval_loss();
      buf[size_t(j)] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw std::runtime_error("grad_check: non-finite loss while perturbing '" + name + "'");
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][size_t(j)];
      if (!std::isfinite(a))
        throw std::runtime_error("grad_check: non-finite analytic gradient in '" + name + "'");
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(a - numeric) / denom);
    }
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace sfa
