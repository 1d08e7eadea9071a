#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hsiband {

// One block of variables to probe: the live values the loss reads, and the
// analytic gradient computed for them at the unperturbed point.
template <typename T>
struct GradProbe {
  std::span<T> values;
  std::span<const T> analytic;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(1e-8, |a| + |n|)
inline double gradient_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Central differences (f(x+eps) - f(x-eps)) / (2 eps) for every probed value,
// compared against the analytic gradient. Each value is restored after it is
// probed. Inputs sitting on a pooling tie or the ELU kink are the caller's
// responsibility to avoid: the check is meaningless there.
template <typename T>
GradCheckResult finite_diff_check(std::span<const GradProbe<T>> probes, const std::function<T()>& loss,
                                  T eps) {
  GradCheckResult result;
  for (const auto& probe : probes) {
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
      const T saved = probe.values[i];
      probe.values[i] = saved + eps;
      const T plus = loss();
      probe.values[i] = saved - eps;
      const T minus = loss();
      probe.values[i] = saved;
      const double numeric = (static_cast<double>(plus) - static_cast<double>(minus)) / (2.0 * eps);
      result.max_rel_error =
          std::max(result.max_rel_error, gradient_relative_error(probe.analytic[i], numeric));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace hsiband
