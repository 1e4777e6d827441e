#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "core/error.hpp"

namespace df {

// Central-difference gradient of a deterministic scalar function. Kept
// deliberately independent of the tape so it can audit backward().
inline std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double eps) {
  require(eps > 0.0, "finite_diff_grad: epsilon must be positive");
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + eps;
    const double fp = f(x);
    x[i] = x0 - eps;
    const double fm = f(x);
    x[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      fail_contract("finite_diff_grad: function value is not finite");
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace df
