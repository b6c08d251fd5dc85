#include "summ/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace summ {

std::vector<double> finite_difference_gradient(const ScalarFn& f, std::span<const double> theta, double step) {
  if (!(step > 0)) throw std::invalid_argument("finite_difference_gradient: step must be positive");
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NonFiniteError("non-finite function value at coordinate " + std::to_string(i), i);
    grad[i] = (up - down) / (2 * step);
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size())
    throw std::invalid_argument("compare_gradients: length mismatch " + std::to_string(analytic.size()) + " vs " +
                                std::to_string(numeric.size()));
  GradCheckReport r;
  r.checked = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double e = relative_error(analytic[i], numeric[i], floor);
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace summ
