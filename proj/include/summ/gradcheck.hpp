#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "summ/tensor.hpp"

namespace summ {

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t coordinate)
      : std::runtime_error(what), coordinate_(coordinate) {}
  std::size_t coordinate() const { return coordinate_; }

 private:
  std::size_t coordinate_;
};

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
std::vector<double> finite_difference_gradient(const ScalarFn& f, std::span<const double> theta, double step);

// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-8);

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

GradCheckReport compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double floor = 1e-8);

}  // namespace summ
