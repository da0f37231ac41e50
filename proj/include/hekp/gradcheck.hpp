#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hekp/tensor.hpp"

namespace hekp::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = true;
  std::string worst;  // "input[k] analytic=.. numeric=.."
};

// Compares analytic gradients of the scalar `f()` with respect to `inputs`
// against central differences. The error of one coordinate is
// |a - n| / max(1, |a|, |n|). `max_coords` > 0 caps the number of coordinates
// probed per input (evenly strided).
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double tol, double h = 1e-5, std::size_t max_coords = 0);

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double tol, double h = 1e-5);

}  // namespace hekp::ad
