#include "hekp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hekp::ad {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double tol, double h, std::size_t max_coords) {
  for (Tensor& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  backward(f());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor& x = inputs[t];
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    auto values = x.mutable_data();
    const std::size_t n = values.size();
    const std::size_t stride = (max_coords > 0 && n > max_coords) ? (n + max_coords - 1) / max_coords : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) /
                         std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      ++report.coordinates;
      if (err > report.max_rel_error || std::isnan(err)) {
        report.max_rel_error = std::isnan(err) ? INFINITY : err;
        std::ostringstream os;
        os << "input" << t << "[" << i << "] analytic=" << analytic[i] << " numeric=" << numeric;
        report.worst = os.str();
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  for (Tensor& x : inputs) x.clear_grad();
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double tol, double h) {
  Tensor leaf = x.clone(true);
  return grad_check([&] { return f(leaf); }, {leaf}, tol, h);
}

}  // namespace hekp::ad
