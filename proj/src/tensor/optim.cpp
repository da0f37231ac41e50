#include "hekp/optim.hpp"

#include <cmath>

#include "hekp/error.hpp"

namespace hekp::ad {

void AdamW::add_group(std::vector<Tensor> params, const AdamWOptions& options) {
  Group g;
  g.options = options;
  for (const Tensor& p : params) {
    g.first.emplace_back(p.numel(), 0.0);
    g.second.emplace_back(p.numel(), 0.0);
  }
  g.params = std::move(params);
  groups_.push_back(std::move(g));
}

void AdamW::step() {
  for (const Group& g : groups_)
    for (const Tensor& p : g.params)
      if (!p.has_grad()) throw Error("AdamW::step: parameter without gradient");

  ++step_;
  for (Group& g : groups_) {
    const AdamWOptions& o = g.options;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < g.params.size(); ++k) {
      Tensor& p = g.params[k];
      auto w = p.mutable_data();
      auto grad = p.mutable_grad();
      auto& m = g.first[k];
      auto& v = g.second[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grad[i];
        v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        w[i] -= o.lr * o.weight_decay * w[i];
        w[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
        grad[i] = 0.0;
      }
    }
  }
}

}  // namespace hekp::ad
