#pragma once

// Frequency-gated scoring head, recommendation loss, joint objective and
// top-n selection.

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "hekp/params.hpp"
#include "hekp/tensor.hpp"

namespace hekp::head {

using ad::Tensor;

// Registers "head." parameters. W2 is [n_items x n_items], or [n_items]
// when `diagonal_gate` is set.
void init_params(ad::ParamStore& store, std::size_t d_model, std::size_t d2, std::size_t n_items,
                 bool diagonal_gate, std::uint64_t seed);

struct GatingParams {
  Tensor w_p;  // [d_model x d2]
  Tensor w1;   // [2 d2 x 1]
  Tensor w2;   // [n x n] or [n]
  Tensor b2;   // [n]

  static GatingParams from(const ad::ParamStore& store);
};

// y_i = (W1^T (proj(v_s) ++ v'_i) (1 - beta_i alpha_i) + gamma_i alpha_i) / sqrt(2 d2)
// with alpha = W2 gamma + b2 and beta = [gamma > 0]. Returns raw scores [n].
Tensor fbg_score(const Tensor& v_s, const Tensor& items, std::span<const double> gamma,
                 const GatingParams& params);

// Ablation without gating: y_i = proj(v_s) . v'_i.
Tensor inner_product_score(const Tensor& v_s, const Tensor& items, const Tensor& w_p);

// Class-balanced binary cross-entropy on sigmoid(scores), probabilities
// clamped to [1e-7, 1 - 1e-7].
Tensor rec_loss(const Tensor& scores, const std::set<std::size_t>& positives);

struct LossWeights {
  double plm = 1.0;
  double rec = 1.0;
  double bi = 1.0;
  double ii = 1.0;

  bool operator==(const LossWeights&) const = default;
};

struct LossParts {
  Tensor plm;
  Tensor rec;
  Tensor bi;
  Tensor ii;
};

// Weighted sum of the four components. Undefined components count as zero.
// Throws DivergenceError naming the first non-finite component.
Tensor joint_loss(const LossParts& parts, const LossWeights& weights);

// Indices of the n largest scores, descending, ties by lower index.
std::vector<std::size_t> recommend_topn(std::span<const double> scores, std::size_t n,
                                        const std::set<std::size_t>& exclude = {});

}  // namespace hekp::head
