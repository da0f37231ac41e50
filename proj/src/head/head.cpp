#include "hekp/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hekp/error.hpp"
#include "hekp/seed.hpp"

namespace hekp::head {

using namespace ad;

void init_params(ParamStore& store, std::size_t d_model, std::size_t d2, std::size_t n_items,
                 bool diagonal_gate, std::uint64_t seed) {
  std::mt19937_64 rng(sub_seed(seed, "head.init"));
  store.add("head.w_p", Tensor::randn({d_model, d2}, 1.0 / std::sqrt(static_cast<double>(d_model)), rng));
  store.add("head.w1", Tensor::randn({2 * d2, 1}, 1.0 / std::sqrt(2.0 * static_cast<double>(d2)), rng));
  store.add("head.w2", diagonal_gate ? Tensor::randn({n_items}, 0.01, rng)
                                     : Tensor::randn({n_items, n_items}, 0.01, rng));
  store.add("head.b2", Tensor::zeros({n_items}));
}

GatingParams GatingParams::from(const ParamStore& store) {
  return {store.at("head.w_p"), store.at("head.w1"), store.at("head.w2"), store.at("head.b2")};
}

Tensor fbg_score(const Tensor& v_s, const Tensor& items, std::span<const double> gamma,
                 const GatingParams& params) {
  const std::size_t n = items.rows(), d2 = items.cols();
  if (gamma.size() != n) throw DimensionError("fbg_score: frequency vector length differs from item count");
  const Tensor proj = matmul(reshape(v_s, {1, v_s.numel()}), params.w_p);  // [1 x d2]
  if (proj.cols() != d2) throw DimensionError("fbg_score: projection width differs from item embeddings");
  const std::vector<std::size_t> repeat(n, 0);
  const Tensor pairs = concat({embedding_lookup(proj, repeat), items}, 1);  // [n x 2 d2]
  const Tensor content = reshape(matmul(pairs, params.w1), {n});

  const Tensor g = Tensor::from({n}, std::vector<double>(gamma.begin(), gamma.end()));
  std::vector<double> beta_v(n);
  for (std::size_t i = 0; i < n; ++i) beta_v[i] = gamma[i] > 0.0 ? 1.0 : 0.0;
  const Tensor beta = Tensor::from({n}, std::move(beta_v));
  const Tensor alpha = params.w2.rank() == 2
                           ? reshape(matmul(params.w2, reshape(g, {n, 1})), {n}) + params.b2
                           : mul(params.w2, g) + params.b2;
  const Tensor gate = add_scalar(scalar_mul(mul(beta, alpha), -1.0), 1.0);
  const double scale = 1.0 / std::sqrt(2.0 * static_cast<double>(d2));
  return scalar_mul(mul(content, gate) + mul(g, alpha), scale);
}

Tensor inner_product_score(const Tensor& v_s, const Tensor& items, const Tensor& w_p) {
  const Tensor proj = matmul(reshape(v_s, {1, v_s.numel()}), w_p);
  return reshape(matmul(items, transpose(proj)), {items.rows()});
}

Tensor rec_loss(const Tensor& scores, const std::set<std::size_t>& positives) {
  const std::size_t n = scores.numel();
  if (positives.empty()) throw Error("rec_loss: empty positive set");
  if (*positives.rbegin() >= n) throw DimensionError("rec_loss: positive item index out of range");
  std::vector<double> wp(n, 0.0), wn(n, 0.0);
  const double n_neg = static_cast<double>(n - positives.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (positives.count(i)) wp[i] = 1.0 / static_cast<double>(positives.size());
    else wn[i] = 1.0 / n_neg;
  }
  const Tensor p = clamp(sigmoid(scores), 1e-7, 1.0 - 1e-7);
  const Tensor pos = sum_all(mul(log(p), Tensor::from({n}, std::move(wp))));
  if (n_neg == 0.0) return scalar_mul(pos, -1.0);
  const Tensor neg = sum_all(mul(log(add_scalar(scalar_mul(p, -1.0), 1.0)), Tensor::from({n}, std::move(wn))));
  return scalar_mul(pos + neg, -1.0);
}

Tensor joint_loss(const LossParts& parts, const LossWeights& weights) {
  const std::pair<const char*, std::pair<const Tensor*, double>> terms[] = {
      {"plm", {&parts.plm, weights.plm}},
      {"rec", {&parts.rec, weights.rec}},
      {"bi", {&parts.bi, weights.bi}},
      {"ii", {&parts.ii, weights.ii}}};
  Tensor total = Tensor::scalar(0.0);
  for (const auto& [name, term] : terms) {
    const auto [t, w] = term;
    if (!t->defined()) continue;
    if (!std::isfinite(t->item())) throw DivergenceError(name, "loss is " + std::to_string(t->item()));
    if (w != 0.0) total = total + scalar_mul(*t, w);
  }
  return total;
}

std::vector<std::size_t> recommend_topn(std::span<const double> scores, std::size_t n,
                                        const std::set<std::size_t>& exclude) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!exclude.count(i)) candidates.push_back(i);
  if (n < 1 || n > candidates.size())
    throw Error("recommend_topn: n=" + std::to_string(n) + " but only " +
                std::to_string(candidates.size()) + " candidates");
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                    candidates.end(), [&](std::size_t a, std::size_t b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  candidates.resize(n);
  return candidates;
}

}  // namespace hekp::head
