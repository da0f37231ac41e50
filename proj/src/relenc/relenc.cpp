#include "hekp/relenc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "hekp/error.hpp"
#include "hekp/seed.hpp"

namespace hekp::relenc {

using namespace ad;

BipartiteGraph build_bipartite(const std::vector<Basket>& baskets, std::size_t n_items) {
  BipartiteGraph g;
  g.n_baskets = baskets.size();
  g.n_items = n_items;
  g.basket_degree.assign(g.n_baskets, 0);
  g.item_degree.assign(n_items, 0);
  for (std::size_t b = 0; b < baskets.size(); ++b) {
    std::set<ItemIndex> items(baskets[b].begin(), baskets[b].end());
    for (ItemIndex i : items) {
      if (i >= n_items) throw DataError("build_bipartite: item index out of range");
      g.edges.emplace_back(b, i);
      ++g.basket_degree[b];
      ++g.item_degree[i];
    }
  }
  return g;
}

BipartiteGraph build_bipartite(const corpus::BasketDataset& dataset) {
  std::vector<Basket> baskets;
  for (const auto& s : dataset.sequences) baskets.insert(baskets.end(), s.baskets.begin(), s.baskets.end());
  if (baskets.empty()) throw DataError("build_bipartite: dataset has no baskets");
  return build_bipartite(baskets, dataset.catalog.size());
}

Tensor normalized_adjacency(const BipartiteGraph& g) {
  std::vector<double> a(g.n_baskets * g.n_items, 0.0);
  for (const auto& [b, i] : g.edges)
    a[b * g.n_items + i] =
        1.0 / std::sqrt(static_cast<double>(g.basket_degree[b]) * static_cast<double>(g.item_degree[i]));
  return Tensor::from({g.n_baskets, g.n_items}, std::move(a));
}

void RelencConfig::validate() const {
  if (d2 == 0 || d3 == 0) throw ConfigError("relenc: d2 and d3 must be positive");
  if (n_experts == 0) throw ConfigError("relenc: n_experts must be >= 1");
  if (top_k == 0) throw ConfigError("relenc: top_k must be >= 1");
}

void init_params(ParamStore& store, const RelencConfig& config, std::size_t n_items,
                 std::size_t n_baskets, std::uint64_t seed) {
  config.validate();
  const std::size_t d2 = config.d2, d3 = config.d3;
  const double std0 = 1.0 / std::sqrt(static_cast<double>(d2));
  std::mt19937_64 emb_rng(sub_seed(seed, "relenc.embeddings"));
  store.add("rel.item0", Tensor::randn({n_items, d2}, std0, emb_rng));
  store.add("rel.basket0", Tensor::randn({std::max<std::size_t>(n_baskets, 1), d2}, std0, emb_rng));
  std::mt19937_64 rng(sub_seed(seed, "relenc.weights"));
  for (std::size_t l = 0; l < config.gcn_layers; ++l)
    store.add("rel.gcn." + std::to_string(l), Tensor::randn({d2, d2}, std0, rng));
  for (std::size_t n = 0; n < config.n_experts; ++n)
    store.add("rel.expert." + std::to_string(n), Tensor::randn({d2, d3}, std0, rng));
  for (std::size_t l = 0; l < config.hconv_layers; ++l) {
    store.add("rel.hconv." + std::to_string(l) + ".w", Tensor::randn({d2, d2}, std0, rng));
    store.add("rel.hconv." + std::to_string(l) + ".b", Tensor::zeros({d2}));
  }
}

GcnOutput gcn_embed(const BipartiteGraph& graph, const Tensor& adjacency, const Tensor& items0,
                    const Tensor& baskets0, const std::vector<Tensor>& weights) {
  Tensor hi = items0, hb = baskets0;
  if (weights.empty()) return {hi, hb};
  const Tensor adj_t = transpose(adjacency);
  for (const Tensor& w : weights) {
    Tensor next_i = relu(matmul(matmul(adj_t, hb) + hi, w));
    Tensor next_b = relu(matmul(matmul(adjacency, hi) + hb, w));
    hi = next_i;
    hb = next_b;
  }
  auto keep_isolated = [](const Tensor& out, const Tensor& init, const std::vector<std::size_t>& deg) {
    if (std::all_of(deg.begin(), deg.end(), [](std::size_t d) { return d > 0; })) return out;
    std::vector<double> connected(deg.size()), isolated(deg.size());
    for (std::size_t k = 0; k < deg.size(); ++k) {
      connected[k] = deg[k] > 0 ? 1.0 : 0.0;
      isolated[k] = 1.0 - connected[k];
    }
    return scale_rows(out, Tensor::from({deg.size()}, connected)) +
           scale_rows(init, Tensor::from({deg.size()}, isolated));
  };
  std::vector<std::size_t> bdeg = graph.basket_degree;
  bdeg.resize(baskets0.rows(), 0);
  return {keep_isolated(hi, items0, graph.item_degree), keep_isolated(hb, baskets0, bdeg)};
}

Tensor moe_similarity(const Tensor& items, const std::vector<Tensor>& experts) {
  if (experts.empty()) throw DimensionError("moe_similarity: empty expert bank");
  const std::size_t n = items.rows();
  Tensor total;
  for (const Tensor& w : experts) {
    const Tensor z = matmul(items, w);
    const Tensor inv_norm = custom_unary(
        sum(mul(z, z), 1), [](double s) { return s > 0.0 ? 1.0 / std::sqrt(s) : 0.0; },
        [](double s, double) { return s > 0.0 ? -0.5 / (s * std::sqrt(s)) : 0.0; }, "inv_norm");
    const Tensor unit = scale_rows(z, inv_norm);
    // Rounding can push |cos| slightly past 1.
    const Tensor cosine = clamp(matmul(unit, transpose(unit)), -1.0, 1.0);
    total = total.defined() ? total + cosine : cosine;
  }
  Tensor pi = add_scalar(scalar_mul(total, 0.5 / static_cast<double>(experts.size())), 0.5);
  std::vector<std::uint8_t> diag(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) diag[i * n + i] = 1;
  return masked_fill(pi, diag, 1.0);
}

std::vector<std::uint8_t> topk_mask(const Tensor& similarity, std::size_t k) {
  const std::size_t n = similarity.rows();
  if (k < 1 || k >= n)
    throw Error("top-k: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n - 1) + "]");
  std::vector<std::uint8_t> mask(n * n, 0);
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < n; ++j) {
    order.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (i != j) order.push_back(i);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = similarity.at(a, j), sb = similarity.at(b, j);
                        return sa != sb ? sa > sb : a < b;
                      });
    mask[j * n + j] = 1;
    for (std::size_t r = 0; r < k; ++r) mask[order[r] * n + j] = 1;
  }
  return mask;
}

HypergraphAdjacency build_hypergraph(const Tensor& similarity, std::span<const std::uint8_t> mask,
                                     DegreeMode mode) {
  const std::size_t n = similarity.rows();
  if (similarity.rank() != 2 || similarity.cols() != n || mask.size() != n * n)
    throw DimensionError("build_hypergraph: similarity must be square and match the mask");
  std::vector<double> keep(mask.begin(), mask.end());
  HypergraphAdjacency adj;
  adj.m = mul(similarity, Tensor::from({n, n}, std::move(keep)));
  if (mode == DegreeMode::kWeighted) {
    adj.d_v = sum(adj.m, 1);
    adj.d_e = sum(adj.m, 0);
  } else {
    std::vector<double> dv(n, 0.0), de(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (mask[i * n + j] && adj.m.at(i, j) != 0.0) {
          dv[i] += 1.0;
          de[j] += 1.0;
        }
    adj.d_v = Tensor::from({n}, std::move(dv));
    adj.d_e = Tensor::from({n}, std::move(de));
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!(adj.d_v.at(i) > 0.0) || !(adj.d_e.at(i) > 0.0))
      throw Error("build_hypergraph: non-positive degree at item " + std::to_string(i));
  return adj;
}

HypergraphAdjacency build_hypergraph(const Tensor& similarity, std::size_t k, DegreeMode mode) {
  return build_hypergraph(similarity, topk_mask(similarity, k), mode);
}

Tensor propagation_operator(const HypergraphAdjacency& adj) {
  return matmul(scale_rows(adj.m, reciprocal(adj.d_v)), scale_rows(transpose(adj.m), reciprocal(adj.d_e)));
}

Tensor hypergraph_conv(const HypergraphAdjacency& adj, const Tensor& h0,
                       const std::vector<HconvLayer>& layers, bool identity_ffn) {
  const Tensor inv_v = reciprocal(adj.d_v), inv_e = reciprocal(adj.d_e);
  const Tensor m_t = transpose(adj.m);
  Tensor h = h0;
  for (const HconvLayer& layer : layers) {
    // Vertex -> hyperedge (weighted mean), then hyperedge -> vertex.
    const Tensor edges = scale_rows(matmul(m_t, h), inv_e);
    const Tensor verts = scale_rows(matmul(adj.m, edges), inv_v);
    h = identity_ffn ? verts : relu(matmul(verts, layer.w) + layer.b);
  }
  return h;
}

namespace {

// k-th item (0-based) not in the sorted basket.
ItemIndex nth_outside(const Basket& basket, std::size_t k) {
  ItemIndex candidate = k;
  for (ItemIndex b : basket) {
    if (b <= candidate) ++candidate;
    else break;
  }
  return candidate;
}

std::size_t draw(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

ItemIndex draw_negative(const Basket& basket, std::size_t n_items, std::mt19937_64& rng) {
  if (basket.size() >= n_items) throw Error("sample_pos_neg: basket covers the whole catalog");
  return nth_outside(basket, draw(rng, n_items - basket.size()));
}

}  // namespace

std::optional<Sample> sample_pos_neg(const Basket& basket, std::size_t n_items, SampleMode mode,
                                     std::mt19937_64& rng) {
  if (basket.empty()) throw Error("sample_pos_neg: empty basket");
  if (mode == SampleMode::kBasketItem) {
    Sample s;
    s.pos = basket[draw(rng, basket.size())];
    s.neg = draw_negative(basket, n_items, rng);
    return s;
  }
  if (basket.size() < 2) return std::nullopt;
  return sample_for_anchor(basket, basket[draw(rng, basket.size())], n_items, rng);
}

std::optional<Sample> sample_for_anchor(const Basket& basket, ItemIndex anchor, std::size_t n_items,
                                        std::mt19937_64& rng) {
  if (basket.size() < 2) return std::nullopt;
  Sample s;
  s.anchor = anchor;
  std::size_t k = draw(rng, basket.size() - 1);
  for (ItemIndex i : basket) {
    if (i == anchor) continue;
    if (k-- == 0) {
      s.pos = i;
      break;
    }
  }
  s.neg = draw_negative(basket, n_items, rng);
  return s;
}

Tensor loss_bi(const Tensor& v_b, const Tensor& v_pos, const Tensor& v_neg) {
  const Tensor margin = sum(mul(v_b, v_pos), 1) - sum(mul(v_b, v_neg), 1);
  return scalar_mul(sum_all(log_sigmoid(margin)), -1.0);
}

Tensor loss_ii(const Tensor& similarity, const std::vector<std::vector<Sample>>& groups) {
  std::vector<std::size_t> anchors, pos, neg;
  std::vector<double> weight;
  for (const auto& g : groups) {
    for (const Sample& s : g) {
      anchors.push_back(s.anchor);
      pos.push_back(s.pos);
      neg.push_back(s.neg);
      weight.push_back(-1.0 / static_cast<double>(g.size()));
    }
  }
  if (anchors.empty()) return Tensor::scalar(0.0);
  const Tensor margin = gather_elements(similarity, anchors, pos) - gather_elements(similarity, anchors, neg);
  const std::size_t m = weight.size();
  return sum_all(mul(log_sigmoid(margin), Tensor::from({m}, std::move(weight))));
}

}  // namespace hekp::relenc
