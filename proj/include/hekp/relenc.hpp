#pragma once

// Multi-item relation encoder: basket-item bipartite GCN, mixture-of-experts
// item similarity, top-k hypergraph and hypergraph convolution, plus the two
// pairwise ranking losses that supervise them.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hekp/corpus.hpp"
#include "hekp/params.hpp"
#include "hekp/tensor.hpp"

namespace hekp::relenc {

using ad::Tensor;
using corpus::Basket;
using corpus::ItemIndex;

struct BipartiteGraph {
  std::size_t n_baskets = 0;
  std::size_t n_items = 0;
  std::vector<std::pair<std::size_t, ItemIndex>> edges;  // (basket, item), unique
  std::vector<std::size_t> basket_degree;
  std::vector<std::size_t> item_degree;
};

BipartiteGraph build_bipartite(const std::vector<Basket>& baskets, std::size_t n_items);
// One basket node per (user, position) in sequence order.
BipartiteGraph build_bipartite(const corpus::BasketDataset& dataset);

// Dense [n_baskets x n_items] matrix with entries 1/sqrt(deg_b * deg_i) on edges.
Tensor normalized_adjacency(const BipartiteGraph& graph);

enum class DegreeMode { kWeighted, kCount };

struct RelencConfig {
  std::size_t d2 = 16;
  std::size_t d3 = 8;
  std::size_t n_experts = 8;
  std::size_t gcn_layers = 2;
  std::size_t hconv_layers = 2;
  std::size_t top_k = 10;
  DegreeMode degree_mode = DegreeMode::kWeighted;

  void validate() const;
  bool operator==(const RelencConfig&) const = default;
};

// Registers "rel." parameters: layer-0 item and basket embeddings drawn from
// normal(0, 1/sqrt(d2)), GCN weights, expert bank and hypergraph FFN layers.
void init_params(ad::ParamStore& store, const RelencConfig& config, std::size_t n_items,
                 std::size_t n_baskets, std::uint64_t seed);

struct GcnOutput {
  Tensor items;    // v_i  [n_items x d2]
  Tensor baskets;  // v_b  [n_baskets x d2]
};

// Each layer: h <- ReLU((sum of normalised neighbour embeddings + h) W_l),
// applied to both sides from the previous layer. Isolated nodes keep their
// layer-0 embedding.
GcnOutput gcn_embed(const BipartiteGraph& graph, const Tensor& adjacency, const Tensor& items0,
                    const Tensor& baskets0, const std::vector<Tensor>& weights);

// pi_ij = mean_n (1 + cos(v_i w_n, v_j w_n)) / 2; a zero projection has
// cosine 0 with every partner. The diagonal is exactly 1.
Tensor moe_similarity(const Tensor& items, const std::vector<Tensor>& experts);

// Column j marks j itself and its k most similar other items (ties broken by
// lower index). Returned row-major as a 0/1 [n x n] mask.
std::vector<std::uint8_t> topk_mask(const Tensor& similarity, std::size_t k);

struct HypergraphAdjacency {
  Tensor m;    // [n x n], column j is the hyperedge generated by item j
  Tensor d_v;  // [n] vertex degrees
  Tensor d_e;  // [n] hyperedge degrees
};

// M = similarity restricted to `mask`; selection carries no gradient, the
// kept similarity values do.
HypergraphAdjacency build_hypergraph(const Tensor& similarity, std::span<const std::uint8_t> mask,
                                     DegreeMode mode = DegreeMode::kWeighted);
HypergraphAdjacency build_hypergraph(const Tensor& similarity, std::size_t k,
                                     DegreeMode mode = DegreeMode::kWeighted);

// Dense P = D_v^-1 M D_e^-1 M^T.
Tensor propagation_operator(const HypergraphAdjacency& adj);

struct HconvLayer {
  Tensor w;  // [d2 x d2]
  Tensor b;  // [d2]
};

// H <- ReLU(P H W + b) per layer; with `identity_ffn` the layer is H <- P H.
Tensor hypergraph_conv(const HypergraphAdjacency& adj, const Tensor& h0,
                       const std::vector<HconvLayer>& layers, bool identity_ffn = false);

struct Sample {
  ItemIndex anchor = 0;  // unused for basket-item samples
  ItemIndex pos = 0;
  ItemIndex neg = 0;
};

enum class SampleMode { kBasketItem, kItemItem };

// kBasketItem: pos from the basket, neg from its complement. kItemItem:
// anchor from the basket, pos from the rest of the basket, neg from the
// complement; nullopt for singleton baskets.
std::optional<Sample> sample_pos_neg(const Basket& basket, std::size_t n_items, SampleMode mode,
                                     std::mt19937_64& rng);
// Item-item sample with a fixed anchor.
std::optional<Sample> sample_for_anchor(const Basket& basket, ItemIndex anchor, std::size_t n_items,
                                        std::mt19937_64& rng);

// sum_rows -log sigmoid(v_b . v_pos - v_b . v_neg) over aligned rows.
Tensor loss_bi(const Tensor& v_b, const Tensor& v_pos, const Tensor& v_neg);

// Sum over groups (baskets) of the mean over anchors of
// -log sigmoid(pi[a, pos] - pi[a, neg]).
Tensor loss_ii(const Tensor& similarity, const std::vector<std::vector<Sample>>& groups);

}  // namespace hekp::relenc
