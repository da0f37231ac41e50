#include "hekp/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include <json.hpp>

#include "hekp/error.hpp"
#include "hekp/head.hpp"
#include "hekp/optim.hpp"
#include "hekp/relenc.hpp"
#include "hekp/seed.hpp"
#include "hekp/seqenc.hpp"

namespace hekp {

using ad::Tensor;
using corpus::Basket;

namespace {

// Relation-encoder outputs for one forward pass.
struct RelOutputs {
  Tensor items;    // v_i
  Tensor baskets;  // v_b
  Tensor sim;      // pi
  Tensor refined;  // v'
};

std::vector<Tensor> numbered(const ad::ParamStore& store, const std::string& prefix, std::size_t n) {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < n; ++l) out.push_back(store.at(prefix + std::to_string(l)));
  return out;
}

std::size_t effective_k(const ExperimentConfig& config, std::size_t n_items) {
  return std::min(config.relenc.top_k, n_items - 1);
}

std::vector<std::uint8_t> current_mask(const Tensor& sim, const ExperimentConfig& config) {
  return relenc::topk_mask(sim.detach(), effective_k(config, sim.rows()));
}

RelOutputs relation_forward(const ad::ParamStore& store, const ExperimentConfig& config,
                            const relenc::BipartiteGraph& graph, const Tensor& adjacency,
                            const std::vector<std::uint8_t>* mask) {
  const auto& rc = config.relenc;
  const auto& ab = config.train.ablate;
  RelOutputs out;
  const std::vector<Tensor> gcn = ab.no_gcn ? std::vector<Tensor>{} : numbered(store, "rel.gcn.", rc.gcn_layers);
  const relenc::GcnOutput g =
      relenc::gcn_embed(graph, adjacency, store.at("rel.item0"), store.at("rel.basket0"), gcn);
  out.items = g.items;
  out.baskets = g.baskets;
  out.sim = relenc::moe_similarity(out.items, numbered(store, "rel.expert.", rc.n_experts));
  if (ab.no_hypergcn) {
    out.refined = out.items;
    return out;
  }
  std::vector<relenc::HconvLayer> layers;
  for (std::size_t l = 0; l < rc.hconv_layers; ++l) {
    const std::string p = "rel.hconv." + std::to_string(l);
    layers.push_back({store.at(p + ".w"), store.at(p + ".b")});
  }
  const std::vector<std::uint8_t> fresh = mask ? std::vector<std::uint8_t>{} : current_mask(out.sim, config);
  const relenc::HypergraphAdjacency adj =
      relenc::build_hypergraph(out.sim, mask ? *mask : fresh, rc.degree_mode);
  out.refined = relenc::hypergraph_conv(adj, out.items, layers);
  return out;
}

// Top-k selection from the current similarity, without gradient.
std::vector<std::uint8_t> similarity_mask(const ad::ParamStore& store, const ExperimentConfig& config,
                                          const relenc::BipartiteGraph& graph, const Tensor& adjacency) {
  ad::NoGradGuard no_grad;
  const auto& rc = config.relenc;
  const std::vector<Tensor> gcn =
      config.train.ablate.no_gcn ? std::vector<Tensor>{} : numbered(store, "rel.gcn.", rc.gcn_layers);
  const auto g = relenc::gcn_embed(graph, adjacency, store.at("rel.item0"), store.at("rel.basket0"), gcn);
  return current_mask(relenc::moe_similarity(g.items, numbered(store, "rel.expert.", rc.n_experts)), config);
}

Tensor rounded(const Tensor& t) {
  std::vector<double> v(t.data().begin(), t.data().end());
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  return Tensor::from(t.shape(), std::move(v));
}

Tensor score_items(const ExperimentConfig& config, const ad::ParamStore& params, const Tensor& v_s,
                   const Tensor& items, std::span<const double> gamma) {
  if (config.train.ablate.no_fbg) return head::inner_product_score(v_s, items, params.at("head.w_p"));
  return head::fbg_score(v_s, items, gamma, head::GatingParams::from(params));
}

std::string fmt_json_real(double v) { return nlohmann::json(v).dump(); }

// One training example: history prefix, target basket and its token ids.
struct Example {
  std::size_t user = 0;        // index into the training sequences
  std::size_t first_node = 0;  // bipartite node of the user's first basket
  std::vector<Basket> history;
  Basket target;
  std::vector<double> gamma;
  PromptIds prompt;
  std::vector<std::size_t> target_ids;
};

struct UserLosses {
  double plm = 0.0;
  double rec = 0.0;
  ad::ParamStore proxy;
  Tensor items_leaf;
  std::exception_ptr error;
};

}  // namespace

std::string EpochLog::to_json() const {
  return "{\"epoch\":" + std::to_string(epoch) + ",\"l_plm\":" + fmt_json_real(l_plm) +
         ",\"l_rec\":" + fmt_json_real(l_rec) + ",\"l_bi\":" + fmt_json_real(l_bi) +
         ",\"l_ii\":" + fmt_json_real(l_ii) + ",\"val_hr5\":" + fmt_json_real(val_hr5) + "}";
}

Recommender::Recommender(const Checkpoint& ckpt, const knowledge::KnowledgeGraph& kg)
    : ckpt_(ckpt), tok_(ckpt.vocab) {
  if (tok_.size() != ckpt.config.model.vocab_size)
    throw DataError("checkpoint vocabulary has " + std::to_string(tok_.size()) + " tokens, model expects " +
                    std::to_string(ckpt.config.model.vocab_size));
  prompts_ = std::make_unique<PromptBuilder>(ckpt.config, tok_, ckpt.catalog, ckpt.surfaces, ckpt.item_counts, kg);
}

std::vector<double> Recommender::score(const std::vector<Basket>& history, std::size_t n_masks) const {
  ad::NoGradGuard no_grad;
  const PromptIds p = prompts_->build(history, n_masks);
  const seqenc::SeqEncoder model(ckpt_.config.model, ckpt_.params);
  const seqenc::Encoded enc = seqenc::encode_prompts(model, p.mup, p.ktp, p.mask_positions, tok_.sep_id());
  const auto gamma = corpus::frequency_vector(history, ckpt_.catalog.size()).values;
  const Tensor s = score_items(ckpt_.config, ckpt_.params, enc.v_s, ckpt_.items, gamma);
  return {s.data().begin(), s.data().end()};
}

std::vector<std::size_t> Recommender::rank(const std::vector<Basket>& history, std::size_t k,
                                           const std::set<std::size_t>& exclude) const {
  const std::vector<double> s = score(history, k);
  return head::recommend_topn(s, k, exclude);
}

eval::Ranker Recommender::ranker() const {
  return [this](const corpus::UserSequence&, const std::vector<Basket>& history, std::size_t k) {
    return rank(history, k);
  };
}

eval::MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const corpus::BasketDataset& split,
                                        const knowledge::KnowledgeGraph& kg, const std::vector<std::size_t>& ks) {
  if (split.catalog != ckpt.catalog)
    throw DataError("evaluation data catalog differs from the checkpoint catalog");
  const Recommender rec(ckpt, kg);
  eval::MetricsReport report =
      eval::evaluate_split(rec.ranker(), split, ks, ckpt.config.train.workers, ckpt.config.hit_mode);
  report.config = config_entries(ckpt.config);
  return report;
}

TrainResult train(const corpus::BasketDataset& train_set, const corpus::BasketDataset& val_set,
                  const knowledge::KnowledgeGraph& kg, const ExperimentConfig& config_in, std::ostream* log) {
  config_in.validate();
  if (train_set.sequences.empty()) throw DataError("train: empty training set");
  const std::size_t n_items = train_set.catalog.size();
  if (n_items < 2) throw DataError("train: need at least 2 catalog items");
  if (val_set.catalog != train_set.catalog) throw DataError("train: validation catalog differs from training");

  const knowledge::Tokenizer tok = build_tokenizer(config_in, train_set, kg);
  ExperimentConfig config = config_in;
  config.model.vocab_size = tok.size();
  const auto& tc = config.train;

  Checkpoint skeleton;
  skeleton.config = config;
  skeleton.vocab.assign(tok.tokens().begin() + 6, tok.tokens().end());
  skeleton.catalog = train_set.catalog;
  for (std::size_t i = 0; i < n_items; ++i) skeleton.surfaces.push_back(train_set.surface_name(i));
  skeleton.item_counts.assign(n_items, 0.0);
  for (const auto& s : train_set.sequences)
    for (const auto& b : s.baskets)
      for (auto i : b) skeleton.item_counts[i] += 1.0;

  const PromptBuilder prompts(config, tok, skeleton.catalog, skeleton.surfaces, skeleton.item_counts, kg);

  // Bipartite graph over every training basket, built once.
  const relenc::BipartiteGraph graph = relenc::build_bipartite(train_set);
  const Tensor adjacency = relenc::normalized_adjacency(graph);

  std::vector<Example> examples;
  std::size_t node = 0;
  for (std::size_t u = 0; u < train_set.sequences.size(); ++u) {
    const auto& s = train_set.sequences[u];
    const std::size_t first = node;
    node += s.baskets.size();
    if (s.baskets.size() < 2) continue;
    Example ex;
    ex.user = u;
    ex.first_node = first;
    ex.history.assign(s.baskets.begin(), s.baskets.end() - 1);
    ex.target = s.baskets.back();
    ex.gamma = corpus::frequency_vector(ex.history, n_items).values;
    ex.prompt = prompts.build(ex.history, ex.target.size());
    ex.target_ids = seqenc::canonical_target(tok, ex.target, skeleton.surfaces);
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw DataError("train: no training user has two or more baskets");

  ad::ParamStore store;
  seqenc::init_params(store, config.model, sub_seed(config.seed, "init.seqenc"));
  relenc::init_params(store, config.relenc, n_items, graph.n_baskets, sub_seed(config.seed, "init.relenc"));
  head::init_params(store, config.model.d_model, config.relenc.d2, n_items, tc.diagonal_gate,
                    sub_seed(config.seed, "init.head"));
  store.round_to_float();

  const auto& ab = tc.ablate;
  auto unused = [&](const std::string& name) {
    if (ab.no_gcn && name.rfind("rel.gcn.", 0) == 0) return true;
    if (ab.no_hypergcn && name.rfind("rel.hconv.", 0) == 0) return true;
    if (ab.no_fbg && (name == "head.w1" || name == "head.w2" || name == "head.b2")) return true;
    return false;
  };
  std::vector<Tensor> backbone, overhead;
  for (const auto& [name, t] : store.entries()) {
    if (unused(name)) continue;
    (name.rfind("seq.", 0) == 0 ? backbone : overhead).push_back(t);
  }
  ad::AdamW opt;
  opt.add_group(backbone, {tc.lr_backbone, tc.weight_decay});
  opt.add_group(overhead, {tc.lr_overhead, tc.weight_decay});

  if (log) {
    nlohmann::ordered_json header;
    header["header"] = true;
    header["epoch"] = 0;
    header["ktp_mode"] = ab.no_ktp ? "empty" : "knowledge_tree";
    header["ablate"] = {{"no_gcn", ab.no_gcn}, {"no_hypergcn", ab.no_hypergcn}, {"no_fbg", ab.no_fbg},
                        {"no_ktp", ab.no_ktp}};
    header["n_examples"] = examples.size();
    header["n_items"] = n_items;
    header["vocab_size"] = tok.size();
    header["n_params"] = store.scalar_count();
    *log << header.dump() << std::endl;
  }

  TrainResult result;
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::uint8_t> mask;
    if (!ab.no_hypergcn) mask = similarity_mask(store, config, graph, adjacency);

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(sub_seed(config.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double sum_plm = 0.0, sum_rec = 0.0, sum_bi = 0.0, sum_ii = 0.0;
    const std::size_t n_batches = (order.size() + tc.batch_size - 1) / tc.batch_size;
    for (std::size_t batch = 0; batch < n_batches; ++batch) {
      const std::size_t lo = batch * tc.batch_size, hi = std::min(order.size(), lo + tc.batch_size);
      const double inv_b = 1.0 / static_cast<double>(hi - lo);
      store.zero_grad();

      std::vector<std::uint8_t> step_mask;
      if (!ab.no_hypergcn && tc.rebuild == HypergraphRebuild::kStep)
        step_mask = similarity_mask(store, config, graph, adjacency);
      const RelOutputs rel = relation_forward(store, config, graph, adjacency,
                                              tc.rebuild == HypergraphRebuild::kStep ? &step_mask : &mask);
      const Tensor refined_values = rel.refined.detach();

      // Per-user sequence losses, each on a private graph.
      std::vector<UserLosses> users(hi - lo);
      auto run_user = [&](std::size_t slot) {
        UserLosses& out = users[slot];
        try {
          const std::size_t idx = order[lo + slot];
          const Example& ex = examples[idx];
          out.proxy = store.proxy();
          out.items_leaf = refined_values.clone(true);
          std::mt19937_64 drop_rng(sub_seed(config.seed, "dropout", epoch, idx));
          const seqenc::SeqEncoder model(config.model, out.proxy);
          const seqenc::Encoded enc = seqenc::encode_prompts(model, ex.prompt.mup, ex.prompt.ktp,
                                                             ex.prompt.mask_positions, tok.sep_id(), &drop_rng);
          const Tensor plm = seqenc::nll_from_memory(model, enc.memory, ex.target_ids, tok.pad_id(), &drop_rng);
          const Tensor scores = score_items(config, out.proxy, enc.v_s, out.items_leaf, ex.gamma);
          const Tensor rec = head::rec_loss(scores, std::set<std::size_t>(ex.target.begin(), ex.target.end()));
          const Tensor total = head::joint_loss({plm, rec, {}, {}}, tc.weights) * inv_b;
          out.plm = plm.item();
          out.rec = rec.item();
          ad::backward(total);
        } catch (...) {
          out.error = std::current_exception();
        }
      };
      const std::size_t workers = std::min(tc.workers, hi - lo);
      if (workers <= 1) {
        for (std::size_t s = 0; s < users.size(); ++s) run_user(s);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
          pool.emplace_back([&, w] {
            for (std::size_t s = w; s < users.size(); s += workers) run_user(s);
          });
        for (auto& t : pool) t.join();
      }

      std::vector<double> item_grad(refined_values.numel(), 0.0);
      for (UserLosses& u : users) {
        if (u.error) std::rethrow_exception(u.error);
        store.accumulate_grads(u.proxy);
        if (u.items_leaf.has_grad()) {
          const auto g = u.items_leaf.grad();
          for (std::size_t k = 0; k < g.size(); ++k) item_grad[k] += g[k];
        }
        sum_plm += u.plm;
        sum_rec += u.rec;
      }

      // Basket-item and item-item ranking losses over the batch's baskets.
      std::mt19937_64 sample_rng(sub_seed(config.seed, "sample", epoch, batch));
      std::vector<std::size_t> b_rows, pos_rows, neg_rows;
      std::vector<std::vector<relenc::Sample>> groups;
      for (std::size_t s = lo; s < hi; ++s) {
        const Example& ex = examples[order[s]];
        const auto& baskets = train_set.sequences[ex.user].baskets;
        for (std::size_t p = 0; p < baskets.size(); ++p) {
          const Basket& b = baskets[p];
          if (b.size() >= n_items) continue;
          if (auto smp = relenc::sample_pos_neg(b, n_items, relenc::SampleMode::kBasketItem, sample_rng)) {
            b_rows.push_back(ex.first_node + p);
            pos_rows.push_back(smp->pos);
            neg_rows.push_back(smp->neg);
          }
          std::vector<relenc::Sample> group;
          for (auto anchor : b)
            if (auto smp = relenc::sample_for_anchor(b, anchor, n_items, sample_rng)) group.push_back(*smp);
          if (!group.empty()) groups.push_back(std::move(group));
        }
      }
      Tensor l_bi, l_ii;
      if (!b_rows.empty())
        l_bi = relenc::loss_bi(ad::embedding_lookup(rel.baskets, b_rows), ad::embedding_lookup(rel.items, pos_rows),
                               ad::embedding_lookup(rel.items, neg_rows)) *
               inv_b;
      if (!groups.empty()) l_ii = relenc::loss_ii(rel.sim, groups) * inv_b;
      Tensor relation_total = head::joint_loss({{}, {}, l_bi, l_ii}, tc.weights);
      if (l_bi.defined()) sum_bi += l_bi.item() / inv_b;
      if (l_ii.defined()) sum_ii += l_ii.item() / inv_b;
      // Route the sequence losses' gradient w.r.t. v' back through the relation encoder.
      const Tensor routed = ad::sum_all(rel.refined * Tensor::from(refined_values.shape(), std::move(item_grad)));
      ad::backward(relation_total + routed);

      for (Tensor t : store.tensors())
        if (!t.has_grad()) t.mutable_grad();
      opt.step();
    }
    store.round_to_float();

    // Snapshot for validation and checkpointing.
    Checkpoint ckpt = skeleton;
    ckpt.params = store.proxy();
    {
      ad::NoGradGuard no_grad;
      const RelOutputs rel = relation_forward(store, config, graph, adjacency, nullptr);
      ckpt.items = rounded(rel.refined);
    }
    ckpt.epoch = epoch;
    const eval::MetricsReport val = evaluate_checkpoint(ckpt, val_set, kg, {5});
    ckpt.val_hr5 = val.at_k.at(5).hr;

    const double n = static_cast<double>(examples.size());
    EpochLog entry{epoch, sum_plm / n, sum_rec / n, sum_bi / n, sum_ii / n, ckpt.val_hr5};
    for (double v : {entry.l_plm, entry.l_rec, entry.l_bi, entry.l_ii})
      if (!std::isfinite(v)) throw DivergenceError("train", "non-finite epoch loss");
    if (log) *log << entry.to_json() << std::endl;
    result.epochs.push_back(entry);
    if (!have_best || ckpt.val_hr5 > result.best.val_hr5) {
      result.best = std::move(ckpt);
      have_best = true;
    }
  }
  return result;
}

}  // namespace hekp
