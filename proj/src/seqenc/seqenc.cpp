#include "hekp/seqenc.hpp"

#include <cmath>

#include "hekp/error.hpp"
#include "hekp/seed.hpp"

namespace hekp::seqenc {

using namespace ad;

void ModelConfig::validate() const {
  if (vocab_size < 6) throw ConfigError("model: vocab_size must cover the special tokens");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("model: d_model must be a positive multiple of n_heads");
  if (ffn_mult == 0) throw ConfigError("model: ffn_mult must be >= 1");
  if (max_tokens < 8) throw ConfigError("model: max_tokens must be >= 8");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
}

namespace {

void add_attention(ParamStore& s, const std::string& prefix, std::size_t d, std::mt19937_64& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* w : {"wq", "wk", "wv", "wo"}) s.add(prefix + "." + w, Tensor::randn({d, d}, std, rng));
}

void add_norm(ParamStore& s, const std::string& prefix, std::size_t d) {
  s.add(prefix + ".g", Tensor::full({d}, 1.0));
  s.add(prefix + ".b", Tensor::zeros({d}));
}

void add_ffn(ParamStore& s, const std::string& prefix, std::size_t d, std::size_t f,
             std::mt19937_64& rng) {
  s.add(prefix + ".w1", Tensor::randn({d, f}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  s.add(prefix + ".b1", Tensor::zeros({f}));
  s.add(prefix + ".w2", Tensor::randn({f, d}, 1.0 / std::sqrt(static_cast<double>(f)), rng));
  s.add(prefix + ".b2", Tensor::zeros({d}));
}

Tensor norm(const Tensor& x, const ParamStore& s, const std::string& prefix) {
  return layer_norm(x, s.at(prefix + ".g"), s.at(prefix + ".b"));
}

}  // namespace

void init_params(ParamStore& store, const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(sub_seed(seed, "seqenc.init"));
  const std::size_t d = config.d_model, f = config.d_model * config.ffn_mult;
  store.add("seq.tok_emb", Tensor::randn({config.vocab_size, d}, 0.02, rng));
  store.add("seq.pos_emb", Tensor::randn({config.max_tokens, d}, 0.02, rng));
  for (std::size_t l = 0; l < config.n_enc_layers; ++l) {
    const std::string p = "seq.enc." + std::to_string(l);
    add_norm(store, p + ".ln1", d);
    add_attention(store, p + ".self", d, rng);
    add_norm(store, p + ".ln2", d);
    add_ffn(store, p + ".ffn", d, f, rng);
  }
  add_norm(store, "seq.enc.ln_f", d);
  for (std::size_t l = 0; l < config.n_dec_layers; ++l) {
    const std::string p = "seq.dec." + std::to_string(l);
    add_norm(store, p + ".ln1", d);
    add_attention(store, p + ".self", d, rng);
    add_norm(store, p + ".ln2", d);
    add_attention(store, p + ".cross", d, rng);
    add_norm(store, p + ".ln3", d);
    add_ffn(store, p + ".ffn", d, f, rng);
  }
  add_norm(store, "seq.dec.ln_f", d);
}

std::vector<std::size_t> join_prompt(std::span<const std::size_t> mup,
                                     std::span<const std::size_t> ktp, std::size_t sep_id) {
  std::vector<std::size_t> ids(mup.begin(), mup.end());
  ids.push_back(sep_id);
  ids.insert(ids.end(), ktp.begin(), ktp.end());
  return ids;
}

std::vector<std::size_t> canonical_target(const knowledge::Tokenizer& tok,
                                          const corpus::Basket& basket,
                                          std::span<const std::string> surfaces) {
  std::vector<std::size_t> ids{tok.bos_id()};
  for (std::size_t k = 0; k < basket.size(); ++k) {
    if (k) ids.push_back(tok.id(","));
    ids.push_back(tok.id(knowledge::surface_token(surfaces[basket[k]])));
  }
  ids.push_back(tok.eos_id());
  return ids;
}

Tensor SeqEncoder::drop(const Tensor& x, std::mt19937_64* rng) const {
  if (!rng || config_.dropout == 0.0) return x;
  return dropout(x, config_.dropout, *rng);
}

Tensor SeqEncoder::embed(std::span<const std::size_t> ids, std::mt19937_64* rng) const {
  if (ids.empty()) throw DimensionError("seqenc: empty token sequence");
  if (ids.size() > config_.max_tokens)
    throw DimensionError("seqenc: " + std::to_string(ids.size()) + " tokens exceed max_tokens " +
                         std::to_string(config_.max_tokens));
  std::vector<std::size_t> positions(ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  return drop(embedding_lookup(p("seq.tok_emb"), ids) + embedding_lookup(p("seq.pos_emb"), positions),
              rng);
}

Tensor SeqEncoder::attention(const Tensor& xq, const Tensor& xkv, const std::string& prefix,
                             bool causal, std::mt19937_64* rng) const {
  const std::size_t heads = config_.n_heads, dh = config_.d_model / heads;
  const Tensor q = matmul(xq, p(prefix + ".wq"));
  const Tensor k = matmul(xkv, p(prefix + ".wk"));
  const Tensor v = matmul(xkv, p(prefix + ".wv"));
  const std::size_t lq = xq.rows(), lk = xkv.rows();
  std::vector<std::uint8_t> future;
  if (causal) {
    future.assign(lq * lk, 0);
    for (std::size_t i = 0; i < lq; ++i)
      for (std::size_t j = i + 1; j < lk; ++j) future[i * lk + j] = 1;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice(q, 1, h * dh, (h + 1) * dh);
    const Tensor kh = slice(k, 1, h * dh, (h + 1) * dh);
    const Tensor vh = slice(v, 1, h * dh, (h + 1) * dh);
    Tensor scores = scalar_mul(matmul(qh, transpose(kh)), scale);
    if (causal) scores = masked_fill(scores, future, -1e9);
    outs.push_back(matmul(softmax(scores, 1), vh));
  }
  Tensor merged = heads == 1 ? outs[0] : concat(outs, 1);
  return drop(matmul(merged, p(prefix + ".wo")), rng);
}

Tensor SeqEncoder::feed_forward(const Tensor& x, const std::string& prefix,
                                std::mt19937_64* rng) const {
  Tensor h = relu(matmul(x, p(prefix + ".w1")) + p(prefix + ".b1"));
  return drop(matmul(h, p(prefix + ".w2")) + p(prefix + ".b2"), rng);
}

Tensor SeqEncoder::encode(std::span<const std::size_t> ids, std::mt19937_64* rng) const {
  Tensor x = embed(ids, rng);
  for (std::size_t l = 0; l < config_.n_enc_layers; ++l) {
    const std::string pre = "seq.enc." + std::to_string(l);
    Tensor h = norm(x, params_, pre + ".ln1");
    x = x + attention(h, h, pre + ".self", false, rng);
    x = x + feed_forward(norm(x, params_, pre + ".ln2"), pre + ".ffn", rng);
  }
  return norm(x, params_, "seq.enc.ln_f");
}

Tensor SeqEncoder::decode_logits(const Tensor& memory, std::span<const std::size_t> inputs,
                                 std::mt19937_64* rng) const {
  Tensor x = embed(inputs, rng);
  for (std::size_t l = 0; l < config_.n_dec_layers; ++l) {
    const std::string pre = "seq.dec." + std::to_string(l);
    Tensor h = norm(x, params_, pre + ".ln1");
    x = x + attention(h, h, pre + ".self", true, rng);
    x = x + attention(norm(x, params_, pre + ".ln2"), memory, pre + ".cross", false, rng);
    x = x + feed_forward(norm(x, params_, pre + ".ln3"), pre + ".ffn", rng);
  }
  // Output projection tied to the token embeddings.
  return matmul(norm(x, params_, "seq.dec.ln_f"), transpose(p("seq.tok_emb")));
}

Encoded encode_prompts(const SeqEncoder& model, std::span<const std::size_t> mup,
                       std::span<const std::size_t> ktp, std::span<const std::size_t> mask_positions,
                       std::size_t sep_id, std::mt19937_64* rng) {
  if (mask_positions.empty()) throw Error("encode_prompts: no mask positions");
  for (std::size_t pos : mask_positions)
    if (pos >= mup.size()) throw DimensionError("encode_prompts: mask position outside the MUP");
  const std::size_t total = mup.size() + 1 + ktp.size();
  if (total > model.config().max_tokens)
    throw DimensionError("encode_prompts: prompt of " + std::to_string(total) +
                         " tokens exceeds max_tokens " + std::to_string(model.config().max_tokens));
  Encoded out;
  out.memory = model.encode(join_prompt(mup, ktp, sep_id), rng);
  out.mask_rows = embedding_lookup(out.memory, mask_positions);
  out.v_s = mean(out.mask_rows, 0);
  return out;
}

Tensor nll_from_memory(const SeqEncoder& model, const Tensor& memory,
                       std::span<const std::size_t> target, std::size_t pad_id,
                       std::mt19937_64* rng) {
  if (target.size() < 2) throw Error("plm_loss: target needs at least one token after BOS");
  const Tensor logp = log_softmax(model.decode_logits(memory, target.first(target.size() - 1), rng), 1);
  std::vector<std::size_t> rows, cols;
  for (std::size_t j = 1; j < target.size(); ++j) {
    if (target[j] == pad_id) continue;
    rows.push_back(j - 1);
    cols.push_back(target[j]);
  }
  if (rows.empty()) throw Error("plm_loss: target is all padding");
  return scalar_mul(sum_all(gather_elements(logp, rows, cols)), -1.0);
}

Tensor plm_loss(const SeqEncoder& model, std::span<const std::size_t> mup,
                std::span<const std::size_t> ktp, std::span<const std::size_t> target,
                std::size_t sep_id, std::size_t pad_id, std::mt19937_64* rng) {
  const std::size_t total = mup.size() + 1 + ktp.size();
  if (total > model.config().max_tokens)
    throw DimensionError("plm_loss: prompt of " + std::to_string(total) + " tokens exceeds max_tokens");
  Tensor memory = model.encode(join_prompt(mup, ktp, sep_id), rng);
  return nll_from_memory(model, memory, target, pad_id, rng);
}

}  // namespace hekp::seqenc
