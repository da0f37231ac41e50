#pragma once

// Small pre-norm encoder-decoder transformer trained from scratch. The
// encoder reads [MUP; SEP; KTP]; the mean of its rows at the mask positions
// is the sequence embedding, and the decoder supplies the teacher-forced
// generation loss over the next basket's item names.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hekp/corpus.hpp"
#include "hekp/knowledge.hpp"
#include "hekp/params.hpp"
#include "hekp/tensor.hpp"

namespace hekp::seqenc {

using ad::Tensor;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t max_tokens = 512;
  double dropout = 0.1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Registers every "seq." parameter with seeded initial values.
void init_params(ad::ParamStore& store, const ModelConfig& config, std::uint64_t seed);

// Concatenation [mup; SEP; ktp].
std::vector<std::size_t> join_prompt(std::span<const std::size_t> mup,
                                     std::span<const std::size_t> ktp, std::size_t sep_id);

// BOS, item surface tokens in catalog order separated by ",", EOS.
std::vector<std::size_t> canonical_target(const knowledge::Tokenizer& tok,
                                          const corpus::Basket& basket,
                                          std::span<const std::string> surfaces);

struct Encoded {
  Tensor memory;     // encoder output, one row per input token
  Tensor mask_rows;  // rows of `memory` at the mask positions
  Tensor v_s;        // mean of mask_rows, rank 1
};

// Reads parameters by name from a store; cheap to construct. A null `rng`
// disables dropout.
class SeqEncoder {
 public:
  SeqEncoder(const ModelConfig& config, const ad::ParamStore& params)
      : config_(config), params_(params) {}

  const ModelConfig& config() const { return config_; }

  Tensor encode(std::span<const std::size_t> ids, std::mt19937_64* rng = nullptr) const;
  // Next-token logits [inputs x vocab] for decoder inputs over `memory`.
  Tensor decode_logits(const Tensor& memory, std::span<const std::size_t> inputs,
                       std::mt19937_64* rng = nullptr) const;

 private:
  const Tensor& p(const std::string& name) const { return params_.at(name); }
  Tensor attention(const Tensor& xq, const Tensor& xkv, const std::string& prefix, bool causal,
                   std::mt19937_64* rng) const;
  Tensor feed_forward(const Tensor& x, const std::string& prefix, std::mt19937_64* rng) const;
  Tensor embed(std::span<const std::size_t> ids, std::mt19937_64* rng) const;
  Tensor drop(const Tensor& x, std::mt19937_64* rng) const;

  ModelConfig config_;
  const ad::ParamStore& params_;
};

// Encodes [mup; SEP; ktp] and mean-pools the rows at `mask_positions`
// (indices into mup).
Encoded encode_prompts(const SeqEncoder& model, std::span<const std::size_t> mup,
                       std::span<const std::size_t> ktp, std::span<const std::size_t> mask_positions,
                       std::size_t sep_id, std::mt19937_64* rng = nullptr);

// Summed negative log-likelihood of target[1..] given target[..n-1] and the
// encoder memory. PAD targets are ignored.
Tensor nll_from_memory(const SeqEncoder& model, const Tensor& memory,
                       std::span<const std::size_t> target, std::size_t pad_id,
                       std::mt19937_64* rng = nullptr);

Tensor plm_loss(const SeqEncoder& model, std::span<const std::size_t> mup,
                std::span<const std::size_t> ktp, std::span<const std::size_t> target,
                std::size_t sep_id, std::size_t pad_id, std::mt19937_64* rng = nullptr);

}  // namespace hekp::seqenc
