#pragma once

// End-to-end model: prompt construction, the joint training loop with
// best-validation selection, the self-contained checkpoint and the
// recommender that serves it.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "hekp/config.hpp"
#include "hekp/corpus.hpp"
#include "hekp/eval.hpp"
#include "hekp/kg.hpp"
#include "hekp/knowledge.hpp"
#include "hekp/params.hpp"

namespace hekp {

inline constexpr std::string_view kCheckpointMagic = "HEKP4NBR-CKPT-v1";

struct Checkpoint {
  ExperimentConfig config;
  std::vector<std::string> vocab;     // tokenizer tokens after the specials
  std::vector<std::string> catalog;   // item ids by index
  std::vector<std::string> surfaces;  // display name per item
  std::vector<double> item_counts;    // training interaction counts per item
  ad::ParamStore params;
  ad::Tensor items;  // refined item embeddings used for scoring
  std::size_t epoch = 0;
  double val_hr5 = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct PromptIds {
  std::vector<std::size_t> mup;
  std::vector<std::size_t> mask_positions;
  std::vector<std::size_t> ktp;
};

// Renders and tokenizes the MUP and KTP for one basket history. The MUP is
// never truncated; the KTP receives what is left of the token budget.
class PromptBuilder {
 public:
  PromptBuilder(const ExperimentConfig& config, const knowledge::Tokenizer& tok,
                const std::vector<std::string>& catalog, const std::vector<std::string>& surfaces,
                const std::vector<double>& item_counts, const knowledge::KnowledgeGraph& kg);

  PromptIds build(const std::vector<corpus::Basket>& history, std::size_t n_masks) const;
  std::string mup_text(const std::vector<corpus::Basket>& history, std::size_t n_masks) const;
  std::string ktp_text(const std::vector<corpus::Basket>& history, std::size_t budget) const;

  const knowledge::NameMap& names() const { return names_; }

 private:
  const ExperimentConfig& config_;
  const knowledge::Tokenizer& tok_;
  const std::vector<std::string>& catalog_;
  const std::vector<std::string>& surfaces_;
  const knowledge::KnowledgeGraph& kg_;
  std::vector<knowledge::MupTemplate> templates_;
  knowledge::NameMap names_;
  std::unordered_map<std::string, double> frequency_;
};

// Builds the tokenizer vocabulary from training prompts, KG sentences and
// forced item surface names.
knowledge::Tokenizer build_tokenizer(const ExperimentConfig& config, const corpus::BasketDataset& train,
                                     const knowledge::KnowledgeGraph& kg);

// Serves a checkpoint. Keeps references to both arguments.
class Recommender {
 public:
  Recommender(const Checkpoint& ckpt, const knowledge::KnowledgeGraph& kg);

  // Raw scores over the catalog for the basket after `history`, with a
  // MUP carrying `n_masks` masks.
  std::vector<double> score(const std::vector<corpus::Basket>& history, std::size_t n_masks) const;
  std::vector<std::size_t> rank(const std::vector<corpus::Basket>& history, std::size_t k,
                                const std::set<std::size_t>& exclude = {}) const;
  eval::Ranker ranker() const;
  const knowledge::Tokenizer& tokenizer() const { return tok_; }
  const PromptBuilder& prompts() const { return *prompts_; }

 private:
  const Checkpoint& ckpt_;
  knowledge::Tokenizer tok_;
  std::unique_ptr<PromptBuilder> prompts_;
};

eval::MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const corpus::BasketDataset& split,
                                        const knowledge::KnowledgeGraph& kg,
                                        const std::vector<std::size_t>& ks);

struct EpochLog {
  std::size_t epoch = 0;
  double l_plm = 0.0;
  double l_rec = 0.0;
  double l_bi = 0.0;
  double l_ii = 0.0;
  double val_hr5 = 0.0;

  std::string to_json() const;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> epochs;
};

// Joint training over the training users; each user contributes one example
// (history = all but the last basket, target = the last). After every epoch
// HR@5 on `val` is measured and the best parameters are kept. Epoch logs go
// to `log` as one JSON object per line when it is non-null.
TrainResult train(const corpus::BasketDataset& train_set, const corpus::BasketDataset& val_set,
                  const knowledge::KnowledgeGraph& kg, const ExperimentConfig& config,
                  std::ostream* log = nullptr);

}  // namespace hekp
