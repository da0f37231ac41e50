#include <algorithm>

#include "hekp/error.hpp"
#include "hekp/train.hpp"

namespace hekp {

using knowledge::Tokenizer;

PromptBuilder::PromptBuilder(const ExperimentConfig& config, const Tokenizer& tok,
                             const std::vector<std::string>& catalog,
                             const std::vector<std::string>& surfaces,
                             const std::vector<double>& item_counts,
                             const knowledge::KnowledgeGraph& kg)
    : config_(config), tok_(tok), catalog_(catalog), surfaces_(surfaces), kg_(kg) {
  templates_ = config.knowledge.templates_file.empty()
                   ? knowledge::builtin_templates()
                   : knowledge::load_templates(config.knowledge.templates_file);
  if (config.knowledge.template_id >= templates_.size())
    throw ConfigError("knowledge.template_id " + std::to_string(config.knowledge.template_id) +
                      " exceeds the " + std::to_string(templates_.size()) + " available templates");
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    names_[catalog[i]] = knowledge::surface_token(surfaces[i]);
    if (i < item_counts.size()) frequency_[catalog[i]] = item_counts[i];
  }
}

std::string PromptBuilder::mup_text(const std::vector<corpus::Basket>& history, std::size_t n_masks) const {
  return knowledge::render_mup(history, surfaces_, n_masks, config_.knowledge.template_id, templates_).text;
}

std::string PromptBuilder::ktp_text(const std::vector<corpus::Basket>& history, std::size_t budget) const {
  if (config_.train.ablate.no_ktp || budget == 0) return {};
  const knowledge::KnowledgeGraph aug = knowledge::augment_kg(kg_, history, catalog_);
  const knowledge::TripletSequence tree =
      knowledge::build_knowledge_tree(aug, knowledge::kSequenceRoot, config_.knowledge.n_hops,
                                      config_.knowledge.beam_width, &frequency_);
  return knowledge::render_ktp(tree, names_, budget, tok_).text;
}

PromptIds PromptBuilder::build(const std::vector<corpus::Basket>& history, std::size_t n_masks) const {
  const knowledge::TokenizedPrompt mup =
      knowledge::tokenize(tok_, {mup_text(history, n_masks), knowledge::PromptKind::kMup, n_masks});
  const std::size_t limit = std::min(config_.knowledge.token_budget, config_.model.max_tokens);
  if (mup.ids.size() + 1 > limit)
    throw DataError("prompt: MUP of " + std::to_string(mup.ids.size()) +
                    " tokens does not fit the token budget of " + std::to_string(limit));
  PromptIds out;
  out.mup = mup.ids;
  out.mask_positions = mup.mask_positions;
  out.ktp = tok_.encode(ktp_text(history, limit - mup.ids.size() - 1));
  return out;
}

Tokenizer build_tokenizer(const ExperimentConfig& config, const corpus::BasketDataset& train,
                          const knowledge::KnowledgeGraph& kg) {
  std::vector<std::string> surfaces;
  for (std::size_t i = 0; i < train.catalog.size(); ++i) surfaces.push_back(train.surface_name(i));
  const auto templates = config.knowledge.templates_file.empty()
                             ? knowledge::builtin_templates()
                             : knowledge::load_templates(config.knowledge.templates_file);
  knowledge::NameMap names;
  for (std::size_t i = 0; i < train.catalog.size(); ++i)
    names[train.catalog[i]] = knowledge::surface_token(surfaces[i]);

  std::vector<std::string> corpus;
  for (const auto& s : train.sequences) {
    if (s.baskets.size() < 2) continue;
    const std::vector<corpus::Basket> history(s.baskets.begin(), s.baskets.end() - 1);
    corpus.push_back(
        knowledge::render_mup(history, surfaces, s.baskets.back().size(), config.knowledge.template_id, templates)
            .text);
  }
  for (const auto& t : kg.triples()) corpus.push_back(knowledge::ktp_sentence(t, names));
  corpus.push_back(",");
  return knowledge::build_vocab(corpus, config.knowledge.vocab_min_count, surfaces);
}

}  // namespace hekp
