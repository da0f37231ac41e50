#pragma once

// Knowledge-graph augmentation, knowledge-tree extraction and the two prompt
// renderers (masked user prompt, knowledge tree prompt), plus the word-level
// tokenizer shared by both.

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hekp/corpus.hpp"
#include "hekp/kg.hpp"

namespace hekp::knowledge {

inline constexpr std::string_view kSequenceRoot = "[SEQ]";
inline constexpr std::string_view kConsistOf = "consist_of";
inline constexpr std::size_t kUnlimitedBeam = std::numeric_limits<std::size_t>::max();

// Entity id -> surface string used in prompt text. Missing ids render as-is.
using NameMap = std::unordered_map<std::string, std::string>;

// Returns `kg` plus the root entity and one (root, consist_of, item) triple
// per distinct item of `sequence`, in first-appearance order.
KnowledgeGraph augment_kg(const KnowledgeGraph& kg, const std::vector<corpus::Basket>& sequence,
                          std::span<const std::string> catalog);

struct TripletSequence {
  std::vector<Triplet> triples;
  // Hop distance of each triple's head from the root (root triples are 0).
  std::vector<std::size_t> hop_of;
};

// Breadth-first beam search from `root`. At every depth the unvisited
// children of the frontier are ranked by (training frequency desc,
// out-degree desc, id asc) and at most `beam_width` survive. An entity
// reached by several edges keeps only its first (frontier order) edge.
TripletSequence build_knowledge_tree(
    const KnowledgeGraph& aug, std::string_view root, std::size_t n_hops, std::size_t beam_width,
    const std::unordered_map<std::string, double>* frequency = nullptr);

enum class PromptKind { kMup, kKtp };

struct PromptText {
  std::string text;
  PromptKind kind = PromptKind::kMup;
  std::size_t n_masks = 0;
};

// One masked-user-prompt template. Placeholders: {n_baskets},
// {basket_index}, {items}, {masks}.
struct MupTemplate {
  std::string header;
  std::string basket;
  std::string next;
};

const std::vector<MupTemplate>& builtin_templates();
// Lines of the form `<id>.header=...`, `<id>.basket=...`, `<id>.next=...`.
std::vector<MupTemplate> load_templates(const std::filesystem::path& path);

// Replaces whitespace and punctuation so a name survives tokenization as a
// single word.
std::string surface_token(std::string_view name);

// `surfaces[i]` is the display name of catalog item i.
PromptText render_mup(const std::vector<corpus::Basket>& sequence,
                      std::span<const std::string> surfaces, std::size_t n_masks,
                      std::size_t template_id,
                      const std::vector<MupTemplate>& templates = builtin_templates());

class Tokenizer;

std::string ktp_sentence(const Triplet& t, const NameMap& names);

// Sentences "The {relation} of {head} is {tail}." in tree order, skipping
// triples rooted at the sequence entity, cut at the last whole sentence that
// fits in `token_budget` tokens.
PromptText render_ktp(const TripletSequence& tree, const NameMap& names, std::size_t token_budget,
                      const Tokenizer& tokenizer);

struct TokenizedPrompt {
  std::vector<std::size_t> ids;
  std::vector<std::size_t> mask_positions;
};

class Tokenizer {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kBos = "[BOS]";
  static constexpr std::string_view kEos = "[EOS]";
  static constexpr std::string_view kMask = "[MASK]";
  static constexpr std::string_view kSep = "[SEP]";
  static constexpr std::string_view kUnk = "[UNK]";

  // Specials take ids 0..5 in the order above; `tokens` follow.
  explicit Tokenizer(const std::vector<std::string>& tokens);

  static std::vector<std::string> split_words(std::string_view text);

  std::size_t size() const { return tokens_.size(); }
  std::size_t pad_id() const { return 0; }
  std::size_t bos_id() const { return 1; }
  std::size_t eos_id() const { return 2; }
  std::size_t mask_id() const { return 3; }
  std::size_t sep_id() const { return 4; }
  std::size_t unk_id() const { return 5; }

  bool contains(std::string_view token) const;
  std::size_t id(std::string_view token) const;  // UNK when absent
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(std::string_view text) const;
  std::size_t count(std::string_view text) const { return split_words(text).size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Word-level vocabulary: tokens with count >= min_count plus every entry of
// `forced` (item surface names), sorted for determinism.
Tokenizer build_vocab(const std::vector<std::string>& corpus, std::size_t min_count,
                      const std::vector<std::string>& forced = {});

TokenizedPrompt tokenize(const Tokenizer& tok, const PromptText& prompt);

}  // namespace hekp::knowledge
