#include "hekp/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

#include "hekp/error.hpp"
#include "hekp/text.hpp"

namespace hekp::knowledge {

namespace {

constexpr std::string_view kPunctuation = ".,;:!?()[]\"'";

bool is_punct(char c) { return kPunctuation.find(c) != std::string_view::npos; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

constexpr std::string_view kSpecials[] = {Tokenizer::kPad,  Tokenizer::kBos, Tokenizer::kEos,
                                          Tokenizer::kMask, Tokenizer::kSep, Tokenizer::kUnk};

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

KnowledgeGraph augment_kg(const KnowledgeGraph& kg, const std::vector<corpus::Basket>& sequence,
                          std::span<const std::string> catalog) {
  KnowledgeGraph aug = kg;
  const std::string root(kSequenceRoot);
  aug.add_entity(root);
  for (const auto& basket : sequence)
    for (corpus::ItemIndex i : basket) aug.add({root, std::string(kConsistOf), catalog[i]});
  return aug;
}

TripletSequence build_knowledge_tree(const KnowledgeGraph& aug, std::string_view root,
                                     std::size_t n_hops, std::size_t beam_width,
                                     const std::unordered_map<std::string, double>* frequency) {
  const std::string root_id(root);
  if (!aug.has_entity(root_id)) throw Error("build_knowledge_tree: root '" + root_id + "' not in graph");
  if (n_hops < 1 || beam_width < 1) throw Error("build_knowledge_tree: n_hops and beam_width must be >= 1");

  auto freq_of = [frequency](const std::string& e) {
    if (!frequency) return 0.0;
    auto it = frequency->find(e);
    return it == frequency->end() ? 0.0 : it->second;
  };

  TripletSequence out;
  std::unordered_set<std::string> visited{root_id};
  std::vector<std::string> frontier{root_id};
  for (std::size_t depth = 0; depth < n_hops && !frontier.empty(); ++depth) {
    struct Candidate {
      std::size_t parent_pos;
      std::size_t triple;
    };
    // First edge (frontier order, then relation) reaching each new entity.
    std::map<std::string, Candidate> best;
    for (std::size_t pos = 0; pos < frontier.size(); ++pos) {
      std::vector<std::size_t> edges = aug.outgoing(frontier[pos]);
      std::sort(edges.begin(), edges.end(), [&](std::size_t a, std::size_t b) {
        const Triplet& ta = aug.triples()[a];
        const Triplet& tb = aug.triples()[b];
        return std::tie(ta.relation, ta.tail) < std::tie(tb.relation, tb.tail);
      });
      for (std::size_t e : edges) {
        const std::string& tail = aug.triples()[e].tail;
        if (visited.count(tail)) continue;
        best.try_emplace(tail, Candidate{pos, e});
      }
    }
    std::vector<std::pair<std::string, Candidate>> ranked(best.begin(), best.end());
    std::stable_sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      const double fa = freq_of(a.first), fb = freq_of(b.first);
      if (fa != fb) return fa > fb;
      const std::size_t da = aug.out_degree(a.first), db = aug.out_degree(b.first);
      if (da != db) return da > db;
      return a.first < b.first;
    });
    if (ranked.size() > beam_width) ranked.resize(beam_width);
    // Tree order: children grouped under their parent, parents in frontier order.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second.parent_pos < b.second.parent_pos;
    });
    std::vector<std::string> next;
    for (const auto& [entity, cand] : ranked) {
      out.triples.push_back(aug.triples()[cand.triple]);
      out.hop_of.push_back(depth);
      visited.insert(entity);
      next.push_back(entity);
    }
    frontier = std::move(next);
  }
  return out;
}

const std::vector<MupTemplate>& builtin_templates() {
  static const std::vector<MupTemplate> kTemplates = {
      {"User has purchased {n_baskets} baskets.", "Basket_{basket_index} consists of {items}.",
       "Basket_{basket_index} will consist of {masks}"},
      {"The customer made {n_baskets} orders.", "Order {basket_index} contains {items}.",
       "Order {basket_index} will contain {masks}"},
      {"Purchase history with {n_baskets} visits.", "Visit {basket_index} : {items}.",
       "Next visit {basket_index} : {masks}"},
  };
  return kTemplates;
}

std::vector<MupTemplate> load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template file " + path.string());
  std::map<std::size_t, MupTemplate> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto dot = line.find('.');
    const auto eq = line.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq)
      throw ParseError(path.string(), line_no, "expected <id>.<part>=<text>");
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(0, dot));
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "template id is not a number");
    }
    const std::string part = line.substr(dot + 1, eq - dot - 1);
    const std::string text = line.substr(eq + 1);
    MupTemplate& t = by_id[id];
    if (part == "header") t.header = text;
    else if (part == "basket") t.basket = text;
    else if (part == "next") t.next = text;
    else throw ParseError(path.string(), line_no, "unknown template part '" + part + "'");
  }
  std::vector<MupTemplate> out;
  for (std::size_t k = 0; k < by_id.size(); ++k) {
    auto it = by_id.find(k);
    if (it == by_id.end()) throw ParseError(path.string(), 0, "template ids must be 0..n-1");
    if (it->second.next.find("{masks}") == std::string::npos)
      throw ParseError(path.string(), 0, "template " + std::to_string(k) + " lacks {masks}");
    out.push_back(it->second);
  }
  return out;
}

std::string surface_token(std::string_view name) {
  std::string out;
  for (char c : name) out += (is_space(c) || is_punct(c)) ? '_' : c;
  return out.empty() ? "_" : out;
}

PromptText render_mup(const std::vector<corpus::Basket>& sequence,
                      std::span<const std::string> surfaces, std::size_t n_masks,
                      std::size_t template_id, const std::vector<MupTemplate>& templates) {
  if (n_masks < 1) throw Error("render_mup: n_masks must be >= 1");
  if (template_id >= templates.size())
    throw Error("render_mup: unknown template id " + std::to_string(template_id));
  const MupTemplate& t = templates[template_id];

  std::vector<std::string> parts;
  std::string header = t.header;
  replace_all(header, "{n_baskets}", std::to_string(sequence.size()));
  if (!header.empty()) parts.push_back(header);
  for (std::size_t k = 0; k < sequence.size(); ++k) {
    std::vector<std::string> names;
    for (corpus::ItemIndex i : sequence[k]) names.push_back(surface_token(surfaces[i]));
    std::string s = t.basket;
    replace_all(s, "{basket_index}", std::to_string(k));
    replace_all(s, "{items}", join(names, ", "));
    parts.push_back(s);
  }
  std::vector<std::string> masks(n_masks, std::string(Tokenizer::kMask));
  std::string next = t.next;
  replace_all(next, "{basket_index}", std::to_string(sequence.size()));
  replace_all(next, "{masks}", join(masks, ", "));
  parts.push_back(next);
  return {join(parts, " "), PromptKind::kMup, n_masks};
}

std::string ktp_sentence(const Triplet& t, const NameMap& names) {
  auto name = [&names](const std::string& e) {
    auto it = names.find(e);
    return it == names.end() ? e : it->second;
  };
  return "The " + t.relation + " of " + name(t.head) + " is " + name(t.tail) + ".";
}

PromptText render_ktp(const TripletSequence& tree, const NameMap& names, std::size_t token_budget,
                      const Tokenizer& tokenizer) {
  std::vector<std::string> sentences;
  std::size_t used = 0;
  for (const Triplet& t : tree.triples) {
    if (t.head == kSequenceRoot) continue;
    std::string s = ktp_sentence(t, names);
    const std::size_t n = tokenizer.count(s);
    if (used + n > token_budget) break;
    used += n;
    sentences.push_back(std::move(s));
  }
  return {join(sentences, " "), PromptKind::kKtp, 0};
}

Tokenizer::Tokenizer(const std::vector<std::string>& tokens) {
  for (std::string_view s : kSpecials) tokens_.emplace_back(s);
  for (const auto& t : tokens) {
    if (std::find(std::begin(kSpecials), std::end(kSpecials), t) != std::end(kSpecials)) continue;
    tokens_.push_back(t);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw Error("Tokenizer: duplicate token '" + tokens_[i] + "'");
  }
}

std::vector<std::string> Tokenizer::split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (c == '[') {
      bool matched = false;
      for (std::string_view s : kSpecials) {
        if (text.substr(i, s.size()) == s) {
          flush();
          out.emplace_back(s);
          i += s.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      word += c;
    }
    ++i;
  }
  flush();
  return out;
}

bool Tokenizer::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::size_t Tokenizer::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id() : it->second;
}

std::vector<std::size_t> Tokenizer::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

Tokenizer build_vocab(const std::vector<std::string>& corpus, std::size_t min_count,
                      const std::vector<std::string>& forced) {
  if (corpus.empty()) throw Error("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& w : Tokenizer::split_words(text)) ++counts[w];
  std::set<std::string> vocab;
  for (const auto& [w, c] : counts)
    if (c >= min_count) vocab.insert(w);
  for (const auto& f : forced) vocab.insert(surface_token(f));
  for (std::string_view s : kSpecials) vocab.erase(std::string(s));
  return Tokenizer(std::vector<std::string>(vocab.begin(), vocab.end()));
}

TokenizedPrompt tokenize(const Tokenizer& tok, const PromptText& prompt) {
  TokenizedPrompt out;
  out.ids = tok.encode(prompt.text);
  for (std::size_t i = 0; i < out.ids.size(); ++i)
    if (out.ids[i] == tok.mask_id()) out.mask_positions.push_back(i);
  return out;
}

}  // namespace hekp::knowledge
