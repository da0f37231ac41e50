#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "hekp/error.hpp"
#include "hekp/knowledge.hpp"

using namespace hekp::knowledge;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / ("hekp_knowledge_" + name);
  std::ofstream(p) << content;
  return p;
}

KnowledgeGraph random_kg(std::mt19937_64& rng, std::size_t n_entities, std::size_t n_edges) {
  KnowledgeGraph kg;
  for (std::size_t k = 0; k < n_edges; ++k) {
    const std::size_t h = rng() % n_entities, t = rng() % n_entities;
    kg.add({"e" + std::to_string(h), "r" + std::to_string(rng() % 3), "e" + std::to_string(t)});
  }
  return kg;
}

// Plain BFS over first visits, unbounded beam: the set of tails reached
// within `hops` steps from the root.
std::set<std::string> bfs_reachable(const KnowledgeGraph& kg, const std::string& root, std::size_t hops) {
  std::set<std::string> seen{root};
  std::vector<std::string> frontier{root};
  for (std::size_t d = 0; d < hops; ++d) {
    std::vector<std::string> next;
    for (const auto& e : frontier)
      for (std::size_t idx : kg.outgoing(e))
        if (seen.insert(kg.triples()[idx].tail).second) next.push_back(kg.triples()[idx].tail);
    frontier = next;
  }
  seen.erase(root);
  return seen;
}

}  // namespace

TEST(LoadKg, ParsesAndDeduplicates) {
  KnowledgeGraph kg = load_kg(temp_file("one.tsv", "aspirin\tfunction_is\tpain relief\n"));
  EXPECT_EQ(kg.entities().size(), 2u);
  EXPECT_EQ(kg.relations().size(), 1u);
  EXPECT_EQ(kg.triples().size(), 1u);
  KnowledgeGraph dup = load_kg(temp_file("dup.tsv", "a\tr\tb\na\tr\tb\n"));
  EXPECT_EQ(dup.triples().size(), 1u);
  EXPECT_TRUE(load_kg(temp_file("empty.tsv", "")).triples().empty());
  try {
    load_kg(temp_file("bad.tsv", "a\tr\tb\na\tr\n"));
    FAIL();
  } catch (const hekp::ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(AugmentKg, AddsRootEdgesOnce) {
  KnowledgeGraph kg;
  kg.add({"A", "category_is", "c"});
  const std::vector<std::string> catalog{"A", "B"};
  KnowledgeGraph aug = augment_kg(kg, {{0, 1}, {1}}, catalog);
  EXPECT_EQ(aug.triples().size(), 3u);
  EXPECT_EQ(aug.out_degree(std::string(kSequenceRoot)), 2u);
  // B was not in the original graph and is created.
  EXPECT_EQ(aug.entities().size(), kg.entities().size() + 2);
  EXPECT_EQ(kg.triples().size(), 1u);

  KnowledgeGraph empty_aug = augment_kg(kg, {}, catalog);
  EXPECT_EQ(empty_aug.triples().size(), 1u);
  EXPECT_TRUE(empty_aug.has_entity(std::string(kSequenceRoot)));
}

TEST(KnowledgeTree, OneHopIsConsistOfEdges) {
  KnowledgeGraph kg;
  kg.add({"A", "r", "x"});
  const std::vector<std::string> catalog{"A", "B", "C"};
  KnowledgeGraph aug = augment_kg(kg, {{0, 1, 2}}, catalog);
  TripletSequence t = build_knowledge_tree(aug, kSequenceRoot, 1, kUnlimitedBeam);
  ASSERT_EQ(t.triples.size(), 3u);
  for (const auto& tr : t.triples) EXPECT_EQ(tr.relation, kConsistOf);
  TripletSequence narrow = build_knowledge_tree(aug, kSequenceRoot, 1, 2);
  EXPECT_EQ(narrow.triples.size(), 2u);
  // Out-degree breaks the frequency tie: A has an outgoing edge.
  EXPECT_EQ(narrow.triples[0].tail, "A");
}

TEST(KnowledgeTree, HopBound) {
  KnowledgeGraph kg;
  kg.add({"A", "r", "x"});
  kg.add({"x", "r", "y"});
  const std::vector<std::string> catalog{"A"};
  KnowledgeGraph aug = augment_kg(kg, {{0}}, catalog);
  TripletSequence t = build_knowledge_tree(aug, kSequenceRoot, 2, kUnlimitedBeam);
  ASSERT_EQ(t.triples.size(), 2u);
  EXPECT_EQ(t.triples[1].tail, "x");
  EXPECT_EQ(t.hop_of, (std::vector<std::size_t>{0, 1}));
}

TEST(KnowledgeTree, FrequencyRanksFirst) {
  KnowledgeGraph kg;
  kg.add({"A", "r", "x"});
  const std::vector<std::string> catalog{"A", "B"};
  KnowledgeGraph aug = augment_kg(kg, {{0, 1}}, catalog);
  std::unordered_map<std::string, double> freq{{"B", 0.9}, {"A", 0.1}};
  TripletSequence t = build_knowledge_tree(aug, kSequenceRoot, 1, 1, &freq);
  ASSERT_EQ(t.triples.size(), 1u);
  EXPECT_EQ(t.triples[0].tail, "B");
}

TEST(KnowledgeTree, MissingRootThrows) {
  EXPECT_THROW(build_knowledge_tree(KnowledgeGraph{}, kSequenceRoot, 1, 1), hekp::Error);
}

TEST(KnowledgeTree, RandomGraphProperties) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    KnowledgeGraph kg = random_kg(rng, 12, 25);
    std::vector<std::string> catalog;
    for (int i = 0; i < 12; ++i) catalog.push_back("e" + std::to_string(i));
    std::vector<hekp::corpus::Basket> seq{{rng() % 12, rng() % 12}, {rng() % 12}};
    for (auto& b : seq) {
      std::sort(b.begin(), b.end());
      b.erase(std::unique(b.begin(), b.end()), b.end());
    }
    KnowledgeGraph aug = augment_kg(kg, seq, catalog);
    const std::size_t hops = 1 + rng() % 3;
    const std::size_t beam = 1 + rng() % 4;
    TripletSequence t = build_knowledge_tree(aug, kSequenceRoot, hops, beam);
    EXPECT_TRUE(std::is_sorted(t.hop_of.begin(), t.hop_of.end()));
    for (std::size_t h : t.hop_of) EXPECT_LT(h, hops);
    std::set<std::string> tails;
    for (const auto& tr : t.triples) EXPECT_TRUE(tails.insert(tr.tail).second);
    TripletSequence again = build_knowledge_tree(aug, kSequenceRoot, hops, beam);
    EXPECT_EQ(t.triples, again.triples);

    // Unlimited beam reaches exactly the BFS first-visit set.
    TripletSequence full = build_knowledge_tree(aug, kSequenceRoot, hops, kUnlimitedBeam);
    std::set<std::string> full_tails;
    for (const auto& tr : full.triples) full_tails.insert(tr.tail);
    EXPECT_EQ(full_tails, bfs_reachable(aug, std::string(kSequenceRoot), hops));
    EXPECT_EQ(full.triples.size(), full_tails.size());
  }
}

TEST(RenderMup, WorkedExample) {
  const std::vector<std::string> names{"A", "B", "C"};
  PromptText p = render_mup({{0, 1}, {1, 2}}, names, 2, 0);
  EXPECT_EQ(p.text,
            "User has purchased 2 baskets. Basket_0 consists of A, B. Basket_1 consists of B, C. "
            "Basket_2 will consist of [MASK], [MASK]");
  EXPECT_EQ(p.text, render_mup({{0, 1}, {1, 2}}, names, 2, 0).text);
  EXPECT_THROW(render_mup({{0}}, names, 1, 99), hekp::Error);
  EXPECT_THROW(render_mup({{0}}, names, 0, 0), hekp::Error);
  EXPECT_GE(builtin_templates().size(), 3u);
}

TEST(RenderMup, MaskCountRoundTrip) {
  std::mt19937_64 rng(23);
  std::vector<std::string> names;
  for (int i = 0; i < 10; ++i) names.push_back("item" + std::to_string(i));
  Tokenizer tok = build_vocab({"x"}, 1, names);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<hekp::corpus::Basket> seq(1 + rng() % 4);
    for (auto& b : seq) b = {rng() % 5, 5 + rng() % 5};
    const std::size_t m = 1 + rng() % 6;
    PromptText p = render_mup(seq, names, m, rng() % builtin_templates().size());
    TokenizedPrompt t = tokenize(tok, p);
    EXPECT_EQ(t.mask_positions.size(), m);
    for (std::size_t pos : t.mask_positions) EXPECT_EQ(t.ids[pos], tok.mask_id());
  }
}

TEST(LoadTemplates, ParsesNumberedParts) {
  auto tpl = load_templates(temp_file("tpl.txt",
                                      "# custom\n0.header=Seen {n_baskets}.\n0.basket=B{basket_index}: "
                                      "{items}.\n0.next=Next: {masks}\n"));
  ASSERT_EQ(tpl.size(), 1u);
  const std::vector<std::string> names{"A"};
  EXPECT_EQ(render_mup({{0}}, names, 1, 0, tpl).text, "Seen 1. B0: A. Next: [MASK]");
  EXPECT_THROW(load_templates(temp_file("tpl_bad.txt", "0.footer=x\n")), hekp::ParseError);
}

TEST(RenderKtp, Sentences) {
  Tokenizer tok = build_vocab({"x"}, 1);
  TripletSequence tree;
  tree.triples = {{"aspirin", "function_is", "pain relief"}};
  tree.hop_of = {1};
  EXPECT_EQ(render_ktp(tree, {}, 512, tok).text, "The function_is of aspirin is pain relief.");
  EXPECT_EQ(render_ktp(tree, {}, 3, tok).text, "");
  EXPECT_EQ(render_ktp(tree, {}, 0, tok).text, "");
  NameMap names{{"aspirin", "Aspirin"}};
  EXPECT_EQ(render_ktp(tree, names, 512, tok).text, "The function_is of Aspirin is pain relief.");
}

TEST(RenderKtp, SkipsRootTriples) {
  Tokenizer tok = build_vocab({"x"}, 1);
  TripletSequence tree;
  tree.triples = {{std::string(kSequenceRoot), std::string(kConsistOf), "A"}, {"A", "r", "b"}};
  tree.hop_of = {0, 1};
  EXPECT_EQ(render_ktp(tree, {}, 512, tok).text, "The r of A is b.");
}

TEST(RenderKtp, BudgetCutsAtWholeSentences) {
  Tokenizer tok = build_vocab({"x"}, 1);
  TripletSequence tree;
  for (int k = 0; k < 10; ++k) {
    tree.triples.push_back({"h" + std::to_string(k), "rel", "t" + std::to_string(k)});
    tree.hop_of.push_back(1);
  }
  // Every sentence is 7 tokens; the budget fits 4.5 of them.
  const std::size_t per = tok.count(ktp_sentence(tree.triples[0], {}));
  ASSERT_EQ(per, 7u);
  PromptText p = render_ktp(tree, {}, per * 4 + per / 2, tok);
  EXPECT_EQ(std::count(p.text.begin(), p.text.end(), '.'), 4);
  EXPECT_LE(tok.count(p.text), per * 4 + per / 2);
}

TEST(Tokenizer, SplitsWordsAndSpecials) {
  EXPECT_EQ(Tokenizer::split_words("Basket_2 of [MASK], [MASK]"),
            (std::vector<std::string>{"Basket_2", "of", "[MASK]", ",", "[MASK]"}));
  EXPECT_EQ(Tokenizer::split_words("is pain relief."),
            (std::vector<std::string>{"is", "pain", "relief", "."}));
}

TEST(Tokenizer, VocabCounts) {
  Tokenizer tok = build_vocab({"a a b"}, 2);
  EXPECT_TRUE(tok.contains("a"));
  EXPECT_FALSE(tok.contains("b"));
  EXPECT_EQ(tok.id("b"), tok.unk_id());
  std::set<std::size_t> specials{tok.pad_id(), tok.bos_id(), tok.eos_id(),
                                 tok.mask_id(), tok.sep_id(), tok.unk_id()};
  EXPECT_EQ(specials.size(), 6u);
  for (std::size_t i = 0; i < tok.size(); ++i) EXPECT_EQ(tok.id(tok.token(i)), i);
}

TEST(Tokenizer, ForcedNamesPresent) {
  Tokenizer tok = build_vocab({"nothing here"}, 1, {"GongJi", "pain relief"});
  EXPECT_TRUE(tok.contains("GongJi"));
  EXPECT_TRUE(tok.contains(surface_token("pain relief")));
  EXPECT_EQ(tok.encode(surface_token("pain relief")).size(), 1u);
}

TEST(Tokenizer, TokenizeRecordsMasks) {
  Tokenizer tok = build_vocab({"A"}, 1);
  TokenizedPrompt t = tokenize(tok, {"A [MASK]", PromptKind::kMup, 1});
  EXPECT_EQ(t.ids, (std::vector<std::size_t>{tok.id("A"), tok.mask_id()}));
  EXPECT_EQ(t.mask_positions, (std::vector<std::size_t>{1}));
  EXPECT_EQ(tokenize(tok, {"zzz", PromptKind::kKtp, 0}).ids, (std::vector<std::size_t>{tok.unk_id()}));
}
