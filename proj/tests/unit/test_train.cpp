#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hekp/error.hpp"
#include "hekp/train.hpp"

using namespace hekp;

namespace {

struct Fixture {
  corpus::BasketDataset train, val;
  knowledge::KnowledgeGraph kg;
  ExperimentConfig config;
};

Fixture make_fixture(std::size_t n_train = 5) {
  corpus::SyntheticSpec spec;
  spec.n_users = 12;
  spec.n_items = 16;
  spec.n_patterns = 3;
  spec.pattern_size = 4;
  spec.n_baskets_per_user = 5;
  const corpus::SyntheticData data = corpus::gen_synthetic(spec);

  Fixture f;
  f.config.model.d_model = 16;
  f.config.model.n_heads = 2;
  f.config.model.n_enc_layers = 1;
  f.config.model.n_dec_layers = 1;
  f.config.model.ffn_mult = 2;
  f.config.model.max_tokens = 160;
  f.config.knowledge.token_budget = 160;
  f.config.knowledge.beam_width = 3;
  f.config.knowledge.n_hops = 2;
  f.config.relenc.d2 = 8;
  f.config.relenc.d3 = 4;
  f.config.relenc.n_experts = 2;
  f.config.relenc.top_k = 3;
  f.config.train.epochs = 1;
  f.config.train.batch_size = 2;
  f.config.train.lr_backbone = 1e-3;
  f.config.train.lr_overhead = 1e-2;

  const corpus::BasketDataset all = corpus::preprocess(data.events, f.config.preprocess_rules());
  f.train = f.val = all;
  f.train.sequences.assign(all.sequences.begin(), all.sequences.begin() + n_train);
  f.val.sequences.assign(all.sequences.begin() + n_train, all.sequences.begin() + n_train + 3);
  f.kg = data.kg;
  return f;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hekp_test_" + name);
}

}  // namespace

TEST(Train, OneEpochCheckpointRoundTripReproducesValidationMetric) {
  const Fixture f = make_fixture();
  std::ostringstream log;
  const TrainResult r = train(f.train, f.val, f.kg, f.config, &log);
  ASSERT_EQ(r.epochs.size(), 1u);
  EXPECT_EQ(r.best.val_hr5, r.epochs[0].val_hr5);

  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(r.best, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.config, r.best.config);
  EXPECT_EQ(back.vocab, r.best.vocab);
  EXPECT_EQ(back.catalog, r.best.catalog);
  EXPECT_EQ(back.item_counts, r.best.item_counts);
  ASSERT_EQ(back.params.entries().size(), r.best.params.entries().size());
  for (std::size_t k = 0; k < back.params.entries().size(); ++k) {
    const auto a = back.params.entries()[k].second.data(), b = r.best.params.entries()[k].second.data();
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << back.params.entries()[k].first;
  }
  const eval::MetricsReport rep = evaluate_checkpoint(back, f.val, f.kg, {5});
  EXPECT_EQ(rep.at_k.at(5).hr, r.best.val_hr5);

  // Saving the loaded checkpoint again reproduces the file.
  const auto again = temp_path("roundtrip2.ckpt");
  save_checkpoint(back, again);
  EXPECT_EQ(file_bytes(path), file_bytes(again));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST(Train, LogHasHeaderThenOneJsonLinePerEpoch) {
  Fixture f = make_fixture();
  f.config.train.epochs = 2;
  std::ostringstream log;
  train(f.train, f.val, f.kg, f.config, &log);
  std::istringstream lines(log.str());
  std::string header, e0, e1, extra;
  std::getline(lines, header);
  std::getline(lines, e0);
  std::getline(lines, e1);
  EXPECT_FALSE(std::getline(lines, extra));
  EXPECT_NE(header.find("\"ktp_mode\":\"knowledge_tree\""), std::string::npos);
  for (const char* key : {"\"epoch\":0", "\"l_plm\":", "\"l_rec\":", "\"l_bi\":", "\"l_ii\":", "\"val_hr5\":"})
    EXPECT_NE(e0.find(key), std::string::npos) << key;
  EXPECT_NE(e1.find("\"epoch\":1"), std::string::npos);
}

TEST(Train, DeterministicAndIndependentOfWorkers) {
  Fixture f = make_fixture(6);
  const TrainResult a = train(f.train, f.val, f.kg, f.config);
  const TrainResult b = train(f.train, f.val, f.kg, f.config);
  f.config.train.workers = 3;
  TrainResult c = train(f.train, f.val, f.kg, f.config);
  c.best.config.train.workers = 1;
  EXPECT_EQ(a.epochs[0].l_plm, b.epochs[0].l_plm);
  EXPECT_EQ(a.epochs[0].l_ii, b.epochs[0].l_ii);
  EXPECT_EQ(a.epochs[0].l_rec, c.epochs[0].l_rec);
  const auto pa = temp_path("det_a.ckpt"), pb = temp_path("det_b.ckpt"), pc = temp_path("det_c.ckpt");
  save_checkpoint(a.best, pa);
  save_checkpoint(b.best, pb);
  save_checkpoint(c.best, pc);
  EXPECT_EQ(file_bytes(pa), file_bytes(pb));
  EXPECT_EQ(file_bytes(pa), file_bytes(pc));
  for (const auto& p : {pa, pb, pc}) std::filesystem::remove(p);
}

TEST(Train, EveryAblationRuns) {
  for (int which = 0; which < 4; ++which) {
    Fixture f = make_fixture();
    auto& ab = f.config.train.ablate;
    (which == 0 ? ab.no_gcn : which == 1 ? ab.no_hypergcn : which == 2 ? ab.no_fbg : ab.no_ktp) = true;
    std::ostringstream log;
    const TrainResult r = train(f.train, f.val, f.kg, f.config, &log);
    EXPECT_EQ(r.epochs.size(), 1u) << which;
    if (which == 3) EXPECT_NE(log.str().find("\"ktp_mode\":\"empty\""), std::string::npos);
    if (which == 2) EXPECT_FALSE(r.best.config.train.ablate.no_gcn);
  }
}

TEST(Train, StepRebuildAndDiagonalGateRun) {
  Fixture f = make_fixture();
  f.config.train.rebuild = HypergraphRebuild::kStep;
  f.config.train.diagonal_gate = true;
  const TrainResult r = train(f.train, f.val, f.kg, f.config);
  EXPECT_EQ(r.best.params.at("head.w2").rank(), 1u);
}

TEST(Train, PromptsRespectBudgetAndKeepMup) {
  Fixture f = make_fixture();
  f.config.knowledge.token_budget = 40;
  const knowledge::Tokenizer tok = build_tokenizer(f.config, f.train, f.kg);
  std::vector<std::string> surfaces;
  for (std::size_t i = 0; i < f.train.catalog.size(); ++i) surfaces.push_back(f.train.surface_name(i));
  const std::vector<double> counts(f.train.catalog.size(), 1.0);
  const PromptBuilder pb(f.config, tok, f.train.catalog, surfaces, counts, f.kg);
  for (const auto& s : f.train.sequences) {
    const std::vector<corpus::Basket> history(s.baskets.begin(), s.baskets.begin() + 2);
    const PromptIds p = pb.build(history, 3);
    EXPECT_LE(p.mup.size() + 1 + p.ktp.size(), 40u);
    EXPECT_EQ(p.mup, tok.encode(pb.mup_text(history, 3)));
    EXPECT_EQ(p.mask_positions.size(), 3u);
  }
  f.config.knowledge.token_budget = 5;
  const PromptBuilder tiny(f.config, tok, f.train.catalog, surfaces, counts, f.kg);
  EXPECT_THROW(tiny.build({f.train.sequences[0].baskets[0]}, 2), DataError);
}

TEST(Train, LoadRejectsCorruptFiles) {
  const auto path = temp_path("corrupt.ckpt");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOT-A-CHECKPOINT\n";
  }
  EXPECT_THROW(load_checkpoint(path), DataError);
  {
    std::ofstream out(path, std::ios::binary);
    out << kCheckpointMagic << "\n" << std::string(3, '\0');
  }
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Train, RecommenderRanksWholeCatalog) {
  const Fixture f = make_fixture();
  const TrainResult r = train(f.train, f.val, f.kg, f.config);
  const Recommender rec(r.best, f.kg);
  const auto& s = f.val.sequences[0];
  const std::vector<double> scores = rec.score(s.baskets, 4);
  EXPECT_EQ(scores.size(), f.train.catalog.size());
  const auto top = rec.rank(s.baskets, 4);
  EXPECT_EQ(top.size(), 4u);
  for (std::size_t k = 1; k < top.size(); ++k) EXPECT_GE(scores[top[k - 1]], scores[top[k]]);
}
