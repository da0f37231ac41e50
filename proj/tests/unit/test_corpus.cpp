#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "hekp/corpus.hpp"
#include "hekp/error.hpp"

using namespace hekp::corpus;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / ("hekp_corpus_" + name);
  std::ofstream(p) << content;
  return p;
}

// Adds one basket for `user` at `ts` with `size` items named i<k>.
void add_basket(std::vector<InteractionEvent>& ev, const std::string& user, std::int64_t ts,
                std::size_t size, std::size_t offset = 0) {
  for (std::size_t k = 0; k < size; ++k) ev.push_back({user, ts, "i" + std::to_string(offset + k)});
}

BasketDataset users_dataset(std::size_t n_users) {
  std::vector<InteractionEvent> ev;
  for (std::size_t u = 0; u < n_users; ++u)
    for (int b = 0; b < 4; ++b) add_basket(ev, "u" + std::to_string(100 + u), b, 2, b);
  return preprocess(ev, {});
}

}  // namespace

TEST(LoadInteractions, ParsesAndReportsLine) {
  auto ok = load_interactions(temp_file("ok.tsv", "u1\t5\tapple\n"));
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_EQ(ok[0], (InteractionEvent{"u1", 5, "apple"}));
  EXPECT_TRUE(load_interactions(temp_file("empty.tsv", "")).empty());
  try {
    load_interactions(temp_file("bad.tsv", "u1\t5\n"));
    FAIL();
  } catch (const hekp::ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  EXPECT_THROW(load_interactions("/nonexistent/events.tsv"), hekp::IoError);
}

TEST(Preprocess, DropsSmallBaskets) {
  std::vector<InteractionEvent> ev;
  add_basket(ev, "u", 0, 1);
  for (int b = 1; b <= 4; ++b) add_basket(ev, "u", b, 3);
  BasketDataset d = preprocess(ev, {});
  ASSERT_EQ(d.sequences.size(), 1u);
  EXPECT_EQ(d.sequences[0].baskets.size(), 4u);
  EXPECT_EQ(d.sequences[0].timestamps.front(), 1);
}

TEST(Preprocess, KeepsLastBaskets) {
  std::vector<InteractionEvent> ev;
  for (int b = 0; b < 12; ++b) add_basket(ev, "u", b, 2);
  BasketDataset d = preprocess(ev, {});
  ASSERT_EQ(d.sequences[0].baskets.size(), 10u);
  EXPECT_EQ(d.sequences[0].timestamps.front(), 2);
  EXPECT_EQ(d.sequences[0].timestamps.back(), 11);
}

TEST(Preprocess, DownsamplingIsSeeded) {
  std::vector<InteractionEvent> ev;
  add_basket(ev, "u", 0, 7);
  for (int b = 1; b <= 3; ++b) add_basket(ev, "u", b, 2);
  PreprocessRules rules;
  rules.sample_seed = 42;
  BasketDataset a = preprocess(ev, rules), b = preprocess(ev, rules);
  EXPECT_EQ(a.sequences[0].baskets[0].size(), 5u);
  EXPECT_EQ(a, b);
}

TEST(Preprocess, FiltersEverythingIsAnError) {
  std::vector<InteractionEvent> ev;
  add_basket(ev, "u", 0, 3);
  EXPECT_THROW(preprocess(ev, {}), hekp::DataError);
  EXPECT_THROW(preprocess({}, {}), hekp::DataError);
}

TEST(Preprocess, Invariants) {
  SyntheticSpec spec;
  spec.noise_rate = 0.5;
  BasketDataset d = preprocess(gen_synthetic(spec).events, {});
  EXPECT_TRUE(std::is_sorted(d.catalog.begin(), d.catalog.end()));
  for (const auto& s : d.sequences) {
    EXPECT_GE(s.baskets.size(), 4u);
    EXPECT_LE(s.baskets.size(), 10u);
    EXPECT_TRUE(std::adjacent_find(s.timestamps.begin(), s.timestamps.end(),
                                   std::greater_equal<>()) == s.timestamps.end());
    for (const auto& b : s.baskets) {
      EXPECT_GE(b.size(), 2u);
      EXPECT_LE(b.size(), 5u);
      for (ItemIndex i : b) EXPECT_LT(i, d.catalog.size());
    }
  }
}

TEST(Preprocess, Idempotent) {
  SyntheticSpec spec;
  spec.noise_rate = 0.4;
  spec.n_users = 40;
  BasketDataset once = preprocess(gen_synthetic(spec).events, {});
  BasketDataset twice = preprocess(to_events(once), {});
  EXPECT_EQ(once, twice);
}

TEST(Split, PartitionsByUser) {
  BasketDataset d = users_dataset(10);
  Split s = split(d, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(s.train.sequences.size(), 8u);
  EXPECT_EQ(s.val.sequences.size(), 1u);
  EXPECT_EQ(s.test.sequences.size(), 1u);
  Split again = split(d, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(s.train, again.train);
  EXPECT_EQ(s.test, again.test);
  EXPECT_THROW(split(d, {0.5, 0.5, 0.1}, 1), hekp::DataError);
  EXPECT_THROW(split(users_dataset(2), {0.8, 0.1, 0.1}, 1), hekp::DataError);
}

TEST(Split, DisjointAndExhaustiveForManySeeds) {
  BasketDataset d = users_dataset(23);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Split s = split(d, {0.8, 0.1, 0.1}, seed);
    std::multiset<std::string> seen;
    for (const BasketDataset* part : {&s.train, &s.val, &s.test}) {
      EXPECT_EQ(part->catalog, d.catalog);
      for (const auto& q : part->sequences) seen.insert(q.user_id);
    }
    std::multiset<std::string> all;
    for (const auto& q : d.sequences) all.insert(q.user_id);
    EXPECT_EQ(seen, all);
  }
}

TEST(FrequencyVector, HandCounts) {
  FrequencyVector f = frequency_vector({{0, 1}, {1, 2}}, 3);
  EXPECT_EQ(f.values, (std::vector<double>{0.25, 0.5, 0.25}));
  EXPECT_TRUE(frequency_vector({}, 4).is_zero());
  FrequencyVector one = frequency_vector({{0}}, 3);
  EXPECT_EQ(one.values, (std::vector<double>{1.0, 0.0, 0.0}));
  EXPECT_EQ(one.indicator(), (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(FrequencyVector, SumsToOneOrZero) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<Basket> seq(rng() % 5);
    for (auto& b : seq) {
      std::set<ItemIndex> items;
      for (std::size_t k = 0, m = 1 + rng() % 4; k < m; ++k) items.insert(rng() % n);
      b.assign(items.begin(), items.end());
    }
    FrequencyVector f = frequency_vector(seq, n);
    const double total = std::accumulate(f.values.begin(), f.values.end(), 0.0);
    for (double v : f.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    if (f.is_zero()) EXPECT_TRUE(seq.empty());
    else EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Synthetic, Deterministic) {
  SyntheticSpec spec;
  EXPECT_EQ(gen_synthetic(spec).events, gen_synthetic(spec).events);
}

TEST(Synthetic, NoiseFreeBasketsFitOnePattern) {
  SyntheticSpec spec;
  spec.noise_rate = 0.0;
  SyntheticData data = gen_synthetic(spec);
  std::map<std::pair<std::string, std::int64_t>, std::set<std::string>> baskets;
  for (const auto& e : data.events) baskets[{e.user_id, e.timestamp}].insert(e.item_id);
  for (const auto& [key, items] : baskets) {
    bool fits = false;
    for (const auto& pattern : data.patterns) {
      std::set<std::string> ids;
      for (ItemIndex i : pattern) ids.insert(synthetic_item_id(i, spec.n_items));
      fits = fits || std::includes(ids.begin(), ids.end(), items.begin(), items.end());
    }
    EXPECT_TRUE(fits);
  }
}

TEST(Synthetic, EveryItemHasCategory) {
  SyntheticSpec spec;
  spec.n_items = 100;
  SyntheticData data = gen_synthetic(spec);
  std::set<std::string> categorised;
  for (const auto& t : data.kg.triples())
    if (t.relation == "category_is") categorised.insert(t.head);
  EXPECT_EQ(categorised.size(), 100u);
}

TEST(Synthetic, RejectsBadSpec) {
  SyntheticSpec spec;
  spec.pattern_size = 6;
  EXPECT_THROW(gen_synthetic(spec), hekp::ConfigError);
  spec = {};
  spec.n_patterns = 11;
  EXPECT_THROW(gen_synthetic(spec), hekp::ConfigError);
}

TEST(DatasetFile, RoundTrip) {
  SyntheticSpec spec;
  spec.n_users = 30;
  PreprocessRules rules;
  rules.sample_seed = 99;
  BasketDataset d = preprocess(gen_synthetic(spec).events, rules);
  fs::path p = fs::temp_directory_path() / "hekp_corpus_dataset.txt";
  write_dataset(d, p);
  BasketDataset back = read_dataset(p);
  EXPECT_EQ(back.catalog, d.catalog);
  EXPECT_EQ(back.sequences, d.sequences);
  EXPECT_EQ(back.rules, d.rules);
}
