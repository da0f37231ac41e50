#pragma once

// Raw interaction ingestion, basket preprocessing, splitting and synthetic
// data generation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hekp/kg.hpp"

namespace hekp::corpus {

using ItemIndex = std::size_t;
// Sorted, duplicate-free item indices.
using Basket = std::vector<ItemIndex>;

struct InteractionEvent {
  std::string user_id;
  std::int64_t timestamp = 0;
  std::string item_id;

  bool operator==(const InteractionEvent&) const = default;
};

struct PreprocessRules {
  std::size_t min_basket_size = 2;
  std::size_t max_basket_size = 5;
  std::size_t min_seq_len = 4;
  std::size_t max_seq_len = 10;
  std::uint64_t sample_seed = 0;

  void validate() const;
  bool operator==(const PreprocessRules&) const = default;
};

struct UserSequence {
  std::string user_id;
  std::vector<std::int64_t> timestamps;  // strictly increasing
  std::vector<Basket> baskets;

  bool operator==(const UserSequence&) const = default;
};

struct BasketDataset {
  std::vector<std::string> catalog;       // lexicographic; defines item indices
  std::vector<UserSequence> sequences;    // ordered by user_id
  std::map<ItemIndex, std::string> names;  // optional surface names
  PreprocessRules rules;

  std::optional<ItemIndex> index_of(const std::string& item_id) const;
  // Surface name if known, else the item id.
  const std::string& surface_name(ItemIndex item) const;
  const UserSequence* find_user(const std::string& user_id) const;
  std::size_t basket_count() const;

  bool operator==(const BasketDataset&) const = default;
};

struct FrequencyVector {
  std::vector<double> values;

  bool is_zero() const;
  // beta: indicator of positive entries.
  std::vector<double> indicator() const;
};

struct SyntheticSpec {
  std::size_t n_users = 200;
  std::size_t n_items = 50;
  std::size_t n_baskets_per_user = 8;
  std::size_t n_patterns = 10;
  std::size_t pattern_size = 5;
  double noise_rate = 0.1;
  std::size_t kg_attrs_per_item = 2;
  // Probability that a user migrates from a pattern to its successor pattern
  // for the final stretch of the sequence.
  double drift_rate = 0.5;
  std::size_t max_basket_size = 5;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticData {
  std::vector<InteractionEvent> events;
  knowledge::KnowledgeGraph kg;
  std::vector<std::vector<ItemIndex>> patterns;  // item ordinal lists
  std::vector<std::size_t> successor;             // pattern -> next pattern
};

std::vector<InteractionEvent> load_interactions(const std::filesystem::path& path);
void save_interactions(const std::vector<InteractionEvent>& events,
                       const std::filesystem::path& path);
// TSV `item_id<TAB>surface_name`.
std::map<std::string, std::string> load_item_names(const std::filesystem::path& path);
void attach_names(BasketDataset& dataset, const std::map<std::string, std::string>& names);

BasketDataset preprocess(const std::vector<InteractionEvent>& events, const PreprocessRules& rules);
// Inverse view: one event per (user, basket timestamp, item).
std::vector<InteractionEvent> to_events(const BasketDataset& dataset);

struct Split {
  BasketDataset train;
  BasketDataset val;
  BasketDataset test;
};
Split split(const BasketDataset& dataset, const std::array<double, 3>& ratios, std::uint64_t seed);

FrequencyVector frequency_vector(const std::vector<Basket>& sequence, std::size_t catalog_size);

SyntheticData gen_synthetic(const SyntheticSpec& spec);
std::string synthetic_item_id(std::size_t ordinal, std::size_t n_items);

// Line-delimited export with a one-line header carrying seed and rule values.
void write_dataset(const BasketDataset& dataset, const std::filesystem::path& path);
BasketDataset read_dataset(const std::filesystem::path& path);

}  // namespace hekp::corpus
