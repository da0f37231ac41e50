#pragma once

// Top-k ranking metrics and the per-user evaluation harness.

#include <cstddef>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hekp/corpus.hpp"

namespace hekp::eval {

enum class HitMode { kRecall, kAnyHit };

// ranked[..k] against the truth set; k <= ranked.size().
double f1_at_k(std::span<const std::size_t> ranked, const std::set<std::size_t>& truth, std::size_t k);
// Fraction of truth items retrieved in the top k (or 1/0 for kAnyHit).
double hr_at_k(std::span<const std::size_t> ranked, const std::set<std::size_t>& truth, std::size_t k,
               HitMode mode = HitMode::kRecall);
double ndcg_at_k(std::span<const std::size_t> ranked, const std::set<std::size_t>& truth, std::size_t k);

struct Metrics {
  double f1 = 0.0;
  double hr = 0.0;
  double ndcg = 0.0;

  bool operator==(const Metrics&) const = default;
};

struct MetricsReport {
  std::map<std::size_t, Metrics> at_k;
  std::size_t n_users = 0;
  std::size_t n_skipped = 0;
  std::map<std::string, std::string> config;

  std::string to_json() const;
};

// Produces the top-`k` ranking for a user given the baskets before the
// target one. Called once per (user, k); must be thread-safe when
// `workers` > 1.
using Ranker = std::function<std::vector<std::size_t>(const corpus::UserSequence& user,
                                                      const std::vector<corpus::Basket>& history,
                                                      std::size_t k)>;

// History = all baskets but the last, truth = the last. Users with a single
// basket are skipped and counted. Metrics are averaged over evaluated users.
MetricsReport evaluate_split(const Ranker& ranker, const corpus::BasketDataset& split,
                             const std::vector<std::size_t>& ks, std::size_t workers = 1,
                             HitMode mode = HitMode::kRecall);

}  // namespace hekp::eval
