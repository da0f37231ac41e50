#include "hekp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <thread>

#include "hekp/error.hpp"

namespace hekp::eval {

namespace {

std::size_t hits_in_top(std::span<const std::size_t> ranked, const std::set<std::size_t>& truth,
                        std::size_t k) {
  if (truth.empty()) throw Error("metric: empty truth set");
  if (k == 0 || k > ranked.size()) throw Error("metric: k must lie in [1, ranked size]");
  std::size_t hits = 0;
  for (std::size_t j = 0; j < k; ++j) hits += truth.count(ranked[j]);
  return hits;
}

}  // namespace

double f1_at_k(std::span<const std::size_t> ranked, const std::set<std::size_t>& truth, std::size_t k) {
  const double hits = static_cast<double>(hits_in_top(ranked, truth, k));
  if (hits == 0.0) return 0.0;
  const double precision = hits / static_cast<double>(k);
  const double recall = hits / static_cast<double>(truth.size());
  return 2.0 * precision * recall / (precision + recall);
}

double hr_at_k(std::span<const std::size_t> ranked, const std::set<std::size_t>& truth, std::size_t k,
               HitMode mode) {
  const std::size_t hits = hits_in_top(ranked, truth, k);
  if (mode == HitMode::kAnyHit) return hits > 0 ? 1.0 : 0.0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at_k(std::span<const std::size_t> ranked, const std::set<std::size_t>& truth, std::size_t k) {
  hits_in_top(ranked, truth, k);
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t j = 0; j < k; ++j)
    if (truth.count(ranked[j])) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  for (std::size_t j = 0; j < std::min(k, truth.size()); ++j)
    idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  return dcg / idcg;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& [k, m] : at_k) {
    const std::string s = std::to_string(k);
    j["f1@" + s] = m.f1;
    j["hr@" + s] = m.hr;
    j["ndcg@" + s] = m.ndcg;
  }
  j["n_users"] = n_users;
  j["n_skipped"] = n_skipped;
  if (!config.empty()) j["config"] = config;
  return j.dump();
}

MetricsReport evaluate_split(const Ranker& ranker, const corpus::BasketDataset& split,
                             const std::vector<std::size_t>& ks, std::size_t workers, HitMode mode) {
  if (split.sequences.empty()) throw DataError("evaluate_split: empty split");
  if (ks.empty()) throw Error("evaluate_split: no k values");
  const std::size_t n = split.sequences.size();
  // per_user[u][kk] holds the metrics of user u at ks[kk].
  std::vector<std::vector<Metrics>> per_user(n);
  std::vector<char> evaluated(n, 0);
  auto run = [&](std::size_t u) {
    const corpus::UserSequence& s = split.sequences[u];
    if (s.baskets.size() < 2) return;
    const std::vector<corpus::Basket> history(s.baskets.begin(), s.baskets.end() - 1);
    const std::set<std::size_t> truth(s.baskets.back().begin(), s.baskets.back().end());
    for (std::size_t k : ks) {
      const std::vector<std::size_t> ranked = ranker(s, history, k);
      per_user[u].push_back({f1_at_k(ranked, truth, k), hr_at_k(ranked, truth, k, mode),
                             ndcg_at_k(ranked, truth, k)});
    }
    evaluated[u] = 1;
  };
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t u = 0; u < n; ++u) run(u);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t u = w; u < n; u += workers) run(u);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Sums run in user order so the result does not depend on `workers`.
  MetricsReport report;
  for (std::size_t kk = 0; kk < ks.size(); ++kk) {
    Metrics total;
    for (std::size_t u = 0; u < n; ++u) {
      if (!evaluated[u]) continue;
      total.f1 += per_user[u][kk].f1;
      total.hr += per_user[u][kk].hr;
      total.ndcg += per_user[u][kk].ndcg;
    }
    report.at_k[ks[kk]] = total;
  }
  report.n_users = static_cast<std::size_t>(std::count(evaluated.begin(), evaluated.end(), 1));
  report.n_skipped = n - report.n_users;
  if (report.n_users > 0) {
    const double denom = static_cast<double>(report.n_users);
    for (auto& [k, m] : report.at_k) {
      m.f1 /= denom;
      m.hr /= denom;
      m.ndcg /= denom;
    }
  }
  return report;
}

}  // namespace hekp::eval
