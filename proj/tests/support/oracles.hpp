#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Everything here is written from the definitions with plain loops
// over std::vector and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline double f1(const std::vector<std::size_t>& ranked, const std::set<std::size_t>& truth, std::size_t k) {
  double hits = 0;
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t t : truth)
      if (ranked[j] == t) hits += 1;
  if (hits == 0) return 0.0;
  const double p = hits / static_cast<double>(k);
  const double r = hits / static_cast<double>(truth.size());
  return 2.0 * p * r / (p + r);
}

inline double hr(const std::vector<std::size_t>& ranked, const std::set<std::size_t>& truth, std::size_t k) {
  double hits = 0;
  for (std::size_t t : truth)
    for (std::size_t j = 0; j < k; ++j)
      if (ranked[j] == t) hits += 1;
  return hits / static_cast<double>(truth.size());
}

inline double ndcg(const std::vector<std::size_t>& ranked, const std::set<std::size_t>& truth, std::size_t k) {
  double dcg = 0, idcg = 0;
  for (std::size_t j = 1; j <= k; ++j) {
    if (truth.count(ranked[j - 1])) dcg += 1.0 / std::log2(static_cast<double>(j) + 1.0);
    if (j <= truth.size()) idcg += 1.0 / std::log2(static_cast<double>(j) + 1.0);
  }
  return dcg / idcg;
}

// Vertex -> hyperedge -> vertex message passing with per-edge weights m[v][e].
// Hyperedge e first averages its members (weighted by m[v][e], normalised
// by its degree), then every vertex averages its hyperedges the same way.
inline Matrix hypergraph_propagate(const Matrix& m, const Matrix& h, bool weighted_degrees) {
  const std::size_t n = m.size(), d = h[0].size();
  std::vector<double> dv(n, 0.0), de(n, 0.0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t e = 0; e < n; ++e) {
      const double w = weighted_degrees ? m[v][e] : (m[v][e] != 0.0 ? 1.0 : 0.0);
      dv[v] += w;
      de[e] += w;
    }
  Matrix edge_msg(n, std::vector<double>(d, 0.0));
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t c = 0; c < d; ++c) edge_msg[e][c] += m[v][e] * h[v][c] / de[e];
  Matrix out(n, std::vector<double>(d, 0.0));
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t e = 0; e < n; ++e)
      for (std::size_t c = 0; c < d; ++c) out[v][c] += m[v][e] * edge_msg[e][c] / dv[v];
  return out;
}

// Rank every item by the user's historical purchase count, ties and unseen
// items by lower index.
inline std::vector<std::size_t> frequency_ranking(const std::vector<std::vector<std::size_t>>& history,
                                                  std::size_t n_items) {
  std::vector<double> count(n_items, 0.0);
  for (const auto& basket : history)
    for (std::size_t i : basket) count[i] += 1.0;
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return count[a] > count[b]; });
  return order;
}

// Per-user frequency first, then global popularity, then lower index.
inline std::vector<std::size_t> frequency_popularity_ranking(const std::vector<std::vector<std::size_t>>& history,
                                                             const std::vector<double>& popularity) {
  const std::size_t n_items = popularity.size();
  std::vector<double> count(n_items, 0.0);
  for (const auto& basket : history)
    for (std::size_t i : basket) count[i] += 1.0;
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (count[a] != count[b]) return count[a] > count[b];
    return popularity[a] > popularity[b];
  });
  return order;
}

}  // namespace oracle
