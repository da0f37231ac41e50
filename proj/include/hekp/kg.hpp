#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hekp::knowledge {

struct Triplet {
  std::string head;
  std::string relation;
  std::string tail;

  auto operator<=>(const Triplet&) const = default;
};

// Set of (head, relation, tail) triples with an outgoing-edge index.
// Triples keep first-insertion order; duplicates are ignored.
class KnowledgeGraph {
 public:
  // Returns false when the triple was already present.
  bool add(const Triplet& t);
  void add_entity(const std::string& entity);

  bool has_entity(const std::string& e) const { return entities_.count(e) > 0; }
  const std::set<std::string>& entities() const { return entities_; }
  const std::set<std::string>& relations() const { return relations_; }
  const std::vector<Triplet>& triples() const { return triples_; }
  // Indices into triples() of edges leaving `entity`, in insertion order.
  const std::vector<std::size_t>& outgoing(const std::string& entity) const;
  std::size_t out_degree(const std::string& entity) const { return outgoing(entity).size(); }

 private:
  std::vector<Triplet> triples_;
  std::set<Triplet> seen_;
  std::set<std::string> entities_;
  std::set<std::string> relations_;
  std::unordered_map<std::string, std::vector<std::size_t>> adjacency_;
};

// TSV `head<TAB>relation<TAB>tail`.
KnowledgeGraph load_kg(const std::filesystem::path& path);
void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& path);

}  // namespace hekp::knowledge
