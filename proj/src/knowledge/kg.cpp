#include "hekp/kg.hpp"

#include <fstream>

#include "hekp/error.hpp"
#include "hekp/text.hpp"

namespace hekp::knowledge {

bool KnowledgeGraph::add(const Triplet& t) {
  if (!seen_.insert(t).second) return false;
  entities_.insert(t.head);
  entities_.insert(t.tail);
  relations_.insert(t.relation);
  adjacency_[t.head].push_back(triples_.size());
  triples_.push_back(t);
  return true;
}

void KnowledgeGraph::add_entity(const std::string& entity) { entities_.insert(entity); }

const std::vector<std::size_t>& KnowledgeGraph::outgoing(const std::string& entity) const {
  static const std::vector<std::size_t> kNone;
  auto it = adjacency_.find(entity);
  return it == adjacency_.end() ? kNone : it->second;
}

KnowledgeGraph load_kg(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open knowledge graph file " + path.string());
  KnowledgeGraph kg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw ParseError(path.string(), line_no,
                       "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    for (const auto& f : fields)
      if (f.empty()) throw ParseError(path.string(), line_no, "empty field");
    kg.add({fields[0], fields[1], fields[2]});
  }
  return kg;
}

void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write knowledge graph file " + path.string());
  for (const auto& t : kg.triples()) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

}  // namespace hekp::knowledge
