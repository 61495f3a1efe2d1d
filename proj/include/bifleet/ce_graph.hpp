#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bifleet/corpus.hpp"
#include "bifleet/inventory.hpp"

namespace bifleet {

// Per-clause presence counts: a type pair counts once per clause however many
// matching elements the clause holds.
struct CooccurrenceCounts {
  std::map<std::string, int64_t> f_et;  // clauses containing the element type
  std::map<std::string, int64_t> f_ct;  // clauses of the clause type
  std::map<std::pair<std::string, std::string>, int64_t> f_et_ct;  // (et, ct)
};

CooccurrenceCounts count_cooccurrence(const Corpus& train_split);

struct EdgeProbability {
  double p_et_ct = 0.0;  // f_et_ct / f_et
  double p_ct_et = 0.0;  // f_et_ct / f_ct
};

// Both conditional frequencies per observed pair. Pairs whose denominators
// are zero (type never observed) are omitted.
std::map<std::pair<std::string, std::string>, EdgeProbability> edge_probabilities(
    const CooccurrenceCounts& counts);

struct CEGraph {
  LabelInventory inventory;
  double theta = 0.1;
  // Edges as (clause slot, element slot) canonical pairs, sorted.
  std::vector<std::pair<int, int>> source_edges;
  std::vector<std::pair<int, int>> target_edges;
  CooccurrenceCounts source_counts;
  CooccurrenceCounts target_counts;

  const std::vector<std::pair<int, int>>& edges(Domain d) const {
    return d == Domain::kSource ? source_edges : target_edges;
  }
  bool has_edge(Domain d, int clause_slot, int element_slot) const;

  std::string to_json() const;
  static CEGraph from_json(const std::string& text);
  void save(const std::string& path) const;
  static CEGraph load(const std::string& path);
  std::string to_dot() const;
};

// Thresholds each domain's conditional probabilities at theta (strictly
// greater on both directions). Target edges come from target counts only
// unless inherit_shared_edges is set, which additionally copies source edges
// whose endpoints are both shared types.
CEGraph build_graph(const CooccurrenceCounts& counts_src, const CooccurrenceCounts& counts_tgt,
                    const LabelInventory& inventory, double theta,
                    bool inherit_shared_edges = false);

}  // namespace bifleet
