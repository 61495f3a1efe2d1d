#pragma once

#include <string>
#include <vector>

#include "bifleet/corpus.hpp"

namespace bifleet {

// Canonical registry of clause and element types across both domains.
// Shared types (same name observed in both domains) get exactly one slot;
// domain-specific types own theirs. "O" is never shared: each domain has its
// own O slot, kept out of every edge set.
struct LabelInventory {
  struct TypeEntry {
    std::string name;
    bool shared = false;
    bool in_source = false;
    bool in_target = false;
  };

  std::vector<TypeEntry> clause_types;   // canonical clause slot = index
  std::vector<TypeEntry> element_types;  // canonical element slot = index

  // Ordered per-domain views (canonical slot ids). Element views put the
  // domain's O slot first, so per-domain element index 0 is always O.
  std::vector<int> source_clause_slots;
  std::vector<int> target_clause_slots;
  std::vector<int> source_element_slots;
  std::vector<int> target_element_slots;

  const std::vector<int>& clause_slots(Domain d) const {
    return d == Domain::kSource ? source_clause_slots : target_clause_slots;
  }
  const std::vector<int>& element_slots(Domain d) const {
    return d == Domain::kSource ? source_element_slots : target_element_slots;
  }

  int clause_slot(Domain d, const std::string& name) const;   // -1 when absent
  int element_slot(Domain d, const std::string& name) const;  // -1 when absent
  int o_slot(Domain d) const { return element_slots(d)[0]; }

  // Index of a canonical slot within a domain view, -1 when absent.
  int clause_index_in_domain(Domain d, int slot) const;
  int element_index_in_domain(Domain d, int slot) const;
};

// Collects the types observed in the given training corpora. Shared types are
// those whose names occur in both domains; ordering is deterministic:
// shared first, then source-only, then target-only, each block sorted by name.
LabelInventory build_inventory(const Corpus& source_train, const Corpus& target_train);

}  // namespace bifleet
