#include "bifleet/ce_graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "bifleet/common.hpp"

namespace bifleet {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Inventory

namespace {
int find_slot(const std::vector<LabelInventory::TypeEntry>& entries, Domain d,
              const std::string& name) {
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const bool in_domain = d == Domain::kSource ? e.in_source : e.in_target;
    if (in_domain && e.name == name) return static_cast<int>(i);
  }
  return -1;
}
}  // namespace

int LabelInventory::clause_slot(Domain d, const std::string& name) const {
  return find_slot(clause_types, d, name);
}

int LabelInventory::element_slot(Domain d, const std::string& name) const {
  return find_slot(element_types, d, name);
}

int LabelInventory::clause_index_in_domain(Domain d, int slot) const {
  const auto& view = clause_slots(d);
  for (size_t i = 0; i < view.size(); ++i) {
    if (view[i] == slot) return static_cast<int>(i);
  }
  return -1;
}

int LabelInventory::element_index_in_domain(Domain d, int slot) const {
  const auto& view = element_slots(d);
  for (size_t i = 0; i < view.size(); ++i) {
    if (view[i] == slot) return static_cast<int>(i);
  }
  return -1;
}

LabelInventory build_inventory(const Corpus& source_train, const Corpus& target_train) {
  std::set<std::string> src_clauses, tgt_clauses, src_elements, tgt_elements;
  auto scan = [](const Corpus& c, std::set<std::string>& clauses, std::set<std::string>& elements) {
    for (const auto& s : c.sentences) {
      clauses.insert(s.clause_type);
      for (const auto& span : s.spans) elements.insert(span.element_type);
    }
  };
  scan(source_train, src_clauses, src_elements);
  scan(target_train, tgt_clauses, tgt_elements);

  LabelInventory inv;
  auto fill = [](const std::set<std::string>& src, const std::set<std::string>& tgt,
                 std::vector<LabelInventory::TypeEntry>& out) {
    for (const auto& name : src) {
      if (tgt.count(name)) out.push_back({name, true, true, true});
    }
    for (const auto& name : src) {
      if (!tgt.count(name)) out.push_back({name, false, true, false});
    }
    for (const auto& name : tgt) {
      if (!src.count(name)) out.push_back({name, false, false, true});
    }
  };
  fill(src_clauses, tgt_clauses, inv.clause_types);
  fill(src_elements, tgt_elements, inv.element_types);

  // Each domain gets its own O row; O never enters the shared block.
  const int o_src = static_cast<int>(inv.element_types.size());
  inv.element_types.push_back({"O", false, true, false});
  const int o_tgt = static_cast<int>(inv.element_types.size());
  inv.element_types.push_back({"O", false, false, true});

  for (size_t i = 0; i < inv.clause_types.size(); ++i) {
    if (inv.clause_types[i].in_source) inv.source_clause_slots.push_back(static_cast<int>(i));
    if (inv.clause_types[i].in_target) inv.target_clause_slots.push_back(static_cast<int>(i));
  }
  inv.source_element_slots.push_back(o_src);
  inv.target_element_slots.push_back(o_tgt);
  for (size_t i = 0; i < inv.element_types.size(); ++i) {
    if (inv.element_types[i].name == "O") continue;
    if (inv.element_types[i].in_source) inv.source_element_slots.push_back(static_cast<int>(i));
    if (inv.element_types[i].in_target) inv.target_element_slots.push_back(static_cast<int>(i));
  }
  return inv;
}

// ---------------------------------------------------------------------------
// Counting (per clause, duplicates collapse)

CooccurrenceCounts count_cooccurrence(const Corpus& train_split) {
  CooccurrenceCounts counts;
  for (const auto& clause : group_clauses(train_split)) {
    ++counts.f_ct[clause.clause_type];
    std::set<std::string> present;
    for (size_t idx : clause.sentence_indices) {
      for (const auto& span : train_split.sentences[idx].spans) {
        present.insert(span.element_type);
      }
    }
    for (const auto& et : present) {
      ++counts.f_et[et];
      ++counts.f_et_ct[{et, clause.clause_type}];
    }
  }
  return counts;
}

std::map<std::pair<std::string, std::string>, EdgeProbability> edge_probabilities(
    const CooccurrenceCounts& counts) {
  std::map<std::pair<std::string, std::string>, EdgeProbability> probs;
  for (const auto& [et, f_et] : counts.f_et) {
    for (const auto& [ct, f_ct] : counts.f_ct) {
      if (f_et <= 0 || f_ct <= 0) continue;
      auto it = counts.f_et_ct.find({et, ct});
      const double joint = it == counts.f_et_ct.end() ? 0.0 : static_cast<double>(it->second);
      probs[{et, ct}] = EdgeProbability{joint / static_cast<double>(f_et),
                                        joint / static_cast<double>(f_ct)};
    }
  }
  return probs;
}

// ---------------------------------------------------------------------------
// Graph construction

bool CEGraph::has_edge(Domain d, int clause_slot, int element_slot) const {
  const auto& e = edges(d);
  return std::binary_search(e.begin(), e.end(), std::make_pair(clause_slot, element_slot));
}

CEGraph build_graph(const CooccurrenceCounts& counts_src, const CooccurrenceCounts& counts_tgt,
                    const LabelInventory& inventory, double theta, bool inherit_shared_edges) {
  if (!(theta > 0.0 && theta < 1.0)) {
    throw ConfigError(cat("theta must lie strictly inside (0,1), got ", theta));
  }
  CEGraph graph;
  graph.inventory = inventory;
  graph.theta = theta;
  graph.source_counts = counts_src;
  graph.target_counts = counts_tgt;

  auto collect = [&](Domain d, const CooccurrenceCounts& counts) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& [pair, p] : edge_probabilities(counts)) {
      if (!(p.p_et_ct > theta && p.p_ct_et > theta)) continue;  // strictly larger
      const int cs = inventory.clause_slot(d, pair.second);
      const int es = inventory.element_slot(d, pair.first);
      if (cs < 0 || es < 0) {
        throw ContractViolation(cat("counts mention type absent from inventory: (",
                                    pair.first, ", ", pair.second, ")"));
      }
      edges.emplace_back(cs, es);
    }
    std::sort(edges.begin(), edges.end());
    return edges;
  };
  graph.source_edges = collect(Domain::kSource, counts_src);
  graph.target_edges = collect(Domain::kTarget, counts_tgt);

  if (inherit_shared_edges) {
    for (const auto& [cs, es] : graph.source_edges) {
      if (inventory.clause_types[static_cast<size_t>(cs)].shared &&
          inventory.element_types[static_cast<size_t>(es)].shared) {
        graph.target_edges.emplace_back(cs, es);
      }
    }
    std::sort(graph.target_edges.begin(), graph.target_edges.end());
    graph.target_edges.erase(std::unique(graph.target_edges.begin(), graph.target_edges.end()),
                             graph.target_edges.end());
  }
  return graph;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
json counts_to_json(const CooccurrenceCounts& c) {
  json j;
  j["f_et"] = json::object();
  for (const auto& [k, v] : c.f_et) j["f_et"][k] = v;
  j["f_ct"] = json::object();
  for (const auto& [k, v] : c.f_ct) j["f_ct"][k] = v;
  json pairs = json::array();
  for (const auto& [k, v] : c.f_et_ct) {
    pairs.push_back({{"element_type", k.first}, {"clause_type", k.second}, {"count", v}});
  }
  j["f_et_ct"] = pairs;
  return j;
}

CooccurrenceCounts counts_from_json(const json& j) {
  CooccurrenceCounts c;
  for (auto it = j.at("f_et").begin(); it != j.at("f_et").end(); ++it) {
    c.f_et[it.key()] = it.value().get<int64_t>();
  }
  for (auto it = j.at("f_ct").begin(); it != j.at("f_ct").end(); ++it) {
    c.f_ct[it.key()] = it.value().get<int64_t>();
  }
  for (const auto& p : j.at("f_et_ct")) {
    c.f_et_ct[{p.at("element_type").get<std::string>(), p.at("clause_type").get<std::string>()}] =
        p.at("count").get<int64_t>();
  }
  return c;
}

json entries_to_json(const std::vector<LabelInventory::TypeEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back({{"name", e.name},
                   {"shared", e.shared},
                   {"in_source", e.in_source},
                   {"in_target", e.in_target}});
  }
  return arr;
}

std::vector<LabelInventory::TypeEntry> entries_from_json(const json& arr) {
  std::vector<LabelInventory::TypeEntry> out;
  for (const auto& e : arr) {
    out.push_back({e.at("name").get<std::string>(), e.at("shared").get<bool>(),
                   e.at("in_source").get<bool>(), e.at("in_target").get<bool>()});
  }
  return out;
}

json edges_to_json(const std::vector<std::pair<int, int>>& edges) {
  json arr = json::array();
  for (const auto& [c, e] : edges) arr.push_back({c, e});
  return arr;
}

std::vector<std::pair<int, int>> edges_from_json(const json& arr) {
  std::vector<std::pair<int, int>> out;
  for (const auto& e : arr) out.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  return out;
}
}  // namespace

json inventory_to_json(const LabelInventory& inv);
LabelInventory inventory_from_json(const json& j);

json inventory_to_json(const LabelInventory& inv) {
  json j;
  j["clause_types"] = entries_to_json(inv.clause_types);
  j["element_types"] = entries_to_json(inv.element_types);
  j["source_clause_slots"] = inv.source_clause_slots;
  j["target_clause_slots"] = inv.target_clause_slots;
  j["source_element_slots"] = inv.source_element_slots;
  j["target_element_slots"] = inv.target_element_slots;
  return j;
}

LabelInventory inventory_from_json(const json& j) {
  LabelInventory inv;
  inv.clause_types = entries_from_json(j.at("clause_types"));
  inv.element_types = entries_from_json(j.at("element_types"));
  inv.source_clause_slots = j.at("source_clause_slots").get<std::vector<int>>();
  inv.target_clause_slots = j.at("target_clause_slots").get<std::vector<int>>();
  inv.source_element_slots = j.at("source_element_slots").get<std::vector<int>>();
  inv.target_element_slots = j.at("target_element_slots").get<std::vector<int>>();
  return inv;
}

std::string CEGraph::to_json() const {
  json j;
  j["theta"] = theta;
  j["inventory"] = inventory_to_json(inventory);
  j["source_edges"] = edges_to_json(source_edges);
  j["target_edges"] = edges_to_json(target_edges);
  j["source_counts"] = counts_to_json(source_counts);
  j["target_counts"] = counts_to_json(target_counts);
  return j.dump(2);
}

CEGraph CEGraph::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(cat("invalid graph JSON: ", e.what()));
  }
  CEGraph g;
  g.theta = j.at("theta").get<double>();
  g.inventory = inventory_from_json(j.at("inventory"));
  g.source_edges = edges_from_json(j.at("source_edges"));
  g.target_edges = edges_from_json(j.at("target_edges"));
  g.source_counts = counts_from_json(j.at("source_counts"));
  g.target_counts = counts_from_json(j.at("target_counts"));
  return g;
}

void CEGraph::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write graph file: " + path);
  out << to_json() << "\n";
}

CEGraph CEGraph::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

std::string CEGraph::to_dot() const {
  std::ostringstream os;
  os << "graph ce {\n  rankdir=LR;\n";
  for (size_t i = 0; i < inventory.clause_types.size(); ++i) {
    const auto& e = inventory.clause_types[i];
    os << "  c" << i << " [shape=box,label=\"" << e.name << "\""
       << (e.shared ? ",style=filled,fillcolor=lightblue" : "") << "];\n";
  }
  for (size_t i = 0; i < inventory.element_types.size(); ++i) {
    const auto& e = inventory.element_types[i];
    os << "  e" << i << " [shape=ellipse,label=\"" << e.name << "\""
       << (e.shared ? ",style=filled,fillcolor=lightblue" : "") << "];\n";
  }
  for (const auto& [c, e] : source_edges) {
    os << "  c" << c << " -- e" << e << " [color=red];\n";
  }
  for (const auto& [c, e] : target_edges) {
    os << "  c" << c << " -- e" << e << " [color=orange,style=dashed];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace bifleet
