#include "bifleet/relation.hpp"

#include "bifleet/common.hpp"
#include "bifleet/encoder.hpp"

namespace bifleet {

namespace {

// Degree of each node inside one domain's edge set.
std::pair<std::vector<int>, std::vector<int>> degrees(const CEGraph& graph, Domain d) {
  std::vector<int> cla(graph.inventory.clause_types.size(), 0);
  std::vector<int> ele(graph.inventory.element_types.size(), 0);
  for (const auto& [c, e] : graph.edges(d)) {
    ++cla[static_cast<size_t>(c)];
    ++ele[static_cast<size_t>(e)];
  }
  return {cla, ele};
}

Tensor alpha_init(const std::vector<int>& degree) {
  Tensor t({static_cast<int64_t>(degree.size())});
  for (size_t i = 0; i < degree.size(); ++i) {
    t[static_cast<int64_t>(i)] = 1.0 / std::max(1, degree[i]);
  }
  return t;
}

}  // namespace

RelationEncoder RelationEncoder::create(ParamStore& store, const CEGraph& graph, int type_dim,
                                        int layers, Rng& rng) {
  RelationEncoder enc;
  enc.type_dim_ = type_dim;
  enc.layers_ = layers;
  const int64_t n_cla = static_cast<int64_t>(graph.inventory.clause_types.size());
  const int64_t n_ele = static_cast<int64_t>(graph.inventory.element_types.size());
  enc.base_cla_ = store.add("relation.base_clause", uniform_init({n_cla, type_dim}, 0.1, rng));
  enc.base_ele_ = store.add("relation.base_element", uniform_init({n_ele, type_dim}, 0.1, rng));
  enc.w_ce_ = store.add("relation.w_ce", glorot_uniform(type_dim, type_dim, rng));
  enc.w_ec_ = store.add("relation.w_ec", glorot_uniform(type_dim, type_dim, rng));
  enc.w_e_ = store.add("relation.w_e", glorot_uniform(type_dim, type_dim, rng));
  enc.w_c_ = store.add("relation.w_c", glorot_uniform(type_dim, type_dim, rng));
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    auto [cla_deg, ele_deg] = degrees(graph, d);
    const int i = d == Domain::kTarget ? 1 : 0;
    enc.alpha_c_[i] =
        store.add(cat("relation.alpha_clause.", domain_name(d)), alpha_init(cla_deg));
    enc.alpha_e_[i] =
        store.add(cat("relation.alpha_element.", domain_name(d)), alpha_init(ele_deg));
  }
  return enc;
}

RelationEncoder RelationEncoder::attach(const ParamStore& store, const CEGraph& graph,
                                        int type_dim, int layers) {
  (void)graph;
  RelationEncoder enc;
  enc.type_dim_ = type_dim;
  enc.layers_ = layers;
  auto need = [&store](const std::string& name) {
    int id = store.find(name);
    if (id < 0) throw ContractViolation("checkpoint lacks parameter: " + name);
    return id;
  };
  enc.base_cla_ = need("relation.base_clause");
  enc.base_ele_ = need("relation.base_element");
  enc.w_ce_ = need("relation.w_ce");
  enc.w_ec_ = need("relation.w_ec");
  enc.w_e_ = need("relation.w_e");
  enc.w_c_ = need("relation.w_c");
  enc.alpha_c_[0] = need("relation.alpha_clause.source");
  enc.alpha_c_[1] = need("relation.alpha_clause.target");
  enc.alpha_e_[0] = need("relation.alpha_element.source");
  enc.alpha_e_[1] = need("relation.alpha_element.target");
  return enc;
}

RelationEncoder::Reps RelationEncoder::encode(Tape& tape, const CEGraph& graph, Domain domain,
                                              bool frozen_random) const {
  Var cla = tape.param(base_cla_);
  Var ele = tape.param(base_ele_);
  if (frozen_random || layers_ == 0) return {cla, ele};

  const int64_t n_cla = tape.val(cla).rows();
  const int64_t n_ele = tape.val(ele).rows();

  // 0/1 incidence masks for this domain, built once per encode call.
  Tensor mask_ce({n_ele, n_cla});  // element row p aggregates clause u
  Tensor mask_ec({n_cla, n_ele});
  for (const auto& [c, e] : graph.edges(domain)) {
    mask_ce.at(e, c) = 1.0;
    mask_ec.at(c, e) = 1.0;
  }
  Var m_ce = tape.input(std::move(mask_ce));
  Var m_ec = tape.input(std::move(mask_ec));
  Var alpha_c = tape.param(alpha_clause_id(domain));
  Var alpha_e = tape.param(alpha_element_id(domain));
  Var adj_ce = tape.scale_columns(m_ce, alpha_c);  // [E, C] weighted incidence
  Var adj_ec = tape.scale_columns(m_ec, alpha_e);  // [C, E]

  Var r_ce = tape.param(w_ce_);
  Var r_ec = tape.param(w_ec_);
  Var r_e = tape.param(w_e_);
  Var r_c = tape.param(w_c_);

  for (int layer = 0; layer < layers_; ++layer) {
    Var ele_next = tape.add(tape.matmul(tape.matmul(adj_ce, cla), r_ce),
                            tape.matmul(ele, r_e));
    Var cla_next = tape.add(tape.matmul(tape.matmul(adj_ec, ele), r_ec),
                            tape.matmul(cla, r_c));
    if (activation_ == Activation::kRelu) {
      ele_next = tape.relu(ele_next);
      cla_next = tape.relu(cla_next);
    }
    ele = ele_next;
    cla = cla_next;
  }
  return {cla, ele};
}

void RelationEncoder::freeze(ParamStore& store) const {
  for (int id : {base_cla_, base_ele_, w_ce_, w_ec_, w_e_, w_c_, alpha_c_[0], alpha_c_[1],
                 alpha_e_[0], alpha_e_[1]}) {
    store.at(id).trainable = false;
  }
}

}  // namespace bifleet
