#pragma once

#include "bifleet/ce_graph.hpp"
#include "bifleet/rng.hpp"
#include "bifleet/tape.hpp"

namespace bifleet {

// Hierarchical GNN over the clause-element graph. Layer rule per node class:
//
//   ele_p <- sigma( sum_{u in N(p)} alpha_c[u] * cla_u * R_ce  +  ele_p * R_e )
//   cla_k <- sigma( sum_{v in N(k)} alpha_e[v] * ele_v * R_ec  +  cla_k * R_c )
//
// with row-vector orientation (R_* right-multiply). The four transformation
// matrices are shared across domains and tied across layers; the per-node
// alpha weights are per-domain, matching the domain superscript they carry.
// Base (layer-0) representations are learnable embeddings, one row per
// canonical node slot, so shared types read the same row from either domain.
class RelationEncoder {
 public:
  enum class Activation { kRelu, kIdentity };

  static RelationEncoder create(ParamStore& store, const CEGraph& graph, int type_dim,
                                int layers, Rng& rng);
  static RelationEncoder attach(const ParamStore& store, const CEGraph& graph, int type_dim,
                                int layers);

  struct Reps {
    Var clause;   // [num clause slots, type_dim]
    Var element;  // [num element slots, type_dim]
  };

  // L applications of the layer rule using this domain's edge set. Nodes with
  // no neighbors (the O rows in particular) update through the
  // self-connection only. frozen_random skips message passing entirely and
  // returns the base rows (the "- C-E graph" ablation path).
  Reps encode(Tape& tape, const CEGraph& graph, Domain domain, bool frozen_random = false) const;

  int type_dim() const { return type_dim_; }
  int layers() const { return layers_; }
  void set_activation(Activation a) { activation_ = a; }
  void set_layer_override(int layers) { layers_ = layers; }

  int base_clause_id() const { return base_cla_; }
  int base_element_id() const { return base_ele_; }
  int w_ce_id() const { return w_ce_; }
  int w_ec_id() const { return w_ec_; }
  int w_e_id() const { return w_e_; }
  int w_c_id() const { return w_c_; }
  int alpha_clause_id(Domain d) const { return alpha_c_[d == Domain::kTarget ? 1 : 0]; }
  int alpha_element_id(Domain d) const { return alpha_e_[d == Domain::kTarget ? 1 : 0]; }

  // Marks every relation-encoder parameter non-trainable (ablation support).
  void freeze(ParamStore& store) const;

 private:
  int type_dim_ = 0;
  int layers_ = 3;
  Activation activation_ = Activation::kRelu;
  int base_cla_ = -1, base_ele_ = -1;
  int w_ce_ = -1, w_ec_ = -1, w_e_ = -1, w_c_ = -1;
  int alpha_c_[2] = {-1, -1};  // per-domain, one scalar per clause slot
  int alpha_e_[2] = {-1, -1};  // per-domain, one scalar per element slot
};

}  // namespace bifleet
