#pragma once

#include <map>
#include <string>
#include <vector>

#include "bifleet/ce_graph.hpp"
#include "bifleet/corpus.hpp"
#include "bifleet/encoder.hpp"
#include "bifleet/relation.hpp"
#include "bifleet/tape.hpp"
#include "bifleet/vocab.hpp"

namespace bifleet {

enum class CcVerify { kMeanPool, kProjection };
enum class LossVariant { kNll, kMaxMargin };

struct ModelConfig {
  EncoderDims encoder;
  int type_dim = 50;
  int gnn_layers = 3;
  bool no_ce_graph = false;     // frozen random type rows, GNN bypassed
  bool no_bifeedback = false;   // neutral gates, no verification; subsumes no_ce_graph
  bool normalize_res_cc = false;  // softmax res_cc before the latent type vector
  CcVerify cc_verify = CcVerify::kMeanPool;

  bool graph_ablated() const { return no_ce_graph || no_bifeedback; }

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Per-sentence outputs after the full Algorithm-1 pass.
struct PredictionBundle {
  std::vector<double> res_cc;  // sigmoid clause scores, domain clause order
  std::vector<double> y_cc;    // verified clause distribution (sums to 1)
  int clause_pred = -1;        // argmax of y_cc, lowest index on ties
  std::string clause_name;
  std::vector<int> y_cee;      // BIO label ids in the domain label space
  std::vector<std::string> bio_tags;
  std::vector<ElementSpan> spans;
  std::vector<double> fw;                   // forward gate (all ones when ablated)
  std::vector<std::vector<double>> bw;      // per-token backward gates
};

class BiFleetModel {
 public:
  // Fresh parameters, deterministically initialized from init_seed.
  BiFleetModel(const ModelConfig& config, CEGraph graph, Vocabulary vocab, uint64_t init_seed);
  // Rebind to an existing parameter set (checkpoint load).
  BiFleetModel(const ModelConfig& config, CEGraph graph, Vocabulary vocab, ParamStore store);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  const CEGraph& graph() const { return graph_; }
  const Vocabulary& vocab() const { return vocab_; }
  const ContextEncoder& encoder() const { return encoder_; }
  const RelationEncoder& relation() const { return relation_; }
  RelationEncoder& relation() { return relation_; }

  // --- label space (BIO over the domain's element types; O is label 0) ---
  int num_labels(Domain d) const;
  int num_clause_types(Domain d) const;
  std::vector<int> bio_label_ids(const Sentence& s) const;  // throws on unseen types
  std::string bio_label_name(Domain d, int label) const;
  int element_index_of_label(int label) const { return label == 0 ? 0 : (label - 1) / 2 + 1; }
  int clause_gold_index(const Sentence& s) const;  // -1 when unseen

  // Type representations are recomputed once per step and cached here.
  struct StepContext {
    struct DomainReps {
      Var clause_all;   // [num clause slots, type_dim]
      Var element_all;  // [num element slots, type_dim]
      Var clause_view;  // [domain clause count, type_dim]
      bool set = false;
    };
    DomainReps reps[2];
  };

  struct SentenceForward {
    Var res_cc;        // [K]
    Var y_cc_logits;   // pre-softmax verified logits [K]
    Var loss_cc;       // valid when with_loss
    Var loss_cee;      // valid when with_loss
    std::vector<int> decoded;  // Viterbi labels
  };

  // The Algorithm-1 order for one sentence: encode, type reps, clause scores,
  // forward gate, gated CRF decode, backward gates, verified clause
  // distribution. Gradients stop at the decoded one-hots.
  SentenceForward forward(Tape& tape, const Sentence& sentence, Domain domain, StepContext& ctx,
                          LossVariant variant, bool with_loss,
                          PredictionBundle* bundle = nullptr) const;

  PredictionBundle infer(const Sentence& sentence, Domain domain) const;

  // (lambda/2)*||Theta||^2 over the trainable parameter set, on-tape.
  Var l2_term(Tape& tape, double lambda) const;

 private:
  void build_params(uint64_t init_seed);
  void attach_params();
  void build_masks();
  StepContext::DomainReps& domain_reps(Tape& tape, Domain d, StepContext& ctx) const;

  ModelConfig config_;
  CEGraph graph_;
  Vocabulary vocab_;
  ParamStore params_;
  ContextEncoder encoder_;
  RelationEncoder relation_;

  struct Head {
    int attention = -1;  // [2h]
    int w_cc = -1;       // [2h + type_dim]
    int b_cc = -1;       // [1]
    int w_f = -1, b_f = -1;  // [type_dim, 2h], [2h]
    int w_b = -1, b_b = -1;
    int crf_w = -1;      // [2h, L]
    int crf_trans = -1;  // [L, L]
    int crf_start = -1, crf_stop = -1;  // [L]
    int cc_proj = -1;    // [2h, K], projection verify variant only
  };
  Head heads_[2];
  const Head& head(Domain d) const { return heads_[d == Domain::kTarget ? 1 : 0]; }

  Tensor bio_mask_[2];        // additive [L, L]; -1e4 on BIO-invalid transitions
  Tensor bio_start_mask_[2];  // additive [L]
};

}  // namespace bifleet
