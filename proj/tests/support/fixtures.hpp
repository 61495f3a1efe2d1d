#pragma once

// Small shared fixtures: a tiny two-domain corpus, its graph, and a model
// with desk-toy dimensions suitable for finite-difference checks.

#include <string>
#include <vector>

#include "bifleet/ce_graph.hpp"
#include "bifleet/corpus.hpp"
#include "bifleet/generator.hpp"
#include "bifleet/model.hpp"
#include "bifleet/vocab.hpp"

namespace bifleet::testing {

inline Sentence tiny_sentence(Domain d, std::string clause, std::vector<std::string> tokens,
                              std::vector<ElementSpan> spans, const char* clause_id = nullptr) {
  Sentence s;
  s.domain = d;
  s.clause_type = std::move(clause);
  s.tokens = std::move(tokens);
  s.spans = std::move(spans);
  if (clause_id) s.clause_id = clause_id;
  s.validate();
  return s;
}

struct TinyWorld {
  Corpus src_train, tgt_train;
  CEGraph graph;
  Vocabulary vocab;
};

// Two domains, one shared clause type and one shared element type, a couple
// of domain-specific types each, and enough sentences that every type shows
// up in the graph counts.
inline TinyWorld tiny_world() {
  TinyWorld w;
  using D = Domain;
  w.src_train.sentences = {
      tiny_sentence(D::kSource, "pay", {"kw", "alpha", "beta", "x1"}, {{1, 2, "amount"}}, "s1"),
      tiny_sentence(D::kSource, "pay", {"kw", "gamma", "x2"}, {{1, 1, "amount"}}, "s2"),
      tiny_sentence(D::kSource, "pay", {"kw", "alpha", "x3"}, {{1, 1, "rate_src"}}, "s3"),
      tiny_sentence(D::kSource, "term", {"tw", "delta", "x4"}, {{1, 1, "date_src"}}, "s4"),
      tiny_sentence(D::kSource, "term", {"tw", "x5", "x6"}, {}, "s5"),
  };
  w.tgt_train.sentences = {
      tiny_sentence(D::kTarget, "pay", {"kw", "alpha", "y1"}, {{1, 1, "amount"}}, "t1"),
      tiny_sentence(D::kTarget, "pay", {"kw", "beta", "y2"}, {{1, 1, "ratio_tgt"}}, "t2"),
      tiny_sentence(D::kTarget, "deposit", {"dw", "gamma", "y3"}, {{1, 1, "ratio_tgt"}}, "t3"),
      tiny_sentence(D::kTarget, "deposit", {"dw", "y4"}, {}, "t4"),
  };
  LabelInventory inv = build_inventory(w.src_train, w.tgt_train);
  w.graph = build_graph(count_cooccurrence(w.src_train), count_cooccurrence(w.tgt_train), inv,
                        0.05);
  w.vocab = build_vocab({&w.src_train, &w.tgt_train}, 1);
  return w;
}

inline ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.encoder.word_dim = 6;
  cfg.encoder.char_dim = 4;
  cfg.encoder.cnn_filters = 5;
  cfg.encoder.cnn_width = 3;
  cfg.encoder.hidden_dim = 5;
  cfg.type_dim = 4;
  cfg.gnn_layers = 2;
  return cfg;
}

}  // namespace bifleet::testing
