#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>
#include <unistd.h>

#include "bifleet/ce_graph.hpp"
#include "bifleet/common.hpp"
#include "bifleet/generator.hpp"
#include "bifleet/rng.hpp"

using namespace bifleet;

namespace {

Sentence sent(std::string clause, std::string clause_id, std::vector<std::string> element_types,
              Domain d = Domain::kSource) {
  Sentence s;
  s.clause_type = std::move(clause);
  s.clause_id = std::move(clause_id);
  s.domain = d;
  int pos = 0;
  for (auto& et : element_types) {
    s.tokens.push_back("w" + std::to_string(pos));
    s.spans.push_back(ElementSpan{pos, pos, et});
    ++pos;
  }
  s.tokens.push_back("tail");
  return s;
}

// Independent tally: recount everything with a second implementation that
// walks clause groups by hand.
CooccurrenceCounts brute_tally(const Corpus& c) {
  CooccurrenceCounts out;
  std::vector<std::pair<std::string, std::set<std::string>>> clauses;
  for (size_t i = 0; i < c.sentences.size(); ++i) {
    const Sentence& s = c.sentences[i];
    bool fresh = i == 0;
    if (!fresh) {
      const Sentence& prev = c.sentences[i - 1];
      fresh = prev.clause_type != s.clause_type || prev.clause_id != s.clause_id ||
              prev.doc_id != s.doc_id;
    }
    if (fresh) clauses.push_back({s.clause_type, {}});
    for (const auto& sp : s.spans) clauses.back().second.insert(sp.element_type);
  }
  for (const auto& [ct, ets] : clauses) {
    ++out.f_ct[ct];
    for (const auto& et : ets) {
      ++out.f_et[et];
      ++out.f_et_ct[{et, ct}];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("count_cooccurrence: two payment clauses with payment-period") {
  Corpus c;
  c.sentences.push_back(sent("payment", "c1", {"payment_period"}));
  c.sentences.push_back(sent("payment", "c2", {"payment_period", "rate"}));
  auto counts = count_cooccurrence(c);
  CHECK(counts.f_et_ct[{"payment_period", "payment"}] == 2);
  CHECK(counts.f_et["payment_period"] == 2);
  CHECK(counts.f_ct["payment"] == 2);
}

TEST_CASE("count_cooccurrence counts duplicates once per clause") {
  Corpus c;
  c.sentences.push_back(sent("payment", "c1", {"period", "period", "period"}));
  auto counts = count_cooccurrence(c);
  CHECK(counts.f_et_ct[{"period", "payment"}] == 1);
  CHECK(counts.f_et["period"] == 1);
}

TEST_CASE("count_cooccurrence spans multi-sentence clauses") {
  Corpus c;
  c.sentences.push_back(sent("payment", "c1", {"period"}));
  c.sentences.push_back(sent("payment", "c1", {"rate"}));
  auto counts = count_cooccurrence(c);
  CHECK(counts.f_ct["payment"] == 1);
  CHECK(counts.f_et_ct[{"period", "payment"}] == 1);
  CHECK(counts.f_et_ct[{"rate", "payment"}] == 1);
}

TEST_CASE("count_cooccurrence on empty corpus is empty") {
  Corpus c;
  auto counts = count_cooccurrence(c);
  CHECK(counts.f_ct.empty());
  CHECK(counts.f_et.empty());
  CHECK(counts.f_et_ct.empty());
}

TEST_CASE("count_cooccurrence equals an independent brute-force tally") {
  Rng rng(17);
  Corpus c;
  const std::vector<std::string> cts = {"pay", "deposit", "term"};
  const std::vector<std::string> ets = {"a", "b", "d", "e"};
  int cid = 0;
  for (int clause = 0; clause < 10; ++clause) {
    const std::string ct = cts[rng.next_below(cts.size())];
    const std::string id = "c" + std::to_string(cid++);
    const int n_s = rng.uniform_int(1, 3);
    for (int i = 0; i < n_s; ++i) {
      std::vector<std::string> types;
      for (const auto& et : ets) {
        if (rng.bernoulli(0.4)) types.push_back(et);
      }
      c.sentences.push_back(sent(ct, id, types));
    }
  }
  auto fast = count_cooccurrence(c);
  auto brute = brute_tally(c);
  CHECK(fast.f_ct == brute.f_ct);
  CHECK(fast.f_et == brute.f_et);
  CHECK(fast.f_et_ct == brute.f_et_ct);
}

TEST_CASE("edge_probabilities arithmetic and omissions") {
  CooccurrenceCounts counts;
  counts.f_et["period"] = 2;
  counts.f_ct["payment"] = 4;
  counts.f_et_ct[{"period", "payment"}] = 2;
  counts.f_et["ghost"] = 3;
  counts.f_ct["deposit"] = 2;
  auto probs = edge_probabilities(counts);
  CHECK(probs.at({"period", "payment"}).p_et_ct == doctest::Approx(1.0));
  CHECK(probs.at({"period", "payment"}).p_ct_et == doctest::Approx(0.5));
  // Never co-occurring pair: both probabilities zero.
  CHECK(probs.at({"ghost", "payment"}).p_et_ct == 0.0);
  CHECK(probs.at({"ghost", "payment"}).p_ct_et == 0.0);
}

TEST_CASE("build_graph thresholds strictly and validates theta") {
  // p_et_ct = 1.0, p_ct_et = 0.5: at theta 0.5 the edge must NOT appear.
  Corpus src;
  src.sentences.push_back(sent("payment", "c1", {"period"}));
  src.sentences.push_back(sent("payment", "c2", {"period"}));
  src.sentences.push_back(sent("payment", "c3", {}));
  src.sentences.push_back(sent("payment", "c4", {}));
  Corpus tgt;
  tgt.sentences.push_back(sent("payment", "t1", {"period"}, Domain::kTarget));
  auto inv = build_inventory(src, tgt);
  auto counts_src = count_cooccurrence(src);
  auto counts_tgt = count_cooccurrence(tgt);

  CEGraph at_half = build_graph(counts_src, counts_tgt, inv, 0.5);
  CHECK(at_half.source_edges.empty());

  CEGraph below = build_graph(counts_src, counts_tgt, inv, 0.49);
  CHECK(below.source_edges.size() == 1);

  // theta -> 0+: every observed co-occurring pair becomes an edge.
  CEGraph tiny = build_graph(counts_src, counts_tgt, inv, 1e-9);
  CHECK(tiny.source_edges.size() == 1);
  CHECK(tiny.target_edges.size() == 1);

  CHECK_THROWS_AS(build_graph(counts_src, counts_tgt, inv, 0.0), ConfigError);
  CHECK_THROWS_AS(build_graph(counts_src, counts_tgt, inv, 1.0), ConfigError);
}

TEST_CASE("build_graph recovers the planted rule set on synthetic data") {
  GenConfig cfg;
  cfg.clause_types_src = 6;
  cfg.clause_types_tgt = 6;
  cfg.shared_clause_types = 3;
  cfg.element_types_src = 14;
  cfg.element_types_tgt = 14;
  cfg.shared_element_types = 7;
  cfg.vocab_size = 400;
  cfg.cooccur_strength = 0.9;
  cfg.train_src = 900;
  cfg.valid_src = 10;
  cfg.test_src = 10;
  cfg.train_tgt = 900;
  cfg.valid_tgt = 10;
  cfg.test_tgt = 10;
  SyntheticData data = generate_synthetic(cfg, 13);

  auto inv = build_inventory(data.source_train, data.target_train);
  CEGraph g = build_graph(count_cooccurrence(data.source_train),
                          count_cooccurrence(data.target_train), inv, 0.3);

  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    std::set<std::pair<int, int>> expected;
    for (const auto& r : data.rules) {
      if (r.domain != d) continue;
      expected.insert({inv.clause_slot(d, r.clause_type), inv.element_slot(d, r.element_type)});
    }
    std::set<std::pair<int, int>> got(g.edges(d).begin(), g.edges(d).end());
    CHECK(got == expected);
  }
}

TEST_CASE("raising theta never adds edges (monotonicity)") {
  GenConfig cfg;
  cfg.clause_types_src = 5;
  cfg.clause_types_tgt = 5;
  cfg.shared_clause_types = 2;
  cfg.element_types_src = 10;
  cfg.element_types_tgt = 10;
  cfg.shared_element_types = 5;
  cfg.vocab_size = 350;
  cfg.train_src = 200;
  cfg.valid_src = 5;
  cfg.test_src = 5;
  cfg.train_tgt = 200;
  cfg.valid_tgt = 5;
  cfg.test_tgt = 5;
  SyntheticData data = generate_synthetic(cfg, 29);
  auto inv = build_inventory(data.source_train, data.target_train);
  auto cs = count_cooccurrence(data.source_train);
  auto ct = count_cooccurrence(data.target_train);

  std::vector<double> thetas = {0.05, 0.1, 0.3, 0.5, 0.7, 0.9};
  for (size_t i = 1; i < thetas.size(); ++i) {
    CEGraph lo = build_graph(cs, ct, inv, thetas[i - 1]);
    CEGraph hi = build_graph(cs, ct, inv, thetas[i]);
    for (Domain d : {Domain::kSource, Domain::kTarget}) {
      std::set<std::pair<int, int>> lo_edges(lo.edges(d).begin(), lo.edges(d).end());
      for (const auto& e : hi.edges(d)) CHECK(lo_edges.count(e) == 1);
    }
  }
}

TEST_CASE("domain locality: permuting target data never changes source edges") {
  GenConfig cfg;
  cfg.clause_types_src = 4;
  cfg.clause_types_tgt = 4;
  cfg.shared_clause_types = 2;
  cfg.element_types_src = 8;
  cfg.element_types_tgt = 8;
  cfg.shared_element_types = 4;
  cfg.vocab_size = 300;
  cfg.train_src = 150;
  cfg.valid_src = 5;
  cfg.test_src = 5;
  cfg.train_tgt = 150;
  cfg.valid_tgt = 5;
  cfg.test_tgt = 5;
  SyntheticData data = generate_synthetic(cfg, 31);
  auto inv = build_inventory(data.source_train, data.target_train);
  auto cs = count_cooccurrence(data.source_train);

  CEGraph base = build_graph(cs, count_cooccurrence(data.target_train), inv, 0.2);

  Corpus shuffled = data.target_train;
  Rng rng(77);
  rng.shuffle(shuffled.sentences);
  CEGraph perm = build_graph(cs, count_cooccurrence(shuffled), inv, 0.2);
  CHECK(base.source_edges == perm.source_edges);
}

TEST_CASE("shared types resolve to one slot from either domain; O is isolated") {
  Corpus src;
  src.sentences.push_back(sent("shared_ct", "a", {"shared_et"}));
  Corpus tgt;
  tgt.sentences.push_back(sent("shared_ct", "b", {"shared_et"}, Domain::kTarget));
  auto inv = build_inventory(src, tgt);

  CHECK(inv.clause_slot(Domain::kSource, "shared_ct") == inv.clause_slot(Domain::kTarget, "shared_ct"));
  CHECK(inv.element_slot(Domain::kSource, "shared_et") ==
        inv.element_slot(Domain::kTarget, "shared_et"));
  // Each domain has its own (non-shared) O slot with no edges ever.
  const int o_src = inv.o_slot(Domain::kSource);
  const int o_tgt = inv.o_slot(Domain::kTarget);
  CHECK(o_src != o_tgt);
  CHECK_FALSE(inv.element_types[static_cast<size_t>(o_src)].shared);
  CHECK_FALSE(inv.element_types[static_cast<size_t>(o_tgt)].shared);

  CEGraph g = build_graph(count_cooccurrence(src), count_cooccurrence(tgt), inv, 0.1);
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    for (const auto& [c, e] : g.edges(d)) {
      CHECK(e != o_src);
      CHECK(e != o_tgt);
      (void)c;
    }
  }
}

TEST_CASE("graph JSON round-trip and DOT output") {
  Corpus src;
  src.sentences.push_back(sent("pay", "a", {"period"}));
  Corpus tgt;
  tgt.sentences.push_back(sent("pay", "b", {"rate"}, Domain::kTarget));
  auto inv = build_inventory(src, tgt);
  CEGraph g = build_graph(count_cooccurrence(src), count_cooccurrence(tgt), inv, 0.2);

  CEGraph back = CEGraph::from_json(g.to_json());
  CHECK(back.theta == g.theta);
  CHECK(back.source_edges == g.source_edges);
  CHECK(back.target_edges == g.target_edges);
  CHECK(back.inventory.clause_types.size() == g.inventory.clause_types.size());
  CHECK(back.source_counts.f_et_ct == g.source_counts.f_et_ct);

  const std::string dot = g.to_dot();
  CHECK(dot.find("graph ce {") != std::string::npos);
  CHECK(dot.find("pay") != std::string::npos);
}

TEST_CASE("inherit_shared_edges copies only shared-shared source edges") {
  Corpus src;
  src.sentences.push_back(sent("shared_ct", "a", {"shared_et"}));
  src.sentences.push_back(sent("src_ct", "b", {"src_et"}));
  Corpus tgt;
  tgt.sentences.push_back(sent("shared_ct", "c", {"tgt_et"}, Domain::kTarget));
  tgt.sentences.push_back(sent("other_ct", "d", {"shared_et"}, Domain::kTarget));
  auto inv = build_inventory(src, tgt);
  auto cs = count_cooccurrence(src);
  auto ct = count_cooccurrence(tgt);

  CEGraph plain = build_graph(cs, ct, inv, 0.2, false);
  CEGraph inherit = build_graph(cs, ct, inv, 0.2, true);
  CHECK(inherit.source_edges == plain.source_edges);
  CHECK(inherit.target_edges.size() == plain.target_edges.size() + 1);
  const int cs_slot = inv.clause_slot(Domain::kSource, "shared_ct");
  const int es_slot = inv.element_slot(Domain::kSource, "shared_et");
  CHECK(inherit.has_edge(Domain::kTarget, cs_slot, es_slot));
}
