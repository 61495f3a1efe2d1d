#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bifleet/corpus.hpp"
#include "bifleet/model.hpp"

namespace bifleet {

struct EvalCounts {
  int64_t gold = 0;
  int64_t predicted = 0;
  int64_t correct = 0;

  EvalCounts& operator+=(const EvalCounts& other) {
    gold += other.gold;
    predicted += other.predicted;
    correct += other.correct;
    return *this;
  }
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// P = correct/predicted, R = correct/gold, F1 = harmonic mean; each term is 0
// when its denominator is 0, and F1 = 0 when P + R = 0.
Prf prf_from_counts(const EvalCounts& c);

// Exact match: a predicted span is correct iff (start, end, type) all equal a
// gold span of the same sentence.
EvalCounts score_elements(const std::vector<ElementSpan>& gold,
                          const std::vector<ElementSpan>& predicted);

// Fraction of sentences whose verified clause prediction equals gold.
// Lengths must agree.
double clause_accuracy(const std::vector<std::string>& gold,
                       const std::vector<std::string>& predicted);

struct EvalReport {
  EvalCounts total;
  Prf micro;
  double clause_acc = 0.0;
  int64_t sentences = 0;
  std::map<std::string, EvalCounts> per_type_counts;
  std::map<std::string, Prf> per_type;

  std::string to_json() const;
  std::string to_text_table() const;
};

EvalReport build_report(const std::vector<std::vector<ElementSpan>>& gold_spans,
                        const std::vector<std::vector<ElementSpan>>& pred_spans,
                        const std::vector<std::string>& gold_clauses,
                        const std::vector<std::string>& pred_clauses);

// Full-corpus evaluation: runs the inference pass sentence by sentence.
EvalReport evaluate_model(const BiFleetModel& model, const Corpus& corpus, Domain domain);

// Token-level BIO tag accuracy (overfit checks).
double token_accuracy(const BiFleetModel& model, const Corpus& corpus, Domain domain);

// --- target-data-volume sweep ----------------------------------------------

// Trains one model variant and reports target-test F1; supplied by the
// training layer so the sweep stays free of a dependency cycle.
using SweepTrainFn = std::function<double(const std::string& variant, uint64_t seed,
                                          const Corpus& tgt_train_subsampled)>;

struct SweepCell {
  double fraction = 1.0;
  std::string variant;
  uint64_t seed = 0;
  double f1 = 0.0;
  bool skipped = false;
};

// Subsamples Pos sentences of the target training split at each fraction
// (Neg sentences kept whole) and trains every variant at every seed.
// Fractions yielding zero Pos sentences are skipped with a warning.
std::vector<SweepCell> sweep_target_volume(const std::vector<double>& fractions,
                                           const std::vector<std::string>& variants,
                                           const std::vector<uint64_t>& seeds,
                                           const Corpus& tgt_train, const SweepTrainFn& train_fn);

// Deterministic Pos subsample at the given fraction (Neg kept whole).
Corpus subsample_pos(const Corpus& corpus, double fraction, uint64_t seed);

std::string sweep_to_csv(const std::vector<SweepCell>& cells);

}  // namespace bifleet
