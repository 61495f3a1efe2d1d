#include "bifleet/evaluate.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bifleet/common.hpp"
#include "bifleet/rng.hpp"

namespace bifleet {

using nlohmann::json;

Prf prf_from_counts(const EvalCounts& c) {
  Prf out;
  out.precision = c.predicted > 0 ? static_cast<double>(c.correct) / c.predicted : 0.0;
  out.recall = c.gold > 0 ? static_cast<double>(c.correct) / c.gold : 0.0;
  out.f1 = out.precision + out.recall > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

EvalCounts score_elements(const std::vector<ElementSpan>& gold,
                          const std::vector<ElementSpan>& predicted) {
  EvalCounts c;
  c.gold = static_cast<int64_t>(gold.size());
  c.predicted = static_cast<int64_t>(predicted.size());
  std::set<std::tuple<int, int, std::string>> gold_set;
  for (const auto& s : gold) gold_set.insert({s.start, s.end, s.element_type});
  for (const auto& s : predicted) {
    if (gold_set.count({s.start, s.end, s.element_type})) ++c.correct;
  }
  return c;
}

double clause_accuracy(const std::vector<std::string>& gold,
                       const std::vector<std::string>& predicted) {
  if (gold.size() != predicted.size()) {
    throw ContractViolation(cat("clause_accuracy length mismatch: ", gold.size(), " vs ",
                                predicted.size()));
  }
  if (gold.empty()) return 0.0;
  int64_t correct = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == predicted[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

EvalReport build_report(const std::vector<std::vector<ElementSpan>>& gold_spans,
                        const std::vector<std::vector<ElementSpan>>& pred_spans,
                        const std::vector<std::string>& gold_clauses,
                        const std::vector<std::string>& pred_clauses) {
  if (gold_spans.size() != pred_spans.size()) {
    throw ContractViolation("build_report: span list length mismatch");
  }
  EvalReport report;
  report.sentences = static_cast<int64_t>(gold_spans.size());
  for (size_t i = 0; i < gold_spans.size(); ++i) {
    report.total += score_elements(gold_spans[i], pred_spans[i]);
    // Per-type rows are one-vs-rest restrictions of the same exact-match rule.
    std::set<std::string> types;
    for (const auto& s : gold_spans[i]) types.insert(s.element_type);
    for (const auto& s : pred_spans[i]) types.insert(s.element_type);
    for (const auto& t : types) {
      std::vector<ElementSpan> g, p;
      for (const auto& s : gold_spans[i]) {
        if (s.element_type == t) g.push_back(s);
      }
      for (const auto& s : pred_spans[i]) {
        if (s.element_type == t) p.push_back(s);
      }
      report.per_type_counts[t] += score_elements(g, p);
    }
  }
  report.micro = prf_from_counts(report.total);
  for (const auto& [t, c] : report.per_type_counts) report.per_type[t] = prf_from_counts(c);
  report.clause_acc = clause_accuracy(gold_clauses, pred_clauses);
  return report;
}

EvalReport evaluate_model(const BiFleetModel& model, const Corpus& corpus, Domain domain) {
  std::vector<std::vector<ElementSpan>> gold_spans, pred_spans;
  std::vector<std::string> gold_clauses, pred_clauses;
  for (const auto& sentence : corpus.sentences) {
    PredictionBundle bundle = model.infer(sentence, domain);
    gold_spans.push_back(sentence.spans);
    pred_spans.push_back(bundle.spans);
    gold_clauses.push_back(sentence.clause_type);
    pred_clauses.push_back(bundle.clause_name);
  }
  return build_report(gold_spans, pred_spans, gold_clauses, pred_clauses);
}

double token_accuracy(const BiFleetModel& model, const Corpus& corpus, Domain domain) {
  int64_t total = 0, correct = 0;
  for (const auto& sentence : corpus.sentences) {
    PredictionBundle bundle = model.infer(sentence, domain);
    const auto gold = encode_bio(sentence);
    for (size_t i = 0; i < gold.size(); ++i) {
      ++total;
      if (bundle.bio_tags[i] == gold[i]) ++correct;
    }
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

std::string EvalReport::to_json() const {
  json j;
  j["micro"] = {{"precision", micro.precision}, {"recall", micro.recall}, {"f1", micro.f1}};
  j["counts"] = {{"gold", total.gold}, {"predicted", total.predicted}, {"correct", total.correct}};
  j["clause_accuracy"] = clause_acc;
  j["sentences"] = sentences;
  json types = json::object();
  for (const auto& [t, p] : per_type) {
    const auto& c = per_type_counts.at(t);
    types[t] = {{"precision", p.precision}, {"recall", p.recall},     {"f1", p.f1},
                {"gold", c.gold},           {"predicted", c.predicted}, {"correct", c.correct}};
  }
  j["per_type"] = types;
  return j.dump(2);
}

std::string EvalReport::to_text_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(28) << "type" << std::right << std::setw(8) << "gold"
     << std::setw(8) << "pred" << std::setw(8) << "corr" << std::setw(10) << "P"
     << std::setw(10) << "R" << std::setw(10) << "F1" << "\n";
  auto row = [&os](const std::string& name, const EvalCounts& c, const Prf& p) {
    os << std::left << std::setw(28) << name << std::right << std::setw(8) << c.gold
       << std::setw(8) << c.predicted << std::setw(8) << c.correct << std::setw(10) << p.precision
       << std::setw(10) << p.recall << std::setw(10) << p.f1 << "\n";
  };
  for (const auto& [t, p] : per_type) row(t, per_type_counts.at(t), p);
  row("ALL (micro)", total, micro);
  os << "clause accuracy: " << clause_acc << " over " << sentences << " sentences\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Target-volume sweep

Corpus subsample_pos(const Corpus& corpus, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError(cat("subsample fraction must be in (0,1], got ", fraction));
  }
  std::vector<size_t> pos_indices;
  for (size_t i = 0; i < corpus.sentences.size(); ++i) {
    if (corpus.sentences[i].is_pos()) pos_indices.push_back(i);
  }
  const size_t keep = static_cast<size_t>(fraction * static_cast<double>(pos_indices.size()) + 0.5);
  Rng rng(seed ^ 0x5eedf00du);
  rng.shuffle(pos_indices);
  pos_indices.resize(std::min(keep, pos_indices.size()));
  std::set<size_t> kept(pos_indices.begin(), pos_indices.end());

  Corpus out;
  for (size_t i = 0; i < corpus.sentences.size(); ++i) {
    if (!corpus.sentences[i].is_pos() || kept.count(i)) out.sentences.push_back(corpus.sentences[i]);
  }
  return out;
}

std::vector<SweepCell> sweep_target_volume(const std::vector<double>& fractions,
                                           const std::vector<std::string>& variants,
                                           const std::vector<uint64_t>& seeds,
                                           const Corpus& tgt_train, const SweepTrainFn& train_fn) {
  std::vector<SweepCell> cells;
  for (double fraction : fractions) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
      throw ConfigError(cat("sweep fraction outside (0,1]: ", fraction));
    }
    for (const auto& variant : variants) {
      for (uint64_t seed : seeds) {
        SweepCell cell;
        cell.fraction = fraction;
        cell.variant = variant;
        cell.seed = seed;
        Corpus sub = subsample_pos(tgt_train, fraction, seed);
        bool has_pos = false;
        for (const auto& s : sub.sentences) has_pos |= s.is_pos();
        if (!has_pos) {
          log_warn("sweep: fraction ", fraction, " yields no Pos sentences; skipped");
          cell.skipped = true;
        } else {
          cell.f1 = train_fn(variant, seed, sub);
        }
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

std::string sweep_to_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "fraction,variant,seed,f1,skipped\n";
  for (const auto& c : cells) {
    os << c.fraction << "," << c.variant << "," << c.seed << "," << std::setprecision(10)
       << c.f1 << "," << (c.skipped ? 1 : 0) << "\n";
  }
  return os.str();
}

}  // namespace bifleet
