#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bifleet/corpus.hpp"

namespace bifleet {

// Two-domain synthetic corpus generator. Each clause type permits a fixed
// subset of element types (the planted rules); element surface forms are
// drawn from per-type sub-vocabularies that confusable type pairs share, so
// the clause context — not the span wording — disambiguates the type. Domain
// shift comes from partially disjoint filler vocabularies and different
// clause-type priors.
struct GenConfig {
  int clause_types_src = 18;
  int clause_types_tgt = 17;
  int shared_clause_types = 9;
  int element_types_src = 70;
  int element_types_tgt = 79;
  int shared_element_types = 40;

  int vocab_size = 3000;
  double vocab_overlap = 0.5;  // fraction of filler words common to both domains

  // Split sizes per domain (defaults keep the 8/1/1 ratio).
  int train_src = 4000, valid_src = 500, test_src = 500;
  int train_tgt = 1600, valid_tgt = 200, test_tgt = 200;

  double neg_ratio = 0.3;          // P(sentence carries no elements)
  double cooccur_strength = 0.75;  // P(Pos sentence realizes each allowed type)
  double confusability = 1.0;      // fraction of element types sharing pair vocabularies
  double keyword_prob = 0.9;       // P(sentence contains its clause keyword)

  int min_tokens = 5, max_tokens = 18;
  int clause_min_sentences = 1, clause_max_sentences = 3;
  int element_vocab_words = 6;  // words per element sub-vocabulary
  int element_max_tokens = 2;   // element span length in [1, this]

  uint64_t seed = 1;

  void validate() const;  // throws ConfigError on infeasible settings

  static GenConfig from_kv(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_kv() const;
};

struct PlantedRule {
  Domain domain;
  std::string clause_type;
  std::string element_type;

  bool operator==(const PlantedRule&) const = default;
};

// Distribution description for one domain; equal recipes mean the domains
// sample from identical distributions.
struct DomainRecipe {
  std::vector<std::string> clause_types;
  std::vector<double> clause_prior;  // aligned with clause_types
  std::vector<std::string> element_types;
  std::map<std::string, std::vector<std::string>> allowed_elements;  // ct -> ets
  std::map<std::string, std::string> keyword;                        // ct -> token
  std::map<std::string, std::vector<std::string>> element_words;     // et -> tokens
  std::vector<std::string> filler_words;

  bool operator==(const DomainRecipe&) const = default;
};

struct SyntheticData {
  Corpus source_train, source_valid, source_test;
  Corpus target_train, target_valid, target_test;
  std::vector<PlantedRule> rules;
  DomainRecipe source_recipe, target_recipe;

  const Corpus& split(Domain d, int which) const {  // which: 0 train, 1 valid, 2 test
    const Corpus* table[2][3] = {{&source_train, &source_valid, &source_test},
                                 {&target_train, &target_valid, &target_test}};
    return *table[d == Domain::kTarget ? 1 : 0][which];
  }
};

// Deterministic for a given (config, seed); the seed argument overrides
// cfg.seed so callers can thread one --seed through every stage.
SyntheticData generate_synthetic(const GenConfig& cfg, uint64_t seed);

// Writes the six split files plus rules.json into out_dir.
void write_synthetic(const SyntheticData& data, const std::string& out_dir);

std::string rules_to_json(const SyntheticData& data);

}  // namespace bifleet
