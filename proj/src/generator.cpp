#include "bifleet/generator.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "bifleet/common.hpp"
#include "bifleet/rng.hpp"

namespace bifleet {

using nlohmann::json;

namespace {

int parse_int(const std::map<std::string, std::string>& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (...) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

double parse_double(const std::map<std::string, std::string>& kv, const std::string& key,
                    double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

std::string two_digits(int i) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02d", i);
  return buf;
}

}  // namespace

void GenConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("infeasible generator config: " + what);
  };
  require(clause_types_src > 0 && clause_types_tgt > 0, "clause type counts must be positive");
  require(element_types_src > 0 && element_types_tgt > 0, "element type counts must be positive");
  require(shared_clause_types >= 0 &&
              shared_clause_types <= std::min(clause_types_src, clause_types_tgt),
          "shared_clause_types exceeds a domain's clause type count");
  require(shared_element_types >= 0 &&
              shared_element_types <= std::min(element_types_src, element_types_tgt),
          "shared_element_types exceeds a domain's element type count");
  require(vocab_overlap >= 0.0 && vocab_overlap <= 1.0, "vocab_overlap outside [0,1]");
  require(neg_ratio >= 0.0 && neg_ratio < 1.0, "neg_ratio outside [0,1)");
  require(cooccur_strength > 0.0 && cooccur_strength <= 1.0, "cooccur_strength outside (0,1]");
  require(confusability >= 0.0 && confusability <= 1.0, "confusability outside [0,1]");
  require(keyword_prob >= 0.0 && keyword_prob <= 1.0, "keyword_prob outside [0,1]");
  require(train_src > 0 && train_tgt > 0, "train split sizes must be positive");
  require(valid_src >= 0 && test_src >= 0 && valid_tgt >= 0 && test_tgt >= 0,
          "split sizes must be nonnegative");
  require(min_tokens >= 3 && max_tokens >= min_tokens && max_tokens <= kMaxSentenceTokens,
          "token length bounds invalid");
  require(clause_min_sentences >= 1 && clause_max_sentences >= clause_min_sentences,
          "clause sentence bounds invalid");
  require(element_vocab_words >= 2, "element_vocab_words must be at least 2");
  require(element_max_tokens >= 1 && element_max_tokens <= 3, "element_max_tokens outside [1,3]");

  const int clause_total = clause_types_src + clause_types_tgt - shared_clause_types;
  const int element_total = element_types_src + element_types_tgt - shared_element_types;
  const int groups = (element_total + 1) / 2 + element_total;  // upper bound on group count
  const int reserved = clause_total + groups * element_vocab_words;
  require(vocab_size >= reserved + 20,
          cat("vocab_size ", vocab_size, " too small; needs at least ", reserved + 20));
}

GenConfig GenConfig::from_kv(const std::map<std::string, std::string>& kv) {
  GenConfig cfg;
  cfg.clause_types_src = parse_int(kv, "clause_types_src", cfg.clause_types_src);
  cfg.clause_types_tgt = parse_int(kv, "clause_types_tgt", cfg.clause_types_tgt);
  cfg.shared_clause_types = parse_int(kv, "shared_clause_types", cfg.shared_clause_types);
  cfg.element_types_src = parse_int(kv, "element_types_src", cfg.element_types_src);
  cfg.element_types_tgt = parse_int(kv, "element_types_tgt", cfg.element_types_tgt);
  cfg.shared_element_types = parse_int(kv, "shared_element_types", cfg.shared_element_types);
  cfg.vocab_size = parse_int(kv, "vocab_size", cfg.vocab_size);
  cfg.vocab_overlap = parse_double(kv, "vocab_overlap", cfg.vocab_overlap);
  cfg.train_src = parse_int(kv, "train_src", cfg.train_src);
  cfg.valid_src = parse_int(kv, "valid_src", cfg.valid_src);
  cfg.test_src = parse_int(kv, "test_src", cfg.test_src);
  cfg.train_tgt = parse_int(kv, "train_tgt", cfg.train_tgt);
  cfg.valid_tgt = parse_int(kv, "valid_tgt", cfg.valid_tgt);
  cfg.test_tgt = parse_int(kv, "test_tgt", cfg.test_tgt);
  cfg.neg_ratio = parse_double(kv, "neg_ratio", cfg.neg_ratio);
  cfg.cooccur_strength = parse_double(kv, "cooccur_strength", cfg.cooccur_strength);
  cfg.confusability = parse_double(kv, "confusability", cfg.confusability);
  cfg.keyword_prob = parse_double(kv, "keyword_prob", cfg.keyword_prob);
  cfg.min_tokens = parse_int(kv, "min_tokens", cfg.min_tokens);
  cfg.max_tokens = parse_int(kv, "max_tokens", cfg.max_tokens);
  cfg.clause_min_sentences = parse_int(kv, "clause_min_sentences", cfg.clause_min_sentences);
  cfg.clause_max_sentences = parse_int(kv, "clause_max_sentences", cfg.clause_max_sentences);
  cfg.element_vocab_words = parse_int(kv, "element_vocab_words", cfg.element_vocab_words);
  cfg.element_max_tokens = parse_int(kv, "element_max_tokens", cfg.element_max_tokens);
  auto it = kv.find("seed");
  if (it != kv.end()) cfg.seed = std::stoull(it->second);
  cfg.validate();
  return cfg;
}

std::map<std::string, std::string> GenConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["clause_types_src"] = std::to_string(clause_types_src);
  kv["clause_types_tgt"] = std::to_string(clause_types_tgt);
  kv["shared_clause_types"] = std::to_string(shared_clause_types);
  kv["element_types_src"] = std::to_string(element_types_src);
  kv["element_types_tgt"] = std::to_string(element_types_tgt);
  kv["shared_element_types"] = std::to_string(shared_element_types);
  kv["vocab_size"] = std::to_string(vocab_size);
  kv["vocab_overlap"] = std::to_string(vocab_overlap);
  kv["train_src"] = std::to_string(train_src);
  kv["valid_src"] = std::to_string(valid_src);
  kv["test_src"] = std::to_string(test_src);
  kv["train_tgt"] = std::to_string(train_tgt);
  kv["valid_tgt"] = std::to_string(valid_tgt);
  kv["test_tgt"] = std::to_string(test_tgt);
  kv["neg_ratio"] = std::to_string(neg_ratio);
  kv["cooccur_strength"] = std::to_string(cooccur_strength);
  kv["confusability"] = std::to_string(confusability);
  kv["keyword_prob"] = std::to_string(keyword_prob);
  kv["min_tokens"] = std::to_string(min_tokens);
  kv["max_tokens"] = std::to_string(max_tokens);
  kv["clause_min_sentences"] = std::to_string(clause_min_sentences);
  kv["clause_max_sentences"] = std::to_string(clause_max_sentences);
  kv["element_vocab_words"] = std::to_string(element_vocab_words);
  kv["element_max_tokens"] = std::to_string(element_max_tokens);
  kv["seed"] = std::to_string(seed);
  return kv;
}

namespace {

struct TypeUniverse {
  // Canonical name lists: shared block first, then domain-specific blocks.
  std::vector<std::string> clause_names;   // shared, src-only, tgt-only
  std::vector<std::string> element_names;  // shared, src-only, tgt-only
  std::vector<int> src_clauses, tgt_clauses;    // indices into clause_names
  std::vector<int> src_elements, tgt_elements;  // indices into element_names
  std::vector<int> element_home_src;  // element idx -> clause idx (-1 if absent)
  std::vector<int> element_home_tgt;
};

TypeUniverse build_universe(const GenConfig& cfg) {
  TypeUniverse u;
  const int sc = cfg.shared_clause_types;
  const int se = cfg.shared_element_types;
  for (int i = 0; i < sc; ++i) u.clause_names.push_back("ct_sh_" + two_digits(i));
  for (int i = 0; i < cfg.clause_types_src - sc; ++i) {
    u.clause_names.push_back("ct_src_" + two_digits(i));
  }
  for (int i = 0; i < cfg.clause_types_tgt - sc; ++i) {
    u.clause_names.push_back("ct_tgt_" + two_digits(i));
  }
  for (int i = 0; i < se; ++i) u.element_names.push_back("et_sh_" + two_digits(i));
  for (int i = 0; i < cfg.element_types_src - se; ++i) {
    u.element_names.push_back("et_src_" + two_digits(i));
  }
  for (int i = 0; i < cfg.element_types_tgt - se; ++i) {
    u.element_names.push_back("et_tgt_" + two_digits(i));
  }

  const int src_only_c = cfg.clause_types_src - sc;
  for (int i = 0; i < sc; ++i) u.src_clauses.push_back(i);
  for (int i = 0; i < src_only_c; ++i) u.src_clauses.push_back(sc + i);
  for (int i = 0; i < sc; ++i) u.tgt_clauses.push_back(i);
  for (int i = 0; i < cfg.clause_types_tgt - sc; ++i) u.tgt_clauses.push_back(sc + src_only_c + i);

  const int src_only_e = cfg.element_types_src - se;
  for (int i = 0; i < se; ++i) u.src_elements.push_back(i);
  for (int i = 0; i < src_only_e; ++i) u.src_elements.push_back(se + i);
  for (int i = 0; i < se; ++i) u.tgt_elements.push_back(i);
  for (int i = 0; i < cfg.element_types_tgt - se; ++i) u.tgt_elements.push_back(se + src_only_e + i);

  // Home assignment: every element type lives in exactly one clause type per
  // domain it exists in. Shared elements live in shared clauses whenever any
  // exist, so their rule transfers across domains verbatim.
  u.element_home_src.assign(u.element_names.size(), -1);
  u.element_home_tgt.assign(u.element_names.size(), -1);
  for (int i = 0; i < se; ++i) {
    const int home = sc > 0 ? u.src_clauses[i % sc] : u.src_clauses[i % u.src_clauses.size()];
    u.element_home_src[static_cast<size_t>(i)] = home;
    u.element_home_tgt[static_cast<size_t>(i)] =
        sc > 0 ? home : u.tgt_clauses[i % u.tgt_clauses.size()];
  }
  for (int i = 0; i < src_only_e; ++i) {
    const int el = se + i;
    u.element_home_src[static_cast<size_t>(el)] =
        u.src_clauses[static_cast<size_t>(i) % u.src_clauses.size()];
  }
  const int tgt_only_e = cfg.element_types_tgt - se;
  for (int i = 0; i < tgt_only_e; ++i) {
    const size_t el = static_cast<size_t>(se + src_only_e + i);
    u.element_home_tgt[el] = u.tgt_clauses[static_cast<size_t>(i) % u.tgt_clauses.size()];
  }
  return u;
}

}  // namespace

SyntheticData generate_synthetic(const GenConfig& cfg_in, uint64_t seed) {
  GenConfig cfg = cfg_in;
  cfg.seed = seed;
  cfg.validate();
  TypeUniverse u = build_universe(cfg);

  Rng master(seed);
  Rng recipe_rng = master.fork(1);

  // Confusion groups: pairs of element types share one realization
  // vocabulary; pairs prefer members with different home clauses so surface
  // forms alone cannot resolve the type.
  const int n_elements = static_cast<int>(u.element_names.size());
  std::vector<int> confusable, singleton;
  for (int e = 0; e < n_elements; ++e) {
    if (recipe_rng.bernoulli(cfg.confusability)) {
      confusable.push_back(e);
    } else {
      singleton.push_back(e);
    }
  }
  recipe_rng.shuffle(confusable);
  for (size_t i = 0; i + 1 < confusable.size(); i += 2) {
    const int a = confusable[i];
    const int home_a = u.element_home_src[a] >= 0 ? u.element_home_src[a] : u.element_home_tgt[a];
    int home_b = u.element_home_src[confusable[i + 1]] >= 0 ? u.element_home_src[confusable[i + 1]]
                                                            : u.element_home_tgt[confusable[i + 1]];
    if (home_b == home_a) {
      for (size_t j = i + 2; j < confusable.size(); ++j) {
        const int cand = confusable[j];
        const int home_c =
            u.element_home_src[cand] >= 0 ? u.element_home_src[cand] : u.element_home_tgt[cand];
        if (home_c != home_a) {
          std::swap(confusable[i + 1], confusable[j]);
          break;
        }
      }
    }
  }
  std::vector<int> group_of(static_cast<size_t>(n_elements), -1);
  int n_groups = 0;
  for (size_t i = 0; i < confusable.size(); i += 2) {
    group_of[static_cast<size_t>(confusable[i])] = n_groups;
    if (i + 1 < confusable.size()) group_of[static_cast<size_t>(confusable[i + 1])] = n_groups;
    ++n_groups;
  }
  for (int e : singleton) group_of[static_cast<size_t>(e)] = n_groups++;

  // Vocabulary layout.
  const int n_clauses = static_cast<int>(u.clause_names.size());
  std::vector<std::string> keywords;
  for (int c = 0; c < n_clauses; ++c) keywords.push_back("kw_" + u.clause_names[c]);
  std::vector<std::vector<std::string>> group_words(static_cast<size_t>(n_groups));
  for (int g = 0; g < n_groups; ++g) {
    for (int w = 0; w < cfg.element_vocab_words; ++w) {
      group_words[static_cast<size_t>(g)].push_back(cat("ew_g", g, "_", w));
    }
  }
  const int filler_total = cfg.vocab_size - n_clauses - n_groups * cfg.element_vocab_words;
  const int common = static_cast<int>(filler_total * cfg.vocab_overlap + 0.5);
  const int src_only_fillers = (filler_total - common) / 2;
  const int tgt_only_fillers = filler_total - common - src_only_fillers;
  std::vector<std::string> src_fillers, tgt_fillers;
  for (int i = 0; i < common; ++i) {
    src_fillers.push_back(cat("fw_c_", i));
    tgt_fillers.push_back(cat("fw_c_", i));
  }
  for (int i = 0; i < src_only_fillers; ++i) src_fillers.push_back(cat("fw_s_", i));
  for (int i = 0; i < tgt_only_fillers; ++i) tgt_fillers.push_back(cat("fw_t_", i));
  if (cfg.vocab_overlap >= 1.0) tgt_fillers = src_fillers;

  // Clause priors: mild tilt over the domain's clause list.
  auto make_prior = [](size_t n) {
    std::vector<double> p(n);
    for (size_t i = 0; i < n; ++i) p[i] = 1.0 / (1.0 + 0.1 * static_cast<double>(i));
    return p;
  };

  auto make_recipe = [&](Domain d) {
    DomainRecipe r;
    const auto& clauses = d == Domain::kSource ? u.src_clauses : u.tgt_clauses;
    const auto& elements = d == Domain::kSource ? u.src_elements : u.tgt_elements;
    const auto& homes = d == Domain::kSource ? u.element_home_src : u.element_home_tgt;
    for (int c : clauses) {
      r.clause_types.push_back(u.clause_names[static_cast<size_t>(c)]);
      r.keyword[u.clause_names[static_cast<size_t>(c)]] = keywords[static_cast<size_t>(c)];
      r.allowed_elements[u.clause_names[static_cast<size_t>(c)]] = {};
    }
    r.clause_prior = make_prior(clauses.size());
    for (int e : elements) {
      const std::string& ename = u.element_names[static_cast<size_t>(e)];
      r.element_types.push_back(ename);
      r.element_words[ename] = group_words[static_cast<size_t>(group_of[static_cast<size_t>(e)])];
      const int home = homes[static_cast<size_t>(e)];
      r.allowed_elements[u.clause_names[static_cast<size_t>(home)]].push_back(ename);
    }
    r.filler_words = d == Domain::kSource ? src_fillers : tgt_fillers;
    return r;
  };

  SyntheticData data;
  data.source_recipe = make_recipe(Domain::kSource);
  data.target_recipe = make_recipe(Domain::kTarget);

  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    const auto& homes = d == Domain::kSource ? u.element_home_src : u.element_home_tgt;
    const auto& elements = d == Domain::kSource ? u.src_elements : u.tgt_elements;
    for (int e : elements) {
      data.rules.push_back(PlantedRule{d, u.clause_names[static_cast<size_t>(homes[static_cast<size_t>(e)])],
                                       u.element_names[static_cast<size_t>(e)]});
    }
  }

  // Sampling. Each (domain, split) draws from its own forked stream, so
  // changing one split's size never reshuffles another.
  auto sample_split = [&](Domain d, const DomainRecipe& recipe, int count, Rng rng,
                          const std::string& id_prefix) {
    Corpus corpus;
    int clause_counter = 0;
    while (static_cast<int>(corpus.sentences.size()) < count) {
      const size_t ct_idx = rng.weighted_index(recipe.clause_prior);
      const std::string& ct = recipe.clause_types[ct_idx];
      const auto& allowed = recipe.allowed_elements.at(ct);
      int n_s = rng.uniform_int(cfg.clause_min_sentences, cfg.clause_max_sentences);
      n_s = std::min<int>(n_s, count - static_cast<int>(corpus.sentences.size()));
      const std::string clause_id = cat(id_prefix, "_c", clause_counter++);
      for (int si = 0; si < n_s; ++si) {
        Sentence s;
        s.domain = d;
        s.clause_type = ct;
        s.clause_id = clause_id;

        const bool pos = !allowed.empty() && !rng.bernoulli(cfg.neg_ratio);
        std::vector<std::string> realized;
        if (pos) {
          for (const auto& et : allowed) {
            if (rng.bernoulli(cfg.cooccur_strength)) realized.push_back(et);
          }
          if (realized.empty()) {
            realized.push_back(allowed[static_cast<size_t>(rng.next_below(allowed.size()))]);
          }
        }

        // Units: element runs, maybe a keyword, fillers; shuffled then laid out.
        struct Unit {
          std::vector<std::string> tokens;
          std::string element_type;  // empty for filler/keyword
        };
        std::vector<Unit> units;
        int span_tokens = 0;
        const int span_budget = kMaxSentenceTokens - 4;
        for (const auto& et : realized) {
          if (span_tokens + cfg.element_max_tokens > span_budget) break;
          Unit unit;
          unit.element_type = et;
          const int len = rng.uniform_int(1, cfg.element_max_tokens);
          const auto& words = recipe.element_words.at(et);
          for (int k = 0; k < len; ++k) {
            unit.tokens.push_back(words[static_cast<size_t>(rng.next_below(words.size()))]);
          }
          span_tokens += len;
          units.push_back(std::move(unit));
        }
        int keyword_tokens = 0;
        if (rng.bernoulli(cfg.keyword_prob)) {
          units.push_back(Unit{{recipe.keyword.at(ct)}, ""});
          keyword_tokens = 1;
        }
        const int target_len = rng.uniform_int(cfg.min_tokens, cfg.max_tokens);
        const int fillers =
            std::min(kMaxSentenceTokens - span_tokens - keyword_tokens,
                     std::max(1, target_len - span_tokens - keyword_tokens));
        for (int k = 0; k < fillers; ++k) {
          units.push_back(Unit{{recipe.filler_words[static_cast<size_t>(
                               rng.next_below(recipe.filler_words.size()))]},
                               ""});
        }
        rng.shuffle(units);

        for (const auto& unit : units) {
          const int start = static_cast<int>(s.tokens.size());
          for (const auto& tok : unit.tokens) s.tokens.push_back(tok);
          if (!unit.element_type.empty()) {
            s.spans.push_back(ElementSpan{start, static_cast<int>(s.tokens.size()) - 1,
                                          unit.element_type});
          }
        }
        std::sort(s.spans.begin(), s.spans.end(),
                  [](const ElementSpan& a, const ElementSpan& b) { return a.start < b.start; });
        s.validate();
        corpus.sentences.push_back(std::move(s));
      }
    }
    return corpus;
  };

  Rng ss[6] = {master.fork(10), master.fork(11), master.fork(12),
               master.fork(13), master.fork(14), master.fork(15)};
  data.source_train = sample_split(Domain::kSource, data.source_recipe, cfg.train_src, ss[0], "s_tr");
  data.source_valid = sample_split(Domain::kSource, data.source_recipe, cfg.valid_src, ss[1], "s_va");
  data.source_test = sample_split(Domain::kSource, data.source_recipe, cfg.test_src, ss[2], "s_te");
  data.target_train = sample_split(Domain::kTarget, data.target_recipe, cfg.train_tgt, ss[3], "t_tr");
  data.target_valid = sample_split(Domain::kTarget, data.target_recipe, cfg.valid_tgt, ss[4], "t_va");
  data.target_test = sample_split(Domain::kTarget, data.target_recipe, cfg.test_tgt, ss[5], "t_te");
  return data;
}

std::string rules_to_json(const SyntheticData& data) {
  json j;
  json rules = json::array();
  for (const auto& r : data.rules) {
    rules.push_back({{"domain", domain_name(r.domain)},
                     {"clause_type", r.clause_type},
                     {"element_type", r.element_type}});
  }
  j["rules"] = rules;
  j["source_clause_types"] = data.source_recipe.clause_types;
  j["target_clause_types"] = data.target_recipe.clause_types;
  j["source_element_types"] = data.source_recipe.element_types;
  j["target_element_types"] = data.target_recipe.element_types;
  return j.dump(2);
}

void write_synthetic(const SyntheticData& data, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  save_jsonl(data.source_train, out_dir + "/source_train.jsonl");
  save_jsonl(data.source_valid, out_dir + "/source_valid.jsonl");
  save_jsonl(data.source_test, out_dir + "/source_test.jsonl");
  save_jsonl(data.target_train, out_dir + "/target_train.jsonl");
  save_jsonl(data.target_valid, out_dir + "/target_valid.jsonl");
  save_jsonl(data.target_test, out_dir + "/target_test.jsonl");
  std::ofstream rules(out_dir + "/rules.json");
  if (!rules) throw IoError("cannot write " + out_dir + "/rules.json");
  rules << rules_to_json(data) << "\n";
}

}  // namespace bifleet
