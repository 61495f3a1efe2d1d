#include "bifleet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "bifleet/ce_graph.hpp"
#include "bifleet/common.hpp"
#include "bifleet/evaluate.hpp"
#include "bifleet/generator.hpp"
#include "bifleet/kvconfig.hpp"
#include "bifleet/manifest.hpp"
#include "bifleet/train.hpp"

namespace bifleet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Config file plus --set overrides, CLI flags win.
std::map<std::string, std::string> resolve_config(const std::string& config_path,
                                                  const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) kv = load_kv_file(config_path);
  for (const auto& item : overrides) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got: " + item);
    }
    kv[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  return kv;
}

RunManifest begin_manifest(const std::string& subcommand,
                           const std::map<std::string, std::string>& config, uint64_t seed) {
  RunManifest m;
  m.subcommand = subcommand;
  m.config = config;
  m.seed = seed;
  m.tool_version = kToolVersion;
  m.started_at = current_utc_timestamp();
  return m;
}

void finish_manifest(RunManifest& m, const std::string& path) {
  m.finished_at = current_utc_timestamp();
  m.write(path);
}

Corpus load_domain_corpus(const std::string& path, Domain expected) {
  Corpus c = load_jsonl(path);
  for (const auto& s : c.sentences) {
    if (s.domain != expected) {
      throw ValidationError(cat(path, ": sentence with domain '", domain_name(s.domain),
                                "' in a ", domain_name(expected), " corpus"));
    }
  }
  return c;
}

void apply_variant(ModelConfig& config, const std::string& variant) {
  if (variant == "full") {
    config.no_ce_graph = false;
    config.no_bifeedback = false;
  } else if (variant == "no-ce-graph" || variant == "ce-graph") {
    config.no_ce_graph = true;
    config.no_bifeedback = false;
  } else if (variant == "no-bifeedback" || variant == "bifeedback") {
    config.no_bifeedback = true;
  } else {
    throw ConfigError("unknown model variant: " + variant);
  }
}

struct TrainInputs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string src_train, tgt_train, tgt_valid, graph_path;
  uint64_t seed = 1;
  bool seed_given = false;
};

struct LoadedTrainJob {
  TrainConfig cfg;
  CEGraph graph;
  Corpus src_train, tgt_train, tgt_valid;
  std::map<std::string, std::string> resolved;
};

LoadedTrainJob load_train_job(const TrainInputs& in) {
  LoadedTrainJob job;
  job.resolved = resolve_config(in.config_path, in.overrides);
  if (in.seed_given) job.resolved["seed"] = std::to_string(in.seed);
  job.cfg = TrainConfig::from_kv(job.resolved);
  job.graph = CEGraph::load(in.graph_path);
  job.src_train = load_domain_corpus(in.src_train, Domain::kSource);
  job.tgt_train = load_domain_corpus(in.tgt_train, Domain::kTarget);
  if (!in.tgt_valid.empty()) job.tgt_valid = load_domain_corpus(in.tgt_valid, Domain::kTarget);
  return job;
}

BiFleetModel build_and_train(const LoadedTrainJob& job, TrainResult* result_out) {
  Vocabulary vocab = build_vocab({&job.src_train, &job.tgt_train}, 1);
  BiFleetModel model(job.cfg.model, job.graph, std::move(vocab), job.cfg.seed);
  TrainResult result = train_model(model, job.cfg, job.src_train, job.tgt_train, job.tgt_valid);
  if (result_out) *result_out = result;
  return model;
}

json bundle_to_json(const Sentence& sentence, const PredictionBundle& bundle) {
  json spans = json::array();
  for (const auto& s : bundle.spans) {
    spans.push_back({{"start", s.start}, {"end", s.end}, {"type", s.element_type}});
  }
  return json{{"tokens", sentence.tokens},
              {"clause_pred", bundle.clause_name},
              {"clause_distribution", bundle.y_cc},
              {"bio", bundle.bio_tags},
              {"spans", spans}};
}

// --- subcommand bodies -------------------------------------------------------

int run_generate(const std::string& config_path, const std::vector<std::string>& overrides,
                 uint64_t seed, bool seed_given, const std::string& out_dir) {
  auto kv = resolve_config(config_path, overrides);
  GenConfig cfg = GenConfig::from_kv(kv);
  if (seed_given) cfg.seed = seed;
  RunManifest manifest = begin_manifest("generate-data", cfg.to_kv(), cfg.seed);
  if (!config_path.empty()) manifest.add_input(config_path);

  SyntheticData data = generate_synthetic(cfg, cfg.seed);
  write_synthetic(data, out_dir);
  for (const char* name :
       {"source_train.jsonl", "source_valid.jsonl", "source_test.jsonl", "target_train.jsonl",
        "target_valid.jsonl", "target_test.jsonl", "rules.json"}) {
    manifest.outputs.push_back((fs::path(out_dir) / name).string());
  }
  finish_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  log_info("wrote synthetic corpora to ", out_dir);
  return 0;
}

int run_build_graph(const std::string& src_path, const std::string& tgt_path, double theta,
                    bool inherit_shared, const std::string& out_path, const std::string& dot_path) {
  Corpus src = load_domain_corpus(src_path, Domain::kSource);
  Corpus tgt = load_domain_corpus(tgt_path, Domain::kTarget);
  LabelInventory inventory = build_inventory(src, tgt);
  CEGraph graph = build_graph(count_cooccurrence(src), count_cooccurrence(tgt), inventory, theta,
                              inherit_shared);

  std::map<std::string, std::string> cfg = {{"theta", std::to_string(theta)},
                                            {"inherit_shared_edges", inherit_shared ? "true" : "false"}};
  RunManifest manifest = begin_manifest("build-graph", cfg, 0);
  manifest.add_input(src_path);
  manifest.add_input(tgt_path);
  graph.save(out_path);
  manifest.outputs.push_back(out_path);
  if (!dot_path.empty()) {
    std::ofstream dot(dot_path);
    if (!dot) throw IoError("cannot write DOT file: " + dot_path);
    dot << graph.to_dot();
    manifest.outputs.push_back(dot_path);
  }
  finish_manifest(manifest, out_path + ".manifest.json");
  log_info("graph: ", graph.source_edges.size(), " source edges, ", graph.target_edges.size(),
           " target edges");
  return 0;
}

int run_train(const TrainInputs& in, const std::vector<std::string>& ablate,
              const std::string& out_path, const std::string& metrics_path) {
  TrainInputs inputs = in;
  LoadedTrainJob job = load_train_job(inputs);
  for (const auto& a : ablate) apply_variant(job.cfg.model, a);
  job.resolved = job.cfg.to_kv();

  RunManifest manifest = begin_manifest("train", job.resolved, job.cfg.seed);
  if (!in.config_path.empty()) manifest.add_input(in.config_path);
  manifest.add_input(in.src_train);
  manifest.add_input(in.tgt_train);
  if (!in.tgt_valid.empty()) manifest.add_input(in.tgt_valid);
  manifest.add_input(in.graph_path);

  TrainResult result;
  BiFleetModel model = build_and_train(job, &result);

  CheckpointMeta meta;
  meta.train_config = job.cfg.to_kv();
  meta.epoch = result.best_epoch;
  meta.rng_state = Rng(job.cfg.seed).serialize();
  save_checkpoint(out_path, model, meta);
  manifest.outputs.push_back(out_path);
  if (!metrics_path.empty()) {
    std::ofstream csv(metrics_path);
    if (!csv) throw IoError("cannot write metrics CSV: " + metrics_path);
    csv << result.metrics_csv;
    manifest.outputs.push_back(metrics_path);
  }
  finish_manifest(manifest, out_path + ".manifest.json");
  log_info("best epoch ", result.best_epoch, " valid F1 ", result.best_f1);
  return 0;
}

int run_evaluate(const std::string& ckpt_path, const std::string& test_path,
                 const std::string& domain_str, const std::string& report_path) {
  const Domain domain = parse_domain(domain_str);
  BiFleetModel model = load_checkpoint(ckpt_path);
  Corpus test = load_domain_corpus(test_path, domain);
  EvalReport report = evaluate_model(model, test, domain);
  std::cout << report.to_text_table();
  if (!report_path.empty()) {
    RunManifest manifest = begin_manifest("evaluate", {{"domain", domain_str}}, 0);
    manifest.add_input(ckpt_path);
    manifest.add_input(test_path);
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write report: " + report_path);
    out << report.to_json() << "\n";
    manifest.outputs.push_back(report_path);
    finish_manifest(manifest, report_path + ".manifest.json");
  }
  return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& input_path,
                const std::string& domain_str, const std::string& out_path) {
  const Domain domain = parse_domain(domain_str);
  BiFleetModel model = load_checkpoint(ckpt_path);
  Corpus input = load_domain_corpus(input_path, domain);
  std::ofstream out;
  std::ostream* sink = &std::cout;
  if (!out_path.empty()) {
    out.open(out_path);
    if (!out) throw IoError("cannot write predictions: " + out_path);
    sink = &out;
  }
  for (const auto& sentence : input.sentences) {
    PredictionBundle bundle = model.infer(sentence, domain);
    (*sink) << bundle_to_json(sentence, bundle).dump() << "\n";
  }
  if (!out_path.empty()) {
    RunManifest manifest = begin_manifest("predict", {{"domain", domain_str}}, 0);
    manifest.add_input(ckpt_path);
    manifest.add_input(input_path);
    manifest.outputs.push_back(out_path);
    finish_manifest(manifest, out_path + ".manifest.json");
  }
  return 0;
}

int run_sweep(const TrainInputs& in, const std::string& tgt_test_path,
              const std::string& fractions_str, const std::string& variants_str,
              const std::string& seeds_str, const std::string& out_csv) {
  LoadedTrainJob job = load_train_job(in);
  Corpus tgt_test = load_domain_corpus(tgt_test_path, Domain::kTarget);

  std::vector<double> fractions;
  for (const auto& f : split(fractions_str, ',')) fractions.push_back(std::stod(trim(f)));
  std::vector<std::string> variants;
  for (const auto& v : split(variants_str, ',')) variants.push_back(trim(v));
  std::vector<uint64_t> seeds;
  for (const auto& s : split(seeds_str, ',')) seeds.push_back(std::stoull(trim(s)));

  RunManifest manifest = begin_manifest("sweep", job.resolved, job.cfg.seed);
  manifest.config["fractions"] = fractions_str;
  manifest.config["variants"] = variants_str;
  manifest.config["seeds"] = seeds_str;
  if (!in.config_path.empty()) manifest.add_input(in.config_path);
  manifest.add_input(in.src_train);
  manifest.add_input(in.tgt_train);
  if (!in.tgt_valid.empty()) manifest.add_input(in.tgt_valid);
  manifest.add_input(tgt_test_path);
  manifest.add_input(in.graph_path);

  auto train_fn = [&](const std::string& variant, uint64_t seed, const Corpus& sub) {
    TrainConfig cfg = job.cfg;
    cfg.seed = seed;
    apply_variant(cfg.model, variant);
    Vocabulary vocab = build_vocab({&job.src_train, &sub}, 1);
    BiFleetModel model(cfg.model, job.graph, std::move(vocab), seed);
    train_model(model, cfg, job.src_train, sub, job.tgt_valid);
    return evaluate_model(model, tgt_test, Domain::kTarget).micro.f1;
  };
  auto cells = sweep_target_volume(fractions, variants, seeds, job.tgt_train, train_fn);

  std::ofstream csv(out_csv);
  if (!csv) throw IoError("cannot write sweep CSV: " + out_csv);
  csv << sweep_to_csv(cells);
  manifest.outputs.push_back(out_csv);
  finish_manifest(manifest, out_csv + ".manifest.json");
  return 0;
}

int run_ablate(const TrainInputs& in, const std::string& tgt_test_path,
               const std::string& variants_str, const std::string& seeds_str,
               const std::string& out_csv) {
  LoadedTrainJob job = load_train_job(in);
  Corpus tgt_test = load_domain_corpus(tgt_test_path, Domain::kTarget);
  std::vector<std::string> variants;
  for (const auto& v : split(variants_str, ',')) variants.push_back(trim(v));
  std::vector<uint64_t> seeds;
  for (const auto& s : split(seeds_str, ',')) seeds.push_back(std::stoull(trim(s)));

  RunManifest manifest = begin_manifest("ablate", job.resolved, job.cfg.seed);
  manifest.config["variants"] = variants_str;
  manifest.config["seeds"] = seeds_str;
  if (!in.config_path.empty()) manifest.add_input(in.config_path);
  manifest.add_input(in.src_train);
  manifest.add_input(in.tgt_train);
  if (!in.tgt_valid.empty()) manifest.add_input(in.tgt_valid);
  manifest.add_input(tgt_test_path);
  manifest.add_input(in.graph_path);

  std::ostringstream csv;
  csv << "variant,seed,f1,clause_acc\n";
  std::map<std::string, std::vector<double>> by_variant;
  for (const auto& variant : variants) {
    for (uint64_t seed : seeds) {
      TrainConfig cfg = job.cfg;
      cfg.seed = seed;
      apply_variant(cfg.model, variant);
      Vocabulary vocab = build_vocab({&job.src_train, &job.tgt_train}, 1);
      BiFleetModel model(cfg.model, job.graph, std::move(vocab), seed);
      train_model(model, cfg, job.src_train, job.tgt_train, job.tgt_valid);
      EvalReport report = evaluate_model(model, tgt_test, Domain::kTarget);
      csv << variant << "," << seed << "," << report.micro.f1 << "," << report.clause_acc << "\n";
      by_variant[variant].push_back(report.micro.f1);
      log_info("ablate ", variant, " seed ", seed, " F1 ", report.micro.f1);
    }
  }
  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot write ablation CSV: " + out_csv);
  out << csv.str();
  manifest.outputs.push_back(out_csv);
  finish_manifest(manifest, out_csv + ".manifest.json");

  std::cout << "variant mean-F1 (over " << seeds.size() << " seeds)\n";
  for (const auto& [variant, f1s] : by_variant) {
    const double mean = std::accumulate(f1s.begin(), f1s.end(), 0.0) / f1s.size();
    std::cout << "  " << variant << " " << mean << "\n";
  }
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Cross-domain contract element extraction"};
  app.require_subcommand(1);
  std::string log_level_str = "warn";
  app.add_option("--log-level", log_level_str)->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "Generate the two-domain synthetic corpora");
  std::string gen_config, gen_out = "data";
  std::vector<std::string> gen_set;
  uint64_t gen_seed = 1;
  gen->add_option("--config", gen_config);
  gen->add_option("--set", gen_set, "override config entries as key=value");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out);

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "Construct the clause-element graph");
  std::string bg_src, bg_tgt, bg_out = "graph.json", bg_dot;
  double bg_theta = 0.1;
  bool bg_inherit = false;
  bg->add_option("--train-src", bg_src)->required();
  bg->add_option("--train-tgt", bg_tgt)->required();
  bg->add_option("--theta", bg_theta);
  bg->add_option("--out", bg_out);
  bg->add_option("--dot", bg_dot, "also write a DOT rendering");
  bg->add_flag("--inherit-shared-edges", bg_inherit,
               "copy source edges between shared types into the target edge set");

  auto add_train_inputs = [](CLI::App* cmd, TrainInputs& t, CLI::Option** seed_opt) {
    cmd->add_option("--config", t.config_path);
    cmd->add_option("--set", t.overrides, "override config entries as key=value");
    cmd->add_option("--src-train", t.src_train)->required();
    cmd->add_option("--tgt-train", t.tgt_train)->required();
    cmd->add_option("--tgt-valid", t.tgt_valid);
    cmd->add_option("--graph", t.graph_path)->required();
    *seed_opt = cmd->add_option("--seed", t.seed);
  };

  // train
  auto* tr = app.add_subcommand("train", "Joint cross-domain training");
  TrainInputs tr_in;
  CLI::Option* tr_seed_opt = nullptr;
  add_train_inputs(tr, tr_in, &tr_seed_opt);
  std::string tr_out = "model.ckpt", tr_metrics;
  std::vector<std::string> tr_ablate;
  tr->add_option("--out", tr_out);
  tr->add_option("--metrics", tr_metrics, "per-epoch CSV log");
  tr->add_option("--ablate", tr_ablate)->check(CLI::IsMember({"ce-graph", "bifeedback"}));

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Entity-level exact-match evaluation");
  std::string ev_ckpt, ev_test, ev_domain = "target", ev_report;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--test", ev_test)->required();
  ev->add_option("--domain", ev_domain)->check(CLI::IsMember({"source", "target"}));
  ev->add_option("--report", ev_report);

  // predict
  auto* pr = app.add_subcommand("predict", "Per-sentence JSON predictions");
  std::string pr_ckpt, pr_in, pr_domain = "target", pr_out;
  pr->add_option("--checkpoint", pr_ckpt)->required();
  pr->add_option("--input", pr_in)->required();
  pr->add_option("--domain", pr_domain)->check(CLI::IsMember({"source", "target"}));
  pr->add_option("--out", pr_out);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Target-data-volume sweep");
  TrainInputs sw_in;
  CLI::Option* sw_seed_opt = nullptr;
  add_train_inputs(sw, sw_in, &sw_seed_opt);
  std::string sw_test, sw_fractions = "0.2,0.4,0.6,0.8,1.0", sw_variants = "full,no-bifeedback";
  std::string sw_seeds = "1,2,3,4,5", sw_out = "sweep.csv";
  sw->add_option("--tgt-test", sw_test)->required();
  sw->add_option("--fractions", sw_fractions);
  sw->add_option("--variants", sw_variants);
  sw->add_option("--seeds", sw_seeds);
  sw->add_option("--out", sw_out);

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and compare ablation variants");
  TrainInputs ab_in;
  CLI::Option* ab_seed_opt = nullptr;
  add_train_inputs(ab, ab_in, &ab_seed_opt);
  std::string ab_test, ab_variants = "full,no-ce-graph,no-bifeedback", ab_seeds = "1,2,3,4,5";
  std::string ab_out = "ablation.csv";
  ab->add_option("--tgt-test", ab_test)->required();
  ab->add_option("--variants", ab_variants);
  ab->add_option("--seeds", ab_seeds);
  ab->add_option("--out", ab_out);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  set_log_level(log_level_str);

  try {
    if (gen->parsed()) {
      return run_generate(gen_config, gen_set, gen_seed, gen_seed_opt->count() > 0, gen_out);
    }
    if (bg->parsed()) {
      return run_build_graph(bg_src, bg_tgt, bg_theta, bg_inherit, bg_out, bg_dot);
    }
    if (tr->parsed()) {
      tr_in.seed_given = tr_seed_opt->count() > 0;
      return run_train(tr_in, tr_ablate, tr_out, tr_metrics);
    }
    if (ev->parsed()) return run_evaluate(ev_ckpt, ev_test, ev_domain, ev_report);
    if (pr->parsed()) return run_predict(pr_ckpt, pr_in, pr_domain, pr_out);
    if (sw->parsed()) {
      sw_in.seed_given = sw_seed_opt->count() > 0;
      return run_sweep(sw_in, sw_test, sw_fractions, sw_variants, sw_seeds, sw_out);
    }
    if (ab->parsed()) {
      ab_in.seed_given = ab_seed_opt->count() > 0;
      return run_ablate(ab_in, ab_test, ab_variants, ab_seeds, ab_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}

}  // namespace bifleet
