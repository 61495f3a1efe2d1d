#include "bifleet/model.hpp"

#include <algorithm>
#include <cmath>

#include "bifleet/common.hpp"

namespace bifleet {

constexpr double kBioMaskScore = -1e4;

// ---------------------------------------------------------------------------
// Config serialization

std::map<std::string, std::string> ModelConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["word_dim"] = std::to_string(encoder.word_dim);
  kv["char_dim"] = std::to_string(encoder.char_dim);
  kv["cnn_filters"] = std::to_string(encoder.cnn_filters);
  kv["cnn_width"] = std::to_string(encoder.cnn_width);
  kv["hidden_dim"] = std::to_string(encoder.hidden_dim);
  kv["type_dim"] = std::to_string(type_dim);
  kv["gnn_layers"] = std::to_string(gnn_layers);
  kv["no_ce_graph"] = no_ce_graph ? "true" : "false";
  kv["no_bifeedback"] = no_bifeedback ? "true" : "false";
  kv["normalize_res_cc"] = normalize_res_cc ? "true" : "false";
  kv["cc_verify"] = cc_verify == CcVerify::kMeanPool ? "mean_pool" : "projection";
  return kv;
}

namespace {
bool kv_bool(const std::map<std::string, std::string>& kv, const std::string& key,
             bool fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + it->second);
}
int kv_int(const std::map<std::string, std::string>& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (...) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}
}  // namespace

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.encoder.word_dim = kv_int(kv, "word_dim", c.encoder.word_dim);
  c.encoder.char_dim = kv_int(kv, "char_dim", c.encoder.char_dim);
  c.encoder.cnn_filters = kv_int(kv, "cnn_filters", c.encoder.cnn_filters);
  c.encoder.cnn_width = kv_int(kv, "cnn_width", c.encoder.cnn_width);
  c.encoder.hidden_dim = kv_int(kv, "hidden_dim", c.encoder.hidden_dim);
  c.type_dim = kv_int(kv, "type_dim", c.type_dim);
  c.gnn_layers = kv_int(kv, "gnn_layers", c.gnn_layers);
  c.no_ce_graph = kv_bool(kv, "no_ce_graph", c.no_ce_graph);
  c.no_bifeedback = kv_bool(kv, "no_bifeedback", c.no_bifeedback);
  c.normalize_res_cc = kv_bool(kv, "normalize_res_cc", c.normalize_res_cc);
  auto it = kv.find("cc_verify");
  if (it != kv.end()) {
    if (it->second == "mean_pool") c.cc_verify = CcVerify::kMeanPool;
    else if (it->second == "projection") c.cc_verify = CcVerify::kProjection;
    else throw ConfigError("unknown cc_verify variant: " + it->second);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Construction

BiFleetModel::BiFleetModel(const ModelConfig& config, CEGraph graph, Vocabulary vocab,
                           uint64_t init_seed)
    : config_(config), graph_(std::move(graph)), vocab_(std::move(vocab)) {
  build_params(init_seed);
  build_masks();
}

BiFleetModel::BiFleetModel(const ModelConfig& config, CEGraph graph, Vocabulary vocab,
                           ParamStore store)
    : config_(config), graph_(std::move(graph)), vocab_(std::move(vocab)),
      params_(std::move(store)) {
  attach_params();
  build_masks();
}

int BiFleetModel::num_labels(Domain d) const {
  return 1 + 2 * (static_cast<int>(graph_.inventory.element_slots(d).size()) - 1);
}

int BiFleetModel::num_clause_types(Domain d) const {
  return static_cast<int>(graph_.inventory.clause_slots(d).size());
}

void BiFleetModel::build_params(uint64_t init_seed) {
  Rng rng(init_seed);
  encoder_ = ContextEncoder::create(params_, vocab_, config_.encoder, rng);
  relation_ = RelationEncoder::create(params_, graph_, config_.type_dim, config_.gnn_layers, rng);

  const int h2 = config_.encoder.output_dim();
  const int dt = config_.type_dim;
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    Head& head = heads_[d == Domain::kTarget ? 1 : 0];
    const std::string p = cat("infer.", domain_name(d), ".");
    const int labels = num_labels(d);
    const int clauses = num_clause_types(d);
    auto glorot_vector = [&rng](int64_t n) {
      const double limit = std::sqrt(6.0 / static_cast<double>(n + 1));
      Tensor t({n});
      for (auto& v : t.flat()) v = rng.uniform(-limit, limit);
      return t;
    };
    head.attention = params_.add(p + "attention", glorot_vector(h2));
    head.w_cc = params_.add(p + "w_cc", glorot_vector(h2 + dt));
    head.b_cc = params_.add(p + "b_cc", Tensor::zeros({1}));
    head.w_f = params_.add(p + "w_f", glorot_uniform(dt, h2, rng));
    head.b_f = params_.add(p + "b_f", Tensor::zeros({h2}));
    head.w_b = params_.add(p + "w_b", glorot_uniform(dt, h2, rng));
    head.b_b = params_.add(p + "b_b", Tensor::zeros({h2}));
    head.crf_w = params_.add(p + "crf_w", glorot_uniform(h2, labels, rng));
    head.crf_trans = params_.add(p + "crf_trans", Tensor::zeros({labels, labels}));
    head.crf_start = params_.add(p + "crf_start", Tensor::zeros({labels}));
    head.crf_stop = params_.add(p + "crf_stop", Tensor::zeros({labels}));
    if (config_.cc_verify == CcVerify::kProjection) {
      head.cc_proj = params_.add(p + "cc_proj", glorot_uniform(h2, clauses, rng));
    }
  }
  if (config_.graph_ablated()) relation_.freeze(params_);
}

void BiFleetModel::attach_params() {
  encoder_ = ContextEncoder::attach(params_, config_.encoder);
  relation_ = RelationEncoder::attach(params_, graph_, config_.type_dim, config_.gnn_layers);
  auto need = [this](const std::string& name) {
    int id = params_.find(name);
    if (id < 0) throw ContractViolation("checkpoint lacks parameter: " + name);
    return id;
  };
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    Head& head = heads_[d == Domain::kTarget ? 1 : 0];
    const std::string p = cat("infer.", domain_name(d), ".");
    head.attention = need(p + "attention");
    head.w_cc = need(p + "w_cc");
    head.b_cc = need(p + "b_cc");
    head.w_f = need(p + "w_f");
    head.b_f = need(p + "b_f");
    head.w_b = need(p + "w_b");
    head.b_b = need(p + "b_b");
    head.crf_w = need(p + "crf_w");
    head.crf_trans = need(p + "crf_trans");
    head.crf_start = need(p + "crf_start");
    head.crf_stop = need(p + "crf_stop");
    if (config_.cc_verify == CcVerify::kProjection) head.cc_proj = need(p + "cc_proj");
  }
  if (config_.graph_ablated()) relation_.freeze(params_);
}

void BiFleetModel::build_masks() {
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    const int L = num_labels(d);
    const int idx = d == Domain::kTarget ? 1 : 0;
    Tensor mask({L, L});
    Tensor start({L});
    // Label layout: O = 0, B-k = 1+2k, I-k = 2+2k. An I-k may only follow
    // B-k or I-k; everything else scores kBioMaskScore.
    for (int k = 0; 2 + 2 * k < L; ++k) {
      const int b = 1 + 2 * k, i = 2 + 2 * k;
      start[i] = kBioMaskScore;
      for (int from = 0; from < L; ++from) {
        if (from != b && from != i) mask.at(from, i) = kBioMaskScore;
      }
    }
    bio_mask_[idx] = std::move(mask);
    bio_start_mask_[idx] = std::move(start);
  }
}

std::vector<int> BiFleetModel::bio_label_ids(const Sentence& s) const {
  const auto& slots = graph_.inventory.element_slots(s.domain);
  std::vector<int> ids(s.tokens.size(), 0);
  for (const auto& span : s.spans) {
    int type_index = -1;
    for (size_t i = 1; i < slots.size(); ++i) {
      if (graph_.inventory.element_types[static_cast<size_t>(slots[i])].name ==
          span.element_type) {
        type_index = static_cast<int>(i) - 1;
        break;
      }
    }
    if (type_index < 0) {
      throw ContractViolation("element type not in inventory: " + span.element_type);
    }
    ids[static_cast<size_t>(span.start)] = 1 + 2 * type_index;
    for (int i = span.start + 1; i <= span.end; ++i) {
      ids[static_cast<size_t>(i)] = 2 + 2 * type_index;
    }
  }
  return ids;
}

std::string BiFleetModel::bio_label_name(Domain d, int label) const {
  if (label == 0) return "O";
  const auto& slots = graph_.inventory.element_slots(d);
  const int type_index = element_index_of_label(label);
  if (type_index < 1 || type_index >= static_cast<int>(slots.size())) {
    throw ContractViolation(cat("label id ", label, " outside domain label space"));
  }
  const std::string& type =
      graph_.inventory.element_types[static_cast<size_t>(slots[static_cast<size_t>(type_index)])]
          .name;
  return (label % 2 == 1 ? "B-" : "I-") + type;
}

int BiFleetModel::clause_gold_index(const Sentence& s) const {
  const int slot = graph_.inventory.clause_slot(s.domain, s.clause_type);
  if (slot < 0) return -1;
  return graph_.inventory.clause_index_in_domain(s.domain, slot);
}

// ---------------------------------------------------------------------------
// Forward

BiFleetModel::StepContext::DomainReps& BiFleetModel::domain_reps(Tape& tape, Domain d,
                                                                 StepContext& ctx) const {
  auto& slot = ctx.reps[d == Domain::kTarget ? 1 : 0];
  if (!slot.set) {
    auto reps = relation_.encode(tape, graph_, d, config_.graph_ablated());
    slot.clause_all = reps.clause;
    slot.element_all = reps.element;
    std::vector<int64_t> clause_rows;
    for (int s : graph_.inventory.clause_slots(d)) clause_rows.push_back(s);
    slot.clause_view = tape.gather_rows(reps.clause, clause_rows);
    slot.set = true;
  }
  return slot;
}

BiFleetModel::SentenceForward BiFleetModel::forward(Tape& tape, const Sentence& sentence,
                                                    Domain domain, StepContext& ctx,
                                                    LossVariant variant, bool with_loss,
                                                    PredictionBundle* bundle) const {
  const Head& hd = head(domain);
  const int h2 = config_.encoder.output_dim();
  const int dt = config_.type_dim;
  const int didx = domain == Domain::kTarget ? 1 : 0;
  const auto& dr = domain_reps(tape, domain, ctx);

  // Context encoding (embedding layer shared by both task LSTMs).
  auto embedded = encoder_.embed_tokens(tape, sentence, vocab_);
  auto h_cc = encoder_.encode_sequence(tape, embedded, domain, Task::kCC);
  Var H_cc = tape.stack_rows(h_cc);

  // Clause scores (attention pooling, then one sigmoid score per type).
  Var att = tape.softmax(tape.matvec(H_cc, tape.param(hd.attention)));
  Var pooled = tape.vecmat(att, H_cc);
  Var w_cc = tape.param(hd.w_cc);
  Var w1 = tape.slice(w_cc, 0, h2);
  Var w2 = tape.slice(w_cc, h2, dt);
  Var res_cc = tape.sigmoid(tape.add(tape.add(tape.matvec(dr.clause_view, w2),
                                              tape.dot(w1, pooled)),
                                     tape.param(hd.b_cc)));

  // Forward information: clause-conditioned gate over hidden units.
  Var fw;
  if (!config_.no_bifeedback) {
    Var res_for_ltv = config_.normalize_res_cc ? tape.softmax(res_cc) : res_cc;
    Var ltv_cc = tape.vecmat(res_for_ltv, dr.clause_view);
    fw = tape.sigmoid(tape.add(tape.vecmat(ltv_cc, tape.param(hd.w_f)), tape.param(hd.b_f)));
  }

  // Element extraction: gated, normalized hidden states into the CRF.
  auto h_cee = encoder_.encode_sequence(tape, embedded, domain, Task::kCEE);
  Var H_cee = tape.stack_rows(h_cee);
  Var gated = config_.no_bifeedback ? H_cee : tape.scale_columns(H_cee, fw);
  Var H_fw = tape.l2norm_rows(gated);
  Var emissions = tape.matmul(H_fw, tape.param(hd.crf_w));
  Var trans = tape.add(tape.param(hd.crf_trans), tape.input(bio_mask_[didx]));
  Var start = tape.add(tape.param(hd.crf_start), tape.input(bio_start_mask_[didx]));
  Var stop = tape.param(hd.crf_stop);

  SentenceForward out;
  out.res_cc = res_cc;
  out.decoded = crf_viterbi(tape.val(emissions), tape.val(trans), tape.val(start), tape.val(stop));

  // Backward information from the decoded one-hots; the argmax is discrete,
  // so gradients flow into the type rows and W_b but not the decode.
  Var logits;
  std::vector<std::vector<double>> bw_values;
  if (config_.no_bifeedback) {
    logits = res_cc;
  } else {
    const auto& slots = graph_.inventory.element_slots(domain);
    std::map<int, Var> bw_by_type;
    std::vector<Var> bw_tokens;
    for (int label : out.decoded) {
      const int type_index = element_index_of_label(label);
      auto it = bw_by_type.find(type_index);
      if (it == bw_by_type.end()) {
        Var row = tape.row(dr.element_all, slots[static_cast<size_t>(type_index)]);
        Var bw = tape.sigmoid(tape.add(tape.vecmat(row, tape.param(hd.w_b)),
                                       tape.param(hd.b_b)));
        it = bw_by_type.emplace(type_index, bw).first;
      }
      bw_tokens.push_back(it->second);
    }
    if (bundle) {
      for (Var bw : bw_tokens) bw_values.push_back(tape.val(bw).flat());
    }
    if (config_.cc_verify == CcVerify::kMeanPool) {
      Var gate = tape.mean(bw_tokens[0]);
      for (size_t i = 1; i < bw_tokens.size(); ++i) {
        gate = tape.mul(gate, tape.mean(bw_tokens[i]));
      }
      logits = tape.mul(gate, res_cc);
    } else {
      Var product = bw_tokens[0];
      for (size_t i = 1; i < bw_tokens.size(); ++i) {
        product = tape.mul(product, bw_tokens[i]);
      }
      Var gate = tape.vecmat(product, tape.param(hd.cc_proj));
      logits = tape.mul(gate, res_cc);
    }
  }
  out.y_cc_logits = logits;

  if (with_loss) {
    const int gold_cc = clause_gold_index(sentence);
    if (gold_cc < 0) {
      throw ContractViolation("clause type not in inventory: " + sentence.clause_type);
    }
    const std::vector<int> gold_ids = bio_label_ids(sentence);
    if (variant == LossVariant::kNll) {
      out.loss_cc = tape.sub(tape.logsumexp(logits), tape.slice(logits, gold_cc, 1));
      out.loss_cee = tape.crf_nll(emissions, trans, start, stop, gold_ids);
    } else {
      out.loss_cc = tape.hinge_multiclass(logits, gold_cc);
      out.loss_cee = tape.crf_hinge(emissions, trans, start, stop, gold_ids);
    }
  }

  if (bundle) {
    bundle->res_cc = tape.val(res_cc).flat();
    const Tensor& y_cc = tape.val(tape.softmax(logits));
    bundle->y_cc = y_cc.flat();
    bundle->clause_pred = 0;
    for (int64_t k = 1; k < y_cc.numel(); ++k) {
      if (y_cc[k] > y_cc[bundle->clause_pred]) bundle->clause_pred = static_cast<int>(k);
    }
    const int slot =
        graph_.inventory.clause_slots(domain)[static_cast<size_t>(bundle->clause_pred)];
    bundle->clause_name = graph_.inventory.clause_types[static_cast<size_t>(slot)].name;
    bundle->y_cee = out.decoded;
    for (int label : out.decoded) bundle->bio_tags.push_back(bio_label_name(domain, label));
    bundle->spans = decode_bio(bundle->bio_tags);
    bundle->fw = config_.no_bifeedback ? std::vector<double>(static_cast<size_t>(h2), 1.0)
                                       : tape.val(fw).flat();
    bundle->bw = config_.no_bifeedback
                     ? std::vector<std::vector<double>>(
                           sentence.tokens.size(), std::vector<double>(static_cast<size_t>(h2), 1.0))
                     : std::move(bw_values);
  }
  return out;
}

PredictionBundle BiFleetModel::infer(const Sentence& sentence, Domain domain) const {
  Tape tape(const_cast<ParamStore*>(&params_));
  StepContext ctx;
  PredictionBundle bundle;
  forward(tape, sentence, domain, ctx, LossVariant::kNll, false, &bundle);
  return bundle;
}

Var BiFleetModel::l2_term(Tape& tape, double lambda) const {
  Var acc = tape.input(Tensor::scalar(0.0));
  if (lambda == 0.0) return acc;
  for (int i = 0; i < params_.size(); ++i) {
    if (!params_.at(i).trainable) continue;
    Var p = tape.param(i);
    acc = tape.add(acc, tape.sum(tape.mul(p, p)));
  }
  return tape.scale(acc, lambda / 2.0);
}

}  // namespace bifleet
