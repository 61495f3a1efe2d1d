#include "bifleet/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bifleet/common.hpp"
#include "bifleet/rng.hpp"

namespace bifleet {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (lr_decay < 0.0) throw ConfigError("lr_decay must be nonnegative");
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  if (patience < 0) throw ConfigError("patience must be nonnegative");
  if (lambda_src < 0.0 || lambda_tgt < 0.0 || lambda_task < 0.0 || lambda_l2 < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  auto kv = model.to_kv();
  kv["batch_size"] = std::to_string(batch_size);
  kv["lr"] = std::to_string(lr);
  kv["lr_decay"] = std::to_string(lr_decay);
  kv["max_epochs"] = std::to_string(max_epochs);
  kv["patience"] = std::to_string(patience);
  kv["lambda_src"] = std::to_string(lambda_src);
  kv["lambda_tgt"] = std::to_string(lambda_tgt);
  kv["lambda_task"] = std::to_string(lambda_task);
  kv["lambda_l2"] = std::to_string(lambda_l2);
  kv["seed"] = std::to_string(seed);
  kv["loss_variant"] = loss_variant == LossVariant::kNll ? "nll" : "max_margin";
  kv["mask_neg_cc"] = mask_neg_cc ? "true" : "false";
  kv["optimizer"] = optimizer == Optimizer::kSgd ? "sgd" : "adam";
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  cfg.model = ModelConfig::from_kv(kv);
  auto get = [&kv](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  try {
    if (auto v = get("batch_size")) cfg.batch_size = std::stoi(*v);
    if (auto v = get("lr")) cfg.lr = std::stod(*v);
    if (auto v = get("lr_decay")) cfg.lr_decay = std::stod(*v);
    if (auto v = get("max_epochs")) cfg.max_epochs = std::stoi(*v);
    if (auto v = get("patience")) cfg.patience = std::stoi(*v);
    if (auto v = get("lambda_src")) cfg.lambda_src = std::stod(*v);
    if (auto v = get("lambda_tgt")) cfg.lambda_tgt = std::stod(*v);
    if (auto v = get("lambda_task")) cfg.lambda_task = std::stod(*v);
    if (auto v = get("lambda_l2")) cfg.lambda_l2 = std::stod(*v);
    if (auto v = get("seed")) cfg.seed = std::stoull(*v);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("malformed numeric value in training config");
  }
  if (auto v = get("loss_variant")) {
    if (*v == "nll") cfg.loss_variant = LossVariant::kNll;
    else if (*v == "max_margin") cfg.loss_variant = LossVariant::kMaxMargin;
    else throw ConfigError("unknown loss_variant: " + *v);
  }
  if (auto v = get("mask_neg_cc")) cfg.mask_neg_cc = *v == "true" || *v == "1";
  if (auto v = get("optimizer")) {
    if (*v == "sgd") cfg.optimizer = Optimizer::kSgd;
    else if (*v == "adam") cfg.optimizer = Optimizer::kAdam;
    else throw ConfigError("unknown optimizer: " + *v);
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Standalone loss contracts

double loss_cc(const std::vector<Tensor>& y_cc_distributions, const std::vector<int>& gold) {
  if (y_cc_distributions.size() != gold.size() || gold.empty()) {
    throw ContractViolation("loss_cc: distribution/label count mismatch or empty batch");
  }
  double total = 0.0;
  for (size_t i = 0; i < gold.size(); ++i) {
    const Tensor& y = y_cc_distributions[i];
    if (gold[i] < 0 || gold[i] >= y.numel()) {
      throw ContractViolation("loss_cc: gold index out of range");
    }
    total += -std::log(std::max(y[gold[i]], 1e-12));
  }
  return total / static_cast<double>(gold.size());
}

double loss_cee(const std::vector<double>& gold_log_likelihoods) {
  if (gold_log_likelihoods.empty()) throw ContractViolation("loss_cee: empty batch");
  double total = 0.0;
  for (double ll : gold_log_likelihoods) total += ll;
  return -total / static_cast<double>(gold_log_likelihoods.size());
}

double total_loss(double cee_src, double cc_src, double cee_tgt, double cc_tgt, double lambda_src,
                  double lambda_tgt, double lambda_task, double lambda_l2,
                  double theta_squared_norm) {
  return lambda_src * (cee_src + lambda_task * cc_src) +
         lambda_tgt * (cee_tgt + lambda_task * cc_tgt) +
         0.5 * lambda_l2 * theta_squared_norm;
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

struct AdamState {
  std::vector<Tensor> m, v;
  int64_t t = 0;
};

void apply_update(ParamStore& params, TrainConfig::Optimizer opt, double lr, AdamState& adam,
                  double beta1, double beta2, double eps) {
  if (opt == TrainConfig::Optimizer::kSgd) {
    for (int i = 0; i < params.size(); ++i) {
      auto& p = params.at(i);
      if (!p.trainable) continue;
      for (int64_t k = 0; k < p.value.numel(); ++k) p.value[k] -= lr * p.grad[k];
    }
    return;
  }
  if (adam.m.empty()) {
    for (int i = 0; i < params.size(); ++i) {
      adam.m.push_back(Tensor::zeros(params.at(i).value.shape()));
      adam.v.push_back(Tensor::zeros(params.at(i).value.shape()));
    }
  }
  ++adam.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam.t));
  for (int i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    if (!p.trainable) continue;
    auto& m = adam.m[static_cast<size_t>(i)];
    auto& v = adam.v[static_cast<size_t>(i)];
    for (int64_t k = 0; k < p.value.numel(); ++k) {
      const double g = p.grad[k];
      m[k] = beta1 * m[k] + (1.0 - beta1) * g;
      v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
      p.value[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
    }
  }
}

// Cycling shuffled index stream for one domain.
class BatchStream {
 public:
  BatchStream(size_t n, Rng rng) : n_(n), rng_(std::move(rng)) { refill(); }

  std::vector<size_t> next(size_t count) {
    std::vector<size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (cursor_ == order_.size()) refill();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void refill() {
    order_.resize(n_);
    for (size_t i = 0; i < n_; ++i) order_[i] = i;
    rng_.shuffle(order_);
    cursor_ = 0;
  }
  size_t n_;
  Rng rng_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// Training loop

TrainResult train_model(BiFleetModel& model, const TrainConfig& cfg, const Corpus& src_train,
                        const Corpus& tgt_train, const Corpus& tgt_valid,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  if (src_train.empty() || tgt_train.empty()) {
    throw ConfigError("training requires nonempty source and target corpora");
  }

  Rng master(cfg.seed);
  BatchStream src_stream(src_train.size(), master.fork(1));
  Rng tgt_order_rng = master.fork(2);

  ParamStore& params = model.params();
  AdamState adam;
  TrainResult result;
  std::ostringstream csv;
  csv << "epoch,loss_cc_src,loss_cee_src,loss_cc_tgt,loss_cee_tgt,total,"
      << "valid_p,valid_r,valid_f1,valid_clause_acc\n";

  std::vector<Tensor> best_params;
  int epochs_since_best = 0;

  const size_t steps_per_epoch =
      (tgt_train.size() + static_cast<size_t>(cfg.batch_size) - 1) /
      static_cast<size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr_e = cfg.lr / (1.0 + cfg.lr_decay * epoch);
    std::vector<size_t> tgt_order(tgt_train.size());
    for (size_t i = 0; i < tgt_order.size(); ++i) tgt_order[i] = i;
    tgt_order_rng.shuffle(tgt_order);

    EpochStats stats;
    stats.epoch = epoch;
    double epoch_total = 0.0;
    double sums[2][2] = {{0, 0}, {0, 0}};  // [domain][task 0=cc, 1=cee]
    int64_t counts[2][2] = {{0, 0}, {0, 0}};

    size_t tgt_cursor = 0;
    for (size_t step = 0; step < steps_per_epoch; ++step) {
      const size_t tgt_count =
          std::min(static_cast<size_t>(cfg.batch_size), tgt_train.size() - tgt_cursor);
      std::vector<size_t> tgt_batch(tgt_order.begin() + static_cast<int64_t>(tgt_cursor),
                                    tgt_order.begin() + static_cast<int64_t>(tgt_cursor + tgt_count));
      tgt_cursor += tgt_count;
      std::vector<size_t> src_batch = src_stream.next(static_cast<size_t>(cfg.batch_size));

      Tape tape(&params);
      BiFleetModel::StepContext ctx;
      Var step_loss = tape.input(Tensor::scalar(0.0));

      struct DomainBatch {
        Domain domain;
        const Corpus* corpus;
        const std::vector<size_t>* indices;
        double lambda;
      };
      const DomainBatch batches[2] = {
          {Domain::kSource, &src_train, &src_batch, cfg.lambda_src},
          {Domain::kTarget, &tgt_train, &tgt_batch, cfg.lambda_tgt},
      };

      for (const auto& db : batches) {
        const int didx = db.domain == Domain::kTarget ? 1 : 0;
        Var cc_sum = tape.input(Tensor::scalar(0.0));
        Var cee_sum = tape.input(Tensor::scalar(0.0));
        int cc_n = 0, cee_n = 0;
        for (size_t idx : *db.indices) {
          const Sentence& sentence = db.corpus->sentences[idx];
          auto fwd = model.forward(tape, sentence, db.domain, ctx, cfg.loss_variant, true);
          cee_sum = tape.add(cee_sum, fwd.loss_cee);
          ++cee_n;
          if (!cfg.mask_neg_cc || sentence.is_pos()) {
            cc_sum = tape.add(cc_sum, fwd.loss_cc);
            ++cc_n;
          }
        }
        Var cee_mean = tape.scale(cee_sum, 1.0 / std::max(1, cee_n));
        Var cc_mean = tape.scale(cc_sum, 1.0 / std::max(1, cc_n));
        sums[didx][0] += tape.val(cc_mean).item();
        sums[didx][1] += tape.val(cee_mean).item();
        ++counts[didx][0];
        ++counts[didx][1];
        step_loss = tape.add(
            step_loss,
            tape.scale(tape.add(cee_mean, tape.scale(cc_mean, cfg.lambda_task)), db.lambda));
      }
      step_loss = tape.add(step_loss, model.l2_term(tape, cfg.lambda_l2));

      const double loss_value = tape.val(step_loss).item();
      if (!std::isfinite(loss_value)) {
        throw NumericError(cat("non-finite loss ", loss_value, " at epoch ", epoch, " step ",
                               step, "; aborting"));
      }
      epoch_total += loss_value;

      params.zero_grads();
      tape.backward(step_loss);
      apply_update(params, cfg.optimizer, lr_e, adam, cfg.adam_beta1, cfg.adam_beta2,
                   cfg.adam_eps);
      if (!params.all_finite()) {
        throw NumericError(cat("non-finite parameter after update at epoch ", epoch, " step ",
                               step, "; aborting"));
      }
    }

    stats.loss_cc_src = sums[0][0] / std::max<int64_t>(1, counts[0][0]);
    stats.loss_cee_src = sums[0][1] / std::max<int64_t>(1, counts[0][1]);
    stats.loss_cc_tgt = sums[1][0] / std::max<int64_t>(1, counts[1][0]);
    stats.loss_cee_tgt = sums[1][1] / std::max<int64_t>(1, counts[1][1]);
    stats.total = epoch_total / static_cast<double>(steps_per_epoch);

    const bool track_valid = !tgt_valid.empty();
    if (track_valid) {
      EvalReport report = evaluate_model(model, tgt_valid, Domain::kTarget);
      stats.valid_p = report.micro.precision;
      stats.valid_r = report.micro.recall;
      stats.valid_f1 = report.micro.f1;
      stats.valid_clause_acc = report.clause_acc;
    }

    csv << epoch << "," << stats.loss_cc_src << "," << stats.loss_cee_src << ","
        << stats.loss_cc_tgt << "," << stats.loss_cee_tgt << "," << stats.total << ","
        << stats.valid_p << "," << stats.valid_r << "," << stats.valid_f1 << ","
        << stats.valid_clause_acc << "\n";
    result.history.push_back(stats);
    log_info("epoch ", epoch, " total ", stats.total, " valid F1 ", stats.valid_f1);

    if (track_valid) {
      if (result.best_epoch < 0 || stats.valid_f1 > result.best_f1) {
        result.best_f1 = stats.valid_f1;
        result.best_epoch = epoch;
        best_params.clear();
        for (int i = 0; i < params.size(); ++i) best_params.push_back(params.at(i).value);
        epochs_since_best = 0;
      } else {
        ++epochs_since_best;
      }
    } else {
      result.best_epoch = epoch;  // no validation signal: latest parameters win
    }

    const bool stop_early = track_valid && epochs_since_best > cfg.patience;
    const bool stop_callback = on_epoch && on_epoch(stats);
    if (stop_early || stop_callback) break;
  }

  if (!best_params.empty()) {
    for (int i = 0; i < params.size(); ++i) params.at(i).value = best_params[static_cast<size_t>(i)];
  }
  result.metrics_csv = csv.str();
  return result;
}

}  // namespace bifleet
