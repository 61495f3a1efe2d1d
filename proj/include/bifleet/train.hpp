#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bifleet/corpus.hpp"
#include "bifleet/evaluate.hpp"
#include "bifleet/model.hpp"

namespace bifleet {

struct TrainConfig {
  ModelConfig model;
  int batch_size = 30;
  double lr = 0.0015;      // cross-domain default; 0.001 for target-only runs
  double lr_decay = 0.05;  // lr_e = lr / (1 + lr_decay * epoch)
  int max_epochs = 100;
  int patience = 10;       // epochs without target-valid F1 improvement
  double lambda_src = 1.0;
  double lambda_tgt = 1.0;
  double lambda_task = 1.0;
  double lambda_l2 = 1e-8;
  uint64_t seed = 1;
  LossVariant loss_variant = LossVariant::kNll;
  bool mask_neg_cc = false;  // drop Neg sentences from the CC loss
  enum class Optimizer { kSgd, kAdam } optimizer = Optimizer::kSgd;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct EpochStats {
  int epoch = 0;
  double loss_cc_src = 0.0, loss_cee_src = 0.0;
  double loss_cc_tgt = 0.0, loss_cee_tgt = 0.0;
  double total = 0.0;
  double valid_p = 0.0, valid_r = 0.0, valid_f1 = 0.0, valid_clause_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_f1 = 0.0;
  std::string metrics_csv;  // one row per epoch
};

// Returning true stops training after the current epoch.
using EpochCallback = std::function<bool(const EpochStats&)>;

// Joint cross-domain training. One optimizer step per pass over both domains;
// an epoch is one pass over the target training set (the smaller domain's
// batches cycle). Keeps the parameters of the best target-valid-F1 epoch.
// Throws NumericError when a loss or parameter goes non-finite.
TrainResult train_model(BiFleetModel& model, const TrainConfig& cfg, const Corpus& src_train,
                        const Corpus& tgt_train, const Corpus& tgt_valid,
                        const EpochCallback& on_epoch = nullptr);

// --- standalone loss contracts (mirrored by the on-tape training path) -----

// Mean negative log of the gold-class probability; probabilities clamped at
// 1e-12 before the log.
double loss_cc(const std::vector<Tensor>& y_cc_distributions, const std::vector<int>& gold);

// -mean(log-likelihoods) as produced by the CRF.
double loss_cee(const std::vector<double>& gold_log_likelihoods);

// Eq-style combination: sum_d lambda_d (L_CEE^d + lambda_task * L_CC^d)
// plus (lambda_l2 / 2) * theta_squared_norm.
double total_loss(double cee_src, double cc_src, double cee_tgt, double cc_tgt, double lambda_src,
                  double lambda_tgt, double lambda_task, double lambda_l2,
                  double theta_squared_norm);

// --- checkpointing -----------------------------------------------------------

struct CheckpointMeta {
  std::map<std::string, std::string> train_config;
  int epoch = 0;
  std::string rng_state;
};

// Single binary container: JSON manifest (config, graph, vocabulary, tensor
// directory, epoch, RNG state) followed by raw little-endian float64 payloads.
void save_checkpoint(const std::string& path, const BiFleetModel& model,
                     const CheckpointMeta& meta);
BiFleetModel load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace bifleet
