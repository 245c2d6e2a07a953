// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdeattn/dataset.hpp"
#include "pdeattn/model.hpp"

namespace pdeattn::model {

enum class OptimizerKind { sgd, adam };

const char* to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.05;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::size_t patience = 3;  // epochs without validation improvement; 0 disables
  double grad_clip = 0.0;    // global-norm clip; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the evaluation before any update
  double train_loss = 0.0;
  double val_loss = 0.0;
  double metric = 0.0;  // perplexity (lm) or accuracy (classification) on validation
  double grad_norm_mean = 0.0;
  double grad_norm_max = 0.0;
  bool diverged = false;
  std::vector<double> layer_grad_norm_mean;
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  std::string divergence_reason;
  bool early_stopped = false;

  /// 1 - best train loss / epoch-0 train loss.
  double loss_reduction() const;
};

struct TrainResult {
  TrainRecord record;
  ModelParams params;
};

/// SGD-with-momentum or Adam over shuffled minibatches. Learnable PDE
/// coefficients are clamped into the stable region after every step when the
/// stability guard is on. Divergence ends training with the flag set.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& cfg, const TrainConfig& tc);
TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& cfg, const TrainConfig& tc,
                  ModelParams initial);

/// epoch,train_loss,val_loss,metric,grad_norm_mean,grad_norm_max,diverged
void write_train_csv(std::ostream& os, const TrainRecord& record);

}  // namespace pdeattn::model
