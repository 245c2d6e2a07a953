// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ablation sweeps and step-kernel timing shared by the CLI and the
// acceptance suite.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdeattn/dataset.hpp"
#include "pdeattn/model.hpp"
#include "pdeattn/train.hpp"

namespace pdeattn::experiment {

/// Run f(0) ... f(n-1) on up to `workers` threads (0 = hardware
/// concurrency). Each index runs exactly once; exceptions are rethrown after
/// all workers finish, lowest index first.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& f);

enum class AblationAxis { steps, kind };

const char* to_string(AblationAxis a);
AblationAxis parse_axis(const std::string& s);

struct AblationConfig {
  AblationAxis axis = AblationAxis::steps;
  std::vector<std::size_t> step_values{0, 1, 2, 4, 8};
  std::vector<PdeKind> kinds{PdeKind::diffusion, PdeKind::wave, PdeKind::reaction_diffusion,
                             PdeKind::advection_diffusion};
  std::vector<std::uint64_t> seeds{0, 1, 2};

  // Task: long_range_recall with a fixed generator seed per run seed.
  std::size_t n_samples = 256;
  std::size_t n_filler = 12;
  double val_fraction = 0.2;

  model::ModelConfig model = default_model();
  model::TrainConfig train = default_train();

  // Cells with this many steps run the deliberately unstable coefficients
  // (guard off); 0 disables.
  std::size_t unstable_steps = 0;
  double unstable_alpha = 5.0;

  std::size_t workers = 0;

  static model::ModelConfig default_model();
  static model::TrainConfig default_train();
};

struct AblationCell {
  PdeKind kind = PdeKind::diffusion;
  std::size_t n_steps = 0;
  std::uint64_t seed = 0;
  bool unstable = false;
  model::TrainRecord record;

  double initial_loss() const;
  double final_train_loss() const;  // last finite train loss
  double best_val_loss() const;
  double final_metric() const;
};

/// One cell per (axis value, seed), in that order.
std::vector<AblationCell> run_ablation(const AblationConfig& cfg);

/// kind,n_steps,seed,unstable,epochs,initial_loss,final_train_loss,best_val_loss,final_metric,loss_reduction,diverged
void write_ablation_csv(std::ostream& os, const std::vector<AblationCell>& cells);

struct BenchPoint {
  PdeKind kind = PdeKind::diffusion;
  std::size_t t = 0;
  double ns_per_step = 0.0;  // median over repeats
};

/// Median wall time of one step on a T x T random simplex field.
BenchPoint bench_step(PdeKind kind, std::size_t t, double min_seconds = 0.2, std::size_t repeats = 5);

/// kind,T,ns_per_step
void write_bench_csv(std::ostream& os, const std::vector<BenchPoint>& points);

/// Least-squares slope of log time against log T.
double loglog_slope(const std::vector<BenchPoint>& points);

}  // namespace pdeattn::experiment
