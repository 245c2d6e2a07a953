// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <random>
#include <thread>

#include "pdeattn/errors.hpp"

namespace pdeattn::experiment {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& f) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

const char* to_string(AblationAxis a) { return a == AblationAxis::steps ? "steps" : "kind"; }

AblationAxis parse_axis(const std::string& s) {
  if (s == "steps") return AblationAxis::steps;
  if (s == "kind") return AblationAxis::kind;
  throw InvalidConfig("unknown ablation axis '" + s + "'");
}

model::ModelConfig AblationConfig::default_model() {
  model::ModelConfig m;
  m.task = model::Task::classification;
  m.n_layers = 2;
  m.n_heads = 2;
  m.d_model = 32;
  m.d_hidden = 64;
  m.max_seq_len = 128;
  m.n_classes = 4;
  return m;
}

model::TrainConfig AblationConfig::default_train() {
  model::TrainConfig t;
  t.optimizer = model::OptimizerKind::adam;
  t.lr = 5e-3;
  t.batch_size = 16;
  t.epochs = 30;
  t.patience = 0;
  return t;
}

double AblationCell::initial_loss() const {
  return record.epochs.empty() ? std::numeric_limits<double>::quiet_NaN() : record.epochs.front().train_loss;
}

double AblationCell::final_train_loss() const {
  for (auto it = record.epochs.rbegin(); it != record.epochs.rend(); ++it)
    if (std::isfinite(it->train_loss)) return it->train_loss;
  return std::numeric_limits<double>::quiet_NaN();
}

double AblationCell::best_val_loss() const {
  double best = std::numeric_limits<double>::quiet_NaN();
  for (const auto& e : record.epochs)
    if (std::isfinite(e.val_loss) && !(best <= e.val_loss)) best = e.val_loss;
  return best;
}

double AblationCell::final_metric() const {
  for (auto it = record.epochs.rbegin(); it != record.epochs.rend(); ++it)
    if (std::isfinite(it->metric)) return it->metric;
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<AblationCell> run_ablation(const AblationConfig& cfg) {
  std::vector<AblationCell> cells;
  if (cfg.axis == AblationAxis::steps) {
    for (std::size_t s : cfg.step_values)
      for (auto seed : cfg.seeds) cells.push_back({cfg.model.pde.kind, s, seed, s != 0 && s == cfg.unstable_steps, {}});
  } else {
    for (auto k : cfg.kinds)
      for (auto seed : cfg.seeds) cells.push_back({k, cfg.model.pde.n_steps, seed, false, {}});
  }
  parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
    auto& cell = cells[i];
    model::ModelConfig mc = cfg.model;
    mc.pde.kind = cell.kind;
    mc.pde.n_steps = cell.n_steps;
    if (cell.kind == PdeKind::reaction_diffusion && mc.pde.beta == 0.0) mc.pde.beta = 0.02;
    if (cell.kind == PdeKind::advection_diffusion && mc.pde.beta == 0.0) mc.pde.beta = 0.03;
    if (cell.unstable) {
      mc.pde.alpha = cfg.unstable_alpha;
      mc.pde.stability_guard = false;
    }
    const auto ds = model::long_range_recall(cfg.n_samples, mc.max_seq_len, mc.n_classes, cfg.n_filler, 1000 + cell.seed);
    mc.vocab_size = ds.vocab_size;
    const auto [tr, va] = model::split_dataset(ds, cfg.val_fraction);
    model::TrainConfig tc = cfg.train;
    tc.seed = cell.seed;
    cell.record = model::train(tr, va, mc, tc).record;
  });
  return cells;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationCell>& cells) {
  os << "kind,n_steps,seed,unstable,epochs,initial_loss,final_train_loss,best_val_loss,final_metric,loss_reduction,"
        "diverged\n";
  for (const auto& c : cells) {
    const std::size_t epochs = c.record.epochs.empty() ? 0 : c.record.epochs.back().epoch;
    os << to_string(c.kind) << ',' << c.n_steps << ',' << c.seed << ',' << (c.unstable ? 1 : 0) << ',' << epochs << ','
       << format_double(c.initial_loss()) << ',' << format_double(c.final_train_loss()) << ','
       << format_double(c.best_val_loss()) << ',' << format_double(c.final_metric()) << ','
       << format_double(c.record.diverged ? std::numeric_limits<double>::quiet_NaN() : c.record.loss_reduction())
       << ',' << (c.record.diverged ? 1 : 0) << '\n';
  }
}

BenchPoint bench_step(PdeKind kind, std::size_t t, double min_seconds, std::size_t repeats) {
  std::mt19937_64 rng(t);
  std::exponential_distribution<double> e(1.0);
  Matrix m(t, t);
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (double& v : m.row(i)) s += (v = e(rng));
    for (double& v : m.row(i)) v /= s;
  }
  PdeConfig cfg;
  cfg.kind = kind;
  cfg.beta = kind == PdeKind::reaction_diffusion ? 0.02 : 0.03;
  const StepOptions opts = StepOptions::from(cfg);
  AttentionField a{std::move(m), cfg.bc, false}, spare{Matrix(t, t), cfg.bc, false};
  WaveState w{a, Matrix(t, t)};

  auto one = [&] {
    switch (kind) {
      case PdeKind::diffusion:
        // Preallocated ping-pong buffers keep allocation out of the timing.
        diffusion_step_into(a, cfg.alpha, cfg.dt, opts, spare);
        std::swap(a, spare);
        break;
      case PdeKind::reaction_diffusion: a = reaction_diffusion_step(a, cfg.alpha, cfg.beta, cfg.dt, opts); break;
      case PdeKind::advection_diffusion: a = advection_diffusion_step(a, cfg.alpha, cfg.beta, cfg.dt, opts); break;
      case PdeKind::wave: w = wave_step(w, cfg.c, cfg.dt, opts); break;
    }
  };
  using clock = std::chrono::steady_clock;
  one();  // warm-up, also sizes the batch
  std::size_t batch = 1;
  for (;;) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < batch; ++i) one();
    const double s = std::chrono::duration<double>(clock::now() - t0).count();
    if (s * static_cast<double>(repeats) >= min_seconds || batch >= (1u << 20)) break;
    batch *= 2;
  }
  std::vector<double> samples;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < batch; ++i) one();
    samples.push_back(std::chrono::duration<double, std::nano>(clock::now() - t0).count() / static_cast<double>(batch));
  }
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(samples.size() / 2), samples.end());
  return {kind, t, samples[samples.size() / 2]};
}

void write_bench_csv(std::ostream& os, const std::vector<BenchPoint>& points) {
  os << "kind,T,ns_per_step\n";
  for (const auto& p : points) os << to_string(p.kind) << ',' << p.t << ',' << format_double(p.ns_per_step) << '\n';
}

double loglog_slope(const std::vector<BenchPoint>& points) {
  if (points.size() < 2) throw InvalidInput("slope needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : points) {
    const double x = std::log(static_cast<double>(p.t)), y = std::log(p.ns_per_step);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double n = static_cast<double>(points.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace pdeattn::experiment
