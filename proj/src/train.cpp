// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "pdeattn/errors.hpp"

namespace pdeattn::model {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidConfig("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lr >= 0) || !std::isfinite(lr)) throw InvalidConfig("lr must be finite and nonnegative");
  if (!(momentum >= 0 && momentum < 1)) throw InvalidConfig("momentum must lie in [0, 1)");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw InvalidConfig("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw InvalidConfig("adam_eps must be positive");
  if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
  if (!(grad_clip >= 0)) throw InvalidConfig("grad_clip must be nonnegative");
}

double TrainRecord::loss_reduction() const {
  if (epochs.empty()) return 0.0;
  double best = epochs.front().train_loss;
  for (const auto& e : epochs)
    if (std::isfinite(e.train_loss)) best = std::min(best, e.train_loss);
  return 1.0 - best / epochs.front().train_loss;
}

namespace {

class Optimizer {
 public:
  Optimizer(const TrainConfig& tc, const ModelParams& shape) : tc_(tc), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

  void step(ModelParams& params, ModelParams& grads) {
    ++t_;
    std::vector<Matrix*> p, g, m, v;
    params.for_each([&](const std::string&, Matrix& x) { p.push_back(&x); });
    grads.for_each([&](const std::string&, Matrix& x) { g.push_back(&x); });
    m_.for_each([&](const std::string&, Matrix& x) { m.push_back(&x); });
    v_.for_each([&](const std::string&, Matrix& x) { v.push_back(&x); });
    const double bc1 = 1.0 - std::pow(tc_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(tc_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      double* w = p[i]->data();
      const double* gr = g[i]->data();
      double* mo = m[i]->data();
      double* ve = v[i]->data();
      for (std::size_t j = 0; j < p[i]->size(); ++j) {
        if (tc_.optimizer == OptimizerKind::sgd) {
          mo[j] = tc_.momentum * mo[j] + gr[j];
          w[j] -= tc_.lr * mo[j];
        } else {
          mo[j] = tc_.beta1 * mo[j] + (1 - tc_.beta1) * gr[j];
          ve[j] = tc_.beta2 * ve[j] + (1 - tc_.beta2) * gr[j] * gr[j];
          w[j] -= tc_.lr * (mo[j] / bc1) / (std::sqrt(ve[j] / bc2) + tc_.adam_eps);
        }
      }
    }
  }

 private:
  TrainConfig tc_;
  ModelParams m_, v_;
  std::size_t t_ = 0;
};

bool all_finite(const ModelParams& p) {
  bool ok = true;
  p.for_each([&](const std::string&, const Matrix& m) { ok = ok && pdeattn::all_finite(m); });
  return ok;
}

double metric_of(const ModelParams& p, const ModelConfig& cfg, const Dataset& val, double val_loss) {
  return cfg.task == Task::classification ? accuracy(p, cfg, val.samples) : std::exp(val_loss);
}

double mean_loss(const ModelParams& p, const ModelConfig& cfg, const Dataset& ds) {
  const auto [total, n] = evaluate_loss(p, cfg, ds.samples);
  return total / static_cast<double>(n);
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& cfg, const TrainConfig& tc) {
  return train(train_set, val_set, cfg, tc, init_params(cfg, tc.seed));
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& cfg, const TrainConfig& tc,
                  ModelParams initial) {
  cfg.validate();
  tc.validate();
  if (train_set.samples.empty() || val_set.samples.empty()) throw InvalidInput("train and validation sets must be non-empty");
  if (train_set.task() != cfg.task) throw InvalidConfig("dataset task does not match the model task");

  TrainResult res;
  res.params = std::move(initial);
  auto& rec = res.record;
  auto flag = [&](EpochRecord& e, const std::string& why) {
    e.diverged = true;
    rec.diverged = true;
    rec.divergence_reason = why;
    rec.epochs.push_back(e);
  };

  EpochRecord e0;
  try {
    e0.train_loss = mean_loss(res.params, cfg, train_set);
    e0.val_loss = mean_loss(res.params, cfg, val_set);
    e0.metric = metric_of(res.params, cfg, val_set, e0.val_loss);
  } catch (const DivergenceError& err) {
    e0.train_loss = e0.val_loss = e0.metric = std::numeric_limits<double>::quiet_NaN();
    flag(e0, std::string("initial evaluation: ") + err.what());
    return res;
  }
  e0.layer_grad_norm_mean.assign(cfg.n_layers, 0.0);
  if (!std::isfinite(e0.train_loss) || !std::isfinite(e0.val_loss)) {
    flag(e0, "non-finite initial loss");
    return res;
  }
  rec.epochs.push_back(e0);

  Optimizer opt(tc, res.params);
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);
  double best_val = e0.val_loss;
  std::size_t since_best = 0;
  std::vector<Sample> batch;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    EpochRecord e;
    e.epoch = epoch;
    e.layer_grad_norm_mean.assign(cfg.n_layers, 0.0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, norm_sum = 0.0;
    std::size_t counted = 0, steps = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
        batch.clear();
        for (std::size_t i = start; i < std::min(order.size(), start + tc.batch_size); ++i)
          batch.push_back(train_set.samples[order[i]]);
        auto lg = loss_and_gradients(res.params, cfg, batch);
        double norm = global_norm(lg.grads);
        if (!std::isfinite(lg.loss) || !std::isfinite(norm))
          throw DivergenceError("non-finite loss or gradient", steps);
        loss_sum += lg.loss * static_cast<double>(lg.n_counted);
        counted += lg.n_counted;
        norm_sum += norm;
        e.grad_norm_max = std::max(e.grad_norm_max, norm);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) e.layer_grad_norm_mean[l] += lg.layer_grad_norms[l];
        if (tc.grad_clip > 0 && norm > tc.grad_clip) {
          const double s = tc.grad_clip / norm;
          lg.grads.for_each([&](const std::string&, Matrix& m) {
            for (double& v : m.flat()) v *= s;
          });
        }
        opt.step(res.params, lg.grads);
        if (cfg.pde.stability_guard) clamp_coefficients(res.params, cfg);
        if (!all_finite(res.params)) throw DivergenceError("non-finite parameters", steps);
        ++steps;
      }
      e.train_loss = loss_sum / static_cast<double>(counted);
      e.grad_norm_mean = norm_sum / static_cast<double>(steps);
      for (double& v : e.layer_grad_norm_mean) v /= static_cast<double>(steps);
      e.val_loss = mean_loss(res.params, cfg, val_set);
      if (!std::isfinite(e.val_loss)) throw DivergenceError("non-finite validation loss", steps);
      e.metric = metric_of(res.params, cfg, val_set, e.val_loss);
    } catch (const DivergenceError& err) {
      e.train_loss = e.val_loss = e.metric = std::numeric_limits<double>::quiet_NaN();
      flag(e, "epoch " + std::to_string(epoch) + ": " + err.what());
      return res;
    }
    rec.epochs.push_back(e);

    if (e.val_loss < best_val) {
      best_val = e.val_loss;
      since_best = 0;
    } else if (tc.patience > 0 && ++since_best >= tc.patience) {
      rec.early_stopped = true;
      break;
    }
  }
  return res;
}

void write_train_csv(std::ostream& os, const TrainRecord& record) {
  os << "epoch,train_loss,val_loss,metric,grad_norm_mean,grad_norm_max,diverged\n";
  for (const auto& e : record.epochs)
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
       << format_double(e.metric) << ',' << format_double(e.grad_norm_mean) << ','
       << format_double(e.grad_norm_max) << ',' << (e.diverged ? 1 : 0) << '\n';
}

}  // namespace pdeattn::model
