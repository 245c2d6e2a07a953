// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "pdeattn/dataset.hpp"
#include "pdeattn/model.hpp"
#include "pdeattn/train.hpp"
#include "test_util.hpp"

using namespace pdeattn;
using namespace pdeattn::model;
using namespace pdeattn::testing;

namespace {

ModelConfig tiny_config(Task task, std::size_t layers = 1) {
  ModelConfig cfg;
  cfg.n_layers = layers;
  cfg.n_heads = 2;
  cfg.d_model = 4;
  cfg.d_hidden = 6;
  cfg.vocab_size = 5;
  cfg.max_seq_len = 6;
  cfg.n_classes = 3;
  cfg.task = task;
  cfg.pde.n_steps = 2;
  return cfg;
}

std::vector<Sample> tiny_batch(Rng& rng, const ModelConfig& cfg, std::size_t n) {
  std::vector<Sample> b(n);
  for (auto& s : b) {
    const std::size_t len = random_size(rng, 3, cfg.max_seq_len);
    for (std::size_t i = 0; i < len; ++i) {
      s.tokens.push_back(static_cast<int>(random_size(rng, 0, cfg.vocab_size - 1)));
      s.targets.push_back(i == 0 ? -1 : static_cast<int>(random_size(rng, 0, cfg.vocab_size - 1)));
    }
    s.label = static_cast<int>(random_size(rng, 0, cfg.n_classes - 1));
  }
  return b;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> v;
  p.for_each([&](const std::string&, const Matrix& m) { v.insert(v.end(), m.flat().begin(), m.flat().end()); });
  return v;
}

void unflatten(std::span<const double> v, ModelParams& p) {
  std::size_t o = 0;
  p.for_each([&](const std::string&, Matrix& m) {
    for (double& x : m.flat()) x = v[o++];
  });
}

attention::GradientCheckReport model_gradient_check(const ModelConfig& cfg, const ModelParams& p,
                                                    const std::vector<Sample>& batch) {
  const auto lg = loss_and_gradients(p, cfg, batch);
  auto f = [&](std::span<const double> theta) {
    ModelParams q = p;
    unflatten(theta, q);
    const auto [total, n] = evaluate_loss(q, cfg, batch);
    return total / static_cast<double>(n);
  };
  auto grads = flatten(lg.grads);
  return attention::gradient_check(f, flatten(p), grads, 1e-6);
}

// Central differences under a mixed tolerance: entries below ~1e-5 sit at the
// finite-difference noise floor, so they are held to an absolute bound.
// Returns the worst ratio of error to allowed error (pass when <= 1).
double model_gradient_excess(const ModelConfig& cfg, const ModelParams& p, const std::vector<Sample>& batch,
                             std::string* worst) {
  const auto lg = loss_and_gradients(p, cfg, batch);
  const auto analytic = flatten(lg.grads);
  auto theta = flatten(p);
  auto f = [&] {
    ModelParams q = p;
    unflatten(theta, q);
    const auto [total, n] = evaluate_loss(q, cfg, batch);
    return total / static_cast<double>(n);
  };
  const double eps = 1e-6;
  double excess = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t0 = theta[i];
    theta[i] = t0 + eps;
    const double fp = f();
    theta[i] = t0 - eps;
    const double fm = f();
    theta[i] = t0;
    const double num = (fp - fm) / (2 * eps), a = analytic[i];
    const double r = std::abs(a - num) / (1e-4 * std::max(std::abs(a), std::abs(num)) + 1e-9);
    if (r > excess) {
      excess = r;
      if (worst) *worst = std::to_string(i) + " a=" + std::to_string(a) + " n=" + std::to_string(num);
    }
  }
  return excess;
}

// Straight-loop standard transformer on the same weights.
Matrix reference_forward(const ModelParams& p, const ModelConfig& cfg, const Sample& s) {
  const std::size_t n = s.tokens.size(), d = cfg.d_model, H = cfg.n_heads, dh = d / H;
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = p.tok_emb(s.tokens[i], j) + p.pos_emb(i, j);
  auto lin = [](const Matrix& a, const Matrix& w) {
    Matrix o(a.rows(), w.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j)
        for (std::size_t k = 0; k < a.cols(); ++k) o(i, j) += a(i, k) * w(k, j);
    return o;
  };
  auto norm = [&](const Matrix& a, const Matrix& g, const Matrix& b) {
    Matrix o(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double mu = 0, var = 0;
      for (std::size_t j = 0; j < a.cols(); ++j) mu += a(i, j) / a.cols();
      for (std::size_t j = 0; j < a.cols(); ++j) var += (a(i, j) - mu) * (a(i, j) - mu) / a.cols();
      for (std::size_t j = 0; j < a.cols(); ++j) o(i, j) = g(0, j) * (a(i, j) - mu) / std::sqrt(var + 1e-5) + b(0, j);
    }
    return o;
  };
  for (const auto& L : p.layers) {
    const Matrix q = lin(x, L.w_q), k = lin(x, L.w_k), v = lin(x, L.w_v);
    Matrix concat(n, d);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t last = cfg.task == Task::causal_lm ? i : n - 1;
        std::vector<double> w(last + 1);
        double z = 0;
        for (std::size_t j = 0; j <= last; ++j) {
          double sc = 0;
          for (std::size_t c = 0; c < dh; ++c) sc += q(i, h * dh + c) * k(j, h * dh + c);
          z += w[j] = std::exp(sc / std::sqrt(static_cast<double>(dh)));
        }
        for (std::size_t j = 0; j <= last; ++j)
          for (std::size_t c = 0; c < dh; ++c) concat(i, h * dh + c) += w[j] / z * v(j, h * dh + c);
      }
    }
    Matrix s1 = lin(concat, L.w_o);
    for (std::size_t i = 0; i < s1.size(); ++i) s1.data()[i] += x.data()[i];
    const Matrix h1 = norm(s1, L.ln1_gamma, L.ln1_beta);
    Matrix z1 = lin(h1, L.w1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < z1.cols(); ++j) {
        const double u = z1(i, j) + L.b1(0, j);
        z1(i, j) = 0.5 * u * (1 + std::erf(u / std::numbers::sqrt2));
      }
    Matrix s2 = lin(z1, L.w2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) s2(i, j) += L.b2(0, j) + h1(i, j);
    x = norm(s2, L.ln2_gamma, L.ln2_beta);
  }
  Matrix in = x;
  if (cfg.task == Task::classification) {
    in = Matrix(1, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) in(0, j) += x(i, j) / n;
  }
  Matrix out = lin(in, p.w_out);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += p.b_out(0, j);
  return out;
}

bool same_params(const ModelParams& a, const ModelParams& b) { return flatten(a) == flatten(b); }

Dataset copy_split(std::size_t n, std::size_t prefix, std::uint64_t seed, Dataset* val) {
  auto [tr, va] = split_dataset(copy_task(n, prefix, 8, seed), 0.2);
  *val = va;
  return tr;
}

}  // namespace

TEST(ModelGradients, CausalLmDiffusionMatchesFiniteDifferences) {
  Rng rng(601);
  const auto cfg = tiny_config(Task::causal_lm);
  const auto p = init_params(cfg, 3);
  const auto rep = model_gradient_check(cfg, p, tiny_batch(rng, cfg, 3));
  EXPECT_LE(rep.max_relative_error, 1e-4) << rep.worst_index << " a=" << rep.worst_analytic << " n=" << rep.worst_numeric;
}

TEST(ModelGradients, EveryVariantAndKindMatchesFiniteDifferences) {
  Rng rng(602);
  for (auto task : {Task::causal_lm, Task::classification}) {
    for (auto kind : {PdeKind::diffusion, PdeKind::wave, PdeKind::reaction_diffusion, PdeKind::advection_diffusion}) {
      for (auto variant : {AttentionVariant::standard, AttentionVariant::pde, AttentionVariant::hybrid}) {
        auto cfg = tiny_config(task, 2);
        cfg.variant = variant;
        cfg.pattern = {1, {0}};
        cfg.pde.kind = kind;
        cfg.pde.beta = 0.05;
        cfg.pde.c = 0.4;
        auto p = init_params(cfg, rng());
        for (auto& L : p.layers) L.coeff(1, 0) = 0.2;
        std::string worst;
        EXPECT_LE(model_gradient_excess(cfg, p, tiny_batch(rng, cfg, 2), &worst), 1.0)
            << to_string(task) << " " << to_string(kind) << " " << to_string(variant) << " worst " << worst;
      }
    }
  }
}

TEST(ModelGradients, FrozenCoefficientsGetNoGradient) {
  Rng rng(603);
  auto cfg = tiny_config(Task::causal_lm);
  cfg.learn_coefficients = false;
  const auto lg = loss_and_gradients(init_params(cfg, 1), cfg, tiny_batch(rng, cfg, 2));
  for (double v : lg.grads.layers[0].coeff.flat()) EXPECT_EQ(v, 0.0);
}

TEST(ModelForward, ZeroStepsMatchesReferenceTransformer) {
  Rng rng(604);
  for (auto task : {Task::causal_lm, Task::classification}) {
    auto cfg = tiny_config(task);
    cfg.pde.n_steps = 0;
    const auto p = init_params(cfg, 11);
    const auto batch = tiny_batch(rng, cfg, 4);
    const auto logits = model_forward(p, cfg, batch);
    for (std::size_t b = 0; b < batch.size(); ++b)
      EXPECT_LE(max_abs_diff(logits[b], reference_forward(p, cfg, batch[b])), 1e-12);
    cfg.variant = AttentionVariant::standard;
    cfg.pde.n_steps = 4;
    const auto std_logits = model_forward(p, cfg, batch);
    for (std::size_t b = 0; b < batch.size(); ++b) EXPECT_EQ(std_logits[b], logits[b]);
  }
}

TEST(ModelForward, ShapesAndBatchIndependence) {
  Rng rng(605);
  const auto lm = tiny_config(Task::causal_lm), cls = tiny_config(Task::classification);
  auto batch = tiny_batch(rng, lm, 5);
  const auto p_lm = init_params(lm, 2), p_cls = init_params(cls, 2);
  const auto out = model_forward(p_lm, lm, batch);
  for (std::size_t b = 0; b < 5; ++b) {
    EXPECT_EQ(out[b].rows(), batch[b].tokens.size());
    EXPECT_EQ(out[b].cols(), lm.vocab_size);
  }
  const auto out_cls = model_forward(p_cls, cls, batch);
  for (const auto& m : out_cls) {
    EXPECT_EQ(m.rows(), 1u);
    EXPECT_EQ(m.cols(), 3u);
  }
  std::vector<Sample> perm{batch[3], batch[0], batch[4], batch[1], batch[2]};
  const auto out_perm = model_forward(p_lm, lm, perm);
  EXPECT_EQ(out_perm[0], out[3]);
  EXPECT_EQ(out_perm[2], out[4]);
  EXPECT_EQ(out_perm[4], out[2]);
}

TEST(ModelForward, RejectsBadInput) {
  const auto cfg = tiny_config(Task::causal_lm);
  const auto p = init_params(cfg, 1);
  std::vector<Sample> bad{{{0, 5}, {-1, 0}, -1}};
  EXPECT_THROW(model_forward(p, cfg, bad), InvalidInput);
  std::vector<Sample> too_long{{std::vector<int>(7, 0), std::vector<int>(7, 0), -1}};
  EXPECT_THROW(model_forward(p, cfg, too_long), InvalidInput);
  auto c2 = cfg;
  c2.n_heads = 3;
  EXPECT_THROW(c2.validate(), InvalidConfig);
  c2 = cfg;
  c2.pde.axis = AxisMode::full_2d;
  EXPECT_THROW(c2.validate(), InvalidConfig);
  c2 = cfg;
  c2.pde.alpha = 0.9;
  EXPECT_THROW(c2.validate(), StabilityError);
}

TEST(ModelParamsTest, ClampCoefficients) {
  auto cfg = tiny_config(Task::causal_lm);
  cfg.pde.dt = 2.0;
  cfg.pde.alpha = 0.2;
  auto p = init_params(cfg, 1);
  p.layers[0].coeff(0, 0) = 0.9;
  p.layers[0].coeff(0, 1) = -1.0;
  p.layers[0].coeff(1, 2) = 5.0;
  clamp_coefficients(p, cfg);
  EXPECT_DOUBLE_EQ(p.layers[0].coeff(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(p.layers[0].coeff(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(p.layers[0].coeff(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(p.layers[0].coeff(1, 0), 0.2);
}

TEST(ModelParamsTest, CheckpointRoundTrip) {
  auto cfg = tiny_config(Task::classification, 2);
  cfg.variant = AttentionVariant::hybrid;
  cfg.pattern = {2, {0, 3}};
  cfg.pde.kind = PdeKind::advection_diffusion;
  cfg.pde.beta = 0.03;
  const auto p = init_params(cfg, 77);
  std::stringstream ss;
  save_checkpoint(ss, p, cfg);
  const auto [q, c] = load_checkpoint(ss);
  EXPECT_TRUE(same_params(p, q));
  EXPECT_EQ(to_json(c), to_json(cfg));
  std::stringstream broken("{\"format\": \"other\"}");
  EXPECT_THROW(load_checkpoint(broken), InvalidInput);
}

TEST(Datasets, CopyTaskDeterministicAndWellFormed) {
  const auto a = copy_task(10, 4, 6, 5), b = copy_task(10, 4, 6, 5);
  ASSERT_EQ(a.samples.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.samples[i].tokens, b.samples[i].tokens);
    const auto& s = a.samples[i];
    ASSERT_EQ(s.tokens.size(), 8u);
    EXPECT_EQ(s.tokens[4], 0);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(s.targets[j], -1);
      EXPECT_EQ(s.targets[4 + j], s.tokens[j]);
    }
    for (int t : s.tokens) EXPECT_LT(static_cast<std::size_t>(t), a.vocab_size);
  }
  EXPECT_NE(copy_task(10, 4, 6, 6).samples[0].tokens, a.samples[0].tokens);
}

TEST(Datasets, LongRangeRecallKeyDeterminesLabel) {
  const auto ds = long_range_recall(50, 16, 4, 6, 9);
  EXPECT_EQ(ds.vocab_size, 10u);
  for (const auto& s : ds.samples) {
    std::size_t keys = 0, pos = 0;
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      if (s.tokens[i] < 4) ++keys, pos = i;
    ASSERT_EQ(keys, 1u);
    EXPECT_EQ(s.tokens[pos], s.label);
    EXPECT_GE(s.tokens.size() - 1 - pos, 8u);
  }
  // Flipping the key flips the label the model must produce.
  auto cfg = tiny_config(Task::classification);
  cfg.vocab_size = 10;
  cfg.max_seq_len = 16;
  cfg.n_classes = 4;
  auto [tr, va] = split_dataset(ds, 0.2);
  TrainConfig tc;
  tc.epochs = 1;
  EXPECT_NO_THROW(train(tr, va, cfg, tc));
}

TEST(Datasets, CharTextRoundTrip) {
  const std::string text = "the quick brown fox jumps over the lazy dog";
  const auto ds = char_text(text, 8);
  EXPECT_EQ(decode(encode(text, ds.alphabet), ds.alphabet), text);
  EXPECT_EQ(ds.samples.size(), (text.size() - 1) / 8);
  EXPECT_EQ(decode(ds.samples[1].tokens, ds.alphabet), text.substr(8, 8));
  EXPECT_EQ(decode(ds.samples[1].targets, ds.alphabet), text.substr(9, 8));
  EXPECT_THROW(char_text_file("/nonexistent/file.txt", 8), InvalidInput);
  EXPECT_THROW(encode("Z", ds.alphabet), InvalidInput);
  const auto path = std::filesystem::temp_directory_path() / "pdeattn_char_text.txt";
  std::ofstream(path) << text;
  EXPECT_EQ(char_text_file(path.string(), 8).samples.size(), ds.samples.size());
  std::filesystem::remove(path);
}

TEST(Training, ZeroLearningRateLeavesWeightsUnchanged) {
  Dataset val;
  const auto tr = copy_split(40, 4, 1, &val);
  auto cfg = tiny_config(Task::causal_lm);
  cfg.vocab_size = tr.vocab_size;
  cfg.max_seq_len = 8;
  for (auto opt : {OptimizerKind::sgd, OptimizerKind::adam}) {
    TrainConfig tc;
    tc.optimizer = opt;
    tc.lr = 0.0;
    tc.epochs = 3;
    tc.patience = 0;
    const auto p0 = init_params(cfg, tc.seed);
    const auto res = train(tr, val, cfg, tc);
    EXPECT_TRUE(same_params(p0, res.params));
    ASSERT_EQ(res.record.epochs.size(), 4u);
    for (const auto& e : res.record.epochs) {
      EXPECT_NEAR(e.train_loss, res.record.epochs[0].train_loss, 1e-12);
      EXPECT_EQ(e.val_loss, res.record.epochs[0].val_loss);
    }
  }
}

TEST(Training, StandardEqualsZeroStepPdeTrajectory) {
  Dataset val;
  const auto tr = copy_split(48, 4, 2, &val);
  auto cfg = tiny_config(Task::causal_lm);
  cfg.vocab_size = tr.vocab_size;
  cfg.max_seq_len = 8;
  cfg.variant = AttentionVariant::standard;
  TrainConfig tc;
  tc.epochs = 3;
  const auto a = train(tr, val, cfg, tc);
  cfg.variant = AttentionVariant::pde;
  cfg.pde.n_steps = 0;
  const auto b = train(tr, val, cfg, tc);
  EXPECT_TRUE(same_params(a.params, b.params));
  std::ostringstream ca, cb;
  write_train_csv(ca, a.record);
  write_train_csv(cb, b.record);
  EXPECT_EQ(ca.str(), cb.str());
}

TEST(Training, DeterministicGivenSeed) {
  Dataset val;
  const auto tr = copy_split(48, 4, 3, &val);
  auto cfg = tiny_config(Task::causal_lm);
  cfg.vocab_size = tr.vocab_size;
  cfg.max_seq_len = 8;
  TrainConfig tc;
  tc.epochs = 2;
  tc.optimizer = OptimizerKind::adam;
  tc.lr = 1e-2;
  const auto a = train(tr, val, cfg, tc), b = train(tr, val, cfg, tc);
  EXPECT_TRUE(same_params(a.params, b.params));
  tc.seed = 1;
  EXPECT_FALSE(same_params(a.params, train(tr, val, cfg, tc).params));
}

TEST(Training, CopyTaskLossHalvesForBothVariants) {
  Dataset val;
  const auto tr = copy_split(160, 15, 1, &val);
  for (std::size_t steps : {0u, 2u}) {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 32;
    cfg.vocab_size = tr.vocab_size;
    cfg.max_seq_len = 32;
    cfg.pde.n_steps = steps;
    TrainConfig tc;
    tc.epochs = 50;
    tc.patience = 3;
    const auto res = train(tr, val, cfg, tc);
    EXPECT_FALSE(res.record.diverged);
    EXPECT_GE(res.record.loss_reduction(), 0.5) << "N_t=" << steps;
  }
}

TEST(Training, UnstableConfigurationSetsDivergenceFlag) {
  Dataset val;
  const auto tr = copy_split(48, 4, 4, &val);
  auto cfg = tiny_config(Task::causal_lm);
  cfg.vocab_size = tr.vocab_size;
  cfg.max_seq_len = 8;
  cfg.pde.n_steps = 8;
  cfg.pde.alpha = 5.0;
  cfg.pde.stability_guard = false;
  TrainConfig tc;
  tc.epochs = 5;
  TrainResult res;
  ASSERT_NO_THROW(res = train(tr, val, cfg, tc));
  EXPECT_TRUE(res.record.diverged);
  EXPECT_TRUE(res.record.epochs.back().diverged);
  EXPECT_FALSE(res.record.divergence_reason.empty());
}

TEST(Training, StableRegionNeverDiverges) {
  // Coefficients start near the stability limit and are free to learn.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Dataset val;
    const auto tr = copy_split(32, 15, seed, &val);
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.d_hidden = 16;
    cfg.vocab_size = tr.vocab_size;
    cfg.max_seq_len = 32;
    cfg.pde.alpha = 0.49;
    TrainConfig tc;
    tc.epochs = 20;
    tc.patience = 0;
    tc.seed = seed;
    tc.optimizer = OptimizerKind::adam;
    tc.lr = 0.05;
    const auto res = train(tr, val, cfg, tc);
    EXPECT_FALSE(res.record.diverged) << "seed " << seed << ": " << res.record.divergence_reason;
    for (const auto& L : res.params.layers)
      for (std::size_t h = 0; h < L.coeff.rows(); ++h) EXPECT_LE(L.coeff(h, 0), 0.5);
  }
}

TEST(Training, EarlyStoppingHonoursPatience) {
  Dataset val;
  const auto tr = copy_split(40, 4, 5, &val);
  auto cfg = tiny_config(Task::causal_lm);
  cfg.vocab_size = tr.vocab_size;
  cfg.max_seq_len = 8;
  TrainConfig tc;
  tc.lr = 0.0;
  tc.epochs = 10;
  tc.patience = 3;
  const auto res = train(tr, val, cfg, tc);
  EXPECT_TRUE(res.record.early_stopped);
  EXPECT_EQ(res.record.epochs.size(), 4u);
}

TEST(Training, GradientsStayFiniteAndBoundedWithDepth) {
  Rng rng(606);
  double reference = 0.0;
  for (std::size_t layers : {2u, 4u, 8u}) {
    auto cfg = tiny_config(Task::causal_lm, layers);
    cfg.max_seq_len = 12;
    cfg.pde.n_steps = 4;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto lg = loss_and_gradients(init_params(cfg, seed), cfg, tiny_batch(rng, cfg, 4));
      for (double n : lg.layer_grad_norms) EXPECT_TRUE(std::isfinite(n));
      worst = std::max(worst, global_norm(lg.grads));
    }
    EXPECT_TRUE(std::isfinite(worst));
    if (layers == 2) reference = worst;
    EXPECT_LE(worst, 10.0 * reference) << "L=" << layers;
  }
}

TEST(Training, CsvLayout) {
  TrainRecord r;
  r.epochs.push_back({0, 1.5, 1.25, 3.5, 0.0, 0.0, false, {}});
  r.epochs.push_back({1, std::nan(""), std::nan(""), std::nan(""), 2.0, 4.0, true, {}});
  std::ostringstream os;
  write_train_csv(os, r);
  EXPECT_EQ(os.str(),
            "epoch,train_loss,val_loss,metric,grad_norm_mean,grad_norm_max,diverged\n"
            "0,1.5,1.25,3.5,0,0,0\n"
            "1,nan,nan,nan,2,4,1\n");
}
