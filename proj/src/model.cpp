// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include "pdeattn/errors.hpp"

namespace pdeattn::model {

using nlohmann::ordered_json;

const char* to_string(Task t) { return t == Task::causal_lm ? "causal_lm" : "classification"; }

const char* to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::standard: return "standard";
    case AttentionVariant::pde: return "pde";
    case AttentionVariant::hybrid: return "hybrid";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "causal_lm") return Task::causal_lm;
  if (s == "classification") return Task::classification;
  throw InvalidConfig("unknown task '" + s + "'");
}

AttentionVariant parse_variant(const std::string& s) {
  if (s == "standard") return AttentionVariant::standard;
  if (s == "pde") return AttentionVariant::pde;
  if (s == "hybrid") return AttentionVariant::hybrid;
  throw InvalidConfig("unknown attention variant '" + s + "'");
}

PdeConfig ModelConfig::default_pde() {
  PdeConfig p;
  p.renormalize_rows = true;
  return p;
}

PdeConfig ModelConfig::attention_pde() const {
  PdeConfig p = pde;
  if (variant == AttentionVariant::standard) p.n_steps = 0;
  return p;
}

attention::AttentionMask ModelConfig::mask() const {
  attention::AttentionMask m;
  m.causal = task == Task::causal_lm;
  if (variant == AttentionVariant::hybrid) {
    m.window = pattern.window;
    m.global_indices = pattern.global_indices;
  }
  return m;
}

void ModelConfig::validate() const {
  if (n_layers == 0) throw InvalidConfig("model needs at least one layer");
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0)
    throw InvalidConfig("n_heads must divide d_model");
  if (d_hidden == 0) throw InvalidConfig("d_hidden must be positive");
  if (vocab_size < 2) throw InvalidConfig("vocab_size must be at least 2");
  if (max_seq_len < 2) throw InvalidConfig("max_seq_len must be at least 2");
  if (task == Task::classification && n_classes < 2) throw InvalidConfig("n_classes must be at least 2");
  if (!(layer_norm_eps > 0)) throw InvalidConfig("layer_norm_eps must be positive");
  if (variant == AttentionVariant::hybrid) pattern.validate(max_seq_len);
  if (task == Task::causal_lm && pde.axis == AxisMode::full_2d)
    throw InvalidConfig("full_2d evolution is not defined for causal fields");
  pde.validate();
}

namespace {

const char* scheme_name(grid::GradientScheme s) {
  return s == grid::GradientScheme::upwind ? "upwind" : "central";
}

grid::GradientScheme parse_scheme(const std::string& s) {
  if (s == "upwind") return grid::GradientScheme::upwind;
  if (s == "central") return grid::GradientScheme::central;
  throw InvalidConfig("unknown advection scheme '" + s + "'");
}

}  // namespace

ordered_json to_json(const ModelConfig& cfg) {
  ordered_json j;
  j["n_layers"] = cfg.n_layers;
  j["n_heads"] = cfg.n_heads;
  j["d_model"] = cfg.d_model;
  j["d_hidden"] = cfg.d_hidden;
  j["vocab_size"] = cfg.vocab_size;
  j["max_seq_len"] = cfg.max_seq_len;
  j["n_classes"] = cfg.n_classes;
  j["task"] = to_string(cfg.task);
  j["variant"] = to_string(cfg.variant);
  j["learn_coefficients"] = cfg.learn_coefficients;
  j["layer_norm_eps"] = cfg.layer_norm_eps;
  const auto& p = cfg.pde;
  j["pde"] = {{"kind", to_string(p.kind)},
              {"alpha", p.alpha},
              {"beta", p.beta},
              {"c", p.c},
              {"dt", p.dt},
              {"n_steps", p.n_steps},
              {"bc", to_string(p.bc)},
              {"axis", to_string(p.axis)},
              {"renormalize_rows", p.renormalize_rows},
              {"clamp_nonnegative", p.clamp_nonnegative},
              {"stability_guard", p.stability_guard},
              {"advection_scheme", scheme_name(p.advection_scheme)}};
  j["pattern"] = {{"window", cfg.pattern.window}, {"global_indices", cfg.pattern.global_indices}};
  return j;
}

ModelConfig model_config_from_json(const ordered_json& j) {
  try {
    ModelConfig cfg;
    cfg.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.d_hidden = j.at("d_hidden").get<std::size_t>();
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    cfg.n_classes = j.at("n_classes").get<std::size_t>();
    cfg.task = parse_task(j.at("task").get<std::string>());
    cfg.variant = parse_variant(j.at("variant").get<std::string>());
    cfg.learn_coefficients = j.at("learn_coefficients").get<bool>();
    cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    const auto& p = j.at("pde");
    cfg.pde.kind = parse_pde_kind(p.at("kind").get<std::string>());
    cfg.pde.alpha = p.at("alpha").get<double>();
    cfg.pde.beta = p.at("beta").get<double>();
    cfg.pde.c = p.at("c").get<double>();
    cfg.pde.dt = p.at("dt").get<double>();
    cfg.pde.n_steps = p.at("n_steps").get<std::size_t>();
    cfg.pde.bc = parse_boundary(p.at("bc").get<std::string>().c_str());
    cfg.pde.axis = parse_axis(p.at("axis").get<std::string>().c_str());
    cfg.pde.renormalize_rows = p.at("renormalize_rows").get<bool>();
    cfg.pde.clamp_nonnegative = p.at("clamp_nonnegative").get<bool>();
    cfg.pde.stability_guard = p.at("stability_guard").get<bool>();
    cfg.pde.advection_scheme = parse_scheme(p.at("advection_scheme").get<std::string>());
    cfg.pattern.window = j.at("pattern").at("window").get<std::size_t>();
    cfg.pattern.global_indices = j.at("pattern").at("global_indices").get<std::vector<std::size_t>>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("model config: ") + e.what());
  }
}

attention::ProjectionWeights LayerParams::projection(std::size_t n_heads) const {
  attention::ProjectionWeights w;
  w.w_q = w_q;
  w.w_k = w_k;
  w.w_v = w_v;
  w.w_o = w_o;
  w.n_heads = n_heads;
  w.heads.resize(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) w.heads[h] = {coeff(h, 0), coeff(h, 1), coeff(h, 2)};
  return w;
}

void ModelParams::for_each(const std::function<void(const std::string&, Matrix&)>& f) {
  f("tok_emb", tok_emb);
  f("pos_emb", pos_emb);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& p = layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    f(pre + "w_q", p.w_q);
    f(pre + "w_k", p.w_k);
    f(pre + "w_v", p.w_v);
    f(pre + "w_o", p.w_o);
    f(pre + "coeff", p.coeff);
    f(pre + "ln1_gamma", p.ln1_gamma);
    f(pre + "ln1_beta", p.ln1_beta);
    f(pre + "w1", p.w1);
    f(pre + "b1", p.b1);
    f(pre + "w2", p.w2);
    f(pre + "b2", p.b2);
    f(pre + "ln2_gamma", p.ln2_gamma);
    f(pre + "ln2_beta", p.ln2_beta);
  }
  f("w_out", w_out);
  f("b_out", b_out);
}

void ModelParams::for_each(const std::function<void(const std::string&, const Matrix&)>& f) const {
  const_cast<ModelParams*>(this)->for_each(
      [&](const std::string& name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
  return z;
}

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](std::size_t rows, std::size_t cols, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = u(rng);
    return m;
  };
  const std::size_t d = cfg.d_model, h = cfg.d_hidden;
  const double fan_d = 1.0 / std::sqrt(static_cast<double>(d)), fan_h = 1.0 / std::sqrt(static_cast<double>(h));
  ModelParams p;
  p.tok_emb = uniform(cfg.vocab_size, d, 1.0);
  p.pos_emb = uniform(cfg.max_seq_len, d, 1.0);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    LayerParams L;
    L.w_q = uniform(d, d, fan_d);
    L.w_k = uniform(d, d, fan_d);
    L.w_v = uniform(d, d, fan_d);
    L.w_o = uniform(d, d, fan_d);
    L.coeff = Matrix(cfg.n_heads, 3);
    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      L.coeff(hd, 0) = cfg.pde.alpha;
      L.coeff(hd, 1) = cfg.pde.beta;
      L.coeff(hd, 2) = cfg.pde.c;
    }
    L.ln1_gamma = Matrix(1, d, 1.0);
    L.ln1_beta = Matrix(1, d);
    L.w1 = uniform(d, h, fan_d);
    L.b1 = Matrix(1, h);
    L.w2 = uniform(h, d, fan_h);
    L.b2 = Matrix(1, d);
    L.ln2_gamma = Matrix(1, d, 1.0);
    L.ln2_beta = Matrix(1, d);
    p.layers.push_back(std::move(L));
  }
  p.w_out = uniform(d, cfg.output_size(), fan_d);
  p.b_out = Matrix(1, cfg.output_size());
  return p;
}

void clamp_coefficients(ModelParams& params, const ModelConfig& cfg) {
  const double dt = cfg.pde.dt;
  const double alpha_max = cfl_max_step(PdeKind::diffusion, 1.0, 0.0, cfg.pde.axis) / dt;
  const double c_max = cfl_max_step(PdeKind::wave, 0.0, 1.0, cfg.pde.axis) / dt;
  const double beta_max = 1.0 / dt;
  for (auto& L : params.layers) {
    for (std::size_t h = 0; h < L.coeff.rows(); ++h) {
      L.coeff(h, 0) = std::clamp(L.coeff(h, 0), 0.0, alpha_max);
      L.coeff(h, 1) = std::clamp(L.coeff(h, 1), 0.0, beta_max);
      L.coeff(h, 2) = std::clamp(L.coeff(h, 2), 0.0, c_max);
    }
  }
}

namespace {

void add_row_bias(Matrix& m, const Matrix& b) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b(0, j);
  }
}

void accumulate_column_sums(const Matrix& m, Matrix& out) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out(0, j) += r[j];
  }
}

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps, LayerNormCache& cache) {
  const std::size_t n = x.rows(), d = x.cols();
  cache.xhat = Matrix(n, d);
  cache.inv_std.assign(n, 0.0);
  Matrix y(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      cache.xhat(i, j) = (r[j] - mean) * inv;
      y(i, j) = gamma(0, j) * cache.xhat(i, j) + beta(0, j);
    }
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gamma, const LayerNormCache& cache, Matrix& d_gamma,
                           Matrix& d_beta) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Matrix dx(n, d);
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      d_gamma(0, j) += dy(i, j) * cache.xhat(i, j);
      d_beta(0, j) += dy(i, j);
      dxhat[j] = dy(i, j) * gamma(0, j);
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * cache.xhat(i, j);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) = cache.inv_std[i] * (dxhat[j] - mean_dxhat - cache.xhat(i, j) * mean_dxhat_xhat);
  }
  return dx;
}

// Exact GELU: x Phi(x).
double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }
double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)) + x * phi;
}

struct LayerCache {
  attention::AttentionTape attn;
  LayerNormCache ln1, ln2;
  Matrix h1, z1, g;
};

struct SampleCache {
  std::vector<LayerCache> layers;
  Matrix x_final;
};

void check_sample(const Sample& s, const ModelConfig& cfg) {
  if (s.tokens.size() < 2 || s.tokens.size() > cfg.max_seq_len)
    throw InvalidInput("sequence length " + std::to_string(s.tokens.size()) + " outside [2, " +
                       std::to_string(cfg.max_seq_len) + "]");
  for (int t : s.tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size)
      throw InvalidInput("token id " + std::to_string(t) + " outside the vocabulary");
}

// Hidden states before the output head.
Matrix encode(const ModelParams& p, const ModelConfig& cfg, const Sample& s, SampleCache* cache) {
  check_sample(s, cfg);
  const std::size_t n = s.tokens.size(), d = cfg.d_model;
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = p.tok_emb(static_cast<std::size_t>(s.tokens[i]), j) + p.pos_emb(i, j);

  const PdeConfig pde = cfg.attention_pde();
  const auto mask = cfg.mask();
  if (cache) cache->layers.resize(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& L = p.layers[l];
    auto fwd = attention::pde_attention_forward(x, L.projection(cfg.n_heads), pde, mask);
    LayerCache local;
    LayerCache& c = cache ? cache->layers[l] : local;
    Matrix s1 = x;
    axpy(1.0, fwd.y, s1);
    c.h1 = layer_norm(s1, L.ln1_gamma, L.ln1_beta, cfg.layer_norm_eps, c.ln1);
    c.z1 = matmul(c.h1, L.w1);
    add_row_bias(c.z1, L.b1);
    c.g = c.z1;
    for (double& v : c.g.flat()) v = gelu(v);
    Matrix s2 = matmul(c.g, L.w2);
    add_row_bias(s2, L.b2);
    axpy(1.0, c.h1, s2);
    x = layer_norm(s2, L.ln2_gamma, L.ln2_beta, cfg.layer_norm_eps, c.ln2);
    if (cache) c.attn = std::move(fwd.tape);
  }
  if (cache) cache->x_final = x;
  return x;
}

Matrix head(const ModelParams& p, const ModelConfig& cfg, const Matrix& x) {
  Matrix in = x;
  if (cfg.task == Task::classification) {
    in = Matrix(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) in(0, j) += x(i, j);
    for (double& v : in.flat()) v /= static_cast<double>(x.rows());
  }
  Matrix logits = matmul(in, p.w_out);
  add_row_bias(logits, p.b_out);
  return logits;
}

// Cross-entropy of each counted row; writes softmax - onehot scaled by `scale` into d_logits.
double cross_entropy_rows(const Matrix& logits, std::span<const int> targets, double scale, Matrix* d_logits) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int t = targets[i];
    if (t < 0) continue;
    if (static_cast<std::size_t>(t) >= logits.cols())
      throw InvalidInput("target " + std::to_string(t) + " outside the output range");
    const auto r = logits.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - m);
    const double lse = m + std::log(z);
    total += lse - r[static_cast<std::size_t>(t)];
    if (d_logits) {
      for (std::size_t j = 0; j < r.size(); ++j) (*d_logits)(i, j) = scale * std::exp(r[j] - lse);
      (*d_logits)(i, static_cast<std::size_t>(t)) -= scale;
    }
  }
  return total;
}

std::vector<int> sample_targets(const Sample& s, const ModelConfig& cfg) {
  if (cfg.task == Task::classification) {
    if (s.label < 0) throw InvalidInput("classification sample without a label");
    return {s.label};
  }
  if (s.targets.size() != s.tokens.size()) throw InvalidInput("targets must align with tokens");
  return s.targets;
}

std::size_t count_targets(std::span<const Sample> batch, const ModelConfig& cfg) {
  if (cfg.task == Task::classification) return batch.size();
  std::size_t n = 0;
  for (const auto& s : batch)
    for (int t : s.targets) n += t >= 0;
  return n;
}

void backward_sample(const ModelParams& p, const ModelConfig& cfg, const Sample& s, const SampleCache& cache,
                     const Matrix& d_logits, ModelParams& g) {
  const Matrix& xf = cache.x_final;
  const std::size_t n = xf.rows(), d = cfg.d_model;
  Matrix dx(n, d);
  accumulate_column_sums(d_logits, g.b_out);
  if (cfg.task == Task::classification) {
    Matrix pooled(1, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) pooled(0, j) += xf(i, j);
    for (double& v : pooled.flat()) v /= static_cast<double>(n);
    matmul_tn_acc(pooled, d_logits, g.w_out);
    const Matrix d_pooled = matmul_nt(d_logits, p.w_out);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) dx(i, j) = d_pooled(0, j) / static_cast<double>(n);
  } else {
    matmul_tn_acc(xf, d_logits, g.w_out);
    dx = matmul_nt(d_logits, p.w_out);
  }

  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const auto& L = p.layers[l];
    auto& G = g.layers[l];
    const auto& c = cache.layers[l];
    const Matrix d_s2 = layer_norm_backward(dx, L.ln2_gamma, c.ln2, G.ln2_gamma, G.ln2_beta);
    accumulate_column_sums(d_s2, G.b2);
    matmul_tn_acc(c.g, d_s2, G.w2);
    Matrix d_z1 = matmul_nt(d_s2, L.w2);
    for (std::size_t i = 0; i < d_z1.size(); ++i) d_z1.data()[i] *= gelu_grad(c.z1.data()[i]);
    accumulate_column_sums(d_z1, G.b1);
    matmul_tn_acc(c.h1, d_z1, G.w1);
    Matrix d_h1 = matmul_nt(d_z1, L.w1);
    axpy(1.0, d_s2, d_h1);
    const Matrix d_s1 = layer_norm_backward(d_h1, L.ln1_gamma, c.ln1, G.ln1_gamma, G.ln1_beta);

    const auto ag = attention::pde_attention_backward(c.attn, d_s1);
    axpy(1.0, ag.d_w_q, G.w_q);
    axpy(1.0, ag.d_w_k, G.w_k);
    axpy(1.0, ag.d_w_v, G.w_v);
    axpy(1.0, ag.d_w_o, G.w_o);
    if (cfg.learn_coefficients) {
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        G.coeff(h, 0) += ag.d_heads[h].alpha;
        G.coeff(h, 1) += ag.d_heads[h].beta;
        G.coeff(h, 2) += ag.d_heads[h].c;
      }
    }
    dx = d_s1;
    axpy(1.0, ag.d_x, dx);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto tok = static_cast<std::size_t>(s.tokens[i]);
    for (std::size_t j = 0; j < d; ++j) {
      g.tok_emb(tok, j) += dx(i, j);
      g.pos_emb(i, j) += dx(i, j);
    }
  }
}

}  // namespace

std::vector<Matrix> model_forward(const ModelParams& params, const ModelConfig& cfg, std::span<const Sample> batch) {
  std::vector<Matrix> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(head(params, cfg, encode(params, cfg, s, nullptr)));
  return out;
}

LossGrad loss_and_gradients(const ModelParams& params, const ModelConfig& cfg, std::span<const Sample> batch) {
  LossGrad r;
  r.grads = params.zeros_like();
  r.n_counted = count_targets(batch, cfg);
  if (r.n_counted == 0) throw InvalidInput("batch has no counted targets");
  const double scale = 1.0 / static_cast<double>(r.n_counted);
  double total = 0.0;
  for (const auto& s : batch) {
    SampleCache cache;
    const Matrix logits = head(params, cfg, encode(params, cfg, s, &cache));
    const auto targets = sample_targets(s, cfg);
    Matrix d_logits(logits.rows(), logits.cols());
    total += cross_entropy_rows(logits, targets, scale, &d_logits);
    backward_sample(params, cfg, s, cache, d_logits, r.grads);
  }
  r.loss = total * scale;
  for (const auto& G : r.grads.layers) {
    double sq = 0.0;
    for (const Matrix* m : {&G.w_q, &G.w_k, &G.w_v, &G.w_o, &G.coeff, &G.ln1_gamma, &G.ln1_beta, &G.w1, &G.b1,
                            &G.w2, &G.b2, &G.ln2_gamma, &G.ln2_beta})
      sq += dot(*m, *m);
    r.layer_grad_norms.push_back(std::sqrt(sq));
  }
  return r;
}

std::pair<double, std::size_t> evaluate_loss(const ModelParams& params, const ModelConfig& cfg,
                                             std::span<const Sample> batch) {
  double total = 0.0;
  for (const auto& s : batch) {
    const Matrix logits = head(params, cfg, encode(params, cfg, s, nullptr));
    total += cross_entropy_rows(logits, sample_targets(s, cfg), 1.0, nullptr);
  }
  return {total, count_targets(batch, cfg)};
}

double accuracy(const ModelParams& params, const ModelConfig& cfg, std::span<const Sample> batch) {
  if (cfg.task != Task::classification) throw InvalidConfig("accuracy needs a classification model");
  if (batch.empty()) throw InvalidInput("accuracy of an empty batch");
  std::size_t hits = 0;
  const auto logits = model_forward(params, cfg, batch);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto r = logits[b].row(0);
    hits += static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) == batch[b].label;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

double global_norm(const ModelParams& grads) {
  double sq = 0.0;
  grads.for_each([&](const std::string&, const Matrix& m) { sq += dot(m, m); });
  return std::sqrt(sq);
}

void save_checkpoint(std::ostream& os, const ModelParams& params, const ModelConfig& cfg) {
  ordered_json j;
  j["format"] = "pdeattn-checkpoint";
  j["version"] = 1;
  j["config"] = to_json(cfg);
  ordered_json tensors = ordered_json::object();
  params.for_each([&](const std::string& name, const Matrix& m) {
    tensors[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.flat().begin(), m.flat().end())}};
  });
  j["tensors"] = std::move(tensors);
  os << j.dump(1) << '\n';
}

std::pair<ModelParams, ModelConfig> load_checkpoint(std::istream& is) {
  ordered_json j;
  try {
    j = ordered_json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "pdeattn-checkpoint" || j.value("version", 0) != 1)
    throw InvalidInput("checkpoint: unsupported format or version");
  const ModelConfig cfg = model_config_from_json(j.at("config"));
  ModelParams p = init_params(cfg, 0);
  const auto& tensors = j.at("tensors");
  p.for_each([&](const std::string& name, Matrix& m) {
    if (!tensors.contains(name)) throw InvalidInput("checkpoint: missing tensor " + name);
    const auto& t = tensors.at(name);
    const auto data = t.at("data").get<std::vector<double>>();
    if (t.at("rows").get<std::size_t>() != m.rows() || t.at("cols").get<std::size_t>() != m.cols() ||
        data.size() != m.size())
      throw InvalidInput("checkpoint: shape mismatch for " + name);
    std::copy(data.begin(), data.end(), m.data());
  });
  return {std::move(p), cfg};
}

}  // namespace pdeattn::model
