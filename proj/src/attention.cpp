// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pdeattn/grid.hpp"

namespace pdeattn::attention {

bool AttentionMask::allowed(std::size_t i, std::size_t j) const {
  if (causal && j > i) return false;
  if (window == 0) return true;
  const std::size_t dist = i > j ? i - j : j - i;
  if (dist <= window) return true;
  return std::find(global_indices.begin(), global_indices.end(), i) != global_indices.end() ||
         std::find(global_indices.begin(), global_indices.end(), j) != global_indices.end();
}

AttentionField attention_init(const Matrix& q, const Matrix& k, const AttentionMask& mask,
                              BoundaryCondition bc) {
  if (q.cols() != k.cols() || q.cols() == 0)
    throw InvalidInput("attention_init: q and k need the same nonzero width");
  if (mask.causal && q.rows() != k.rows())
    throw InvalidInput("attention_init: causal mask needs square scores");
  const double scale = std::sqrt(static_cast<double>(q.cols()));
  Matrix a = matmul_nt(q, k);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] /= scale;
      if (mask.allowed(i, j)) m = std::max(m, row[j]);
    }
    if (m == -std::numeric_limits<double>::infinity())
      throw InvalidInput("attention_init: row " + std::to_string(i) + " has no admissible key");
    double z = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = mask.allowed(i, j) ? std::exp(row[j] - m) : 0.0;
      z += row[j];
    }
    for (double& v : row) v /= z;
  }
  return {std::move(a), bc, mask.causal};
}

Matrix softmax_backward(const Matrix& a, const Matrix& d_a) {
  if (!a.same_shape(d_a)) throw InvalidInput("softmax_backward: shape mismatch");
  Matrix d_s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    const auto gr = d_a.row(i);
    double inner = 0.0;
    for (std::size_t j = 0; j < ar.size(); ++j) inner += ar[j] * gr[j];
    auto out = d_s.row(i);
    for (std::size_t j = 0; j < ar.size(); ++j) out[j] = ar[j] * (gr[j] - inner);
  }
  return d_s;
}

ProjectionWeights ProjectionWeights::random(std::size_t d_model, std::size_t n_heads,
                                            std::mt19937_64& rng, const PdeCoefficients& init) {
  ProjectionWeights w;
  w.n_heads = n_heads;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Matrix* m : {&w.w_q, &w.w_k, &w.w_v, &w.w_o}) {
    *m = Matrix(d_model, d_model);
    for (double& v : m->flat()) v = u(rng);
  }
  w.heads.assign(n_heads, init);
  w.validate();
  return w;
}

void ProjectionWeights::validate() const {
  const std::size_t d = d_model();
  if (n_heads == 0 || d == 0 || d % n_heads != 0)
    throw InvalidConfig("number of heads must divide the model width");
  for (const Matrix* m : {&w_q, &w_k, &w_v, &w_o})
    if (m->rows() != d || m->cols() != d) throw InvalidConfig("projection weights must be d x d");
  if (heads.size() != n_heads) throw InvalidConfig("one coefficient set per head required");
}

namespace {

StepOptions raw_options(const PdeConfig& cfg) {
  StepOptions o = StepOptions::from(cfg);
  o.stability_guard = false;
  o.renormalize_rows = false;
  o.clamp_nonnegative = false;
  return o;
}

}  // namespace

void evolve_recorded(const AttentionField& a0, const PdeConfig& cfg, const PdeCoefficients& coeff,
                     HeadTape& tape) {
  if (cfg.stability_guard) check_stability(cfg.kind, coeff, cfg.dt, cfg.axis);
  const StepOptions raw_opts = raw_options(cfg);
  tape.fields.assign(1, a0);
  tape.raw.clear();
  tape.velocities.clear();
  if (cfg.kind == PdeKind::wave) tape.velocities.emplace_back(a0.rows(), a0.cols());

  for (std::size_t n = 1; n <= cfg.n_steps; ++n) {
    const AttentionField& a = tape.fields.back();
    AttentionField next;
    switch (cfg.kind) {
      case PdeKind::diffusion:
        next = diffusion_step(a, coeff.alpha, cfg.dt, raw_opts);
        break;
      case PdeKind::reaction_diffusion:
        next = reaction_diffusion_step(a, coeff.alpha, coeff.beta, cfg.dt, raw_opts);
        break;
      case PdeKind::advection_diffusion:
        next = advection_diffusion_step(a, coeff.alpha, coeff.beta, cfg.dt, raw_opts);
        break;
      case PdeKind::wave: {
        WaveState s = wave_step({a, tape.velocities.back()}, coeff.c, cfg.dt, raw_opts);
        check_divergence(s.v, n);
        tape.velocities.push_back(std::move(s.v));
        next = std::move(s.a);
        break;
      }
    }
    tape.raw.push_back(next.values);
    try {
      finalize_rows(next, cfg.clamp_nonnegative, cfg.renormalize_rows);
    } catch (const DegenerateField& e) {
      throw DegenerateField("step " + std::to_string(n) + ": " + e.what());
    }
    check_divergence(next.values, n);
    tape.fields.push_back(std::move(next));
  }
}

StepAdjoint diffusion_step_backward(const AttentionField& a, double alpha, double dt,
                                    const Matrix& g, AxisMode axis) {
  StepAdjoint out{g, {0.0, 0.0, 0.0}};
  axpy(dt * alpha, grid::laplacian_adjoint_apply(a, g, axis), out.d_a);
  out.d_coeff.alpha = dt * dot(g, grid::laplacian_apply(a, axis));
  return out;
}

StepAdjoint reaction_diffusion_step_backward(const AttentionField& a, double alpha, double beta,
                                             double dt, const Matrix& g, AxisMode axis) {
  StepAdjoint out = diffusion_step_backward(a, alpha, dt, g, axis);
  double d_beta = 0.0;
  const double* av = a.values.data();
  const double* gv = g.data();
  double* dv = out.d_a.data();
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    dv[idx] += dt * beta * (1.0 - 2.0 * av[idx]) * gv[idx];
    d_beta += gv[idx] * av[idx] * (1.0 - av[idx]);
  }
  out.d_coeff.beta = dt * d_beta;
  return out;
}

StepAdjoint advection_diffusion_step_backward(const AttentionField& a, double alpha, double beta,
                                              double dt, const Matrix& g, AxisMode axis,
                                              grid::GradientScheme scheme) {
  StepAdjoint out = diffusion_step_backward(a, alpha, dt, g, axis);
  axpy(-dt * beta, grid::gradient_adjoint_apply(a, g, scheme), out.d_a);
  out.d_coeff.beta = -dt * dot(g, grid::gradient_apply(a, scheme));
  return out;
}

WaveAdjoint wave_step_backward(const AttentionField& a, double c, double dt, const Matrix& g_a,
                               const Matrix& g_v, AxisMode axis) {
  WaveAdjoint out;
  out.d_v = g_v;
  axpy(dt, g_a, out.d_v);
  out.d_a = g_a;
  axpy(dt * c * c, grid::laplacian_adjoint_apply(a, out.d_v, axis), out.d_a);
  out.d_c = 2.0 * c * dt * dot(out.d_v, grid::laplacian_apply(a, axis));
  return out;
}

Matrix finalize_rows_backward(const Matrix& raw, const Matrix& g, bool clamp_nonnegative,
                              bool renormalize) {
  if (!raw.same_shape(g)) throw InvalidInput("finalize_rows_backward: shape mismatch");
  Matrix d = g;
  if (renormalize) {
    for (std::size_t i = 0; i < raw.rows(); ++i) {
      const auto r = raw.row(i);
      double s = 0.0;
      for (double v : r) s += clamp_nonnegative ? std::max(v, 0.0) : v;
      const auto gr = g.row(i);
      double inner = 0.0;
      for (std::size_t j = 0; j < r.size(); ++j)
        inner += gr[j] * (clamp_nonnegative ? std::max(r[j], 0.0) : r[j]) / s;
      auto dr = d.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) dr[j] = (gr[j] - inner) / s;
    }
  }
  if (clamp_nonnegative) {
    const double* rv = raw.data();
    double* dv = d.data();
    for (std::size_t idx = 0; idx < d.size(); ++idx)
      if (!(rv[idx] > 0.0)) dv[idx] = 0.0;
  }
  return d;
}

Matrix evolve_backward(const HeadTape& tape, const PdeConfig& cfg, const PdeCoefficients& coeff,
                       const Matrix& d_final, PdeCoefficients& d_coeff) {
  const std::size_t steps = tape.raw.size();
  Matrix g = d_final;
  Matrix g_v;
  if (cfg.kind == PdeKind::wave) g_v = Matrix(d_final.rows(), d_final.cols());
  for (std::size_t n = steps; n-- > 0;) {
    const AttentionField& a = tape.fields[n];
    const Matrix g_raw =
        finalize_rows_backward(tape.raw[n], g, cfg.clamp_nonnegative, cfg.renormalize_rows);
    switch (cfg.kind) {
      case PdeKind::diffusion: {
        auto adj = diffusion_step_backward(a, coeff.alpha, cfg.dt, g_raw, cfg.axis);
        g = std::move(adj.d_a);
        d_coeff.alpha += adj.d_coeff.alpha;
        break;
      }
      case PdeKind::reaction_diffusion: {
        auto adj =
            reaction_diffusion_step_backward(a, coeff.alpha, coeff.beta, cfg.dt, g_raw, cfg.axis);
        g = std::move(adj.d_a);
        d_coeff.alpha += adj.d_coeff.alpha;
        d_coeff.beta += adj.d_coeff.beta;
        break;
      }
      case PdeKind::advection_diffusion: {
        auto adj = advection_diffusion_step_backward(a, coeff.alpha, coeff.beta, cfg.dt, g_raw,
                                                     cfg.axis, cfg.advection_scheme);
        g = std::move(adj.d_a);
        d_coeff.alpha += adj.d_coeff.alpha;
        d_coeff.beta += adj.d_coeff.beta;
        break;
      }
      case PdeKind::wave: {
        auto adj = wave_step_backward(a, coeff.c, cfg.dt, g_raw, g_v, cfg.axis);
        g = std::move(adj.d_a);
        g_v = std::move(adj.d_v);
        d_coeff.c += adj.d_c;
        break;
      }
    }
  }
  return g;
}

ForwardResult pde_attention_forward(const Matrix& x, const ProjectionWeights& weights,
                                    const PdeConfig& cfg, const AttentionMask& mask) {
  weights.validate();
  if (x.cols() != weights.d_model()) throw InvalidInput("pde_attention_forward: x width != d");
  if (x.rows() < 2) throw InvalidInput("pde_attention_forward: need T >= 2");
  PdeConfig domain = cfg;
  domain.stability_guard = false;
  domain.validate();

  ForwardResult res;
  AttentionTape& tape = res.tape;
  tape.x = x;
  tape.cfg = cfg;
  tape.mask = mask;
  tape.weights = weights;
  const Matrix q = matmul(x, weights.w_q);
  const Matrix k = matmul(x, weights.w_k);
  const Matrix v = matmul(x, weights.w_v);
  const std::size_t dh = weights.d_head();
  tape.concat = Matrix(x.rows(), weights.d_model());
  tape.heads.resize(weights.n_heads);
  for (std::size_t h = 0; h < weights.n_heads; ++h) {
    HeadTape& ht = tape.heads[h];
    ht.q = column_block(q, h * dh, dh);
    ht.k = column_block(k, h * dh, dh);
    ht.v = column_block(v, h * dh, dh);
    evolve_recorded(attention_init(ht.q, ht.k, mask, cfg.bc), cfg, weights.heads[h], ht);
    set_column_block(tape.concat, h * dh, matmul(ht.fields.back().values, ht.v));
  }
  res.y = matmul(tape.concat, weights.w_o);
  return res;
}

Matrix replay_forward(const AttentionTape& tape) {
  return pde_attention_forward(tape.x, tape.weights, tape.cfg, tape.mask).y;
}

AttentionGradients pde_attention_backward(const AttentionTape& tape, const Matrix& d_y) {
  const ProjectionWeights& w = tape.weights;
  if (d_y.rows() != tape.x.rows() || d_y.cols() != w.d_model())
    throw InvalidInput("pde_attention_backward: d_y shape mismatch");
  AttentionGradients grads;
  grads.d_w_o = matmul_tn(tape.concat, d_y);
  const Matrix d_concat = matmul_nt(d_y, w.w_o);

  const std::size_t t = tape.x.rows();
  const std::size_t dh = w.d_head();
  const double scale = std::sqrt(static_cast<double>(dh));
  Matrix d_q(t, w.d_model()), d_k(t, w.d_model()), d_v(t, w.d_model());
  grads.d_heads.assign(w.n_heads, {0.0, 0.0, 0.0});
  for (std::size_t h = 0; h < w.n_heads; ++h) {
    const HeadTape& ht = tape.heads[h];
    const Matrix d_head = column_block(d_concat, h * dh, dh);
    const Matrix d_final = matmul_nt(d_head, ht.v);
    set_column_block(d_v, h * dh, matmul_tn(ht.fields.back().values, d_head));
    const Matrix d_a0 = evolve_backward(ht, tape.cfg, w.heads[h], d_final, grads.d_heads[h]);
    Matrix d_s = softmax_backward(ht.fields.front().values, d_a0);
    for (double& val : d_s.flat()) val /= scale;
    set_column_block(d_q, h * dh, matmul(d_s, ht.k));
    set_column_block(d_k, h * dh, matmul_tn(d_s, ht.q));
  }
  grads.d_w_q = matmul_tn(tape.x, d_q);
  grads.d_w_k = matmul_tn(tape.x, d_k);
  grads.d_w_v = matmul_tn(tape.x, d_v);
  grads.d_x = matmul_nt(d_q, w.w_q);
  axpy(1.0, matmul_nt(d_k, w.w_k), grads.d_x);
  axpy(1.0, matmul_nt(d_v, w.w_v), grads.d_x);
  return grads;
}

GradientCheckReport gradient_check(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> theta, std::span<const double> analytic,
                                   double eps, std::span<const std::size_t> indices) {
  if (!(eps >= 1e-8 && eps <= 1e-4)) throw InvalidInput("gradient_check: eps outside [1e-8, 1e-4]");
  if (analytic.size() != theta.size()) throw InvalidInput("gradient_check: size mismatch");
  std::vector<double> work(theta.begin(), theta.end());
  GradientCheckReport report;
  auto check_one = [&](std::size_t idx) {
    const double saved = work[idx];
    work[idx] = saved + eps;
    const double fp = f(work);
    work[idx] = saved - eps;
    const double fm = f(work);
    work[idx] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw InvalidInput("gradient_check: non-finite function value at index " +
                         std::to_string(idx));
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), 1e-12});
    const double rel = std::abs(analytic[idx] - numeric) / denom;
    if (rel > report.max_relative_error || report.n_checked == 0) {
      report.max_relative_error = std::max(report.max_relative_error, rel);
      report.worst_index = idx;
      report.worst_analytic = analytic[idx];
      report.worst_numeric = numeric;
    }
    ++report.n_checked;
  };
  if (indices.empty()) {
    for (std::size_t i = 0; i < theta.size(); ++i) check_one(i);
  } else {
    for (std::size_t i : indices) {
      if (i >= theta.size()) throw InvalidInput("gradient_check: index out of range");
      check_one(i);
    }
  }
  return report;
}

}  // namespace pdeattn::attention
