// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-head PDE-attention: softmax initialization, per-head pseudo-time
// evolution, value product and output projection, with exact reverse-mode
// gradients through every evolution step.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "pdeattn/field.hpp"
#include "pdeattn/matrix.hpp"
#include "pdeattn/pde.hpp"

namespace pdeattn::attention {

/// Which (query, key) pairs may receive a score. Dense when window == 0.
struct AttentionMask {
  bool causal = false;
  std::size_t window = 0;                   // half-width; 0 means unbounded
  std::vector<std::size_t> global_indices;  // rows/columns exempt from the window

  bool allowed(std::size_t i, std::size_t j) const;
};

/// Row-softmax of q k^T / sqrt(d) with masked scores sent to -inf.
AttentionField attention_init(const Matrix& q, const Matrix& k, const AttentionMask& mask = {},
                              BoundaryCondition bc = BoundaryCondition::periodic);

/// dS = A o (dA - rowsum(dA o A)); zero wherever A is zero.
Matrix softmax_backward(const Matrix& a, const Matrix& d_a);

struct ProjectionWeights {
  Matrix w_q, w_k, w_v;  // d x d
  Matrix w_o;            // (H d_head) x d
  std::size_t n_heads = 1;
  std::vector<PdeCoefficients> heads;  // learnable per-head coefficients

  std::size_t d_model() const noexcept { return w_q.rows(); }
  std::size_t d_head() const noexcept { return d_model() / n_heads; }

  /// Fan-in scaled uniform init; every head starts from `init`.
  static ProjectionWeights random(std::size_t d_model, std::size_t n_heads, std::mt19937_64& rng,
                                  const PdeCoefficients& init);

  /// Throws InvalidConfig unless the heads divide d and all shapes agree.
  void validate() const;
};

struct AttentionGradients {
  Matrix d_x, d_w_q, d_w_k, d_w_v, d_w_o;
  std::vector<PdeCoefficients> d_heads;
};

/// Intermediates of one head's evolution.
struct HeadTape {
  Matrix q, k, v;                     // head slices, T x d_head
  std::vector<AttentionField> fields;  // A(0) ... A(N)
  std::vector<Matrix> raw;            // step outputs before clamp/renormalize, index n -> A(n+1)
  std::vector<Matrix> velocities;     // wave only: V(0) ... V(N)
};

struct AttentionTape {
  Matrix x;
  Matrix concat;  // [head_1 | ... | head_H]
  std::vector<HeadTape> heads;
  PdeConfig cfg;
  AttentionMask mask;
  ProjectionWeights weights;
};

struct ForwardResult {
  Matrix y;
  AttentionTape tape;
};

/// Algorithm: per head A(0) = softmax(q k^T / sqrt(d_head)), evolve cfg.n_steps
/// steps with that head's coefficients, head = A(N) v; y = [heads] w_o.
/// cfg supplies kind, dt, steps, boundary and post-processing; alpha/beta/c
/// come from weights.heads.
ForwardResult pde_attention_forward(const Matrix& x, const ProjectionWeights& weights,
                                    const PdeConfig& cfg, const AttentionMask& mask = {});

AttentionGradients pde_attention_backward(const AttentionTape& tape, const Matrix& d_y);

/// Recompute the forward pass from the inputs stored on the tape.
Matrix replay_forward(const AttentionTape& tape);

// Adjoints of the individual evolution steps. `layout` supplies bc/causal,
// `a` is the step input, `g` the gradient w.r.t. the raw step output.

struct StepAdjoint {
  Matrix d_a;
  PdeCoefficients d_coeff;  // only the coefficients the kind uses are nonzero
};

StepAdjoint diffusion_step_backward(const AttentionField& a, double alpha, double dt,
                                    const Matrix& g, AxisMode axis);
StepAdjoint reaction_diffusion_step_backward(const AttentionField& a, double alpha, double beta,
                                             double dt, const Matrix& g, AxisMode axis);
StepAdjoint advection_diffusion_step_backward(const AttentionField& a, double alpha, double beta,
                                              double dt, const Matrix& g, AxisMode axis,
                                              grid::GradientScheme scheme);

struct WaveAdjoint {
  Matrix d_a, d_v;
  double d_c = 0.0;
};

/// Gradients w.r.t. (A, V, c) given gradients w.r.t. the raw next field and
/// the next velocity.
WaveAdjoint wave_step_backward(const AttentionField& a, double c, double dt, const Matrix& g_a,
                               const Matrix& g_v, AxisMode axis);

/// Adjoint of finalize_rows given the raw step output.
Matrix finalize_rows_backward(const Matrix& raw, const Matrix& g, bool clamp_nonnegative,
                              bool renormalize);

/// Adjoint of pde evolution given per-step snapshots. Returns dA(0) and
/// accumulates coefficient gradients into d_coeff.
Matrix evolve_backward(const HeadTape& tape, const PdeConfig& cfg, const PdeCoefficients& coeff,
                       const Matrix& d_final, PdeCoefficients& d_coeff);

/// Run evolution recording what evolve_backward needs into `tape`.
void evolve_recorded(const AttentionField& a0, const PdeConfig& cfg, const PdeCoefficients& coeff,
                     HeadTape& tape);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t n_checked = 0;
};

/// Compare `analytic` against central differences (f(t+e) - f(t-e)) / 2e at
/// the given indices (all when empty). Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-12). eps must lie in [1e-8, 1e-4]; a
/// non-finite function value throws InvalidInput.
GradientCheckReport gradient_check(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> theta, std::span<const double> analytic,
                                   double eps = 1e-6, std::span<const std::size_t> indices = {});

}  // namespace pdeattn::attention
