// SPDX-License-Identifier: Apache-2.0
#pragma once

// Explicit pseudo-time stepping of attention fields.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pdeattn/field.hpp"
#include "pdeattn/grid.hpp"
#include "pdeattn/matrix.hpp"

namespace pdeattn {

enum class PdeKind { diffusion, wave, reaction_diffusion, advection_diffusion };

const char* to_string(PdeKind kind);
PdeKind parse_pde_kind(const std::string& name);

/// Divergence threshold on max |entry| during evolution.
inline constexpr double kDivergenceMagnitude = 1e6;

struct PdeCoefficients {
  double alpha = 0.10;  // diffusion
  double beta = 0.0;    // reaction rate or advection speed
  double c = 0.15;      // wave speed
};

struct PdeConfig {
  PdeKind kind = PdeKind::diffusion;
  double alpha = 0.10;
  double beta = 0.0;
  double c = 0.15;
  double dt = 1.0;
  std::size_t n_steps = 4;
  BoundaryCondition bc = BoundaryCondition::periodic;
  AxisMode axis = AxisMode::per_row_1d;
  bool renormalize_rows = false;
  bool clamp_nonnegative = false;
  bool stability_guard = true;
  grid::GradientScheme advection_scheme = grid::GradientScheme::upwind;

  PdeCoefficients coefficients() const { return {alpha, beta, c}; }

  /// Throws InvalidConfig on out-of-domain values and StabilityError when the
  /// guard is on and dt exceeds the stable step.
  void validate() const;
};

/// Options shared by the single-step kernels.
struct StepOptions {
  AxisMode axis = AxisMode::per_row_1d;
  bool stability_guard = true;
  bool renormalize_rows = false;
  bool clamp_nonnegative = false;
  grid::GradientScheme advection_scheme = grid::GradientScheme::upwind;

  static StepOptions from(const PdeConfig& cfg) {
    return {cfg.axis, cfg.stability_guard, cfg.renormalize_rows, cfg.clamp_nonnegative,
            cfg.advection_scheme};
  }
};

struct WaveState {
  AttentionField a;
  Matrix v;  // velocity, zero at pseudo-time 0

  static WaveState at_rest(AttentionField a) {
    Matrix v(a.rows(), a.cols());
    return {std::move(a), std::move(v)};
  }
};

/// Largest stable dt with unit grid spacing: 1/(2 alpha) for the diffusive
/// kinds (1/(4 alpha) on the 2-D stencil), 1/c for the wave equation.
double cfl_max_step(PdeKind kind, double alpha, double c,
                    AxisMode axis = AxisMode::per_row_1d);

/// Throws StabilityError if (coefficients, dt) leave the stable region.
void check_stability(PdeKind kind, const PdeCoefficients& k, double dt, AxisMode axis);

AttentionField diffusion_step(const AttentionField& a, double alpha, double dt,
                              const StepOptions& opts = {});
/// Same step writing into `out`, reusing its storage when the shape matches.
void diffusion_step_into(const AttentionField& a, double alpha, double dt, const StepOptions& opts,
                         AttentionField& out);

/// Symplectic Euler: V += dt c^2 L(A), then A += dt V.
WaveState wave_step(const WaveState& s, double c, double dt, const StepOptions& opts = {});

/// A + dt (alpha L(A) + beta A (1 - A)). `pre_norm_mass`, when given, receives
/// the mean row sum before the optional renormalization.
AttentionField reaction_diffusion_step(const AttentionField& a, double alpha, double beta,
                                       double dt, const StepOptions& opts = {},
                                       double* pre_norm_mass = nullptr);

/// A + dt (alpha L(A) - beta D(A)) with D the upwind (backward) difference:
/// for beta > 0 mass is transported toward larger key indices.
AttentionField advection_diffusion_step(const AttentionField& a, double alpha, double beta,
                                        double dt, const StepOptions& opts = {},
                                        double* pre_norm_mass = nullptr);

/// Clamp and/or renormalize rows in place. Returns the mean row sum seen
/// before renormalization. Throws DegenerateField if a row sum is <= 0 when
/// renormalizing.
double finalize_rows(AttentionField& a, bool clamp_nonnegative, bool renormalize);

struct StepMetrics {
  std::size_t step = 0;
  double smoothness = 0.0;
  double consistency = 0.0;
  double range = 0.0;  // NaN when some row is not a nonnegative distribution
  double row_sum_drift = 0.0;
  double max_entry = 0.0;
  double pre_norm_mass = 0.0;
};

struct Trajectory {
  std::vector<AttentionField> snapshots;
  std::vector<StepMetrics> step_metrics;

  const AttentionField& final_field() const { return snapshots.back(); }
};

struct EvolveOptions {
  /// When false only the initial and final snapshots are retained.
  bool keep_snapshots = true;
  bool record_metrics = true;
  double range_mass = 0.9;
};

/// Apply the configured step kernel cfg.n_steps times.
///
/// Errors from a step are rethrown with the failing step index in the
/// message; NaN/Inf or max |entry| > kDivergenceMagnitude after a step raises
/// DivergenceError naming that step.
Trajectory evolve(const AttentionField& a0, const PdeConfig& cfg, const EvolveOptions& opts = {});

/// Throws DivergenceError naming `step` if m holds NaN/Inf or an entry with
/// magnitude above kDivergenceMagnitude.
void check_divergence(const Matrix& m, std::size_t step);

/// Final field only, no metrics or snapshots.
AttentionField evolve_final(const AttentionField& a0, const PdeConfig& cfg);

/// Length-scaled defaults: alpha = 0.1 (512/T)^2, dt = min(1, 512/T), dt
/// clamped into the CFL region; beta and c from the reference settings.
PdeConfig suggest_params(std::size_t seq_len, PdeKind kind);

/// CSV: step,S,C,R,row_sum_drift,max_entry
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
/// CSV: step,a_0_0,a_0_1,... with the row-major snapshot, one line per snapshot.
void write_snapshots_csv(std::ostream& out, const Trajectory& traj);

/// Shortest round-trip decimal representation used by every CSV writer.
std::string format_double(double v);

}  // namespace pdeattn
