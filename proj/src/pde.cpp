// SPDX-License-Identifier: Apache-2.0
#include "pdeattn/pde.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "pdeattn/kernels.hpp"
#include "pdeattn/metrics.hpp"

namespace pdeattn {

const char* to_string(PdeKind kind) {
  switch (kind) {
    case PdeKind::diffusion: return "diffusion";
    case PdeKind::wave: return "wave";
    case PdeKind::reaction_diffusion: return "reaction_diffusion";
    case PdeKind::advection_diffusion: return "advection_diffusion";
  }
  return "?";
}

PdeKind parse_pde_kind(const std::string& name) {
  if (name == "diffusion") return PdeKind::diffusion;
  if (name == "wave") return PdeKind::wave;
  if (name == "reaction_diffusion") return PdeKind::reaction_diffusion;
  if (name == "advection_diffusion") return PdeKind::advection_diffusion;
  throw InvalidConfig("unknown PDE kind '" + name + "'");
}

double cfl_max_step(PdeKind kind, double alpha, double c, AxisMode axis) {
  if (kind == PdeKind::wave) {
    if (!(c > 0.0)) throw InvalidConfig("cfl_max_step: wave speed c must be > 0");
    return 1.0 / c;
  }
  if (!(alpha > 0.0)) throw InvalidConfig("cfl_max_step: alpha must be > 0");
  const double stencil_extent = axis == AxisMode::full_2d ? 4.0 : 2.0;
  return 1.0 / (stencil_extent * alpha);
}

namespace {

std::string describe_dt(double dt, double dt_max) {
  std::ostringstream os;
  os << "dt=" << dt << " exceeds the stable step dt_max=" << dt_max;
  return os.str();
}

}  // namespace

void check_stability(PdeKind kind, const PdeCoefficients& k, double dt, AxisMode axis) {
  if (kind == PdeKind::wave) {
    if (k.c > 0.0) {
      const double dt_max = cfl_max_step(kind, k.alpha, k.c, axis);
      if (dt > dt_max) throw StabilityError("wave: " + describe_dt(dt, dt_max), dt_max);
    }
    return;
  }
  if (k.alpha > 0.0) {
    const double dt_max = cfl_max_step(kind, k.alpha, k.c, axis);
    if (dt > dt_max) throw StabilityError(std::string(to_string(kind)) + ": " +
                                              describe_dt(dt, dt_max), dt_max);
  }
  if (kind != PdeKind::diffusion && k.beta != 0.0) {
    const double dt_max = 1.0 / std::abs(k.beta);
    if (dt > dt_max)
      throw StabilityError(std::string(to_string(kind)) + " (beta term): " +
                               describe_dt(dt, dt_max), dt_max);
  }
}

void PdeConfig::validate() const {
  if (!(alpha >= 0.0)) throw InvalidConfig("alpha must be >= 0");
  if (!(c >= 0.0)) throw InvalidConfig("c must be >= 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidConfig("dt must be > 0");
  if (!std::isfinite(beta)) throw InvalidConfig("beta must be finite");
  if (stability_guard) check_stability(kind, coefficients(), dt, axis);
}

namespace {

void require_valid(const AttentionField& a) {
  if (a.cols() < 2) throw InvalidInput("attention field needs T >= 2");
}

// out = a + coeff * L(a), using the fused kernel on the common per-row path.
void diffusion_update(const AttentionField& a, double coeff, AxisMode axis, Matrix& out) {
  if (axis == AxisMode::per_row_1d) {
    if (a.causal && a.rows() != a.cols()) throw InvalidInput("causal field must be square");
    if (!out.same_shape(a.values)) out = Matrix(a.rows(), a.cols());
    const auto& k = kernels::active();
    const bool periodic = a.row_bc() == BoundaryCondition::periodic;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const std::size_t n = a.support(i);
      const double* in = a.values.row(i).data();
      double* o = out.row(i).data();
      if (n >= 2)
        k.diffusion_row(in, o, n, periodic, coeff);
      else if (n == 1)
        o[0] = in[0];
      std::fill(o + n, o + a.cols(), 0.0);
    }
    return;
  }
  out = a.values;
  axpy(coeff, grid::laplacian_apply(a, axis), out);
}

}  // namespace

double finalize_rows(AttentionField& a, bool clamp_nonnegative, bool renormalize) {
  if (clamp_nonnegative)
    for (double& v : a.values.flat()) v = std::max(v, 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = a.values.row(i);
    double s = 0.0;
    for (double v : row) s += v;
    mass += s;
    if (renormalize) {
      if (!(s > 0.0))
        throw DegenerateField("row " + std::to_string(i) + " has non-positive mass " +
                              std::to_string(s) + " before renormalization");
      for (double& v : row) v /= s;
    }
  }
  return a.rows() ? mass / static_cast<double>(a.rows()) : 0.0;
}

AttentionField diffusion_step(const AttentionField& a, double alpha, double dt,
                              const StepOptions& opts) {
  require_valid(a);
  if (opts.stability_guard)
    check_stability(PdeKind::diffusion, {alpha, 0.0, 0.0}, dt, opts.axis);
  AttentionField out{Matrix(), a.bc, a.causal};
  diffusion_step_into(a, alpha, dt, opts, out);
  return out;
}

void diffusion_step_into(const AttentionField& a, double alpha, double dt, const StepOptions& opts,
                         AttentionField& out) {
  require_valid(a);
  if (&out == &a) throw InvalidInput("diffusion_step_into: output must not alias the input");
  if (opts.stability_guard)
    check_stability(PdeKind::diffusion, {alpha, 0.0, 0.0}, dt, opts.axis);
  diffusion_update(a, dt * alpha, opts.axis, out.values);
  out.bc = a.bc;
  out.causal = a.causal;
  if (opts.clamp_nonnegative || opts.renormalize_rows)
    finalize_rows(out, opts.clamp_nonnegative, opts.renormalize_rows);
}

WaveState wave_step(const WaveState& s, double c, double dt, const StepOptions& opts) {
  require_valid(s.a);
  if (!s.v.same_shape(s.a.values)) throw InvalidInput("wave_step: velocity shape mismatch");
  if (opts.stability_guard) check_stability(PdeKind::wave, {0.0, 0.0, c}, dt, opts.axis);
  WaveState next{s.a, s.v};
  axpy(dt * c * c, grid::laplacian_apply(s.a, opts.axis), next.v);
  axpy(dt, next.v, next.a.values);
  finalize_rows(next.a, opts.clamp_nonnegative, opts.renormalize_rows);
  return next;
}

AttentionField reaction_diffusion_step(const AttentionField& a, double alpha, double beta,
                                       double dt, const StepOptions& opts,
                                       double* pre_norm_mass) {
  require_valid(a);
  if (opts.stability_guard)
    check_stability(PdeKind::reaction_diffusion, {alpha, beta, 0.0}, dt, opts.axis);
  const Matrix lap = grid::laplacian_apply(a, opts.axis);
  AttentionField out{a.values, a.bc, a.causal};
  const double* av = a.values.data();
  const double* lv = lap.data();
  double* o = out.values.data();
  for (std::size_t idx = 0; idx < out.values.size(); ++idx)
    o[idx] = av[idx] + dt * (alpha * lv[idx] + beta * av[idx] * (1.0 - av[idx]));
  const double mass = finalize_rows(out, opts.clamp_nonnegative, opts.renormalize_rows);
  if (pre_norm_mass) *pre_norm_mass = mass;
  return out;
}

AttentionField advection_diffusion_step(const AttentionField& a, double alpha, double beta,
                                        double dt, const StepOptions& opts,
                                        double* pre_norm_mass) {
  require_valid(a);
  if (opts.axis == AxisMode::full_2d && a.causal)
    throw InvalidInput("full_2d is undefined on a causal field");
  if (opts.stability_guard)
    check_stability(PdeKind::advection_diffusion, {alpha, beta, 0.0}, dt, opts.axis);
  const Matrix lap = grid::laplacian_apply(a, opts.axis);
  const Matrix grad = grid::gradient_apply(a, opts.advection_scheme);
  AttentionField out{a.values, a.bc, a.causal};
  const double* lv = lap.data();
  const double* gv = grad.data();
  double* o = out.values.data();
  for (std::size_t idx = 0; idx < out.values.size(); ++idx)
    o[idx] += dt * (alpha * lv[idx] - beta * gv[idx]);
  const double mass = finalize_rows(out, opts.clamp_nonnegative, opts.renormalize_rows);
  if (pre_norm_mass) *pre_norm_mass = mass;
  return out;
}

namespace {

std::vector<double> row_sums(const Matrix& m) {
  std::vector<double> s(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (double v : m.row(i)) s[i] += v;
  return s;
}

bool rows_are_distributions(const AttentionField& a) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.values.row(i)) {
      if (v < 0.0) return false;
      s += v;
    }
    if (!(s > 0.0)) return false;
  }
  return true;
}

StepMetrics measure(const AttentionField& a, std::size_t step, const std::vector<double>& sums0,
                    AxisMode axis, double range_mass, double pre_mass) {
  StepMetrics m;
  m.step = step;
  m.smoothness = metrics::smoothness(a, axis);
  m.consistency = metrics::consistency(a);
  m.range = rows_are_distributions(a) ? metrics::effective_range(a, range_mass)
                                      : std::numeric_limits<double>::quiet_NaN();
  const auto sums = row_sums(a.values);
  for (std::size_t i = 0; i < sums.size(); ++i)
    m.row_sum_drift = std::max(m.row_sum_drift, std::abs(sums[i] - sums0[i]));
  m.max_entry = max_abs(a.values);
  m.pre_norm_mass = pre_mass;
  return m;
}

// Advance one step; returns the pre-normalization mean row mass.
double advance(AttentionField& a, Matrix& velocity, const PdeConfig& cfg,
               const StepOptions& opts) {
  double mass = 0.0;
  switch (cfg.kind) {
    case PdeKind::diffusion:
      a = diffusion_step(a, cfg.alpha, cfg.dt, opts);
      break;
    case PdeKind::wave: {
      WaveState s{std::move(a), std::move(velocity)};
      s = wave_step(s, cfg.c, cfg.dt, opts);
      a = std::move(s.a);
      velocity = std::move(s.v);
      break;
    }
    case PdeKind::reaction_diffusion:
      a = reaction_diffusion_step(a, cfg.alpha, cfg.beta, cfg.dt, opts, &mass);
      return mass;
    case PdeKind::advection_diffusion:
      a = advection_diffusion_step(a, cfg.alpha, cfg.beta, cfg.dt, opts, &mass);
      return mass;
  }
  for (double v : a.values.flat()) mass += v;
  return a.rows() ? mass / static_cast<double>(a.rows()) : 0.0;
}

}  // namespace

Trajectory evolve(const AttentionField& a0, const PdeConfig& cfg, const EvolveOptions& opts) {
  require_valid(a0);
  cfg.validate();
  const StepOptions step_opts = StepOptions::from(cfg);
  const auto sums0 = row_sums(a0.values);

  Trajectory traj;
  traj.snapshots.push_back(a0);
  if (opts.record_metrics) {
    double mass0 = 0.0;
    for (double s : sums0) mass0 += s;
    traj.step_metrics.push_back(
        measure(a0, 0, sums0, cfg.axis, opts.range_mass, mass0 / static_cast<double>(a0.rows())));
  }

  AttentionField a = a0;
  Matrix velocity(a0.rows(), a0.cols());
  for (std::size_t n = 1; n <= cfg.n_steps; ++n) {
    double mass = 0.0;
    try {
      mass = advance(a, velocity, cfg, step_opts);
    } catch (const DegenerateField& e) {
      throw DegenerateField("step " + std::to_string(n) + ": " + e.what());
    } catch (const InvalidInput& e) {
      throw InvalidInput("step " + std::to_string(n) + ": " + e.what());
    }
    check_divergence(a.values, n);
    if (cfg.kind == PdeKind::wave) check_divergence(velocity, n);
    if (opts.record_metrics)
      traj.step_metrics.push_back(measure(a, n, sums0, cfg.axis, opts.range_mass, mass));
    if (opts.keep_snapshots || n == cfg.n_steps) traj.snapshots.push_back(a);
  }
  return traj;
}

void check_divergence(const Matrix& m, std::size_t step) {
  for (double v : m.flat()) {
    if (!std::isfinite(v))
      throw DivergenceError("evolution diverged (non-finite entry) at step " +
                                std::to_string(step), step);
    if (std::abs(v) > kDivergenceMagnitude)
      throw DivergenceError("evolution diverged (|entry| > 1e6) at step " +
                                std::to_string(step), step);
  }
}

AttentionField evolve_final(const AttentionField& a0, const PdeConfig& cfg) {
  return evolve(a0, cfg, {.keep_snapshots = false, .record_metrics = false}).final_field();
}

PdeConfig suggest_params(std::size_t seq_len, PdeKind kind) {
  if (seq_len < 2) throw InvalidInput("suggest_params: T must be >= 2");
  constexpr double kAlphaRef = 0.10;
  constexpr double kSeqRef = 512.0;
  const double ratio = kSeqRef / static_cast<double>(seq_len);
  PdeConfig cfg;
  cfg.kind = kind;
  cfg.alpha = kAlphaRef * ratio * ratio;
  cfg.dt = std::min(1.0, ratio);
  cfg.c = 0.15;
  switch (kind) {
    case PdeKind::reaction_diffusion: cfg.beta = 0.02; break;
    case PdeKind::advection_diffusion: cfg.beta = 0.03; break;
    default: cfg.beta = 0.0; break;
  }
  // Clamp against every bound so the defaults stay valid if the kind changes.
  cfg.dt = std::min({cfg.dt, cfl_max_step(PdeKind::diffusion, cfg.alpha, cfg.c),
                     cfl_max_step(PdeKind::wave, cfg.alpha, cfg.c)});
  if (cfg.beta > 0.0) cfg.dt = std::min(cfg.dt, 1.0 / cfg.beta);
  return cfg;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "step,S,C,R,row_sum_drift,max_entry\n";
  for (const auto& m : traj.step_metrics) {
    out << m.step << ',' << format_double(m.smoothness) << ',' << format_double(m.consistency)
        << ',' << format_double(m.range) << ',' << format_double(m.row_sum_drift) << ','
        << format_double(m.max_entry) << '\n';
  }
}

void write_snapshots_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t n = traj.snapshots.size();
  const std::size_t last_step = traj.step_metrics.empty() ? n - 1 : traj.step_metrics.back().step;
  out << "step";
  if (n) {
    const Matrix& m = traj.snapshots.front().values;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) out << ",a_" << i << '_' << j;
  }
  out << '\n';
  for (std::size_t s = 0; s < n; ++s) {
    // With sparse snapshots only the first and last are kept.
    const std::size_t step = (s + 1 == n) ? last_step : s;
    out << step;
    for (double v : traj.snapshots[s].values.flat()) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace pdeattn
