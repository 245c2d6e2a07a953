// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "pdeattn/grid.hpp"
#include "pdeattn/metrics.hpp"
#include "pdeattn/pde.hpp"
#include "test_util.hpp"

using namespace pdeattn;
using namespace pdeattn::testing;

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr auto kPeriodic = BoundaryCondition::periodic;
constexpr auto kZeroFlux = BoundaryCondition::zero_flux;

AttentionField row_field(std::vector<double> row, BoundaryCondition bc = kPeriodic) {
  return {Matrix::row_vector(row), bc, false};
}

void expect_row(const AttentionField& f, const std::vector<double>& want, double tol) {
  ASSERT_EQ(f.cols(), want.size());
  for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(f.values(0, j), want[j], tol) << j;
}

// Straight stencil application, written independently of the library.
std::vector<double> stencil_step(const std::vector<double>& a, double alpha, double beta,
                                 double dt) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double l = a[(j + n - 1) % n], r = a[(j + 1) % n];
    out[j] = a[j] + dt * (alpha * (l - 2 * a[j] + r) - beta * (a[j] - l));
  }
  return out;
}

double wave_energy(const WaveState& s, double c) {
  double e = 0.0;
  for (double v : s.v.flat()) e += v * v;
  for (std::size_t i = 0; i < s.a.rows(); ++i) {
    const auto g = grid::gradient_1d(s.a.values.row(i), s.a.bc, grid::GradientScheme::upwind);
    for (double v : g) e += c * c * v * v;
  }
  return e;
}

PdeConfig diffusion_cfg(double alpha, double dt, std::size_t steps) {
  PdeConfig cfg;
  cfg.kind = PdeKind::diffusion;
  cfg.alpha = alpha;
  cfg.dt = dt;
  cfg.n_steps = steps;
  return cfg;
}

}  // namespace

TEST(Cfl, ReferenceValues) {
  EXPECT_DOUBLE_EQ(cfl_max_step(PdeKind::diffusion, 0.10, 0.0), 5.0);
  EXPECT_NEAR(cfl_max_step(PdeKind::wave, 0.0, 0.15), 6.6667, 1e-4);
  EXPECT_DOUBLE_EQ(cfl_max_step(PdeKind::diffusion, 0.5, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(cfl_max_step(PdeKind::reaction_diffusion, 0.25, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(cfl_max_step(PdeKind::diffusion, 0.25, 0.0, AxisMode::full_2d), 1.0);
}

TEST(Cfl, NonPositiveCoefficientIsConfigError) {
  EXPECT_THROW(cfl_max_step(PdeKind::diffusion, 0.0, 1.0), InvalidConfig);
  EXPECT_THROW(cfl_max_step(PdeKind::advection_diffusion, -0.1, 1.0), InvalidConfig);
  EXPECT_THROW(cfl_max_step(PdeKind::wave, 1.0, 0.0), InvalidConfig);
}

TEST(DiffusionStep, OneHotRow) {
  const auto out = diffusion_step(row_field({1, 0, 0, 0}), 0.1, 1.0);
  expect_row(out, {0.8, 0.1, 0.0, 0.1}, 1e-15);
}

TEST(DiffusionStep, SecondApplicationMatchesStencilOracle) {
  const auto once = diffusion_step(row_field({1, 0, 0, 0}), 0.1, 1.0);
  const auto twice = diffusion_step(once, 0.1, 1.0);
  const auto oracle = stencil_step(stencil_step({1, 0, 0, 0}, 0.1, 0, 1), 0.1, 0, 1);
  expect_row(twice, oracle, 1e-15);
  expect_row(twice, {0.66, 0.16, 0.02, 0.16}, 1e-15);
}

TEST(DiffusionStep, UniformRowsAreFixed) {
  Matrix m(3, 6, 0.25);
  for (auto bc : {kPeriodic, kZeroFlux}) {
    const auto out = diffusion_step({m, bc, false}, 0.37, 1.2);
    EXPECT_EQ(out.values, m);
  }
}

TEST(DiffusionStep, GuardRejectsCflViolationNamingDtMax) {
  try {
    diffusion_step(row_field({1, 0, 0, 0}), 0.1, 5.5);
    FAIL() << "expected StabilityError";
  } catch (const StabilityError& e) {
    EXPECT_DOUBLE_EQ(e.dt_max(), 5.0);
    EXPECT_NE(std::string(e.what()).find("dt_max=5"), std::string::npos);
  }
  StepOptions off;
  off.stability_guard = false;
  EXPECT_NO_THROW(diffusion_step(row_field({1, 0, 0, 0}), 0.1, 5.5, off));
}

TEST(DiffusionStep, EqualsLaplacianUpdate) {
  Rng rng(201);
  const AttentionField f{random_simplex_rows(rng, 9, 9), kZeroFlux, false};
  const auto out = diffusion_step(f, 0.2, 1.5);
  Matrix want = f.values;
  axpy(1.5 * 0.2, grid::laplacian_apply(f, AxisMode::per_row_1d), want);
  EXPECT_EQ(out.values, want);
}

TEST(WaveStep, UniformAtRestIsStationary) {
  const auto s = WaveState::at_rest({Matrix(4, 4, 0.25), kPeriodic, false});
  const auto next = wave_step(s, 0.15, 1.0);
  EXPECT_EQ(next.a.values, s.a.values);
  EXPECT_EQ(max_abs(next.v), 0.0);
}

TEST(WaveStep, VelocityFirstThenField) {
  const auto next = wave_step(WaveState::at_rest(row_field({1, 0, 0, 0})), 0.15, 1.0);
  const std::vector<double> v{-0.045, 0.0225, 0.0, 0.0225};
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(next.v(0, j), v[j], 1e-15);
  expect_row(next.a, {0.955, 0.0225, 0.0, 0.0225}, 1e-15);
}

TEST(WaveStep, EnergyStaysWithinTenPercent) {
  // Smooth initial field: energy is carried by low modes (omega dt << 0.2).
  const double c = 0.15;
  const double dt = 0.1 * cfl_max_step(PdeKind::wave, 0.0, c);
  Rng rng(202);
  const std::size_t n = 32;
  Matrix init(4, n);
  for (std::size_t i = 0; i < 4; ++i) {
    const double phase = random_real(rng, 0.0, 6.28), amp = random_real(rng, 0.1, 0.5);
    for (std::size_t j = 0; j < n; ++j)
      init(i, j) = 1.0 / n + amp / n * std::cos(2.0 * std::numbers::pi * j / n + phase);
  }
  auto s = WaveState::at_rest({init, kPeriodic, false});
  s = wave_step(s, c, dt);
  const double e1 = wave_energy(s, c);
  for (int step = 2; step <= 100; ++step) {
    s = wave_step(s, c, dt);
    EXPECT_LE(std::abs(wave_energy(s, c) - e1), 0.1 * e1) << "step " << step;
  }
}

TEST(WaveStep, StaggeredEnergyIsConservedAndNaiveEnergyBounded) {
  // |V^{n+1}|^2 - c^2 <A^{n+1}, L A^n> is exactly invariant for the
  // velocity-first update; the naive energy only oscillates around it.
  const double c = 0.15;
  const double dt = 0.1 * cfl_max_step(PdeKind::wave, 0.0, c);
  Rng rng(208);
  for (const Matrix& init : {Matrix::row_vector(std::vector<double>{1, 0, 0, 0, 0, 0, 0, 0}),
                             random_simplex_rows(rng, 4, 16)}) {
    auto s = WaveState::at_rest({init, kPeriodic, false});
    auto staggered = [&](const WaveState& prev, const WaveState& next) {
      return dot(next.v, next.v) - c * c * dot(next.a.values, grid::laplacian_apply(prev.a, AxisMode::per_row_1d));
    };
    auto next = wave_step(s, c, dt);
    const double h0 = staggered(s, next);
    const double e1 = wave_energy(next, c);
    for (int step = 2; step <= 500; ++step) {
      s = next;
      next = wave_step(s, c, dt);
      EXPECT_NEAR(staggered(s, next), h0, 1e-12 * std::abs(h0));
      EXPECT_LE(std::abs(wave_energy(next, c) - e1), 0.25 * e1);
    }
  }
}

TEST(WaveStep, GuardRejectsCflViolation) {
  EXPECT_THROW(wave_step(WaveState::at_rest(row_field({1, 0, 0, 0})), 0.5, 2.5), StabilityError);
}

TEST(ReactionDiffusionStep, LogisticFixedPoints) {
  for (double value : {0.0, 1.0}) {
    const auto out = reaction_diffusion_step({Matrix(3, 5, value), kPeriodic, false}, 0.0, 0.7, 1.0);
    for (double v : out.values.flat()) EXPECT_EQ(v, value);
  }
}

TEST(ReactionDiffusionStep, UniformHalfGrowsLogistically) {
  const auto out = reaction_diffusion_step({Matrix(2, 6, 0.5), kPeriodic, false}, 0.1, 0.02, 1.0);
  for (double v : out.values.flat()) EXPECT_NEAR(v, 0.505, 1e-15);
}

TEST(ReactionDiffusionStep, RenormalizedUniformStaysUniform) {
  StepOptions opts;
  opts.renormalize_rows = true;
  double mass = 0.0;
  const auto out =
      reaction_diffusion_step({Matrix(2, 6, 0.5), kPeriodic, false}, 0.1, 0.02, 1.0, opts, &mass);
  for (double v : out.values.flat()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(mass, 6 * 0.505, 1e-14);
}

TEST(ReactionDiffusionStep, DegenerateRowOnRenormalization) {
  StepOptions opts;
  opts.renormalize_rows = true;
  EXPECT_THROW(reaction_diffusion_step({Matrix(2, 4, 0.0), kPeriodic, false}, 0.1, 0.02, 1.0, opts),
               DegenerateField);
}

TEST(ReactionDiffusionStep, BetaBoundChecked) {
  EXPECT_THROW(reaction_diffusion_step(row_field({1, 0, 0, 0}), 0.1, 2.0, 1.0), StabilityError);
}

TEST(AdvectionDiffusionStep, UniformRowsUnchanged) {
  const Matrix m(3, 5, 0.2);
  EXPECT_EQ(advection_diffusion_step({m, kPeriodic, false}, 0.1, 0.03, 1.0).values, m);
}

TEST(AdvectionDiffusionStep, PureUpwindShiftsMassForward) {
  const auto out = advection_diffusion_step(row_field({1, 0, 0, 0}), 0.0, 0.1, 1.0);
  expect_row(out, {0.9, 0.1, 0.0, 0.0}, 1e-15);
}

TEST(AdvectionDiffusionStep, SuperposesDiffusionAndAdvection) {
  const auto out = advection_diffusion_step(row_field({1, 0, 0, 0}), 0.1, 0.03, 1.0);
  expect_row(out, stencil_step({1, 0, 0, 0}, 0.1, 0.03, 1.0), 1e-15);
  expect_row(out, {0.77, 0.13, 0.0, 0.1}, 1e-15);
  double s = 0.0;
  for (double v : out.values.flat()) s += v;
  EXPECT_NEAR(s, 1.0, 4 * kEps);
}

TEST(Evolve, ZeroStepsIsIdentity) {
  const auto a0 = row_field({0.1, 0.2, 0.3, 0.4});
  const auto traj = evolve(a0, diffusion_cfg(0.1, 1.0, 0));
  ASSERT_EQ(traj.snapshots.size(), 1u);
  EXPECT_EQ(traj.snapshots[0].values, a0.values);
  ASSERT_EQ(traj.step_metrics.size(), 1u);
}

TEST(Evolve, TwoDiffusionSteps) {
  const auto traj = evolve(row_field({1, 0, 0, 0}), diffusion_cfg(0.1, 1.0, 2));
  ASSERT_EQ(traj.snapshots.size(), 3u);
  expect_row(traj.snapshots[1], {0.8, 0.1, 0.0, 0.1}, 1e-15);
  expect_row(traj.final_field(), {0.66, 0.16, 0.02, 0.16}, 1e-15);
  EXPECT_NEAR(traj.step_metrics[0].smoothness, 6.0, 1e-15);
}

TEST(Evolve, SlightCflViolationDivergesAndNamesStep) {
  const double alpha = 0.1;
  auto cfg = diffusion_cfg(alpha, 1.01 * cfl_max_step(PdeKind::diffusion, alpha, 0.0), 1000);
  cfg.stability_guard = false;
  const auto a0 = one_hot_field(16, kPeriodic);
  try {
    evolve(a0, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.step(), 200u);
    EXPECT_LT(e.step(), 1000u);
    EXPECT_NE(std::string(e.what()).find(std::to_string(e.step())), std::string::npos);
  }
  // Within 200 steps the oscillating mode has grown, not decayed.
  cfg.n_steps = 200;
  const auto traj = evolve(a0, cfg);
  EXPECT_GT(traj.step_metrics.back().max_entry, traj.step_metrics[50].max_entry);
}

TEST(Evolve, GuardRejectsInvalidConfig) {
  EXPECT_THROW(evolve(row_field({1, 0, 0, 0}), diffusion_cfg(0.1, 6.0, 3)), StabilityError);
  auto bad = diffusion_cfg(-0.1, 1.0, 1);
  EXPECT_THROW(evolve(row_field({1, 0, 0, 0}), bad), InvalidConfig);
}

TEST(Evolve, SparseSnapshotsKeepEndpoints) {
  const auto traj = evolve(row_field({1, 0, 0, 0}), diffusion_cfg(0.1, 1.0, 5),
                           {.keep_snapshots = false, .record_metrics = true});
  ASSERT_EQ(traj.snapshots.size(), 2u);
  EXPECT_EQ(traj.step_metrics.size(), 6u);
  EXPECT_EQ(evolve_final(row_field({1, 0, 0, 0}), diffusion_cfg(0.1, 1.0, 5)).values,
            traj.final_field().values);
}

TEST(Evolve, AllKindsRunAndReportMetrics) {
  Rng rng(203);
  const AttentionField a0{random_simplex_rows(rng, 8, 8), kPeriodic, false};
  for (auto kind : {PdeKind::diffusion, PdeKind::wave, PdeKind::reaction_diffusion,
                    PdeKind::advection_diffusion}) {
    auto cfg = suggest_params(8, kind);
    cfg.n_steps = 4;
    cfg.renormalize_rows = true;
    const auto traj = evolve(a0, cfg);
    EXPECT_EQ(traj.snapshots.size(), 5u) << to_string(kind);
    EXPECT_EQ(traj.step_metrics.back().step, 4u);
  }
}

TEST(SuggestParams, ScalesAlphaWithInverseSquareLength) {
  EXPECT_DOUBLE_EQ(suggest_params(512, PdeKind::diffusion).alpha, 0.10);
  EXPECT_DOUBLE_EQ(suggest_params(1024, PdeKind::diffusion).alpha, 0.025);
  EXPECT_DOUBLE_EQ(suggest_params(1024, PdeKind::diffusion).dt, 0.5);
  EXPECT_DOUBLE_EQ(suggest_params(512, PdeKind::reaction_diffusion).beta, 0.02);
  EXPECT_DOUBLE_EQ(suggest_params(512, PdeKind::advection_diffusion).beta, 0.03);
  EXPECT_DOUBLE_EQ(suggest_params(512, PdeKind::wave).c, 0.15);
  for (std::size_t t = 2; t <= 8192; t = t * 3 / 2 + 1) {
    for (auto kind : {PdeKind::diffusion, PdeKind::reaction_diffusion,
                      PdeKind::advection_diffusion, PdeKind::wave}) {
      const auto cfg = suggest_params(t, kind);
      EXPECT_LE(cfg.alpha * cfg.dt, 0.5 + 1e-15) << t;
      EXPECT_NO_THROW(cfg.validate());
    }
  }
}

TEST(PdeProperties, ModeDecayIsExactDiscreteAnalog) {
  Rng rng(204);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = random_size(rng, 4, 64);
    const double alpha = 0.1, dt = random_real(rng, 0.05, 5.0);
    const std::size_t steps = random_size(rng, 1, 30);
    const auto a0 = random_simplex_rows(rng, 2, n);
    const auto fin = evolve_final({a0, kPeriodic, false}, diffusion_cfg(alpha, dt, steps));
    for (std::size_t i = 0; i < 2; ++i) {
      const auto s0 = grid::dft_row(a0.row(i));
      const auto sn = grid::dft_row(fin.values.row(i));
      for (std::size_t k = 0; k < n; ++k) {
        const auto want = std::pow(1.0 - alpha * dt * s0.mode_eigenvalues[k],
                                   static_cast<double>(steps)) * s0.coefficients[k];
        const double denom = std::max(std::abs(want), std::abs(s0.coefficients[k]));
        EXPECT_LE(std::abs(sn.coefficients[k] - want) / denom, 1e-8);
      }
    }
  }
}

TEST(PdeProperties, ConservationOfRowSums) {
  Rng rng(205);
  for (auto bc : {kPeriodic, kZeroFlux}) {
    for (auto kind : {PdeKind::diffusion, PdeKind::wave}) {
      const std::size_t n = 32, steps = 300;
      PdeConfig cfg = diffusion_cfg(0.2, 1.0, steps);
      cfg.kind = kind;
      cfg.c = 0.5;
      cfg.bc = bc;
      const auto traj = evolve({random_simplex_rows(rng, n, n), bc, false}, cfg,
                               {.keep_snapshots = false});
      for (const auto& m : traj.step_metrics)
        EXPECT_LE(m.row_sum_drift, static_cast<double>(m.step) * 8.0 * n * kEps + 0.0);
    }
  }
}

TEST(PdeProperties, PositivityUnderCfl) {
  Rng rng(206);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = random_size(rng, 2, 40);
    const double alpha = random_real(rng, 0.01, 1.0);
    const double dt = random_real(rng, 0.0, 0.5) / alpha;
    const AttentionField f{random_simplex_rows(rng, 3, n), trial % 2 ? kPeriodic : kZeroFlux, false};
    const auto out = evolve_final(f, diffusion_cfg(alpha, dt, 10));
    for (double v : out.values.flat()) EXPECT_GE(v, 0.0);
  }
}

TEST(PdeProperties, MonotoneSmoothingWithSpectralEnvelope) {
  Rng rng(207);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = random_size(rng, 4, 40);
    const double coeff = random_real(rng, 0.01, 0.5);
    const auto traj = evolve({random_simplex_rows(rng, n, n), kPeriodic, false},
                             diffusion_cfg(coeff, 1.0, 25));
    const double rho = grid::diffusion_contraction(n, kPeriodic, coeff);
    const double s0 = traj.step_metrics[0].smoothness;
    for (std::size_t k = 1; k < traj.step_metrics.size(); ++k) {
      EXPECT_LE(traj.step_metrics[k].smoothness, traj.step_metrics[k - 1].smoothness * (1 + 1e-12));
      EXPECT_LE(traj.step_metrics[k].smoothness,
                s0 * std::pow(rho, 2.0 * static_cast<double>(k)) * (1 + 1e-9) + 1e-300);
    }
  }
}

TEST(PdeProperties, StackedStepsConvergeFirstOrderToHeatKernel) {
  // L steps of size dt against the exact semi-discrete flow at time L dt.
  const std::size_t n = 32;
  const double alpha = 0.1, total = 4.0;
  std::vector<double> row(n, 0.0);
  row[0] = 1.0;
  const auto s0 = grid::dft_row(row);
  std::vector<std::complex<double>> exact(n);
  for (std::size_t k = 0; k < n; ++k)
    exact[k] = s0.coefficients[k] * std::exp(-alpha * s0.mode_eigenvalues[k] * total);
  const auto exact_row = grid::inverse_dft(exact);

  std::vector<double> errors;
  for (double dt : {0.5, 0.25, 0.125, 0.0625}) {
    const auto steps = static_cast<std::size_t>(std::lround(total / dt));
    const auto fin = evolve_final(row_field(row), diffusion_cfg(alpha, dt, steps));
    double err = 0.0;
    for (std::size_t j = 0; j < n; ++j) err = std::max(err, std::abs(fin.values(0, j) - exact_row[j]));
    errors.push_back(err);
  }
  for (std::size_t i = 1; i < errors.size(); ++i)
    EXPECT_NEAR(errors[i - 1] / errors[i], 2.0, 0.3);
  const double c_fit = errors[0] / (0.5 * (1 + total));
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double dt = 0.5 / std::pow(2.0, static_cast<double>(i));
    EXPECT_LE(errors[i], 1.2 * c_fit * dt * (1 + total));
  }
}

TEST(TrajectoryCsv, HeaderAndRows) {
  const auto traj = evolve(row_field({1, 0, 0, 0}), diffusion_cfg(0.1, 1.0, 2));
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "step,S,C,R,row_sum_drift,max_entry");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
  EXPECT_NE(s.find("\n0,6,"), std::string::npos);
  std::ostringstream snaps;
  write_snapshots_csv(snaps, traj);
  EXPECT_EQ(snaps.str().substr(0, snaps.str().find('\n')), "step,a_0_0,a_0_1,a_0_2,a_0_3");
  EXPECT_NE(snaps.str().find("\n2,0.66,0.16"), std::string::npos);
}
