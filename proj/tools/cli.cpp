// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "pdeattn/attention.hpp"
#include "pdeattn/dataset.hpp"
#include "pdeattn/errors.hpp"
#include "pdeattn/experiment.hpp"
#include "pdeattn/hybrid.hpp"
#include "pdeattn/kernels.hpp"
#include "pdeattn/model.hpp"
#include "pdeattn/pde.hpp"
#include "pdeattn/train.hpp"
#include "pdeattn/verify.hpp"

namespace pdeattn::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSuites{"mode_decay", "propagation", "smoothness", "multilayer", "hybrid", "pl"};
// Runs only when named: evolves past the stable step with the guard off and
// is expected to fail.
const std::string kNegativeControl = "negative_control";

struct Run {
  const Settings& s;
  std::string sub;
  fs::path dir;
  std::ostream& out;
  std::ostream& err;
};

std::ofstream open_output(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InvalidConfig("cannot write '" + p.string() + "'");
  return f;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_dir(const Settings& s, const std::string& sub) {
  if (!s.str("global", "out").empty()) return s.str("global", "out");
  const char* env = std::getenv(kOutDirEnv);
  return fs::path(env && *env ? env : "pdeattn-out") / sub;
}

void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw InvalidConfig("output path '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw InvalidConfig("output directory '" + dir.string() + "' is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

std::vector<PdeKind> kinds_from(const Settings& s, const std::string& section, const std::string& key) {
  const auto names = s.list(section, key);
  if (names.size() == 1 && names[0] == "all")
    return {PdeKind::diffusion, PdeKind::wave, PdeKind::reaction_diffusion, PdeKind::advection_diffusion};
  std::vector<PdeKind> kinds;
  for (const auto& n : names) kinds.push_back(parse_pde_kind(n));
  if (kinds.empty()) throw InvalidConfig(section + "." + key + ": empty list");
  return kinds;
}

PdeConfig pde_from(const Settings& s, const std::string& section) {
  PdeConfig c;
  c.kind = parse_pde_kind(s.str(section, "kind"));
  c.alpha = s.real(section, "alpha");
  c.beta = s.real(section, "beta");
  c.c = s.real(section, "c");
  c.dt = s.real(section, "dt");
  c.n_steps = s.size(section, "steps");
  c.bc = parse_boundary(s.str(section, "bc").c_str());
  c.stability_guard = s.flag(section, "guard");
  return c;
}

Matrix read_csv_matrix(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidConfig("cannot read field file '" + path + "'");
  std::vector<std::vector<double>> rows;
  for (std::string line; std::getline(f, line);) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::istringstream in(line);
    bool numeric = true;
    for (std::string cell; std::getline(in, cell, ',');) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty()) continue;  // header
      throw InvalidInput(path + ": non-numeric row " + std::to_string(rows.size() + 1));
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw InvalidInput(path + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput(path + ": no data");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  return m;
}

AttentionField initial_field(const Settings& s) {
  const std::string init = s.str("evolve", "init");
  const bool causal = s.flag("evolve", "causal");
  const auto bc = parse_boundary(s.str("evolve", "bc").c_str());
  if (init == "file") {
    const std::string path = s.str("evolve", "input");
    if (path.empty()) throw InvalidConfig("evolve.input is required for init = file");
    Matrix m = read_csv_matrix(path);
    if (causal && m.rows() != m.cols()) throw InvalidConfig("causal field must be square");
    return {std::move(m), bc, causal};
  }
  const std::size_t t = s.size("evolve", "T");
  std::size_t rows = s.size("evolve", "rows");
  if (t < 2) throw InvalidConfig("evolve.T must be at least 2");
  if (causal) rows = t;
  if (rows == 0) throw InvalidConfig("evolve.rows must be positive");
  AttentionField a{Matrix(rows, t), bc, causal};
  if (init == "onehot") {
    const std::size_t index = s.size("evolve", "index");
    for (std::size_t i = 0; i < rows; ++i) a.values(i, causal ? std::min(index, i) : (index + i) % t) = 1.0;
  } else if (init == "uniform") {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < a.support(i); ++j) a.values(i, j) = 1.0 / static_cast<double>(a.support(i));
  } else if (init == "softmax") {
    const std::size_t d = s.size("evolve", "d");
    if (d == 0) throw InvalidConfig("evolve.d must be positive");
    std::mt19937_64 rng(s.u64("global", "seed"));
    std::normal_distribution<double> n01;
    Matrix q(rows, d), k(t, d);
    for (double& v : q.flat()) v = n01(rng);
    for (double& v : k.flat()) v = n01(rng);
    a = attention::attention_init(q, k, attention::AttentionMask{causal, 0, {}}, bc);
  } else {
    throw InvalidConfig("evolve.init must be onehot, softmax, uniform or file");
  }
  return a;
}

int cmd_evolve(Run& r) {
  PdeConfig cfg = pde_from(r.s, "evolve");
  cfg.axis = parse_axis(r.s.str("evolve", "axis").c_str());
  cfg.renormalize_rows = r.s.flag("evolve", "renormalize");
  cfg.clamp_nonnegative = r.s.flag("evolve", "clamp");
  const AttentionField a0 = initial_field(r.s);
  cfg.validate();
  EvolveOptions eo;
  eo.keep_snapshots = r.s.flag("evolve", "snapshots");
  eo.range_mass = r.s.real("evolve", "range_mass");
  const Trajectory traj = evolve(a0, cfg, eo);

  auto tf = open_output(r.dir / "trajectory.csv");
  write_trajectory_csv(tf, traj);
  auto sf = open_output(r.dir / "snapshots.csv");
  write_snapshots_csv(sf, traj);
  const Matrix& fin = traj.final_field().values;
  auto ff = open_output(r.dir / "final.csv");
  ff << "row";
  for (std::size_t j = 0; j < fin.cols(); ++j) ff << ",k_" << j;
  ff << '\n';
  for (std::size_t i = 0; i < fin.rows(); ++i) {
    ff << i;
    for (double v : fin.row(i)) ff << ',' << format_double(v);
    ff << '\n';
  }

  r.out << "final field after " << cfg.n_steps << " steps:\n";
  for (std::size_t i = 0; i < fin.rows(); ++i) {
    r.out << '[';
    for (std::size_t j = 0; j < fin.cols(); ++j) r.out << (j ? "," : "") << fin(i, j);
    r.out << "]\n";
  }
  return kOk;
}

metrics::VerificationReport run_suite(const std::string& name, std::uint64_t seed) {
  using namespace metrics;
  if (name == "mode_decay") {
    // Random periodic fields; every field contributes its own checks.
    VerificationReport rep;
    rep.name = "mode_decay";
    std::mt19937_64 rng(seed);
    for (int f = 0; f < 20; ++f) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(4, 64)(rng);
      const double ad = std::uniform_real_distribution<double>(1e-3, 0.5)(rng);
      const std::size_t steps = std::uniform_int_distribution<std::size_t>(1, 50)(rng);
      Matrix a(3, t);
      std::exponential_distribution<double> e;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double sum = 0.0;
        for (double& v : a.row(i)) sum += (v = e(rng));
        for (double& v : a.row(i)) v /= sum;
      }
      for (auto c : verify_mode_decay(a, ad, 1.0, steps).checks) {
        c.name = "field_" + std::to_string(f) + "." + c.name;
        rep.checks.push_back(std::move(c));
      }
    }
    return rep;
  }
  if (name == "propagation") return verify_propagation_speed(256, 0.1, 1.0, 400);
  if (name == "smoothness") return verify_smoothness_decay(32, 0.2, 1.0, 200, seed);
  if (name == "multilayer") return verify_multilayer_error(64, 0.1, 8.0, {0.5, 0.25, 0.125}, seed);
  if (name == "hybrid") {
    PdeConfig cfg;
    cfg.n_steps = 20;
    return verify_hybrid_bound(32, hybrid::SparsePattern{4, {}}, cfg);
  }
  if (name == "pl") return verify_pl_smoke(32, 0.1, 1.0, 0.5, 40, seed);
  if (name == kNegativeControl) return verify_smoothness_decay(32, 0.7, 1.0, 200, seed, false);
  throw InvalidConfig("unknown verification suite '" + name + "'");
}

int cmd_verify(Run& r) {
  auto names = r.s.list("verify", "suites");
  if (names.size() == 1 && names[0] == "all") names = kSuites;
  if (names.empty()) throw InvalidConfig("verify.suites is empty");
  for (const auto& n : names)
    if (n != kNegativeControl && std::find(kSuites.begin(), kSuites.end(), n) == kSuites.end())
      throw InvalidConfig("unknown verification suite '" + n + "'");
  const std::uint64_t seed = r.s.u64("global", "seed");
  std::vector<metrics::VerificationReport> reports(names.size());
  experiment::parallel_for(names.size(), r.s.size("global", "workers"), [&](std::size_t i) {
    reports[i] = run_suite(names[i], seed);
    reports[i].name = names[i];
    auto f = open_output(r.dir / (names[i] + ".json"));
    f << metrics::to_json(reports[i]).dump(2) << '\n';
  });
  auto summary = open_output(r.dir / "summary.csv");
  summary << "suite,pass,checks,failed\n";
  bool all = true;
  for (const auto& rep : reports) {
    const auto failed = std::count_if(rep.checks.begin(), rep.checks.end(), [](const auto& c) { return !c.pass(); });
    summary << rep.name << ',' << (rep.pass() ? 1 : 0) << ',' << rep.checks.size() << ',' << failed << '\n';
    metrics::write_table(r.out, rep);
    all = all && rep.pass();
  }
  r.out << (all ? "all suites passed\n" : "verification FAILED\n");
  return all ? kOk : kVerificationFailed;
}

int cmd_train(Run& r) {
  const Settings& s = r.s;
  const std::uint64_t seed = s.u64("global", "seed");
  const auto kind = model::parse_dataset_kind(s.str("train", "dataset"));
  model::Dataset ds;
  switch (kind) {
    case model::DatasetKind::copy_task:
      ds = model::copy_task(s.size("train", "n_samples"), s.size("train", "prefix"), s.size("train", "n_symbols"), seed);
      break;
    case model::DatasetKind::long_range_recall:
      ds = model::long_range_recall(s.size("train", "n_samples"), s.size("train", "seq_len"),
                                    s.size("train", "n_classes"), s.size("train", "n_filler"), seed);
      break;
    case model::DatasetKind::char_text:
      if (s.str("train", "text").empty()) throw InvalidConfig("train.text is required for char_text");
      ds = model::char_text_file(s.str("train", "text"), s.size("train", "seq_len"));
      break;
  }
  const auto [tr, va] = model::split_dataset(ds, s.real("train", "val_fraction"));

  model::ModelConfig mc;
  mc.n_layers = s.size("train", "layers");
  mc.n_heads = s.size("train", "heads");
  mc.d_model = s.size("train", "d_model");
  mc.d_hidden = s.size("train", "d_hidden");
  mc.vocab_size = ds.vocab_size;
  mc.max_seq_len = ds.max_length();
  mc.task = ds.task();
  if (mc.task == model::Task::classification) mc.n_classes = ds.n_classes;
  mc.variant = model::parse_variant(s.str("train", "variant"));
  mc.pde = pde_from(s, "train");
  mc.pde.renormalize_rows = s.flag("train", "renormalize");
  mc.pattern = {s.size("train", "window"), s.size_list("train", "globals")};
  mc.learn_coefficients = s.flag("train", "learn_coefficients");
  mc.validate();

  model::TrainConfig tc;
  tc.optimizer = model::parse_optimizer(s.str("train", "optimizer"));
  tc.lr = s.real("train", "lr");
  tc.momentum = s.real("train", "momentum");
  tc.batch_size = s.size("train", "batch");
  tc.epochs = s.size("train", "epochs");
  tc.patience = s.size("train", "patience");
  tc.grad_clip = s.real("train", "grad_clip");
  tc.seed = seed;
  tc.validate();

  const auto res = model::train(tr, va, mc, tc);
  auto cf = open_output(r.dir / "train.csv");
  model::write_train_csv(cf, res.record);
  auto ck = open_output(r.dir / "checkpoint.json");
  model::save_checkpoint(ck, res.params, mc);

  const auto& last = res.record.epochs.back();
  r.out << "epochs " << last.epoch << ", train loss " << last.train_loss << ", val loss " << last.val_loss
        << (mc.task == model::Task::causal_lm ? ", perplexity " : ", accuracy ") << last.metric << '\n';
  if (res.record.diverged) {
    r.err << "training diverged: " << res.record.divergence_reason << '\n';
    return kDiverged;
  }
  r.out << "loss reduction " << res.record.loss_reduction() << (res.record.early_stopped ? " (early stop)" : "")
        << '\n';
  return kOk;
}

int cmd_bench(Run& r) {
  const auto kinds = kinds_from(r.s, "bench", "kinds");
  const std::size_t t_min = r.s.size("bench", "T_min"), t_max = r.s.size("bench", "T_max");
  const double min_seconds = r.s.real("bench", "min_seconds");
  const std::size_t repeats = r.s.size("bench", "repeats");
  if (t_min < 4 || t_max < t_min) throw InvalidConfig("bench needs 4 <= T_min <= T_max");
  if (repeats == 0 || min_seconds < 0) throw InvalidConfig("bench.repeats must be positive");
  std::vector<experiment::BenchPoint> all;
  r.out << "kernels: " << kernels::active().name << '\n';
  for (auto k : kinds) {
    std::vector<experiment::BenchPoint> pts;
    for (std::size_t t = t_min; t <= t_max; t *= 2) pts.push_back(experiment::bench_step(k, t, min_seconds, repeats));
    if (pts.size() >= 2) r.out << to_string(k) << ": log-log slope " << experiment::loglog_slope(pts) << '\n';
    all.insert(all.end(), pts.begin(), pts.end());
  }
  auto f = open_output(r.dir / "bench.csv");
  experiment::write_bench_csv(f, all);
  return kOk;
}

int cmd_ablate(Run& r) {
  const Settings& s = r.s;
  experiment::AblationConfig ac;
  ac.axis = experiment::parse_axis(s.str("ablate", "axis"));
  ac.step_values = s.size_list("ablate", "steps");
  ac.kinds = kinds_from(s, "ablate", "kinds");
  ac.seeds.clear();
  for (auto v : s.size_list("ablate", "seeds")) ac.seeds.push_back(v);
  if (ac.seeds.empty() || (ac.axis == experiment::AblationAxis::steps && ac.step_values.empty()))
    throw InvalidConfig("ablate needs at least one seed and one axis value");
  ac.n_samples = s.size("ablate", "n_samples");
  ac.n_filler = s.size("ablate", "n_filler");
  ac.val_fraction = s.real("ablate", "val_fraction");
  ac.model.max_seq_len = s.size("ablate", "seq_len");
  ac.model.n_classes = s.size("ablate", "n_classes");
  ac.model.n_layers = s.size("ablate", "layers");
  ac.model.n_heads = s.size("ablate", "heads");
  ac.model.d_model = s.size("ablate", "d_model");
  ac.model.d_hidden = s.size("ablate", "d_hidden");
  ac.model.pde.alpha = s.real("ablate", "alpha");
  ac.model.pde.dt = s.real("ablate", "dt");
  ac.model.pde.n_steps = s.size("ablate", "kind_steps");
  ac.train.optimizer = model::parse_optimizer(s.str("ablate", "optimizer"));
  ac.train.lr = s.real("ablate", "lr");
  ac.train.batch_size = s.size("ablate", "batch");
  ac.train.epochs = s.size("ablate", "epochs");
  ac.train.patience = s.size("ablate", "patience");
  ac.train.validate();
  ac.unstable_steps = s.size("ablate", "unstable_steps");
  ac.unstable_alpha = s.real("ablate", "unstable_alpha");
  ac.workers = s.size("global", "workers");

  const auto cells = experiment::run_ablation(ac);
  fs::create_directories(r.dir / "cells");
  for (const auto& c : cells) {
    auto f = open_output(r.dir / "cells" /
                         (std::string(to_string(c.kind)) + "_n" + std::to_string(c.n_steps) + "_s" +
                          std::to_string(c.seed) + ".csv"));
    model::write_train_csv(f, c.record);
  }
  auto f = open_output(r.dir / "ablation.csv");
  experiment::write_ablation_csv(f, cells);
  experiment::write_ablation_csv(r.out, cells);
  const bool unexpected = std::any_of(cells.begin(), cells.end(), [](const auto& c) { return c.record.diverged && !c.unstable; });
  if (unexpected) r.err << "a stable ablation cell diverged\n";
  return unexpected ? kDiverged : kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"PDE-refined attention experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir, seed, workers;
  std::vector<std::string> assignments;
  bool force = false;
  app.add_option("--config", config_path, "key = value config file with [section] headers");
  app.add_option("--set", assignments, "override section.key=value (repeatable)");
  app.add_option("--out", out_dir, std::string("output directory (default $") + kOutDirEnv + "/<subcommand>)");
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--workers", workers, "worker threads for verify and ablate");
  app.add_flag("--force", force, "overwrite a non-empty output directory");

  const std::vector<std::pair<std::string, std::string>> subs{
      {"evolve", "evolve an attention field and write its trajectory"},
      {"verify", "run verification suites and write JSON reports"},
      {"train", "train a toy PDE-attention transformer"},
      {"bench", "time one PDE step per kind across sequence lengths"},
      {"ablate", "sweep N_t or PDE kind on long-range recall"},
  };
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<std::string, CLI::Option*>> flag_opts;
  for (const auto& [name, help] : subs) {
    auto* sub = app.add_subcommand(name, help);
    for (const auto& [section, keys] : schema()) {
      if (section != name) continue;
      for (const auto& k : keys) {
        const std::string q = section + "." + k.key;
        flag_opts.emplace_back(q, sub->add_option("--" + k.key, flag_values[q], k.help + " [" + k.default_value + "]"));
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  try {
    Settings s;
    if (!config_path.empty()) s.load_file(config_path);
    for (const auto& a : assignments) s.set_assignment(a);
    for (const auto& [q, opt] : flag_opts)
      if (opt->count()) s.set_assignment(q + "=" + flag_values[q]);
    if (!seed.empty()) s.set("global", "seed", seed);
    if (!workers.empty()) s.set("global", "workers", workers);
    if (!out_dir.empty()) s.set("global", "out", out_dir);
    s.u64("global", "seed");
    s.size("global", "workers");

    Run r{s, sub, output_dir(s, sub), out, err};
    prepare_dir(r.dir, force);
    {
      auto f = open_output(r.dir / "config.resolved");
      f << s.resolved({"global", sub});
    }
    nlohmann::ordered_json meta;
    meta["subcommand"] = sub;
    meta["argv"] = std::vector<std::string>(argv, argv + argc);
    meta["kernels"] = std::string(kernels::active().name);
    meta["started"] = utc_now();

    int code = kOk;
    try {
      if (sub == "evolve") code = cmd_evolve(r);
      else if (sub == "verify") code = cmd_verify(r);
      else if (sub == "train") code = cmd_train(r);
      else if (sub == "bench") code = cmd_bench(r);
      else code = cmd_ablate(r);
    } catch (...) {
      meta["finished"] = utc_now();
      meta["exit_code"] = -1;
      open_output(r.dir / "metadata.json") << meta.dump(2) << '\n';
      throw;
    }
    meta["finished"] = utc_now();
    meta["exit_code"] = code;
    open_output(r.dir / "metadata.json") << meta.dump(2) << '\n';
    return code;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const DegenerateField& e) {
    err << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace pdeattn::cli
