// SPDX-License-Identifier: Apache-2.0
#pragma once

// Toy post-norm transformer on PDE-attention blocks:
//   X = tok_emb[ids] + pos_emb
//   per layer: H = LN(X + MHA(X)); X = LN(H + FFN(H))
//   causal_lm: logits = X w_out + b_out per position
//   classification: logits = mean_rows(X) w_out + b_out

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdeattn/attention.hpp"
#include "pdeattn/hybrid.hpp"
#include "pdeattn/matrix.hpp"
#include "pdeattn/pde.hpp"

namespace pdeattn::model {

enum class Task { causal_lm, classification };
enum class AttentionVariant { standard, pde, hybrid };

const char* to_string(Task t);
const char* to_string(AttentionVariant v);
Task parse_task(const std::string& s);
AttentionVariant parse_variant(const std::string& s);

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 32;
  std::size_t d_hidden = 64;
  std::size_t vocab_size = 16;
  std::size_t max_seq_len = 32;
  std::size_t n_classes = 2;  // classification only
  Task task = Task::causal_lm;
  AttentionVariant variant = AttentionVariant::pde;
  PdeConfig pde = default_pde();
  hybrid::SparsePattern pattern;  // hybrid only
  bool learn_coefficients = true;
  double layer_norm_eps = 1e-5;

  static PdeConfig default_pde();

  /// Config the attention layers actually run: standard forces zero steps.
  PdeConfig attention_pde() const;
  attention::AttentionMask mask() const;
  std::size_t output_size() const { return task == Task::causal_lm ? vocab_size : n_classes; }
  void validate() const;
};

nlohmann::ordered_json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

struct LayerParams {
  Matrix w_q, w_k, w_v, w_o;   // d x d
  Matrix coeff;                // n_heads x 3: alpha, beta, c
  Matrix ln1_gamma, ln1_beta;  // 1 x d
  Matrix w1, b1;               // d x h, 1 x h
  Matrix w2, b2;               // h x d, 1 x d
  Matrix ln2_gamma, ln2_beta;  // 1 x d

  attention::ProjectionWeights projection(std::size_t n_heads) const;
};

struct ModelParams {
  Matrix tok_emb;  // vocab x d
  Matrix pos_emb;  // max_seq_len x d
  std::vector<LayerParams> layers;
  Matrix w_out, b_out;  // d x out, 1 x out

  void for_each(const std::function<void(const std::string&, Matrix&)>& f);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& f) const;
  ModelParams zeros_like() const;
  std::size_t size() const;
};

/// Fan-in uniform init; LayerNorm gains 1, biases 0, coefficients from cfg.pde.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Project learnable coefficients into the stable region:
/// alpha <= alpha_max(dt, axis), beta <= 1/dt, c <= 1/dt, all >= 0.
void clamp_coefficients(ModelParams& params, const ModelConfig& cfg);

struct Sample {
  std::vector<int> tokens;
  std::vector<int> targets;  // causal_lm: next-token id per position, -1 = ignored
  int label = -1;            // classification
};

/// Logits per sample: (len x vocab) for causal_lm, (1 x classes) for classification.
std::vector<Matrix> model_forward(const ModelParams& params, const ModelConfig& cfg,
                                  std::span<const Sample> batch);

struct LossGrad {
  double loss = 0.0;          // mean over counted tokens (lm) or samples
  std::size_t n_counted = 0;  // tokens or samples contributing
  ModelParams grads;
  std::vector<double> layer_grad_norms;  // L2 norm of each layer's parameter gradients
};

/// Mean cross-entropy over the batch and its gradient.
LossGrad loss_and_gradients(const ModelParams& params, const ModelConfig& cfg,
                            std::span<const Sample> batch);

/// Loss only; sum of token (or sample) cross-entropies and the count.
std::pair<double, std::size_t> evaluate_loss(const ModelParams& params, const ModelConfig& cfg,
                                             std::span<const Sample> batch);

/// Fraction of samples whose argmax logit is the label (classification).
double accuracy(const ModelParams& params, const ModelConfig& cfg, std::span<const Sample> batch);

double global_norm(const ModelParams& grads);

// Checkpoint: JSON with format tag, version, config and every tensor.
void save_checkpoint(std::ostream& os, const ModelParams& params, const ModelConfig& cfg);
std::pair<ModelParams, ModelConfig> load_checkpoint(std::istream& is);

}  // namespace pdeattn::model
