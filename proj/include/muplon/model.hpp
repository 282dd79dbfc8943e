#pragma once

// The full verification model: graph construction, back-door stage,
// front-door stage and classifier, with the ablation switches.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "muplon/backdoor.hpp"
#include "muplon/ce_graph.hpp"
#include "muplon/datagen.hpp"
#include "muplon/encoder.hpp"
#include "muplon/frontdoor.hpp"
#include "muplon/param_store.hpp"

namespace muplon::model {

using Var = ad::Var<float>;

enum class Ablation { None, NoBackdoor, NoFrontdoor, AlphaZero };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

struct ModelConfig {
  encoder::EncoderConfig encoder;
  backdoor::BayesConfig bayes;
  backdoor::AugmentConfig augment;
  backdoor::GnnConfig gnn;
  frontdoor::FusionConfig fusion;
  std::size_t n_classes = 3;
  double elbo_weight = 0.1;  // loss = CE - elbo_weight * ELBO

  // Width of the node features fed to the networks (encoder dim + prior).
  std::size_t feature_dim() const { return encoder.dim + 1; }
  void validate() const;
};

// Everything about a sample that does not depend on trainable parameters.
struct PreparedSample {
  Tensor features;  // N x feature_dim, prior appended
  graph::NodeBelief belief;
  Tensor propagation;
  std::size_t label = 0;
  std::vector<bool> noise_mask;
  bool bias_token_present = false;
};

// The Bayesian stage is skipped (uniform weights) under NoBackdoor.
PreparedSample prepare(const encoder::Encoder& enc, const data::Sample& s, const ModelConfig& cfg,
                       Ablation ablation, std::uint64_t seed);

std::vector<PreparedSample> prepare_all(const encoder::Encoder& enc, const std::vector<data::Sample>& samples,
                                        const ModelConfig& cfg, Ablation ablation, std::uint64_t seed);

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

// Names and shapes that differ between two stores; empty when compatible.
// Buffers are ignored.
std::vector<std::string> shape_mismatches(const ParamStore& expected, const ParamStore& actual);

struct Forward {
  Var logits;                // 1 x n_classes
  Var graph_repr;            // x_g, 1 x model_dim
  std::optional<Var> elbo;   // absent when augmentation is off
  std::vector<frontdoor::ReasoningPath> paths;
};

// `expected_bias` is E[x_g] (1 x model_dim) or absent before the first
// dictionary build. `fixed_paths` replaces beam search when given.
Forward forward(ParamBinding& params, const PreparedSample& s, const ModelConfig& cfg, Ablation ablation,
                const std::optional<Tensor>& expected_bias, Rng& rng,
                const std::vector<frontdoor::ReasoningPath>* fixed_paths = nullptr);

// x_g alone, skipping the path stage; used for dictionary snapshots.
Var graph_representation(ParamBinding& params, const PreparedSample& s, const ModelConfig& cfg, Ablation ablation,
                         Rng& rng);

Var loss(const Forward& f, std::size_t label, const ModelConfig& cfg);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

// Central-difference check of d loss / d param for every trainable
// parameter, with beam-search paths and augmentation noise held fixed.
std::vector<GradCheckEntry> grad_check_params(const ParamStore& params, const PreparedSample& s,
                                              const ModelConfig& cfg, Ablation ablation,
                                              const std::optional<Tensor>& expected_bias, std::uint64_t seed,
                                              double eps);

}  // namespace muplon::model
