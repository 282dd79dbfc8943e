#pragma once

// Front-door stage: weighted Markov-chain path extraction over the graph,
// path and graph encoders, multi-head fusion and the debiased classifier.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "muplon/autodiff.hpp"
#include "muplon/param_store.hpp"
#include "muplon/rng.hpp"

namespace muplon::frontdoor {

using Var = ad::Var<float>;

enum class TransitionWeight { Current, Target };

struct FusionConfig {
  std::size_t model_dim = 32;
  std::size_t heads = 4;
  double alpha = 0.5;            // debias strength
  std::size_t mc_draws = 10;     // Monte Carlo repetitions T
  std::size_t draw_size = 0;     // centers per draw M; 0 = ceil(N / 2)
  std::size_t beam = 5;
  std::size_t max_path_len = 4;  // nodes per path, claim included
  std::size_t transition_hidden = 16;
  TransitionWeight transition_weight = TransitionWeight::Current;

  std::size_t head_dim() const { return model_dim / heads; }
  void validate() const;
};

// Claim-rooted simple path; log_score sums log transition probabilities.
struct ReasoningPath {
  std::vector<std::size_t> nodes;
  double log_score = 0.0;

  bool operator==(const ReasoningPath&) const = default;
};

void init_frontdoor_params(ParamStore& store, const FusionConfig& cfg, std::size_t feature_dim,
                           std::size_t n_classes, Rng& rng);

// a_ij = MLP([x_i ; x_j]) for every ordered pair (N*N x 1, row-major).
Var pair_scores(ParamBinding& params, const Var& features);

// Row-wise softmax over j != i of the weighted scores a_ij * w. With
// TransitionWeight::Current, w is the current node's adjusted weight (1 for
// the claim); with Target it is the destination's (the claim takes the
// largest evidence weight). The diagonal is exactly zero.
Var transition_from_scores(const Var& scores, std::span<const double> adjusted, TransitionWeight mode);

Var transition_matrix(ParamBinding& params, const Var& features, std::span<const double> adjusted,
                      TransitionWeight mode);

// Beam search for claim-rooted simple paths. Partial paths are pruned to
// the `beam` best per length; a path completes at max_len nodes or when no
// unvisited node remains, and completed paths compete for the final top
// `beam`. Order: score descending, then node sequence ascending.
std::vector<ReasoningPath> beam_search_paths(const ad::Tensor<double>& transitions, std::size_t max_len,
                                             std::size_t beam);

// Runs the recurrent encoder over each path's node features and mixes the
// final hidden states with softmax(log_score) weights. Scores are read from
// `transitions` when given (so they stay differentiable), otherwise taken
// from the paths themselves. Returns 1 x model_dim.
Var encode_paths(ParamBinding& params, const Var& features, const std::vector<ReasoningPath>& paths,
                 const std::optional<Var>& transitions);

// Single-query attention pooling over nodes, projected to model_dim.
Var encode_graph(ParamBinding& params, const Var& features);

// Per head: Q = x_r Wq_i, K = x_g Wk_i, V = x_g Wv_i,
// head_i = softmax(Q.K / sqrt(head_dim)) V. Output Wo [head_1..head_H] + x_r.
Var fuse(ParamBinding& params, const Var& path_repr, const Var& graph_repr, const FusionConfig& cfg);

// logits = M Wc - alpha * E Wg; the subtraction is skipped without E.
Var classify_logits(ParamBinding& params, const Var& fused, const std::optional<ad::Tensor<float>>& expected_bias,
                    double alpha);

}  // namespace muplon::frontdoor
