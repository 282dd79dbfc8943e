#pragma once

// Back-door stage: noise estimation over the claim-evidence graph, inverse
// probability reweighting, variational feature augmentation and GNN
// propagation.

#include <cstdint>
#include <optional>
#include <span>

#include "muplon/autodiff.hpp"
#include "muplon/ce_graph.hpp"
#include "muplon/param_store.hpp"
#include "muplon/rng.hpp"

namespace muplon::backdoor {

using Var = ad::Var<float>;
using graph::CEGraph;
using graph::NodeBelief;

struct BayesConfig {
  std::size_t fanin_cap = 3;
  double variance_tolerance = 1e-6;
  double posterior_clamp = 1e-3;

  void validate() const;
};

// Stopping patience for the sampling sweeps:
//   max(1, ceil(mean(prior) * (log2(n_graph_nodes + 1) + n / (var(prior) + n))))
std::size_t k_iter(std::size_t n_graph_nodes, std::span<const double> prior);

struct BayesTrace {
  std::size_t k_iter = 0;
  std::size_t sweeps = 0;
  std::vector<std::size_t> order;                // processing order (evidence indices)
  std::vector<std::vector<std::size_t>> parents;  // per evidence; empty = claim is the parent
};

// Fills belief.noise_posterior.
//
// Evidence nodes are processed in descending prior order (ties ordered by a
// seeded shuffle). Each node's parents are the fanin_cap highest-prior nodes
// processed before it; the first node hangs off the claim. With parent
// similarity s = (1 + cos) / 2, the noisy hypothesis explains the node with
// likelihood 1 - s_bar and the clean one with s_bar, where s_bar averages
// parent similarities weighted by each parent's current clean probability.
// Both hypotheses start at 0.5; the posterior is clamped to [eps, 1 - eps].
// Sweeps repeat until the posterior variance moves by less than the
// tolerance for k_iter consecutive sweeps, capped at 50 * k_iter sweeps.
NodeBelief bayes_sample_update(const CEGraph& g, NodeBelief belief, const BayesConfig& cfg,
                               std::uint64_t seed, BayesTrace* trace = nullptr);

// adjusted_i = prior_i / noise_posterior_i, renormalized to sum 1.
NodeBelief ipw_adjust(NodeBelief belief);

// Uniform adjusted weights, used when the back-door stage is ablated.
NodeBelief uniform_belief(std::size_t num_evidence);

struct AugmentConfig {
  std::size_t latent_dim = 16;
  std::size_t hidden_dim = 32;
  double divergence_weight = 1.0;  // lambda
};

// Registers augment.enc.* (q_phi), augment.prior.* (p_theta) and
// augment.dec.* (generator) for node features of width `feature_dim`.
void init_augment_params(ParamStore& store, const AugmentConfig& cfg, std::size_t feature_dim, Rng& rng);

struct AugmentResult {
  Var generated;       // N_e x feature_dim, one row per evidence node
  Var elbo;            // reconstruction - lambda * divergence, per-node mean
  Var reconstruction;  // -0.5 * ||x_i - x_hat_i||^2, per-node mean
  Var divergence;      // squared 2-Wasserstein between q and p, per-node mean
};

// Squared 2-Wasserstein distance between diagonal Gaussians, summed over
// columns, one value per row (rows x 1): ||mu_q - mu_p||^2 + ||s_q - s_p||^2.
Var wasserstein2_diag(const Var& mu_q, const Var& sigma_q, const Var& mu_p, const Var& sigma_p);

// For each evidence node i: neighbor mean over all j != i, latent
// h ~ q(h | x_i, mean) by reparameterization, generated feature =
// decoder([mean ; h]). `features` is N x feature_dim with the claim in row 0.
AugmentResult augment_features(ParamBinding& params, const Var& features, const AugmentConfig& cfg,
                               Rng& rng);

struct GnnConfig {
  std::size_t layers = 2;
  float mix_init = 0.5f;

  void validate() const;
};

void init_gnn_params(ParamStore& store, const GnnConfig& cfg, std::size_t feature_dim, Rng& rng);

// Row-normalized propagation matrix (N x N, zero diagonal). Edge (i, j)
// weighs (w_i + w_j) / 2 where w are the adjusted evidence weights and the
// claim uses the largest of them.
Tensor propagation_matrix(std::span<const double> adjusted);

// Per layer: mixed_i = w1 * X[i] + w2 * generated_i (the claim row mixes w1
// only), X' = tanh(A * mixed * W_layer). `generated` is N_e x dim or absent;
// when absent (or `disable_augment`), the w2 term is dropped.
Var gnn_forward(ParamBinding& params, const Var& features, const std::optional<Var>& generated,
                const Tensor& propagation, const GnnConfig& cfg, bool disable_augment = false);

}  // namespace muplon::backdoor
