#pragma once

#include <optional>
#include <span>
#include <vector>

#include "muplon/tensor.hpp"

namespace muplon::graph {

using Tensor = ad::Tensor<float>;

// Fully connected claim-evidence graph. Node 0 is the claim, nodes
// 1..N_e are evidence sentences; every unordered pair is joined once and
// there are no self-loops.
struct CEGraph {
  Tensor features;   // N x dim, row 0 = claim
  Tensor adjacency;  // N x N, 1 off the diagonal, 0 on it
  std::vector<std::optional<bool>> is_noise;  // per evidence, ground truth if known

  std::size_t num_nodes() const { return features.rows(); }
  std::size_t num_evidence() const { return features.rows() - 1; }
  std::size_t dim() const { return features.cols(); }
  std::size_t edge_count() const;

  std::span<const float> claim() const { return features.row_span(0); }
  // Evidence i in [0, N_e); node index i + 1.
  std::span<const float> evidence(std::size_t i) const { return features.row_span(i + 1); }
};

CEGraph build_graph(std::span<const float> claim, const std::vector<std::vector<float>>& evidences);

// Per-evidence weights carried through the back-door stage.
struct NodeBelief {
  std::vector<double> prior;            // normalized relevance weights
  std::vector<double> noise_posterior;  // P(noisy | observations), clamped
  std::vector<double> adjusted;         // inverse-probability weighted prior
};

double cosine(std::span<const float> a, std::span<const float> b);

// Relevance prior per evidence node:
//   raw_i = cos(e_i, claim) + 1/(N_e-1) * sum_{j != i} Attn(e_i, e_j)
// with Attn a softmax over j != i of e_i.e_j / sqrt(dim). The attention term
// is 0 when N_e = 1. Raw scores pass through softplus and are normalized.
NodeBelief prior_weights(const CEGraph& g);

// Node features with the normalized prior appended as one extra column
// (N x (dim + 1)). The claim row gets the largest evidence prior.
Tensor append_prior(const CEGraph& g, const NodeBelief& belief);

}  // namespace muplon::graph
