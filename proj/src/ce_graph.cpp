#include "muplon/ce_graph.hpp"

#include <algorithm>
#include <cmath>

#include "muplon/error.hpp"

namespace muplon::graph {

std::size_t CEGraph::edge_count() const {
  std::size_t edges = 0;
  const std::size_t n = num_nodes();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (adjacency.at(i, j) != 0.0f) ++edges;
    }
  }
  return edges;
}

CEGraph build_graph(std::span<const float> claim, const std::vector<std::vector<float>>& evidences) {
  if (evidences.empty()) throw ShapeError("claim-evidence graph needs at least one evidence");
  const std::size_t dim = claim.size();
  const std::size_t n = evidences.size() + 1;
  CEGraph g;
  g.features = Tensor({n, dim});
  std::copy(claim.begin(), claim.end(), g.features.row_span(0).begin());
  for (std::size_t i = 0; i < evidences.size(); ++i) {
    if (evidences[i].size() != dim) {
      throw ShapeError("evidence " + std::to_string(i) + " has dim " + std::to_string(evidences[i].size()) +
                       ", claim has dim " + std::to_string(dim));
    }
    std::copy(evidences[i].begin(), evidences[i].end(), g.features.row_span(i + 1).begin());
  }
  g.adjacency = Tensor({n, n}, 1.0f);
  for (std::size_t i = 0; i < n; ++i) g.adjacency.at(i, i) = 0.0f;
  g.is_noise.assign(evidences.size(), std::nullopt);
  return g;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

NodeBelief prior_weights(const CEGraph& g) {
  const std::size_t ne = g.num_evidence();
  const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(g.dim()));
  std::vector<double> raw(ne, 0.0);
  for (std::size_t i = 0; i < ne; ++i) {
    raw[i] = cosine(g.evidence(i), g.claim());
    if (ne == 1) continue;
    std::vector<double> scores;
    scores.reserve(ne - 1);
    for (std::size_t j = 0; j < ne; ++j) {
      if (j == i) continue;
      double dot = 0.0;
      auto ei = g.evidence(i);
      auto ej = g.evidence(j);
      for (std::size_t k = 0; k < ei.size(); ++k) dot += static_cast<double>(ei[k]) * ej[k];
      scores.push_back(dot * inv_sqrt_dim);
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - mx);
    double attn_sum = 0.0;
    for (double s : scores) attn_sum += std::exp(s - mx) / z;
    raw[i] += attn_sum / static_cast<double>(ne - 1);
  }
  NodeBelief belief;
  belief.prior.resize(ne);
  double total = 0.0;
  for (std::size_t i = 0; i < ne; ++i) {
    // softplus, written to avoid overflow for large inputs
    const double x = raw[i];
    belief.prior[i] = x > 30.0 ? x : std::log1p(std::exp(x));
    total += belief.prior[i];
  }
  for (auto& p : belief.prior) p /= total;
  return belief;
}

Tensor append_prior(const CEGraph& g, const NodeBelief& belief) {
  const std::size_t n = g.num_nodes();
  const std::size_t dim = g.dim();
  if (belief.prior.size() != g.num_evidence()) {
    throw ShapeError("prior has " + std::to_string(belief.prior.size()) + " entries for " +
                     std::to_string(g.num_evidence()) + " evidence nodes");
  }
  Tensor out({n, dim + 1});
  const double claim_weight = *std::max_element(belief.prior.begin(), belief.prior.end());
  for (std::size_t r = 0; r < n; ++r) {
    auto src = g.features.row_span(r);
    std::copy(src.begin(), src.end(), out.row_span(r).begin());
    out.at(r, dim) = static_cast<float>(r == 0 ? claim_weight : belief.prior[r - 1]);
  }
  return out;
}

}  // namespace muplon::graph
