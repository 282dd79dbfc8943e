#include "muplon/frontdoor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "muplon/error.hpp"
#include "muplon/nn.hpp"

namespace muplon::frontdoor {

void FusionConfig::validate() const {
  if (heads < 1) throw ConfigError("fusion heads must be >= 1");
  if (model_dim == 0 || model_dim % heads != 0) {
    throw ConfigError("fusion model_dim " + std::to_string(model_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (!(alpha >= 0.0)) throw ConfigError("fusion alpha must be >= 0");
  if (beam < 1) throw ConfigError("beam width must be >= 1");
  if (max_path_len < 2) throw ConfigError("max path length must be >= 2");
  if (mc_draws < 1) throw ConfigError("monte carlo draws must be >= 1");
}

void init_frontdoor_params(ParamStore& store, const FusionConfig& cfg, std::size_t feature_dim,
                           std::size_t n_classes, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.model_dim;
  nn::add_dense(store, "transition.hidden", 2 * feature_dim, cfg.transition_hidden, rng);
  nn::add_dense(store, "transition.out", cfg.transition_hidden, 1, rng);

  store.add("path.lstm.w", nn::glorot(feature_dim, 4 * d, rng));
  store.add("path.lstm.u", nn::glorot(d, 4 * d, rng));
  Tensor bias({1, 4 * d}, 0.0f);
  for (std::size_t j = d; j < 2 * d; ++j) bias[j] = 1.0f;  // forget gate
  store.add("path.lstm.b", std::move(bias));

  store.add("graph.query", nn::glorot(feature_dim, 1, rng));
  store.add("graph.proj", nn::glorot(feature_dim, d, rng));

  store.add("fuse.wq", nn::glorot(d, d, rng));
  store.add("fuse.wk", nn::glorot(d, d, rng));
  store.add("fuse.wv", nn::glorot(d, d, rng));
  store.add("fuse.wo", nn::glorot(d, d, rng));

  store.add("classifier.wc", nn::glorot(d, n_classes, rng));
  store.add("classifier.wg", nn::glorot(d, n_classes, rng));
}

Var pair_scores(ParamBinding& params, const Var& features) {
  const std::size_t n = features.rows();
  std::vector<std::size_t> left, right;
  left.reserve(n * n);
  right.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      left.push_back(i);
      right.push_back(j);
    }
  }
  auto pairs = ad::concat<float>({ad::gather_rows(features, left), ad::gather_rows(features, right)}, 1);
  auto hidden = ad::tanh(nn::dense(params, "transition.hidden", pairs));
  return nn::dense(params, "transition.out", hidden);
}

Var transition_from_scores(const Var& scores, std::span<const double> adjusted, TransitionWeight mode) {
  const std::size_t n = adjusted.size() + 1;
  if (scores.value().size() != n * n) {
    throw ShapeError("transition scores " + ad::shape_string(scores.shape()) + " for " + std::to_string(n) +
                     " nodes");
  }
  auto* tape = scores.tape();
  auto square = ad::reshape(scores, n, n);
  const double claim_weight =
      mode == TransitionWeight::Current ? 1.0 : *std::max_element(adjusted.begin(), adjusted.end());
  Tensor weights(mode == TransitionWeight::Current ? ad::Shape{n, 1} : ad::Shape{1, n});
  weights[0] = static_cast<float>(claim_weight);
  for (std::size_t i = 1; i < n; ++i) weights[i] = static_cast<float>(adjusted[i - 1]);
  auto weighted = ad::mul(square, tape->constant(std::move(weights)));

  // Large negative diagonal: exp underflows to exactly zero.
  Tensor mask({n, n}, 0.0f);
  for (std::size_t i = 0; i < n; ++i) mask.at(i, i) = -1e30f;
  return ad::softmax(ad::add(weighted, tape->constant(std::move(mask))), 1);
}

Var transition_matrix(ParamBinding& params, const Var& features, std::span<const double> adjusted,
                      TransitionWeight mode) {
  if (adjusted.size() + 1 != features.rows()) {
    throw ShapeError("transition_matrix: " + std::to_string(adjusted.size()) + " weights for " +
                     std::to_string(features.rows()) + " nodes");
  }
  return transition_from_scores(pair_scores(params, features), adjusted, mode);
}

namespace {

bool path_before(const ReasoningPath& a, const ReasoningPath& b) {
  if (a.log_score != b.log_score) return a.log_score > b.log_score;
  return a.nodes < b.nodes;
}

}  // namespace

std::vector<ReasoningPath> beam_search_paths(const ad::Tensor<double>& transitions, std::size_t max_len,
                                             std::size_t beam) {
  if (max_len < 2) throw ConfigError("beam search max_len must be >= 2, got " + std::to_string(max_len));
  if (beam < 1) throw ConfigError("beam width must be >= 1");
  const std::size_t n = transitions.rows();
  if (transitions.cols() != n || n < 2) {
    throw ShapeError("beam search needs a square transition matrix over >= 2 nodes, got " +
                     ad::shape_string(transitions.shape()));
  }
  const std::size_t full_len = std::min(max_len, n);

  std::vector<ReasoningPath> frontier{ReasoningPath{{0}, 0.0}};
  std::vector<ReasoningPath> completed;
  while (!frontier.empty()) {
    std::vector<ReasoningPath> candidates;
    for (const auto& p : frontier) {
      std::vector<bool> visited(n, false);
      for (auto v : p.nodes) visited[v] = true;
      const std::size_t last = p.nodes.back();
      for (std::size_t j = 0; j < n; ++j) {
        if (visited[j]) continue;
        ReasoningPath next = p;
        next.nodes.push_back(j);
        next.log_score += std::log(transitions.at(last, j));
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), path_before);
    std::vector<ReasoningPath> kept;
    for (auto& c : candidates) {
      if (c.nodes.size() >= full_len) {
        completed.push_back(std::move(c));
      } else if (kept.size() < beam) {
        kept.push_back(std::move(c));
      }
    }
    frontier = std::move(kept);
  }
  std::sort(completed.begin(), completed.end(), path_before);
  if (completed.size() > beam) completed.resize(beam);
  return completed;
}

Var encode_paths(ParamBinding& params, const Var& features, const std::vector<ReasoningPath>& paths,
                 const std::optional<Var>& transitions) {
  if (paths.empty()) throw ShapeError("encode_paths needs at least one path");
  auto* tape = features.tape();
  auto w = params("path.lstm.w");
  auto u = params("path.lstm.u");
  auto b = params("path.lstm.b");
  const std::size_t hid = u.rows();

  // Paths of equal length run as one batch.
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    if (paths[p].nodes.empty()) throw ShapeError("encode_paths: empty path");
    by_length[paths[p].nodes.size()].push_back(p);
  }
  std::vector<Var> finals;
  std::vector<std::size_t> final_order;
  for (const auto& [len, members] : by_length) {
    auto state = tape->constant(Tensor({members.size(), 2 * hid}, 0.0f));
    for (std::size_t step = 0; step < len; ++step) {
      std::vector<std::size_t> rows;
      for (auto p : members) rows.push_back(paths[p].nodes[step]);
      state = ad::lstm_cell(ad::gather_rows(features, rows), state, w, u, b);
    }
    finals.push_back(ad::slice_cols(state, 0, hid));
    final_order.insert(final_order.end(), members.begin(), members.end());
  }
  auto stacked = finals.size() == 1 ? finals.front() : ad::concat<float>(finals, 0);

  std::vector<Var> scores;
  for (auto p : final_order) {
    if (transitions) {
      std::vector<std::pair<std::size_t, std::size_t>> edges;
      const auto& nodes = paths[p].nodes;
      for (std::size_t k = 0; k + 1 < nodes.size(); ++k) edges.emplace_back(nodes[k], nodes[k + 1]);
      if (edges.empty()) {
        scores.push_back(tape->constant(Tensor::scalar(0.0f)));
      } else {
        scores.push_back(ad::sum(ad::log(ad::pick(*transitions, edges))));
      }
    } else {
      scores.push_back(tape->constant(Tensor::scalar(static_cast<float>(paths[p].log_score))));
    }
  }
  auto weights = ad::softmax(ad::concat<float>(scores, 1), 1);
  return ad::matmul(weights, stacked);
}

Var encode_graph(ParamBinding& params, const Var& features) {
  const float inv_sqrt_dim = 1.0f / std::sqrt(static_cast<float>(features.cols()));
  auto scores = ad::scale(ad::matmul(features, params("graph.query")), inv_sqrt_dim);
  auto attn = ad::softmax(scores, 0);
  auto pooled = ad::matmul(ad::transpose(attn), features);
  return ad::matmul(pooled, params("graph.proj"));
}

Var fuse(ParamBinding& params, const Var& path_repr, const Var& graph_repr, const FusionConfig& cfg) {
  cfg.validate();
  const std::size_t hd = cfg.head_dim();
  auto q = ad::matmul(path_repr, params("fuse.wq"));
  auto k = ad::matmul(graph_repr, params("fuse.wk"));
  auto v = ad::matmul(graph_repr, params("fuse.wv"));
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    auto qh = ad::slice_cols(q, h * hd, hd);
    auto kh = ad::slice_cols(k, h * hd, hd);
    auto vh = ad::slice_cols(v, h * hd, hd);
    // One key per head: the softmax row has a single entry.
    auto score = ad::scale(ad::sum(ad::mul(qh, kh)), inv_sqrt);
    auto weight = ad::softmax(score, 1);
    heads.push_back(ad::mul(vh, weight));
  }
  auto joined = heads.size() == 1 ? heads.front() : ad::concat<float>(heads, 1);
  return ad::add(ad::matmul(joined, params("fuse.wo")), path_repr);
}

Var classify_logits(ParamBinding& params, const Var& fused, const std::optional<ad::Tensor<float>>& expected_bias,
                    double alpha) {
  auto logits = ad::matmul(fused, params("classifier.wc"));
  if (!expected_bias || alpha == 0.0) return logits;
  auto* tape = fused.tape();
  auto bias = ad::matmul(tape->constant(*expected_bias), params("classifier.wg"));
  return ad::sub(logits, ad::scale(bias, static_cast<float>(alpha)));
}

}  // namespace muplon::frontdoor
