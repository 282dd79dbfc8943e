#include "muplon/backdoor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "muplon/error.hpp"
#include "muplon/nn.hpp"

namespace muplon::backdoor {

namespace {

double variance(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace

void BayesConfig::validate() const {
  if (fanin_cap < 1) throw ConfigError("bayes fanin_cap must be >= 1");
  if (!(posterior_clamp > 0.0 && posterior_clamp < 0.5)) {
    throw ConfigError("bayes posterior clamp must lie in (0, 0.5)");
  }
  if (!(variance_tolerance >= 0.0)) throw ConfigError("bayes variance tolerance must be >= 0");
}

std::size_t k_iter(std::size_t n_graph_nodes, std::span<const double> prior) {
  const double n = static_cast<double>(n_graph_nodes);
  const double alpha = prior.empty() ? 0.0
                                     : std::accumulate(prior.begin(), prior.end(), 0.0) /
                                           static_cast<double>(prior.size());
  const double beta = variance(prior);
  const double k = std::ceil(alpha * (std::log2(n + 1.0) + n / (beta + n)));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(0.0, k)));
}

NodeBelief bayes_sample_update(const CEGraph& g, NodeBelief belief, const BayesConfig& cfg,
                               std::uint64_t seed, BayesTrace* trace) {
  cfg.validate();
  const std::size_t ne = g.num_evidence();
  if (belief.prior.size() != ne) throw ShapeError("belief prior does not match the graph");

  // Descending prior; equal priors take a seeded random order.
  Rng rng(seed);
  std::vector<std::uint64_t> tiebreak(ne);
  for (auto& t : tiebreak) t = rng.next();
  std::vector<std::size_t> order(ne);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (belief.prior[a] != belief.prior[b]) return belief.prior[a] > belief.prior[b];
    if (tiebreak[a] != tiebreak[b]) return tiebreak[a] < tiebreak[b];
    return a < b;
  });

  std::vector<std::vector<std::size_t>> parents(ne);
  for (std::size_t pos = 1; pos < ne; ++pos) {
    const std::size_t k = std::min(cfg.fanin_cap, pos);
    parents[order[pos]].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }

  // Similarities mapped to [0, 1].
  std::vector<double> claim_sim(ne);
  std::vector<double> sim(ne * ne, 0.0);
  for (std::size_t i = 0; i < ne; ++i) {
    claim_sim[i] = 0.5 * (1.0 + graph::cosine(g.evidence(i), g.claim()));
    for (std::size_t j = 0; j < ne; ++j) {
      sim[i * ne + j] = 0.5 * (1.0 + graph::cosine(g.evidence(i), g.evidence(j)));
    }
  }

  const double eps = cfg.posterior_clamp;
  const double base_rate = 0.5;
  std::vector<double> post(ne, base_rate);
  const std::size_t patience = k_iter(ne + 1, belief.prior);
  const std::size_t max_sweeps = 50 * patience;

  double prev_var = variance(post);
  std::size_t stable = 0;
  std::size_t sweeps = 0;
  while (sweeps < max_sweeps && stable < patience) {
    for (std::size_t node : order) {
      double s_bar = 0.0;
      const auto& pa = parents[node];
      if (pa.empty()) {
        s_bar = claim_sim[node];
      } else {
        double wsum = 0.0, acc = 0.0, plain = 0.0;
        for (std::size_t p : pa) {
          const double w = 1.0 - post[p];
          wsum += w;
          acc += w * sim[node * ne + p];
          plain += sim[node * ne + p];
        }
        s_bar = wsum > 1e-12 ? acc / wsum : plain / static_cast<double>(pa.size());
      }
      s_bar = std::clamp(s_bar, 0.0, 1.0);
      const double noisy = base_rate * (1.0 - s_bar);
      const double clean = (1.0 - base_rate) * s_bar;
      const double evidence = noisy + clean;
      const double p = evidence > 0.0 ? noisy / evidence : base_rate;
      post[node] = std::clamp(p, eps, 1.0 - eps);
    }
    ++sweeps;
    const double var = variance(post);
    stable = std::abs(var - prev_var) < cfg.variance_tolerance ? stable + 1 : 0;
    prev_var = var;
  }

  belief.noise_posterior = std::move(post);
  if (trace) {
    trace->k_iter = patience;
    trace->sweeps = sweeps;
    trace->order = std::move(order);
    trace->parents = std::move(parents);
  }
  return belief;
}

NodeBelief ipw_adjust(NodeBelief belief) {
  if (belief.noise_posterior.size() != belief.prior.size()) {
    throw ShapeError("ipw_adjust needs a noise posterior per prior entry");
  }
  const std::size_t n = belief.prior.size();
  belief.adjusted.assign(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    belief.adjusted[i] = belief.prior[i] / belief.noise_posterior[i];
    total += belief.adjusted[i];
  }
  for (auto& a : belief.adjusted) a = total > 0.0 ? a / total : 1.0 / static_cast<double>(n);
  return belief;
}

NodeBelief uniform_belief(std::size_t num_evidence) {
  NodeBelief b;
  const double u = 1.0 / static_cast<double>(num_evidence);
  b.prior.assign(num_evidence, u);
  b.adjusted.assign(num_evidence, u);
  return b;
}

void init_augment_params(ParamStore& store, const AugmentConfig& cfg, std::size_t feature_dim, Rng& rng) {
  const std::size_t h = cfg.hidden_dim, l = cfg.latent_dim;
  nn::add_dense(store, "augment.enc.hidden", 2 * feature_dim, h, rng);
  nn::add_dense(store, "augment.enc.out", h, 2 * l, rng);
  nn::add_dense(store, "augment.prior.hidden", feature_dim, h, rng);
  nn::add_dense(store, "augment.prior.out", h, 2 * l, rng);
  nn::add_dense(store, "augment.dec.hidden", feature_dim + l, h, rng);
  nn::add_dense(store, "augment.dec.out", h, feature_dim, rng);
}

Var wasserstein2_diag(const Var& mu_q, const Var& sigma_q, const Var& mu_p, const Var& sigma_p) {
  auto dm = ad::sub(mu_q, mu_p);
  auto ds = ad::sub(sigma_q, sigma_p);
  auto sq = ad::add(ad::mul(dm, dm), ad::mul(ds, ds));
  // Row sums as (rows x 1): mean over columns times the column count.
  return ad::scale(ad::mean(sq, 1), static_cast<float>(sq.cols()));
}

AugmentResult augment_features(ParamBinding& params, const Var& features, const AugmentConfig& cfg,
                               Rng& rng) {
  const std::size_t n = features.rows();
  if (n < 2) throw ShapeError("augment_features needs at least one evidence node");
  const std::size_t ne = n - 1;
  const std::size_t l = cfg.latent_dim;

  // Neighbor mean over all j != i.
  Tensor mixer({n, n}, static_cast<float>(1.0 / static_cast<double>(n - 1)));
  for (std::size_t i = 0; i < n; ++i) mixer.at(i, i) = 0.0f;
  auto neighbor_mean = ad::matmul(features.tape()->constant(std::move(mixer)), features);

  std::vector<std::size_t> evidence_rows(ne);
  std::iota(evidence_rows.begin(), evidence_rows.end(), 1);
  auto x = ad::gather_rows(features, evidence_rows);
  auto nbr = ad::gather_rows(neighbor_mean, evidence_rows);

  auto q_hidden = ad::tanh(nn::dense(params, "augment.enc.hidden", ad::concat<float>({x, nbr}, 1)));
  auto q_out = nn::dense(params, "augment.enc.out", q_hidden);
  auto mu_q = ad::slice_cols(q_out, 0, l);
  auto sigma_q = ad::exp(ad::slice_cols(q_out, l, l));

  auto p_hidden = ad::tanh(nn::dense(params, "augment.prior.hidden", nbr));
  auto p_out = nn::dense(params, "augment.prior.out", p_hidden);
  auto mu_p = ad::slice_cols(p_out, 0, l);
  auto sigma_p = ad::exp(ad::slice_cols(p_out, l, l));

  Tensor eps({ne, l});
  for (auto& e : eps.storage()) e = static_cast<float>(rng.normal());
  auto h = ad::gaussian_sample(mu_q, sigma_q, eps);

  auto d_hidden = ad::tanh(nn::dense(params, "augment.dec.hidden", ad::concat<float>({nbr, h}, 1)));
  auto generated = nn::dense(params, "augment.dec.out", d_hidden);

  auto diff = ad::sub(x, generated);
  auto reconstruction = ad::scale(ad::sum(ad::mul(diff, diff)), static_cast<float>(-0.5 / static_cast<double>(ne)));
  auto divergence = ad::scale(ad::sum(wasserstein2_diag(mu_q, sigma_q, mu_p, sigma_p)),
                              static_cast<float>(1.0 / static_cast<double>(ne)));
  auto elbo = ad::sub(reconstruction, ad::scale(divergence, static_cast<float>(cfg.divergence_weight)));
  return {generated, elbo, reconstruction, divergence};
}

void GnnConfig::validate() const {
  if (layers < 1) throw ConfigError("gnn layers must be >= 1");
}

void init_gnn_params(ParamStore& store, const GnnConfig& cfg, std::size_t feature_dim, Rng& rng) {
  cfg.validate();
  for (std::size_t layer = 0; layer < cfg.layers; ++layer) {
    store.add("gnn.layer" + std::to_string(layer) + ".w", nn::glorot(feature_dim, feature_dim, rng));
  }
  store.add("gnn.mix.w1", Tensor::scalar(cfg.mix_init));
  store.add("gnn.mix.w2", Tensor::scalar(cfg.mix_init));
}

Tensor propagation_matrix(std::span<const double> adjusted) {
  if (adjusted.empty()) throw ShapeError("propagation_matrix needs at least one evidence weight");
  const std::size_t n = adjusted.size() + 1;
  std::vector<double> w(n);
  w[0] = *std::max_element(adjusted.begin(), adjusted.end());
  std::copy(adjusted.begin(), adjusted.end(), w.begin() + 1);
  Tensor a({n, n}, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row += 0.5 * (w[i] + w[j]);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double e = 0.5 * (w[i] + w[j]);
      a.at(i, j) = static_cast<float>(row > 0.0 ? e / row : 1.0 / static_cast<double>(n - 1));
    }
  }
  return a;
}

Var gnn_forward(ParamBinding& params, const Var& features, const std::optional<Var>& generated,
                const Tensor& propagation, const GnnConfig& cfg, bool disable_augment) {
  cfg.validate();
  const std::size_t n = features.rows();
  const std::size_t dim = features.cols();
  if (propagation.rows() != n || propagation.cols() != n) {
    throw ShapeError("propagation matrix " + ad::shape_string(propagation.shape()) + " for " +
                     std::to_string(n) + " nodes");
  }
  auto* tape = features.tape();
  auto a_hat = tape->constant(propagation);
  auto w1 = params("gnn.mix.w1");

  std::optional<Var> gen_full;
  if (generated && !disable_augment) {
    if (generated->rows() != n - 1 || generated->cols() != dim) {
      throw ShapeError("generated features " + ad::shape_string(generated->shape()) + " for " +
                       std::to_string(n - 1) + " evidence nodes of dim " + std::to_string(dim));
    }
    // The claim row gets no generated term.
    auto zero_row = tape->constant(Tensor({1, dim}, 0.0f));
    gen_full = ad::mul(ad::concat<float>({zero_row, *generated}, 0), params("gnn.mix.w2"));
  }

  Var x = features;
  for (std::size_t layer = 0; layer < cfg.layers; ++layer) {
    Var mixed = ad::mul(x, w1);
    if (gen_full) mixed = ad::add(mixed, *gen_full);
    auto propagated = ad::matmul(a_hat, mixed);
    x = ad::tanh(ad::matmul(propagated, params("gnn.layer" + std::to_string(layer) + ".w")));
  }
  return x;
}

}  // namespace muplon::backdoor
