#include "muplon/model.hpp"

#include "muplon/error.hpp"
#include "muplon/grad_check.hpp"
#include "muplon/nn.hpp"

namespace muplon::model {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoBackdoor: return "no-backdoor";
    case Ablation::NoFrontdoor: return "no-frontdoor";
    case Ablation::AlphaZero: return "alpha-zero";
  }
  return "none";
}

Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::None;
  if (s == "no-backdoor") return Ablation::NoBackdoor;
  if (s == "no-frontdoor") return Ablation::NoFrontdoor;
  if (s == "alpha-zero") return Ablation::AlphaZero;
  throw ConfigError("unknown ablation '" + s + "' (expected none, no-backdoor, no-frontdoor or alpha-zero)");
}

void ModelConfig::validate() const {
  if (encoder.mode == encoder::Mode::HashedBagOfWords && encoder.dim < 8) {
    throw ConfigError("encoder dim must be >= 8");
  }
  if (n_classes < 2) throw ConfigError("need at least 2 classes");
  if (augment.latent_dim == 0 || augment.hidden_dim == 0) throw ConfigError("augment dims must be positive");
  bayes.validate();
  gnn.validate();
  fusion.validate();
}

PreparedSample prepare(const encoder::Encoder& enc, const data::Sample& s, const ModelConfig& cfg,
                       Ablation ablation, std::uint64_t seed) {
  std::vector<std::vector<float>> evidence;
  evidence.reserve(s.evidences.size());
  for (const auto& e : s.evidences) evidence.push_back(enc.encode(e));
  const auto claim = enc.encode(s.claim);
  auto g = graph::build_graph(claim, evidence);

  PreparedSample p;
  auto belief = graph::prior_weights(g);
  p.features = graph::append_prior(g, belief);
  if (ablation == Ablation::NoBackdoor) {
    auto uniform = backdoor::uniform_belief(g.num_evidence());
    uniform.prior = belief.prior;
    p.belief = std::move(uniform);
  } else {
    p.belief = backdoor::ipw_adjust(backdoor::bayes_sample_update(g, std::move(belief), cfg.bayes, seed));
  }
  p.propagation = backdoor::propagation_matrix(p.belief.adjusted);
  p.label = s.label;
  p.noise_mask = s.noise_mask;
  p.bias_token_present = s.bias_token_present;
  return p;
}

std::vector<PreparedSample> prepare_all(const encoder::Encoder& enc, const std::vector<data::Sample>& samples,
                                        const ModelConfig& cfg, Ablation ablation, std::uint64_t seed) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(prepare(enc, samples[i], cfg, ablation, derive_seed(seed, {i})));
  }
  return out;
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store(seed);
  Rng rng(derive_seed(seed, {0x1a17}));
  backdoor::init_augment_params(store, cfg.augment, cfg.feature_dim(), rng);
  backdoor::init_gnn_params(store, cfg.gnn, cfg.feature_dim(), rng);
  frontdoor::init_frontdoor_params(store, cfg.fusion, cfg.feature_dim(), cfg.n_classes, rng);
  return store;
}

std::vector<std::string> shape_mismatches(const ParamStore& expected, const ParamStore& actual) {
  std::vector<std::string> out;
  for (const auto& [name, e] : expected.entries()) {
    if (!e.trainable) continue;
    if (!actual.contains(name)) {
      out.push_back(name + " (missing)");
    } else if (actual.get(name).shape() != e.value.shape()) {
      out.push_back(name + " (expected " + ad::shape_string(e.value.shape()) + ", got " +
                    ad::shape_string(actual.get(name).shape()) + ")");
    }
  }
  for (const auto& [name, e] : actual.entries()) {
    if (e.trainable && !expected.contains(name)) out.push_back(name + " (unexpected)");
  }
  return out;
}

Forward forward(ParamBinding& params, const PreparedSample& s, const ModelConfig& cfg, Ablation ablation,
                const std::optional<Tensor>& expected_bias, Rng& rng,
                const std::vector<frontdoor::ReasoningPath>* fixed_paths) {
  if (s.features.cols() != cfg.feature_dim()) {
    throw ShapeError("sample features have width " + std::to_string(s.features.cols()) + ", model expects " +
                     std::to_string(cfg.feature_dim()));
  }
  auto anchor = params("graph.query");
  auto* tape = anchor.tape();
  auto x = tape->constant(s.features);

  Forward out;
  std::optional<Var> generated;
  const bool backdoor_on = ablation != Ablation::NoBackdoor;
  if (backdoor_on) {
    auto aug = backdoor::augment_features(params, x, cfg.augment, rng);
    generated = aug.generated;
    out.elbo = aug.elbo;
  }
  auto nodes = backdoor::gnn_forward(params, x, generated, s.propagation, cfg.gnn, !backdoor_on);
  out.graph_repr = frontdoor::encode_graph(params, nodes);

  if (ablation == Ablation::NoFrontdoor) {
    out.logits = ad::matmul(out.graph_repr, params("classifier.wc"));
    return out;
  }

  auto transitions = frontdoor::transition_matrix(params, nodes, s.belief.adjusted, cfg.fusion.transition_weight);
  if (fixed_paths) {
    out.paths = *fixed_paths;
  } else {
    out.paths = frontdoor::beam_search_paths(transitions.value().cast<double>(), cfg.fusion.max_path_len,
                                             cfg.fusion.beam);
  }
  auto path_repr = frontdoor::encode_paths(params, nodes, out.paths, transitions);
  auto fused = frontdoor::fuse(params, path_repr, out.graph_repr, cfg.fusion);
  const double alpha = ablation == Ablation::AlphaZero ? 0.0 : cfg.fusion.alpha;
  out.logits = frontdoor::classify_logits(params, fused, expected_bias, alpha);
  return out;
}

Var graph_representation(ParamBinding& params, const PreparedSample& s, const ModelConfig& cfg, Ablation ablation,
                         Rng& rng) {
  const auto mode = ablation == Ablation::NoBackdoor ? Ablation::NoBackdoor : Ablation::NoFrontdoor;
  return forward(params, s, cfg, mode, std::nullopt, rng).graph_repr;
}

Var loss(const Forward& f, std::size_t label, const ModelConfig& cfg) {
  auto ce = ad::cross_entropy(f.logits, {label});
  if (!f.elbo || cfg.elbo_weight == 0.0) return ce;
  return ad::sub(ce, ad::scale(*f.elbo, static_cast<float>(cfg.elbo_weight)));
}

std::vector<GradCheckEntry> grad_check_params(const ParamStore& params, const PreparedSample& s,
                                              const ModelConfig& cfg, Ablation ablation,
                                              const std::optional<Tensor>& expected_bias, std::uint64_t seed,
                                              double eps) {
  std::vector<frontdoor::ReasoningPath> paths;
  {
    ad::Tape<float> tape;
    ParamBinding binding(params, tape);
    Rng rng(seed);
    paths = forward(binding, s, cfg, ablation, expected_bias, rng).paths;
  }
  std::vector<GradCheckEntry> out;
  for (const auto& [name, entry] : params.entries()) {
    if (!entry.trainable) continue;
    ad::ScalarFn<float> f = [&, name = name](ad::Tape<float>& tape, const Var& x) {
      ParamBinding binding(params, tape);
      binding.bind(name, x);
      Rng rng(seed);
      return loss(forward(binding, s, cfg, ablation, expected_bias, rng, &paths), s.label, cfg);
    };
    out.push_back({name, ad::grad_check<float>(f, entry.value, eps)});
  }
  return out;
}

}  // namespace muplon::model
