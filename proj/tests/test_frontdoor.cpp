#include <doctest.h>

#include <cmath>

#include "muplon/error.hpp"
#include "muplon/frontdoor.hpp"
#include "support/oracles.hpp"

using namespace muplon;
using namespace muplon::frontdoor;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t({r, c});
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line LSTM over the rows listed in `path`; gates ordered i, f, o, g.
std::vector<double> lstm_oracle(const Tensor& x, const std::vector<std::size_t>& path, const Tensor& w,
                                const Tensor& u, const Tensor& b) {
  const std::size_t h = u.rows(), d = x.cols();
  std::vector<double> hid(h, 0.0), cell(h, 0.0);
  for (auto node : path) {
    std::vector<double> z(4 * h);
    for (std::size_t k = 0; k < 4 * h; ++k) {
      double acc = b.at(0, k);
      for (std::size_t j = 0; j < d; ++j) acc += x.at(node, j) * w.at(j, k);
      for (std::size_t j = 0; j < h; ++j) acc += hid[j] * u.at(j, k);
      z[k] = acc;
    }
    for (std::size_t k = 0; k < h; ++k) {
      const double ig = sigmoid(z[k]), fg = sigmoid(z[h + k]), og = sigmoid(z[2 * h + k]), g = std::tanh(z[3 * h + k]);
      cell[k] = fg * cell[k] + ig * g;
      hid[k] = og * std::tanh(cell[k]);
    }
  }
  return hid;
}

struct Fixture {
  FusionConfig cfg;
  ParamStore store;
  std::size_t dim;

  explicit Fixture(std::size_t d, std::size_t model_dim = 8, std::size_t heads = 2) : dim(d) {
    cfg.model_dim = model_dim;
    cfg.heads = heads;
    Rng rng(5);
    init_frontdoor_params(store, cfg, d, 2, rng);
  }
};

}  // namespace

TEST_CASE("beam search matches exhaustive enumeration when the beam covers every path") {
  Rng rng(21);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.index(7);
    const std::size_t max_len = 2 + rng.index(4);
    const auto trans = testing::random_transitions(rng, n);
    const auto all = testing::exhaustive_paths(trans, max_len);
    const auto got = beam_search_paths(trans, max_len, all.size());
    INFO("n " << n << " max_len " << max_len);
    CHECK(got.size() == all.size());
    CHECK(testing::same_top_paths(got, all));
  }
}

TEST_CASE("narrow beams return valid, sorted, claim-rooted simple paths") {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng.index(6);
    const auto trans = testing::random_transitions(rng, n);
    const std::size_t beam = 1 + rng.index(3);
    const auto got = beam_search_paths(trans, 4, beam);
    CHECK(got.size() <= beam);
    CHECK(!got.empty());
    for (std::size_t i = 0; i < got.size(); ++i) {
      const auto& p = got[i];
      CHECK(p.nodes.front() == 0);
      CHECK(p.nodes.size() == std::min<std::size_t>(4, n));
      auto sorted = p.nodes;
      std::sort(sorted.begin(), sorted.end());
      CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
      if (i) CHECK(got[i - 1].log_score >= p.log_score);
    }
    // Beam 1 is the greedy walk.
    const auto greedy = beam_search_paths(trans, n, 1);
    std::size_t at = 0;
    for (std::size_t step = 1; step < n; ++step) {
      const auto next = greedy.front().nodes[step];
      for (std::size_t j = 0; j < n; ++j) {
        if (std::find(greedy.front().nodes.begin(), greedy.front().nodes.begin() + static_cast<std::ptrdiff_t>(step),
                      j) != greedy.front().nodes.begin() + static_cast<std::ptrdiff_t>(step))
          continue;
        CHECK(trans.at(at, next) >= trans.at(at, j));
      }
      at = next;
    }
  }
}

TEST_CASE("beam search small cases and errors") {
  ad::Tensor<double> two({2, 2}, 0.0);
  two.at(0, 1) = 1.0;
  two.at(1, 0) = 1.0;
  const auto p = beam_search_paths(two, 4, 3);
  REQUIRE(p.size() == 1);
  CHECK(p[0].nodes == std::vector<std::size_t>{0, 1});
  CHECK(p[0].log_score == 0.0);
  CHECK_THROWS_AS(beam_search_paths(two, 1, 3), ConfigError);
  CHECK_THROWS_AS(beam_search_paths(two, 3, 0), ConfigError);
  CHECK_THROWS_AS(beam_search_paths(ad::Tensor<double>({2, 3}, 0.5), 3, 1), ShapeError);
  FusionConfig cfg;
  cfg.max_path_len = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("transition matrices are row-stochastic with zero diagonal") {
  Rng rng(3);
  Fixture fx(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.index(6);
    std::vector<double> adj(n - 1);
    for (auto& a : adj) a = rng.uniform(0.05, 1.0);
    for (auto mode : {TransitionWeight::Current, TransitionWeight::Target}) {
      ad::Tape<float> tape;
      ParamBinding p(fx.store, tape);
      auto tr = transition_matrix(p, tape.constant(random_tensor(rng, n, 5)), adj, mode);
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) CHECK(tr.value().at(i, j) == 0.0f);
          CHECK(tr.value().at(i, j) >= 0.0f);
          row += tr.value().at(i, j);
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("uniform scores give uniform transitions and ln 3 path costs") {
  ad::Tape<float> tape;
  auto scores = tape.constant(Tensor({16, 1}, 0.7f));
  auto tr = transition_from_scores(scores, std::vector<double>(3, 0.4), TransitionWeight::Current);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(tr.value().at(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 3.0));
  ad::Tensor<double> t = tr.value().cast<double>();
  const auto paths = beam_search_paths(t, 2, 3);
  REQUIRE(paths.size() == 3);
  for (const auto& p : paths) CHECK(p.log_score == doctest::Approx(-std::log(3.0)).epsilon(1e-6));
  CHECK(paths[0].nodes == std::vector<std::size_t>{0, 1});
}

TEST_CASE("adding a constant to a row of scores leaves the transitions unchanged") {
  Rng rng(9);
  const std::size_t n = 5;
  std::vector<double> adj(n - 1);
  for (auto& a : adj) a = rng.uniform(0.1, 1.0);
  const auto base = random_tensor(rng, n * n, 1);
  auto shifted = base;
  for (std::size_t j = 0; j < n; ++j) shifted[2 * n + j] += 3.0f;
  ad::Tape<float> tape;
  auto a = transition_from_scores(tape.constant(base), adj, TransitionWeight::Current);
  auto b = transition_from_scores(tape.constant(shifted), adj, TransitionWeight::Current);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) CHECK(a.value().at(i, j) == doctest::Approx(b.value().at(i, j)).epsilon(1e-5));
}

TEST_CASE("path encoder against a hand-unrolled recurrence") {
  Rng rng(4);
  Fixture fx(3, 4, 2);
  const auto x = random_tensor(rng, 4, 3);
  const auto& w = fx.store.get("path.lstm.w");
  const auto& u = fx.store.get("path.lstm.u");
  const auto& b = fx.store.get("path.lstm.b");

  const ReasoningPath p1{{0, 2, 1}, -0.5};
  const ReasoningPath p2{{0, 3}, -1.5};
  const auto h1 = lstm_oracle(x, p1.nodes, w, u, b);
  const auto h2 = lstm_oracle(x, p2.nodes, w, u, b);

  SUBCASE("single path returns its final hidden state") {
    ad::Tape<float> tape;
    ParamBinding p(fx.store, tape);
    auto out = encode_paths(p, tape.constant(x), {p1}, std::nullopt);
    for (std::size_t k = 0; k < 4; ++k) CHECK(out.value().at(0, k) == doctest::Approx(h1[k]).epsilon(1e-5));
  }
  SUBCASE("identical paths reduce to one") {
    ad::Tape<float> tape;
    ParamBinding p(fx.store, tape);
    auto one = encode_paths(p, tape.constant(x), {p1}, std::nullopt);
    auto three = encode_paths(p, tape.constant(x), {p1, p1, p1}, std::nullopt);
    for (std::size_t k = 0; k < 4; ++k) CHECK(three.value().at(0, k) == doctest::Approx(one.value().at(0, k)));
  }
  SUBCASE("paths mix with softmax of their scores") {
    ad::Tape<float> tape;
    ParamBinding p(fx.store, tape);
    auto out = encode_paths(p, tape.constant(x), {p2, p1}, std::nullopt);
    const double w1 = 1.0 / (1.0 + std::exp(-1.5 + 0.5));
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(out.value().at(0, k) == doctest::Approx(w1 * h1[k] + (1 - w1) * h2[k]).epsilon(1e-5));
    }
  }
  SUBCASE("scores can come from a transition matrix") {
    ad::Tape<float> tape;
    ParamBinding p(fx.store, tape);
    const auto trans = Tensor::matrix(4, 4, {0, .5f, .25f, .25f, .2f, 0, .4f, .4f, .1f, .6f, 0, .3f, .3f, .3f, .4f, 0});
    auto out = encode_paths(p, tape.constant(x), {p1, p2}, tape.constant(trans));
    const double s1 = std::log(0.25) + std::log(0.6), s2 = std::log(0.25);
    const double w1 = std::exp(s1) / (std::exp(s1) + std::exp(s2));
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(out.value().at(0, k) == doctest::Approx(w1 * h1[k] + (1 - w1) * h2[k]).epsilon(1e-5));
    }
  }
  SUBCASE("no paths is an error") {
    ad::Tape<float> tape;
    ParamBinding p(fx.store, tape);
    CHECK_THROWS_AS(encode_paths(p, tape.constant(x), {}, std::nullopt), ShapeError);
  }
}

TEST_CASE("graph encoder pools with softmax attention") {
  Rng rng(6);
  Fixture fx(3, 4, 2);
  const auto x = random_tensor(rng, 5, 3);
  const auto& q = fx.store.get("graph.query");
  const auto& proj = fx.store.get("graph.proj");
  std::vector<double> s(5);
  double z = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    double a = 0;
    for (std::size_t j = 0; j < 3; ++j) a += x.at(i, j) * q.at(j, 0);
    s[i] = std::exp(a / std::sqrt(3.0));
    z += s[i];
  }
  std::vector<double> pooled(3, 0.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) pooled[j] += s[i] / z * x.at(i, j);
  ad::Tape<float> tape;
  ParamBinding p(fx.store, tape);
  auto out = encode_graph(p, tape.constant(x));
  REQUIRE(out.cols() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    double want = 0;
    for (std::size_t j = 0; j < 3; ++j) want += pooled[j] * proj.at(j, k);
    CHECK(out.value().at(0, k) == doctest::Approx(want).epsilon(1e-5));
  }
}

TEST_CASE("fusion hand cases") {
  Fixture fx(3, 4, 2);
  const auto xr = Tensor::matrix(1, 4, {0.1f, -0.2f, 0.3f, 0.4f});
  const auto xg = Tensor::matrix(1, 4, {1.0f, 2.0f, -1.0f, 0.5f});
  const auto eye = Tensor::matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});

  SUBCASE("zero output projection leaves the residual") {
    fx.store.mutable_value("fuse.wo") = Tensor({4, 4}, 0.0f);
    ad::Tape<float> tape;
    ParamBinding p(fx.store, tape);
    auto out = fuse(p, tape.constant(xr), tape.constant(xg), fx.cfg);
    CHECK(out.value() == xr);
  }
  SUBCASE("identity value and output maps add the graph vector") {
    fx.store.mutable_value("fuse.wo") = eye;
    fx.store.mutable_value("fuse.wv") = eye;
    ad::Tape<float> tape;
    ParamBinding p(fx.store, tape);
    auto out = fuse(p, tape.constant(xr), tape.constant(xg), fx.cfg);
    for (std::size_t k = 0; k < 4; ++k) CHECK(out.value().at(0, k) == doctest::Approx(xr.at(0, k) + xg.at(0, k)));
  }
  SUBCASE("heads must divide the model width") {
    FusionConfig bad = fx.cfg;
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("debiased classifier hand example") {
  Fixture fx(3, 2, 1);
  fx.store.mutable_value("classifier.wc") = Tensor::matrix(2, 2, {1, 0, 0, 1});
  fx.store.mutable_value("classifier.wg") = Tensor::matrix(2, 2, {2, 0, 0, 1});
  ad::Tape<float> tape;
  ParamBinding p(fx.store, tape);
  auto m = tape.constant(Tensor::matrix(1, 2, {1.0f, 2.0f}));
  const Tensor e = Tensor::matrix(1, 2, {1.0f, 1.0f});
  auto plain = classify_logits(p, m, std::nullopt, 0.5);
  CHECK(plain.value() == Tensor::matrix(1, 2, {1.0f, 2.0f}));
  auto zero = classify_logits(p, m, e, 0.0);
  CHECK(zero.value() == plain.value());
  auto debiased = classify_logits(p, m, e, 0.5);
  CHECK(debiased.value().at(0, 0) == doctest::Approx(0.0));
  CHECK(debiased.value().at(0, 1) == doctest::Approx(1.5));
}
