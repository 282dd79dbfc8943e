// Acceptance checks, one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset. Exit status is non-zero when any
// selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "muplon/confusion.hpp"
#include "muplon/datagen.hpp"
#include "muplon/harness.hpp"
#include "support/experiments.hpp"
#include "support/grad_cases.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace muplon;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- 1: gradients -----------------------------------------------------------

harness::RunConfig tiny_model_config() {
  return harness::parse_run_config(
      "encoder.dim = 8\naugment.latent_dim = 3\naugment.hidden_dim = 6\nfusion.model_dim = 4\nfusion.heads = 2\n"
      "fusion.transition_hidden = 4\nfusion.beam = 3\nfusion.max_path_len = 3\ngnn.layers = 2\n"
      "data.min_evidence = 2\ndata.max_evidence = 4\n");
}

Outcome gradient_oracle() {
  const auto start = Clock::now();
  const double eps = 5e-3, tol = 1e-3;
  double worst = 0.0;
  std::string worst_name;
  const auto cases = testing::primitive_cases<float>();
  for (std::size_t k = 0; k < cases.size(); ++k) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(derive_seed(seed, {k}));
      auto c = cases[k].second(rng, seed);
      const double err = ad::grad_check<float>(c.fn, c.x, eps);
      if (err > worst) {
        worst = err;
        worst_name = cases[k].first;
      }
    }
  }

  // Composed loss: fresh sample, parameters and expected bias per case.
  auto cfg = tiny_model_config();
  cfg.data.n_samples = 100;
  cfg.data.n_test = 1;
  cfg.data.seed = 17;
  const auto samples = data::generate(cfg.data).train;
  const encoder::Encoder enc(cfg.model.encoder);
  double worst_e2e = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto s = model::prepare(enc, samples[i], cfg.model, model::Ablation::None, i);
    const auto params = model::init_params(cfg.model, 1000 + i);
    Rng rng(derive_seed(i, {0xeb}));
    Tensor e({1, cfg.model.fusion.model_dim});
    for (auto& v : e.storage()) v = static_cast<float>(rng.normal());
    for (const auto& r : model::grad_check_params(params, s, cfg.model, model::Ablation::None, e, i, eps)) {
      if (r.max_rel_error > worst_e2e) {
        worst_e2e = r.max_rel_error;
        if (worst_e2e > worst) worst_name = "end-to-end " + r.name;
      }
    }
  }
  const double secs = seconds_since(start);
  worst = std::max(worst, worst_e2e);
  return {worst < tol && secs < 60.0,
          std::to_string(cases.size()) + " primitives + end-to-end loss, 100 cases each; max rel error " +
              fmt("%.2e", worst) + " (" + worst_name + "), end-to-end " + fmt("%.2e", worst_e2e) + "; " +
              fmt("%.1f s", secs) + " (limit 60 s)"};
}

// --- 2: beam search -----------------------------------------------------------

Outcome beam_oracle() {
  const auto start = Clock::now();
  Rng rng(2024);
  std::size_t ok = 0;
  for (int g = 0; g < 200; ++g) {
    const std::size_t n = 2 + rng.index(7);
    const std::size_t max_len = 2 + rng.index(n);
    const auto t = testing::random_transitions(rng, n);
    const auto all = testing::exhaustive_paths(t, max_len);
    const auto got = frontdoor::beam_search_paths(t, max_len, all.size());
    if (got.size() == all.size() && testing::same_top_paths(got, all, 1e-9)) ++ok;
  }
  const double secs = seconds_since(start);
  return {ok == 200 && secs < 30.0,
          std::to_string(ok) + "/200 graphs match exhaustive top-k; " + fmt("%.2f s", secs) + " (limit 30 s)"};
}

// --- 3, 4: back-door ----------------------------------------------------------

Outcome noise_dilution() {
  const auto r = testing::noise_dilution(100, 0.3, 3);
  return {r.graphs == 100 && r.fraction() >= 0.9,
          fmt("%.0f%%", 100 * r.fraction()) + " of " + std::to_string(r.graphs) +
              " graphs weight noise below signal (need 90%); mean noise " + fmt("%.4f", r.mean_noise) +
              ", mean signal " + fmt("%.4f", r.mean_signal)};
}

Outcome oversmoothing() {
  const auto r = testing::oversmoothing(20, 4, 4);
  return {r.ratio() >= 1.5, "mean pairwise distance after 4 layers: augmented " + fmt("%.4f", r.augmented) +
                                ", plain " + fmt("%.4f", r.plain) + ", ratio " + fmt("%.2f", r.ratio()) +
                                " (need 1.5)"};
}

// --- 5, 6, 7: training runs -------------------------------------------------

struct TrainingRuns {
  std::map<model::Ablation, std::vector<double>> dev, symmetric;
  std::map<model::Ablation, double> seconds;
  std::vector<harness::KMeansSummary> kmeans;
};

harness::RunConfig experiment_config() {
  auto cfg = harness::parse_run_config("epochs = 8\nlearning_rate = 0.003\n");
  cfg.data.n_samples = 2000;
  cfg.data.rho_train = 0.9;
  cfg.data.rho_test = -0.9;
  cfg.ablation_seeds = 5;
  return cfg;
}

const TrainingRuns& training_runs() {
  static const TrainingRuns runs = [] {
    TrainingRuns r;
    const auto base = experiment_config();
    const auto corpus = harness::load_corpus(base);
    const std::vector<model::Ablation> modes{model::Ablation::None, model::Ablation::AlphaZero,
                                             model::Ablation::NoBackdoor, model::Ablation::NoFrontdoor};
    for (std::size_t s = 0; s < base.ablation_seeds; ++s) {
      for (auto mode : modes) {
        auto cfg = base;
        cfg.ablation = mode;
        cfg.seed = base.seed + s;
        const auto start = Clock::now();
        const auto res = harness::train(cfg, corpus);
        r.seconds[mode] += seconds_since(start);
        const auto& best = res.history.at(res.best_epoch - 1);
        r.dev[mode].push_back(best.dev.accuracy);
        r.symmetric[mode].push_back(best.symmetric_accuracy);
        r.kmeans.insert(r.kmeans.end(), res.kmeans.begin(), res.kmeans.end());
        std::fprintf(stderr, "  [seed %zu] %-12s dev %.4f symmetric %.4f (%.1f s)\n", s,
                     model::to_string(mode).c_str(), best.dev.accuracy, best.symmetric_accuracy, seconds_since(start));
      }
    }
    return r;
  }();
  return runs;
}

Outcome symmetric_debias() {
  const auto& r = training_runs();
  using model::Ablation;
  const double full = harness::mean(r.symmetric.at(Ablation::None));
  const double zero = harness::mean(r.symmetric.at(Ablation::AlphaZero));
  const double secs = r.seconds.at(Ablation::None) + r.seconds.at(Ablation::AlphaZero);
  const double gain = 100 * (full - zero);
  return {gain >= 5.0 && secs < 600.0,
          "symmetric accuracy full " + fmt("%.4f", full) + " vs alpha-zero " + fmt("%.4f", zero) + " = " +
              fmt("%+.2f", gain) + " points over 5 seeds (need +5); " + fmt("%.0f s", secs) + " (limit 600 s)"};
}

Outcome ablation_direction() {
  const auto& r = training_runs();
  using model::Ablation;
  const double full = harness::mean(r.dev.at(Ablation::None));
  const double nb = harness::mean(r.dev.at(Ablation::NoBackdoor));
  const double nf = harness::mean(r.dev.at(Ablation::NoFrontdoor));
  const double d_nb = 100 * (full - nb), d_nf = 100 * (full - nf);
  return {d_nb >= 1.0 && d_nf >= 1.0, "dev accuracy full " + fmt("%.4f", full) + ", no-backdoor " + fmt("%.4f", nb) +
                                          " (" + fmt("%+.2f", d_nb) + "), no-frontdoor " + fmt("%.4f", nf) + " (" +
                                          fmt("%+.2f", d_nf) + ") over 5 seeds (need +1 each)"};
}

Outcome kmeans_checks() {
  const auto& runs = training_runs().kmeans;
  std::size_t monotone = 0, converged = 0, max_iter = 0;
  for (const auto& k : runs) {
    monotone += k.wcss_non_increasing;
    converged += k.converged && k.iterations <= 100;
    max_iter = std::max(max_iter, k.iterations);
  }

  Rng rng(7);
  const std::vector<frontdoor::Point> means{{-4.0, 2.0, 0.0}, {3.0, -1.0, 5.0}};
  std::vector<frontdoor::Point> pts;
  for (const auto& m : means) {
    for (int i = 0; i < 50; ++i) {
      frontdoor::Point d{0.4 * rng.normal(), 0.4 * rng.normal(), 0.4 * rng.normal()};
      frontdoor::Point a = m, b = m;
      for (std::size_t j = 0; j < 3; ++j) {
        a[j] += d[j];
        b[j] -= d[j];
      }
      pts.push_back(a);
      pts.push_back(b);
    }
  }
  const auto blob = frontdoor::kmeans(pts, 2, 11);
  double err = 0.0;
  for (const auto& m : means) {
    double best = 1e300;
    for (const auto& c : blob.centers) {
      double d = 0;
      for (std::size_t j = 0; j < 3; ++j) d = std::max(d, std::abs(c[j] - m[j]));
      best = std::min(best, d);
    }
    err = std::max(err, best);
  }
  const bool blob_ok = err <= 1e-3 && std::is_sorted(blob.wcss_history.rbegin(), blob.wcss_history.rend());
  return {!runs.empty() && monotone == runs.size() && converged == runs.size() && blob_ok,
          std::to_string(runs.size()) + " dictionary k-means runs: " + std::to_string(monotone) +
              " WCSS non-increasing, " + std::to_string(converged) + " converged within 100 (max " +
              std::to_string(max_iter) + " iterations); 2-blob error " + fmt("%.1e", err)};
}

// --- 8: Monte Carlo -------------------------------------------------------------

Outcome monte_carlo() {
  Rng rng(8);
  frontdoor::ConfusionDictionary dict;
  const std::size_t n = 3, k = 6, d = 32;
  dict.centers = Tensor({n, k, d});
  for (auto& v : dict.centers.storage()) v = static_cast<float>(rng.normal());
  for (std::size_t c = 0; c < n; ++c) dict.class_labels.push_back(c);
  const std::size_t total = n * k;

  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t c = 0; c < total; ++c)
    for (std::size_t j = 0; j < d; ++j) mean[j] += dict.centers.storage()[c * d + j] / static_cast<double>(total);
  for (std::size_t c = 0; c < total; ++c)
    for (std::size_t j = 0; j < d; ++j)
      var[j] += std::pow(dict.centers.storage()[c * d + j] - mean[j], 2) / static_cast<double>(total);

  double all_err = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto e = frontdoor::expected_bias(dict, total, 3, seed);
    for (std::size_t j = 0; j < d; ++j) all_err = std::max(all_err, std::abs(e[j] - mean[j]));
  }

  const std::size_t m = static_cast<std::size_t>(std::ceil(n / 2.0));
  const std::size_t draws = 10000;
  const auto e = frontdoor::expected_bias(dict, m, draws, 99);
  double worst_z = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double draw_var = var[j] / static_cast<double>(m) * static_cast<double>(total - m) /
                            static_cast<double>(total - 1);
    worst_z = std::max(worst_z, std::abs(e[j] - mean[j]) / std::sqrt(draw_var / static_cast<double>(draws)));
  }
  return {all_err <= 1e-6 && worst_z <= 3.0, "M = all: max error " + fmt("%.1e", all_err) + " (limit 1e-6); M = " +
                                                 std::to_string(m) + ", T = 1e4: worst deviation " +
                                                 fmt("%.2f", worst_z) + " standard errors (limit 3)"};
}

// --- 9: ELBO -------------------------------------------------------------------

Outcome elbo_trend() {
  const auto traj = testing::elbo_trajectory(500, 1e-3, 9);
  const auto avg = testing::moving_average(traj, 10);
  std::size_t drops = 0;
  double worst = 0.0;
  for (std::size_t i = 1; i < avg.size(); ++i) {
    if (avg[i] < avg[i - 1]) {
      ++drops;
      worst = std::max(worst, avg[i - 1] - avg[i]);
    }
  }
  return {drops == 0, "augmentation objective " + fmt("%.4f", traj.front()) + " -> " + fmt("%.4f", traj.back()) +
                          " over 500 steps; " + std::to_string(drops) + " decreases of the 10-step average (largest " +
                          fmt("%.2e", worst) + ")"};
}

// --- 10: determinism ---------------------------------------------------------

Outcome determinism() {
  auto cfg = harness::parse_run_config(
      "epochs = 3\nlearning_rate = 0.003\ndata.n_samples = 120\ndata.n_test = 40\nseed = 10\ndata.seed = 10\n");
  std::vector<std::string> diffs;
  std::map<std::string, std::string> first;
  for (int run = 0; run < 2; ++run) {
    testing::TempDir dir("determinism");
    const auto corpus = data::generate(cfg.data);
    data::write_jsonl(dir / "train.jsonl", corpus.train);
    data::write_jsonl(dir / "test_iid.jsonl", corpus.test_iid);
    data::write_jsonl(dir / "test_symmetric.jsonl", corpus.test_symmetric);
    auto run_cfg = cfg;
    run_cfg.train_path = dir / "train.jsonl";
    run_cfg.dev_path = dir / "test_iid.jsonl";
    run_cfg.symmetric_path = dir / "test_symmetric.jsonl";
    run_cfg.out_dir = dir / "run";
    harness::train(run_cfg, harness::load_corpus(run_cfg));
    for (const std::string name : {"train.jsonl", "test_iid.jsonl", "test_symmetric.jsonl", "run/metrics.csv",
                                   "run/checkpoint.json", "run/checkpoint.bin"}) {
      const auto bytes = testing::read_file(dir.path() / name);
      if (run == 0) {
        first[name] = bytes;
      } else if (bytes != first[name] || bytes.empty()) {
        diffs.push_back(name);
      }
    }
  }
  std::string detail = "corpora, metrics.csv and checkpoint compared across two runs: ";
  if (diffs.empty()) return {true, detail + "byte-identical"};
  for (const auto& d : diffs) detail += d + " ";
  return {false, detail + "differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"beam-search oracle", beam_oracle},
      {"noise dilution", noise_dilution},
      {"over-smoothing mitigation", oversmoothing},
      {"symmetric debias direction", symmetric_debias},
      {"ablation direction", ablation_direction},
      {"k-means", kmeans_checks},
      {"monte carlo estimator", monte_carlo},
      {"elbo trend", elbo_trend},
      {"determinism", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const long v = std::strtol(argv[i], nullptr, 10);
    if (v < 1 || v > static_cast<long>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-%zu ...]\n", argv[0], criteria.size());
      return 2;
    }
    selected.insert(static_cast<std::size_t>(v));
  }

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s -- %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
