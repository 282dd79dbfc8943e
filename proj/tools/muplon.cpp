#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "muplon/datagen.hpp"
#include "muplon/error.hpp"
#include "muplon/harness.hpp"
#include "muplon/model.hpp"

namespace fs = std::filesystem;
using namespace muplon;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string ablation;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_ablation) {
  cmd->add_option("--config", f.config, "key = value run configuration");
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--out", f.out, "output directory");
  if (with_ablation) cmd->add_option("--ablation", f.ablation, "none | no-backdoor | no-frontdoor | alpha-zero");
}

harness::RunConfig resolve(const CommonFlags& f) {
  harness::RunConfig cfg;
  if (!f.config.empty()) cfg = harness::load_run_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.ablation.empty()) cfg.ablation = model::parse_ablation(f.ablation);
  if (!f.out.empty()) cfg.out_dir = f.out;
  return cfg;
}

fs::path require_out(const harness::RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("--out (or out_dir) is required");
  fs::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

int cmd_gen_data(const CommonFlags& f) {
  auto cfg = resolve(f);
  if (f.seed) cfg.data.seed = *f.seed;
  const auto out = require_out(cfg);
  const auto corpus = data::generate(cfg.data);
  data::write_jsonl(out / "train.jsonl", corpus.train);
  data::write_jsonl(out / "test_iid.jsonl", corpus.test_iid);
  data::write_jsonl(out / "test_symmetric.jsonl", corpus.test_symmetric);
  std::printf("wrote %zu train, %zu iid, %zu symmetric samples to %s\n", corpus.train.size(), corpus.test_iid.size(),
              corpus.test_symmetric.size(), out.string().c_str());
  std::printf("bias correlation: train %.3f, iid %.3f, symmetric %.3f\n",
              data::bias_label_correlation(corpus.train), data::bias_label_correlation(corpus.test_iid),
              data::bias_label_correlation(corpus.test_symmetric));
  return 0;
}

int cmd_train(const CommonFlags& f) {
  auto cfg = resolve(f);
  require_out(cfg);
  const auto res = harness::train(cfg, harness::load_corpus(cfg));
  for (const auto& r : res.history) {
    std::printf("epoch %zu  loss %.4f  dev acc %.4f  f1 %.4f  sym acc %s  dilution %s\n", r.epoch, r.train_loss,
                r.dev.accuracy, r.dev.macro_f1, harness::format_number(r.symmetric_accuracy).c_str(),
                harness::format_number(r.dev.dilution_ratio).c_str());
  }
  std::printf("best epoch %zu, checkpoint in %s\n", res.best_epoch, cfg.out_dir.string().c_str());
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint) {
  auto cfg = resolve(f);
  fs::path manifest = checkpoint;
  if (fs::is_directory(manifest)) manifest /= "checkpoint.json";
  fs::path blob = manifest;
  blob.replace_extension(".bin");
  const auto params = ParamStore::load(manifest, blob);
  const auto corpus = harness::load_corpus(cfg);
  const auto m = harness::evaluate(params, cfg, corpus.dev, corpus.symmetric);
  std::printf("accuracy %.4f  macro_f1 %.4f  dilution %s  bias_gap %s\n", m.accuracy, m.macro_f1,
              harness::format_number(m.dilution_ratio).c_str(), harness::format_number(m.bias_gap).c_str());
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (cfg.out_dir / "metrics.csv").string());
    const double sym = std::isnan(m.bias_gap) ? m.bias_gap : m.accuracy - m.bias_gap;
    out << harness::metrics_csv_header() << '\n'
        << harness::kMetricsSchemaVersion << ",eval,nan," << harness::format_number(m.accuracy) << ','
        << harness::format_number(m.macro_f1) << ',' << harness::format_number(m.dilution_ratio) << ','
        << harness::format_number(sym) << ',' << harness::format_number(m.bias_gap) << '\n';
  }
  return 0;
}

int cmd_ablate(const CommonFlags& f, const std::vector<std::string>& mode_names) {
  auto cfg = resolve(f);
  const auto out = require_out(cfg);
  std::vector<model::Ablation> modes{model::Ablation::None, model::Ablation::NoBackdoor,
                                     model::Ablation::NoFrontdoor};
  if (!mode_names.empty()) {
    modes.clear();
    for (const auto& m : mode_names) modes.push_back(model::parse_ablation(m));
  }
  const auto cells = harness::ablate(cfg, harness::load_corpus(cfg), modes);
  harness::write_ablation_csv(out / "ablation.csv", cells);
  for (const auto& c : cells) {
    std::printf("%-13s dev %.4f +- %.4f   symmetric %.4f +- %.4f\n", model::to_string(c.mode).c_str(),
                harness::mean(c.dev_accuracy), harness::stddev(c.dev_accuracy), harness::mean(c.symmetric_accuracy),
                harness::stddev(c.symmetric_accuracy));
  }
  return 0;
}

int cmd_grad_check(const CommonFlags& f, double eps, double tol) {
  auto cfg = resolve(f);
  data::GenConfig gen = cfg.data;
  gen.n_samples = 1;
  gen.n_test = 1;
  const auto corpus = data::generate(gen);
  const encoder::Encoder enc(cfg.model.encoder);
  const auto sample = model::prepare(enc, corpus.train.front(), cfg.model, cfg.ablation, cfg.seed);
  const auto params = model::init_params(cfg.model, cfg.seed);
  std::optional<Tensor> e;
  if (cfg.ablation == model::Ablation::None || cfg.ablation == model::Ablation::NoBackdoor) {
    Rng rng(derive_seed(cfg.seed, {0xeb}));
    Tensor t({1, cfg.model.fusion.model_dim});
    for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
    e = t;
  }
  const auto report = model::grad_check_params(params, sample, cfg.model, cfg.ablation, e, cfg.seed, eps);
  double worst = 0.0;
  for (const auto& r : report) {
    std::printf("%-24s %.3e\n", r.name.c_str(), r.max_rel_error);
    worst = std::max(worst, r.max_rel_error);
  }
  std::printf("max relative error %.3e (tolerance %.1e)\n", worst, tol);
  if (!(worst < tol)) throw NumericError("gradient check failed: max relative error " + std::to_string(worst));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"muplon: claim verification with back-door and front-door debiasing"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, ablate_f, grad_f;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic corpus as JSONL");
  add_common(gen, gen_f, false);
  auto* tr = app.add_subcommand("train", "train a model and write checkpoint and metrics");
  add_common(tr, train_f, true);
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the dev and symmetric splits");
  add_common(ev, eval_f, true);
  std::string checkpoint;
  ev->add_option("--checkpoint", checkpoint, "checkpoint directory or manifest")->required();
  auto* ab = app.add_subcommand("ablate", "ablation table over seeds");
  add_common(ab, ablate_f, false);
  std::vector<std::string> mode_names;
  ab->add_option("--modes", mode_names, "ablation modes to compare (default: none no-backdoor no-frontdoor)");
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the end-to-end loss");
  add_common(gc, grad_f, true);
  double eps = 5e-3, tol = 1e-3;
  gc->add_option("--eps", eps, "finite-difference step");
  gc->add_option("--tolerance", tol, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_f);
    if (*tr) return cmd_train(train_f);
    if (*ev) return cmd_eval(eval_f, checkpoint);
    if (*ab) return cmd_ablate(ablate_f, mode_names);
    if (*gc) return cmd_grad_check(grad_f, eps, tol);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.category().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
