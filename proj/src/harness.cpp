#include "muplon/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "muplon/confusion.hpp"
#include "muplon/error.hpp"

namespace muplon::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const char* const kExpectedBiasBuffer = "debias.expected_bias";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("integer out of range: '" + v + "'");
  }
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return d;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  auto sz = [](std::size_t RunConfig::*field) {
    return [field](RunConfig& c, const std::string& v) { c.*field = parse_uint(v); };
  };
  static const std::map<std::string, Setter> table{
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_uint(v); }},
      {"epochs", sz(&RunConfig::epochs)},
      {"batch_size", sz(&RunConfig::batch_size)},
      {"warmup_epochs", sz(&RunConfig::warmup_epochs)},
      {"ablation_seeds", sz(&RunConfig::ablation_seeds)},
      {"ablation", [](RunConfig& c, const std::string& v) { c.ablation = model::parse_ablation(v); }},
      {"learning_rate", [](RunConfig& c, const std::string& v) { c.optimizer.learning_rate = parse_double(v); }},
      {"optimizer",
       [](RunConfig& c, const std::string& v) {
         if (v == "adam") {
           c.optimizer.kind = OptimizerKind::Adam;
         } else if (v == "sgd") {
           c.optimizer.kind = OptimizerKind::Sgd;
         } else {
           throw ConfigError("optimizer must be adam or sgd, got '" + v + "'");
         }
       }},
      {"n_classes",
       [](RunConfig& c, const std::string& v) {
         c.model.n_classes = parse_uint(v);
         c.data.n_classes = c.model.n_classes;
       }},
      {"elbo_weight", [](RunConfig& c, const std::string& v) { c.model.elbo_weight = parse_double(v); }},
      {"encoder.mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "hashed") {
           c.model.encoder.mode = encoder::Mode::HashedBagOfWords;
         } else if (v == "embedding-file") {
           c.model.encoder.mode = encoder::Mode::EmbeddingFile;
         } else {
           throw ConfigError("encoder.mode must be hashed or embedding-file, got '" + v + "'");
         }
       }},
      {"encoder.dim", [](RunConfig& c, const std::string& v) { c.model.encoder.dim = parse_uint(v); }},
      {"encoder.hash_seed", [](RunConfig& c, const std::string& v) { c.model.encoder.hash_seed = parse_uint(v); }},
      {"encoder.embedding_file", [](RunConfig& c, const std::string& v) { c.model.encoder.embedding_file = v; }},
      {"bayes.fanin_cap", [](RunConfig& c, const std::string& v) { c.model.bayes.fanin_cap = parse_uint(v); }},
      {"bayes.variance_tolerance",
       [](RunConfig& c, const std::string& v) { c.model.bayes.variance_tolerance = parse_double(v); }},
      {"bayes.posterior_clamp",
       [](RunConfig& c, const std::string& v) { c.model.bayes.posterior_clamp = parse_double(v); }},
      {"augment.latent_dim", [](RunConfig& c, const std::string& v) { c.model.augment.latent_dim = parse_uint(v); }},
      {"augment.hidden_dim", [](RunConfig& c, const std::string& v) { c.model.augment.hidden_dim = parse_uint(v); }},
      {"augment.divergence_weight",
       [](RunConfig& c, const std::string& v) { c.model.augment.divergence_weight = parse_double(v); }},
      {"gnn.layers", [](RunConfig& c, const std::string& v) { c.model.gnn.layers = parse_uint(v); }},
      {"gnn.mix_init",
       [](RunConfig& c, const std::string& v) { c.model.gnn.mix_init = static_cast<float>(parse_double(v)); }},
      {"fusion.model_dim", [](RunConfig& c, const std::string& v) { c.model.fusion.model_dim = parse_uint(v); }},
      {"fusion.heads", [](RunConfig& c, const std::string& v) { c.model.fusion.heads = parse_uint(v); }},
      {"fusion.alpha", [](RunConfig& c, const std::string& v) { c.model.fusion.alpha = parse_double(v); }},
      {"fusion.mc_draws", [](RunConfig& c, const std::string& v) { c.model.fusion.mc_draws = parse_uint(v); }},
      {"fusion.draw_size", [](RunConfig& c, const std::string& v) { c.model.fusion.draw_size = parse_uint(v); }},
      {"fusion.beam", [](RunConfig& c, const std::string& v) { c.model.fusion.beam = parse_uint(v); }},
      {"fusion.max_path_len", [](RunConfig& c, const std::string& v) { c.model.fusion.max_path_len = parse_uint(v); }},
      {"fusion.transition_hidden",
       [](RunConfig& c, const std::string& v) { c.model.fusion.transition_hidden = parse_uint(v); }},
      {"fusion.transition_weight",
       [](RunConfig& c, const std::string& v) {
         if (v == "current") {
           c.model.fusion.transition_weight = frontdoor::TransitionWeight::Current;
         } else if (v == "target") {
           c.model.fusion.transition_weight = frontdoor::TransitionWeight::Target;
         } else {
           throw ConfigError("fusion.transition_weight must be current or target, got '" + v + "'");
         }
       }},
      {"data.n_samples", [](RunConfig& c, const std::string& v) { c.data.n_samples = parse_uint(v); }},
      {"data.n_test", [](RunConfig& c, const std::string& v) { c.data.n_test = parse_uint(v); }},
      {"data.min_evidence", [](RunConfig& c, const std::string& v) { c.data.min_evidence = parse_uint(v); }},
      {"data.max_evidence", [](RunConfig& c, const std::string& v) { c.data.max_evidence = parse_uint(v); }},
      {"data.noise_fraction", [](RunConfig& c, const std::string& v) { c.data.noise_fraction = parse_double(v); }},
      {"data.bias_token", [](RunConfig& c, const std::string& v) { c.data.bias_token = v; }},
      {"data.rho_train", [](RunConfig& c, const std::string& v) { c.data.rho_train = parse_double(v); }},
      {"data.rho_test", [](RunConfig& c, const std::string& v) { c.data.rho_test = parse_double(v); }},
      {"data.vocab_size", [](RunConfig& c, const std::string& v) { c.data.vocab_size = parse_uint(v); }},
      {"data.seed", [](RunConfig& c, const std::string& v) { c.data.seed = parse_uint(v); }},
      {"train_path", [](RunConfig& c, const std::string& v) { c.train_path = v; }},
      {"dev_path", [](RunConfig& c, const std::string& v) { c.dev_path = v; }},
      {"symmetric_path", [](RunConfig& c, const std::string& v) { c.symmetric_path = v; }},
      {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

bool is_finite_tensor(const Tensor& t) {
  for (float v : t.storage())
    if (!std::isfinite(v)) return false;
  return true;
}

std::size_t argmax(const Tensor& row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

std::uint64_t eval_seed(const ParamStore& params, std::size_t i) { return derive_seed(params.seed(), {0xe5a1, i}); }

std::optional<Tensor> build_expected_bias(const ParamStore& params, const RunConfig& cfg,
                                          const std::vector<model::PreparedSample>& train,
                                          std::vector<frontdoor::KMeansResult>* stats) {
  const std::size_t n = cfg.model.n_classes;
  std::vector<bool> seen(n, false);
  for (const auto& s : train) seen[s.label] = true;
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) return std::nullopt;

  std::vector<std::vector<float>> reprs;
  std::vector<std::size_t> labels;
  reprs.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    ad::Tape<float> tape;
    ParamBinding binding(params, tape);
    Rng rng(eval_seed(params, i));
    auto g = model::graph_representation(binding, train[i], cfg.model, cfg.ablation, rng);
    reprs.emplace_back(g.value().storage().begin(), g.value().storage().end());
    labels.push_back(train[i].label);
  }
  const auto dict = frontdoor::build_confusion_dictionary(reprs, labels, n, derive_seed(params.seed(), {0xd1c7}), 0, stats);
  const std::size_t m =
      cfg.model.fusion.draw_size > 0 ? cfg.model.fusion.draw_size : frontdoor::default_draw_size(n);
  const auto e = frontdoor::expected_bias(dict, m, cfg.model.fusion.mc_draws, derive_seed(params.seed(), {0x3c}));
  Tensor out({1, e.size()});
  for (std::size_t j = 0; j < e.size(); ++j) out[j] = static_cast<float>(e[j]);
  return out;
}

bool uses_dictionary(model::Ablation a) { return a == model::Ablation::None || a == model::Ablation::NoBackdoor; }

nlohmann::json checkpoint_meta(const RunConfig& cfg, std::size_t epoch) {
  return {{"epoch", epoch},
          {"ablation", model::to_string(cfg.ablation)},
          {"n_classes", cfg.model.n_classes},
          {"feature_dim", cfg.model.feature_dim()},
          {"model_dim", cfg.model.fusion.model_dim}};
}

double evaluate_accuracy(const ParamStore& params, const RunConfig& cfg,
                         const std::vector<model::PreparedSample>& samples) {
  if (samples.empty()) return kNaN;
  const auto pred = predict(params, cfg, samples);
  std::vector<std::size_t> truth;
  for (const auto& s : samples) truth.push_back(s.label);
  return accuracy(truth, pred);
}

Metrics evaluate_prepared(const ParamStore& params, const RunConfig& cfg,
                          const std::vector<model::PreparedSample>& samples,
                          const std::vector<model::PreparedSample>& symmetric) {
  if (samples.empty()) throw ConfigError("cannot evaluate an empty corpus");
  const auto start = std::chrono::steady_clock::now();
  Metrics m;
  const auto pred = predict(params, cfg, samples);
  std::vector<std::size_t> truth;
  for (const auto& s : samples) truth.push_back(s.label);
  m.accuracy = accuracy(truth, pred);
  m.macro_f1 = macro_f1(truth, pred);
  m.dilution_ratio = dilution_ratio(samples);
  m.bias_gap = symmetric.empty() ? kNaN : m.accuracy - evaluate_accuracy(params, cfg, symmetric);
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  data.validate();
  if (model.n_classes != data.n_classes) throw ConfigError("model and data class counts differ");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(optimizer.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (ablation_seeds == 0) throw ConfigError("ablation_seeds must be >= 1");
  for (const auto* p : {&train_path, &dev_path, &symmetric_path}) {
    if (!p->empty() && !std::filesystem::exists(*p)) throw IoError("corpus file not found: " + p->string());
  }
  if (train_path.empty() != dev_path.empty()) throw ConfigError("train_path and dev_path must be given together");
  if (model.encoder.mode == encoder::Mode::EmbeddingFile && !std::filesystem::exists(model.encoder.embedding_file)) {
    throw IoError("embedding file not found: " + model.encoder.embedding_file.string());
  }
}

RunConfig parse_run_config(const std::string& text, RunConfig base, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::move(base), path.string());
}

Corpus load_corpus(const RunConfig& cfg) {
  Corpus c;
  if (!cfg.train_path.empty()) {
    c.train = data::load_jsonl(cfg.train_path, cfg.model.n_classes);
    c.dev = data::load_jsonl(cfg.dev_path, cfg.model.n_classes);
    if (!cfg.symmetric_path.empty()) c.symmetric = data::load_jsonl(cfg.symmetric_path, cfg.model.n_classes);
    return c;
  }
  auto gen = data::generate(cfg.data);
  c.train = std::move(gen.train);
  c.dev = std::move(gen.test_iid);
  c.symmetric = std::move(gen.test_symmetric);
  return c;
}

double accuracy(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred) {
  if (truth.size() != pred.size()) throw ShapeError("accuracy: size mismatch");
  if (truth.empty()) return kNaN;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double macro_f1(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred) {
  if (truth.size() != pred.size()) throw ShapeError("macro_f1: size mismatch");
  if (truth.empty()) return kNaN;
  std::set<std::size_t> classes(truth.begin(), truth.end());
  classes.insert(pred.begin(), pred.end());
  double total = 0.0;
  for (auto c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == c && truth[i] == c) tp += 1;
      if (pred[i] == c && truth[i] != c) fp += 1;
      if (pred[i] != c && truth[i] == c) fn += 1;
    }
    total += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  return total / static_cast<double>(classes.size());
}

double dilution_ratio(const std::vector<model::PreparedSample>& samples) {
  double noise = 0, n_noise = 0, signal = 0, n_signal = 0;
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.belief.adjusted.size(); ++i) {
      if (i < s.noise_mask.size() && s.noise_mask[i]) {
        noise += s.belief.adjusted[i];
        n_noise += 1;
      } else {
        signal += s.belief.adjusted[i];
        n_signal += 1;
      }
    }
  }
  if (n_noise == 0 || n_signal == 0 || signal == 0) return kNaN;
  return (noise / n_noise) / (signal / n_signal);
}

std::optional<Tensor> stored_expected_bias(const ParamStore& params) {
  if (!params.contains(kExpectedBiasBuffer)) return std::nullopt;
  return params.get(kExpectedBiasBuffer);
}

std::vector<std::size_t> predict(const ParamStore& params, const RunConfig& cfg,
                                 const std::vector<model::PreparedSample>& samples) {
  const auto e = stored_expected_bias(params);
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ad::Tape<float> tape;
    ParamBinding binding(params, tape);
    Rng rng(eval_seed(params, i));
    auto f = model::forward(binding, samples[i], cfg.model, cfg.ablation, e, rng);
    out.push_back(argmax(f.logits.value()));
  }
  return out;
}

void check_compatible(const ParamStore& params, const RunConfig& cfg) {
  const auto bad = model::shape_mismatches(model::init_params(cfg.model, params.seed()), params);
  if (bad.empty()) return;
  std::string msg = "checkpoint does not match config:";
  for (const auto& b : bad) msg += " " + b + ";";
  msg.pop_back();
  throw ConfigError(msg);
}

Metrics evaluate(const ParamStore& params, const RunConfig& cfg, const std::vector<data::Sample>& samples,
                 const std::vector<data::Sample>& symmetric) {
  if (samples.empty()) throw ConfigError("cannot evaluate an empty corpus");
  check_compatible(params, cfg);
  const encoder::Encoder enc(cfg.model.encoder);
  const auto prep = model::prepare_all(enc, samples, cfg.model, cfg.ablation, derive_seed(cfg.seed, {2}));
  const auto sym = model::prepare_all(enc, symmetric, cfg.model, cfg.ablation, derive_seed(cfg.seed, {3}));
  return evaluate_prepared(params, cfg, prep, sym);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string metrics_csv_header() {
  return "schema_version,epoch,train_loss,accuracy,macro_f1,dilution_ratio,symmetric_accuracy,bias_gap";
}

TrainResult train(const RunConfig& cfg, const Corpus& corpus) {
  cfg.validate();
  if (corpus.train.empty()) throw ConfigError("training corpus is empty");
  if (corpus.dev.empty()) throw ConfigError("dev corpus is empty");
  const encoder::Encoder enc(cfg.model.encoder);
  const auto train_set = model::prepare_all(enc, corpus.train, cfg.model, cfg.ablation, derive_seed(cfg.seed, {1}));
  const auto dev_set = model::prepare_all(enc, corpus.dev, cfg.model, cfg.ablation, derive_seed(cfg.seed, {2}));
  const auto sym_set =
      model::prepare_all(enc, corpus.symmetric, cfg.model, cfg.ablation, derive_seed(cfg.seed, {3}));

  ParamStore params = model::init_params(cfg.model, cfg.seed);
  Optimizer opt(cfg.optimizer);
  TrainResult result;
  double best_acc = -1.0;

  const bool write = !cfg.out_dir.empty();
  std::ofstream metrics_out, timing_out;
  if (write) {
    std::filesystem::create_directories(cfg.out_dir);
    metrics_out = open_out(cfg.out_dir / "metrics.csv");
    timing_out = open_out(cfg.out_dir / "timing.csv");
    metrics_out << metrics_csv_header() << '\n';
    timing_out << "epoch,seconds\n";
  }

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(cfg.seed, {0x5f, epoch}));
    shuffle_rng.shuffle(order);
    const auto e = stored_expected_bias(params);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      GradientMap grads;
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t i = order[k];
        ad::Tape<float> tape;
        ParamBinding binding(params, tape);
        Rng rng(derive_seed(cfg.seed, {0x7a, epoch, i}));
        auto f = model::forward(binding, train_set[i], cfg.model, cfg.ablation, e, rng);
        auto l = model::loss(f, train_set[i].label, cfg.model);
        const double lv = l.item();
        if (!std::isfinite(lv)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " + std::to_string(i) +
                             (write ? "; last good checkpoint kept in " + cfg.out_dir.string() : ""));
        }
        loss_sum += lv;
        tape.backward(l);
        binding.collect(grads);
      }
      for (const auto& [name, g] : grads) {
        if (!is_finite_tensor(g)) {
          throw NumericError("non-finite gradient for " + name + " at epoch " + std::to_string(epoch));
        }
      }
      opt.step(params, grads, 1.0 / static_cast<double>(end - b));
    }

    if (epoch >= cfg.warmup_epochs && uses_dictionary(cfg.ablation)) {
      std::vector<frontdoor::KMeansResult> stats;
      if (auto built = build_expected_bias(params, cfg, train_set, &stats)) params.assign(kExpectedBiasBuffer, *built);
      for (std::size_t c = 0; c < stats.size(); ++c) {
        const auto& h = stats[c].wcss_history;
        result.kmeans.push_back({epoch, c, stats[c].iterations, stats[c].converged,
                                 std::is_sorted(h.rbegin(), h.rend())});
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.dev = evaluate_prepared(params, cfg, dev_set, sym_set);
    rec.symmetric_accuracy = sym_set.empty() ? kNaN : evaluate_accuracy(params, cfg, sym_set);
    rec.dev.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);

    if (rec.dev.accuracy > best_acc) {
      best_acc = rec.dev.accuracy;
      result.best = params;
      result.best_epoch = epoch;
      if (write) {
        params.save(cfg.out_dir / "checkpoint.json", cfg.out_dir / "checkpoint.bin", checkpoint_meta(cfg, epoch));
      }
    }
    if (write) {
      metrics_out << kMetricsSchemaVersion << ',' << epoch << ',' << format_number(rec.train_loss) << ','
                  << format_number(rec.dev.accuracy) << ',' << format_number(rec.dev.macro_f1) << ','
                  << format_number(rec.dev.dilution_ratio) << ',' << format_number(rec.symmetric_accuracy) << ','
                  << format_number(rec.dev.bias_gap) << '\n';
      metrics_out.flush();
      timing_out << epoch << ',' << format_number(rec.dev.seconds) << '\n';
      timing_out.flush();
    }
  }
  if (result.history.empty()) result.best = params;
  return result;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<AblationCell> ablate(const RunConfig& cfg, const Corpus& corpus,
                                 const std::vector<model::Ablation>& modes) {
  std::vector<AblationCell> cells;
  for (auto mode : modes) cells.push_back(AblationCell{mode, {}, {}});
  for (std::size_t s = 0; s < cfg.ablation_seeds; ++s) {
    for (auto& cell : cells) {
      RunConfig run = cfg;
      run.ablation = cell.mode;
      run.seed = cfg.seed + s;
      run.out_dir.clear();
      const auto res = train(run, corpus);
      const auto& best = res.history.at(res.best_epoch - 1);
      cell.dev_accuracy.push_back(best.dev.accuracy);
      cell.symmetric_accuracy.push_back(best.symmetric_accuracy);
    }
  }
  return cells;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationCell>& cells) {
  auto out = open_out(path);
  out << "schema_version,mode,seeds,dev_accuracy_mean,dev_accuracy_std,symmetric_accuracy_mean,"
         "symmetric_accuracy_std\n";
  for (const auto& c : cells) {
    out << kMetricsSchemaVersion << ',' << model::to_string(c.mode) << ',' << c.dev_accuracy.size() << ','
        << format_number(mean(c.dev_accuracy)) << ',' << format_number(stddev(c.dev_accuracy)) << ','
        << format_number(mean(c.symmetric_accuracy)) << ',' << format_number(stddev(c.symmetric_accuracy))
        << '\n';
  }
}

}  // namespace muplon::harness
