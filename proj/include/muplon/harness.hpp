#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "muplon/datagen.hpp"
#include "muplon/model.hpp"
#include "muplon/param_store.hpp"

namespace muplon::harness {

inline constexpr int kMetricsSchemaVersion = 1;

struct RunConfig {
  model::ModelConfig model;
  OptimizerConfig optimizer;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::size_t warmup_epochs = 1;  // epochs trained before the first dictionary build
  std::size_t ablation_seeds = 5;
  model::Ablation ablation = model::Ablation::None;
  std::uint64_t seed = 0;

  // Synthetic corpus used when no corpus files are given.
  data::GenConfig data;
  std::filesystem::path train_path;
  std::filesystem::path dev_path;
  std::filesystem::path symmetric_path;
  std::filesystem::path out_dir;

  void validate() const;
};

// `key = value` lines; '#' starts a comment. Unknown keys, malformed values
// and duplicate keys are ConfigErrors naming the line.
RunConfig parse_run_config(const std::string& text, RunConfig base = {}, const std::string& origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double dilution_ratio = 0.0;  // NaN when the split has no annotated noise
  double bias_gap = 0.0;        // NaN without a symmetric split
  double seconds = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  Metrics dev;
  double symmetric_accuracy = 0.0;  // NaN without a symmetric split
};

struct Corpus {
  std::vector<data::Sample> train;
  std::vector<data::Sample> dev;
  std::vector<data::Sample> symmetric;
};

// Loads the configured files, or generates the synthetic corpus.
Corpus load_corpus(const RunConfig& cfg);

// One per-class k-means run inside a dictionary build.
struct KMeansSummary {
  std::size_t epoch = 0;
  std::size_t label = 0;
  std::size_t iterations = 0;
  bool converged = false;
  bool wcss_non_increasing = false;
};

struct TrainResult {
  ParamStore best;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  std::vector<KMeansSummary> kmeans;
};

// Writes checkpoint.{json,bin}, metrics.csv and timing.csv into out_dir when
// it is set. A non-finite loss throws NumericError; the last written
// checkpoint stays on disk.
TrainResult train(const RunConfig& cfg, const Corpus& corpus);

double accuracy(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred);
// Mean F1 over classes that occur in `truth` or `pred`.
double macro_f1(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred);
// Mean adjusted weight of noise nodes over mean adjusted weight of signal
// nodes, pooled over samples.
double dilution_ratio(const std::vector<model::PreparedSample>& samples);

std::vector<std::size_t> predict(const ParamStore& params, const RunConfig& cfg,
                                 const std::vector<model::PreparedSample>& samples);

// Expected bias stored in the checkpoint, absent before the first build.
std::optional<Tensor> stored_expected_bias(const ParamStore& params);

// `symmetric` may be empty, leaving bias_gap NaN.
Metrics evaluate(const ParamStore& params, const RunConfig& cfg, const std::vector<data::Sample>& samples,
                 const std::vector<data::Sample>& symmetric = {});

void check_compatible(const ParamStore& params, const RunConfig& cfg);

struct AblationCell {
  model::Ablation mode;
  std::vector<double> dev_accuracy;        // one per seed
  std::vector<double> symmetric_accuracy;  // one per seed
};

double mean(const std::vector<double>& v);
double stddev(const std::vector<double>& v);  // sample standard deviation

// Trains and evaluates each mode on cfg.ablation_seeds shared seeds.
std::vector<AblationCell> ablate(const RunConfig& cfg, const Corpus& corpus,
                                 const std::vector<model::Ablation>& modes = {model::Ablation::None,
                                                                              model::Ablation::NoBackdoor,
                                                                              model::Ablation::NoFrontdoor});
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationCell>& cells);

std::string metrics_csv_header();
std::string format_number(double v);

}  // namespace muplon::harness
