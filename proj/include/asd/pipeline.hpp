#pragma once

// End-to-end orchestration behind the command-line tool: synthesize or
// scan a dataset, train one model per (machine type, section) and seed,
// score the blind test clips, and evaluate against the ground truth.
//
// Output layout under RunConfig::out:
//   seed_<S>/model_<machine>_section_<NN>.bin
//   seed_<S>/loss_<machine>_section_<NN>.csv
//   seed_<S>/<backend>/anomaly_score_<machine>_section_<NN>.csv
//   <backend>/report_seed_<S>.{csv,txt}, sections_seed_<S>.csv, decisions_seed_<S>.csv
//   <backend>/report_average.{csv,txt}, sections_average.csv

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asd/dataset.hpp"
#include "asd/dsp.hpp"
#include "asd/metrics.hpp"
#include "asd/model.hpp"
#include "asd/scoring.hpp"

namespace asd::pipeline {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitInvalid = 2;

struct RunConfig {
  fs::path dataset;
  fs::path out;
  fs::path ground_truth;   // defaults to <dataset>/ground_truth.csv
  fs::path feature_cache;  // optional; cached features are stored as float32
  scoring::Backend backend = scoring::Backend::Mse;
  std::vector<std::uint64_t> seeds{13711, 13591, 13267};
  model::TrainConfig train;
  dsp::FeatureConfig features;
  scoring::ShrinkageConfig shrinkage;
  double threshold_percentile = 0.9;
  double pauc_fpr = metrics::kDefaultFpr;

  void validate() const;  // throws InvalidConfig
  // Hyperparameters only (no paths), one key=value per line.
  std::string canonical() const;
  std::string digest() const;
  fs::path ground_truth_path() const;
};

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<std::string> failures;
  std::vector<fs::path> outputs;
};

// Refuses a non-empty `out` unless `force`, in which case it is cleared.
dataset::SynthResult cmd_synth(const dataset::SynthSpec& spec, std::uint64_t seed, const fs::path& out, bool force);

CommandResult cmd_train(const RunConfig& cfg);
CommandResult cmd_test(const RunConfig& cfg);
CommandResult cmd_evaluate(const RunConfig& cfg);
// Renders <out>/<backend>/report_average.csv (or report_seed_<S>.csv when
// one seed is configured) as the aligned text table.
std::string cmd_report(const RunConfig& cfg);

std::string section_stem(const std::string& machine_type, int section);
fs::path model_path(const RunConfig& cfg, std::uint64_t seed, const std::string& machine_type, int section);
fs::path score_path(const RunConfig& cfg, std::uint64_t seed, const std::string& machine_type, int section);
fs::path report_path(const RunConfig& cfg, const std::string& tag, const std::string& ext);

struct ScoreRow {
  std::string clip_id;
  std::string path;  // relative to the dataset root
  double score = 0.0;
  scoring::Decision decision = scoring::Decision::Normal;
  scoring::Backend backend = scoring::Backend::Mse;
  scoring::ChosenDomain chosen_domain = scoring::ChosenDomain::NotApplicable;
};

std::string render_score_csv(std::vector<ScoreRow> rows, const std::string& provenance);
std::vector<ScoreRow> read_score_csv(const fs::path& path);

// Matches rows to ground truth by path and computes the section and total scores.
metrics::EvalReport evaluate_scores(const std::vector<ScoreRow>& rows,
                                    const std::vector<dataset::GroundTruthRow>& truth, double p);

}  // namespace asd::pipeline
