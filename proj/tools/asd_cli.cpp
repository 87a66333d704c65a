// asd: synth | train | test | evaluate | report
//
// Shared options may appear before or after the subcommand. `--config FILE`
// reads flat `key = value` lines whose keys are the long option names
// (without dashes); command-line flags override the file.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "asd/error.hpp"
#include "asd/pipeline.hpp"

namespace {

using namespace asd;
using pipeline::kExitInvalid;
using pipeline::kExitOk;
using pipeline::kExitPartial;

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  if (const char* level = std::getenv("ASD_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(level));
}

dataset::SynthSpec build_synth_spec(const std::vector<std::string>& names, const std::string& anomaly) {
  const auto defaults = dataset::SynthSpec::desk_default();
  dataset::SynthSpec spec = defaults;
  if (!names.empty()) {
    spec.machines.clear();
    for (std::size_t i = 0; i < names.size(); ++i) {
      dataset::MachineSynth m;
      m.name = names[i];
      m.fundamental_hz = 180.0 + 47.0 * static_cast<double>(i);
      for (const auto& d : defaults.machines)
        if (d.name == names[i]) m = d;
      spec.machines.push_back(m);
    }
  }
  if (!anomaly.empty())
    for (auto& m : spec.machines) m.anomaly = dataset::parse_anomaly_kind(anomaly);
  return spec;
}

int finish(const pipeline::CommandResult& r) {
  for (const auto& f : r.failures) std::cerr << "failed: " << f << '\n';
  for (const auto& p : r.outputs) std::cout << p.string() << '\n';
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"First-shot anomalous sound detection: autoencoder with MSE or selective Mahalanobis scoring"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value config file");

  pipeline::RunConfig cfg;
  std::string backend = "mse";
  std::vector<std::uint64_t> seeds;
  bool force = false;

  app.add_option("--dataset", cfg.dataset, "Dataset root (<root>/<machine>/{train,test}/*.wav)");
  app.add_option("--out", cfg.out, "Output directory");
  app.add_option("--backend", backend, "Scoring backend")->check(CLI::IsMember({"mse", "selective_mahalanobis"}));
  app.add_option("--seed", seeds, "Training seed (repeatable; default 13711 13591 13267)");
  app.add_option("--epochs", cfg.train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  app.add_option("--batch-size", cfg.train.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  app.add_option("--lr", cfg.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  app.add_option("--shrinkage", cfg.shrinkage.lambda, "Initial covariance shrinkage (relative)");
  app.add_option("--threshold-percentile", cfg.threshold_percentile, "Decision threshold percentile in [0, 1]");
  app.add_option("--pauc-fpr", cfg.pauc_fpr, "pAUC false-positive-rate limit");
  app.add_option("--ground-truth", cfg.ground_truth, "Ground-truth CSV (default <dataset>/ground_truth.csv)");
  app.add_option("--feature-cache", cfg.feature_cache, "Directory for cached float32 features");
  app.add_flag("--force", force, "Overwrite a non-empty synth output directory");

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset")->fallthrough();
  std::vector<std::string> machine_types;
  std::string anomaly;
  dataset::SynthSpec shape;
  synth->add_option("--machine-types", machine_types, "Machine type names")->delimiter(',');
  synth->add_option("--sections", shape.sections, "Sections per machine type");
  synth->add_option("--train-target", shape.train_target, "Target training clips per section (source = 99x)");
  synth->add_option("--test-normal", shape.test_normal_per_domain, "Normal test clips per domain");
  synth->add_option("--test-anomaly", shape.test_anomaly_per_domain, "Anomalous test clips per domain");
  synth->add_option("--duration", shape.duration_s, "Clip duration in seconds");
  synth->add_option("--pitch-factor", shape.pitch_factor, "Target-domain frequency multiplier");
  synth->add_option("--snr-db", shape.anomaly_snr_db, "Noise-burst SNR in dB");
  synth->add_option("--anomaly", anomaly, "Anomaly kind")->check(CLI::IsMember({"noise_burst", "harmonic_drop"}));
  synth->add_flag("--labeled-test-names", shape.ground_truth_labels_in_test_names,
                  "Keep domain and label in test filenames");

  auto* train = app.add_subcommand("train", "Train one model per machine type and section")->fallthrough();
  auto* test = app.add_subcommand("test", "Score the test clips")->fallthrough();
  auto* evaluate = app.add_subcommand("evaluate", "Compute AUC, pAUC and total scores")->fallthrough();
  auto* report = app.add_subcommand("report", "Print the evaluation table")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    cfg.backend = scoring::parse_backend(backend);
    if (!seeds.empty()) cfg.seeds = seeds;

    if (synth->parsed()) {
      if (cfg.out.empty()) throw Error(ErrorCode::InvalidConfig, "--out is required");
      dataset::SynthSpec spec = build_synth_spec(machine_types, anomaly);
      spec.sections = shape.sections;
      spec.train_target = shape.train_target;
      spec.train_source = 99 * shape.train_target;
      spec.test_normal_per_domain = shape.test_normal_per_domain;
      spec.test_anomaly_per_domain = shape.test_anomaly_per_domain;
      spec.duration_s = shape.duration_s;
      spec.pitch_factor = shape.pitch_factor;
      spec.anomaly_snr_db = shape.anomaly_snr_db;
      spec.ground_truth_labels_in_test_names = shape.ground_truth_labels_in_test_names;
      const auto result = pipeline::cmd_synth(spec, cfg.seeds.front(), cfg.out, force);
      std::cout << result.ground_truth.size() << " test clips, ground truth at "
                << (cfg.out / dataset::kGroundTruthFile).string() << '\n';
      return kExitOk;
    }

    if (cfg.dataset.empty() && !report->parsed() && !evaluate->parsed())
      throw Error(ErrorCode::InvalidConfig, "--dataset is required");
    if (cfg.out.empty()) throw Error(ErrorCode::InvalidConfig, "--out is required");
    if (evaluate->parsed() && cfg.ground_truth.empty() && cfg.dataset.empty())
      throw Error(ErrorCode::InvalidConfig, "--dataset or --ground-truth is required");

    if (train->parsed()) return finish(pipeline::cmd_train(cfg));
    if (test->parsed()) return finish(pipeline::cmd_test(cfg));
    if (evaluate->parsed()) {
      const int code = finish(pipeline::cmd_evaluate(cfg));
      std::cout << pipeline::cmd_report(cfg);
      return code;
    }
    if (report->parsed()) {
      std::cout << pipeline::cmd_report(cfg);
      return kExitOk;
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    switch (e.code()) {
      case ErrorCode::Io:
      case ErrorCode::NonFiniteActivation:
      case ErrorCode::SingularCovariance:
        return kExitPartial;
      default:
        return kExitInvalid;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitPartial;
  }
  return kExitInvalid;
}
