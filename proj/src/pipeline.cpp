#include "asd/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "asd/error.hpp"
#include "asd/io.hpp"
#include "asd/model_file.hpp"

namespace asd::pipeline {

using dataset::Domain;
using dataset::Label;
using dataset::Split;

void RunConfig::validate() const {
  if (seeds.empty()) throw Error(ErrorCode::InvalidConfig, "at least one seed is required");
  train.validate();
  features.validate();
  if (!dataset.empty() && !out.empty() && fs::weakly_canonical(dataset) == fs::weakly_canonical(out))
    throw Error(ErrorCode::InvalidConfig, "dataset and output directories must differ");
  if (!(threshold_percentile >= 0.0 && threshold_percentile <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "threshold percentile must be in [0, 1]");
  if (!(shrinkage.lambda > 0.0 && shrinkage.escalation > 1.0 && shrinkage.max_lambda >= shrinkage.lambda))
    throw Error(ErrorCode::InvalidConfig, "invalid shrinkage schedule");
  if (!(pauc_fpr > 0.0 && pauc_fpr <= 1.0)) throw Error(ErrorCode::InvalidConfig, "pAUC FPR must be in (0, 1]");
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  out.precision(17);
  out << "backend=" << scoring::to_string(backend) << '\n';
  out << "seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  out << '\n';
  out << "epochs=" << train.epochs << '\n'
      << "batch_size=" << train.batch_size << '\n'
      << "learning_rate=" << train.learning_rate << '\n'
      << "adam_beta1=" << train.beta1 << '\n'
      << "adam_beta2=" << train.beta2 << '\n'
      << "adam_epsilon=" << train.adam_epsilon << '\n'
      << "shuffle=" << train.shuffle << '\n'
      << "sample_rate=" << features.sample_rate << '\n'
      << "frame_length=" << features.stft.frame_length << '\n'
      << "hop=" << features.stft.hop << '\n'
      << "n_mels=" << features.mel.n_mels << '\n'
      << "f_min=" << features.mel.f_min << '\n'
      << "f_max=" << features.mel.f_max << '\n'
      << "log_floor=" << features.mel.log_floor << '\n'
      << "context=" << features.context << '\n'
      << "shrinkage=" << shrinkage.lambda << '\n'
      << "threshold_percentile=" << threshold_percentile << '\n'
      << "pauc_fpr=" << pauc_fpr << '\n'
      << "feature_cache=" << (feature_cache.empty() ? "off" : "float32") << '\n';
  return out.str();
}

std::string RunConfig::digest() const {
  const std::string text = canonical();
  return io::hex32(io::crc32(std::span<const char>(text.data(), text.size())));
}

fs::path RunConfig::ground_truth_path() const {
  return ground_truth.empty() ? dataset / dataset::kGroundTruthFile : ground_truth;
}

std::string section_stem(const std::string& machine_type, int section) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", section);
  return machine_type + "_section_" + buf;
}

namespace {

fs::path seed_dir(const RunConfig& cfg, std::uint64_t seed) { return cfg.out / ("seed_" + std::to_string(seed)); }

std::string provenance_line(const RunConfig& cfg, std::uint64_t seed) {
  return "# seed=" + std::to_string(seed) + " backend=" + std::string(scoring::to_string(cfg.backend)) +
         " config_digest=" + cfg.digest() + "\n";
}

struct ClipFeatures {
  dataset::ClipMeta meta;
  Matrix features;  // unnormalized
};

Matrix load_features(const RunConfig& cfg, const dataset::ClipMeta& clip, const fs::path& root) {
  fs::path cached;
  if (!cfg.feature_cache.empty()) {
    cached = cfg.feature_cache / (dataset::relative_key(root, clip.path) + ".feat");
    if (fs::exists(cached)) {
      Matrix m = dsp::read_feature_cache(cached);
      if (m.cols() == cfg.features.dims()) return m;
    }
  }
  Matrix m = dsp::extract_features(dataset::read_wav(clip.path), cfg.features, clip.clip_id).values;
  if (!cached.empty()) {
    // Round through float32 so a cache hit and a cache miss yield the same values.
    m = m.cast<float>().cast<double>();
    dsp::write_feature_cache(cached, m);
  }
  return m;
}

std::vector<ClipFeatures> section_features(const RunConfig& cfg, const dataset::DatasetManifest& manifest,
                                           const std::string& machine, int section, Split split) {
  std::vector<ClipFeatures> out;
  for (const auto& clip : manifest.select(machine, section, split)) out.push_back({clip, load_features(cfg, clip, manifest.root)});
  return out;
}

Matrix stack_rows(const std::vector<const Matrix*>& parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const Matrix* m : parts) {
    rows += m->rows();
    cols = m->cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Matrix* m : parts) {
    out.middleRows(at, m->rows()) = *m;
    at += m->rows();
  }
  return out;
}

std::string loss_csv(const std::vector<double>& losses) {
  std::ostringstream out;
  out << "epoch,loss\n";
  char buf[40];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", losses[i]);
    out << i + 1 << ',' << buf << '\n';
  }
  return out.str();
}

struct SectionId {
  std::string machine;
  int section;
};

std::vector<SectionId> sections_with(const dataset::DatasetManifest& manifest, Split split) {
  std::vector<SectionId> out;
  for (const auto& machine : manifest.machine_types())
    for (int section : manifest.sections(machine))
      if (!manifest.select(machine, section, split).empty()) out.push_back({machine, section});
  return out;
}

void report_failure(CommandResult& result, const std::string& what, const std::exception& e) {
  spdlog::error("{}: {}", what, e.what());
  result.failures.push_back(what + ": " + e.what());
  result.exit_code = kExitPartial;
}

}  // namespace

fs::path model_path(const RunConfig& cfg, std::uint64_t seed, const std::string& machine_type, int section) {
  return seed_dir(cfg, seed) / ("model_" + section_stem(machine_type, section) + ".bin");
}

fs::path score_path(const RunConfig& cfg, std::uint64_t seed, const std::string& machine_type, int section) {
  return seed_dir(cfg, seed) / std::string(scoring::to_string(cfg.backend)) /
         ("anomaly_score_" + section_stem(machine_type, section) + ".csv");
}

fs::path report_path(const RunConfig& cfg, const std::string& tag, const std::string& ext) {
  return cfg.out / std::string(scoring::to_string(cfg.backend)) / (tag + ext);
}

dataset::SynthResult cmd_synth(const dataset::SynthSpec& spec, std::uint64_t seed, const fs::path& out, bool force) {
  spec.validate();
  if (fs::exists(out) && !fs::is_directory(out)) throw Error(ErrorCode::InvalidConfig, out.string() + " is not a directory");
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw Error(ErrorCode::InvalidConfig, out.string() + " is not empty (use --force to overwrite)");
    for (const auto& entry : fs::directory_iterator(out)) fs::remove_all(entry.path());
  }
  fs::create_directories(out);
  auto result = dataset::synthesize_dataset(spec, seed, out);
  std::map<std::tuple<Domain, Split, Label>, int> totals;
  for (const auto& [key, n] : result.requested) totals[{std::get<2>(key), std::get<3>(key), std::get<4>(key)}] += n;
  for (const auto& [key, n] : totals)
    spdlog::info("synth: {} {} {}: {} clips", dataset::to_string(std::get<0>(key)), dataset::to_string(std::get<1>(key)),
                 dataset::to_string(std::get<2>(key)), n);
  return result;
}

CommandResult cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const auto manifest = dataset::scan_dataset(cfg.dataset);
  const std::string digest = cfg.digest();
  CommandResult result;

  const auto sections = sections_with(manifest, Split::Train);
  if (sections.empty()) throw Error(ErrorCode::EmptyDataset, "no training clips under " + cfg.dataset.string());

  for (const auto& [machine, section] : sections) {
    const std::string stem = section_stem(machine, section);
    std::vector<ClipFeatures> clips;
    try {
      clips = section_features(cfg, manifest, machine, section, Split::Train);
    } catch (const std::exception& e) {
      report_failure(result, stem, e);
      continue;
    }

    std::vector<Matrix> raw;
    for (const auto& c : clips) raw.push_back(c.features);

    for (const std::uint64_t seed : cfg.seeds) {
      try {
        // Only this section's training clips are visible here.
        const dsp::Normalizer normalizer = dsp::fit_normalizer(raw);
        std::vector<Matrix> normalized;
        std::vector<const Matrix*> all, source, target;
        normalized.reserve(clips.size());
        for (const auto& c : clips) normalized.push_back(normalizer.apply(c.features));
        for (std::size_t i = 0; i < clips.size(); ++i) {
          all.push_back(&normalized[i]);
          (clips[i].meta.domain == Domain::Target ? target : source).push_back(&normalized[i]);
        }

        model::TrainConfig tc = cfg.train;
        tc.seed = seed;
        spdlog::info("train {} seed {}: {} clips, {} frames", stem, seed, clips.size(), stack_rows(all).rows());
        auto trained = model::train(stack_rows(all), tc);
        trained.state.normalizer = normalizer;

        model::ModelFile file;
        file.machine_type = machine;
        file.section = section;
        file.config_digest = digest;
        file.state = std::move(trained.state);

        std::vector<double> mse_scores;
        for (const auto& m : normalized) mse_scores.push_back(scoring::mse_score(file.state, m));
        file.thresholds.push_back({scoring::Backend::Mse, scoring::fit_threshold(mse_scores, cfg.threshold_percentile)});

        if (cfg.backend == scoring::Backend::SelectiveMahalanobis) {
          file.covariances =
              scoring::fit_covariances(file.state, stack_rows(source), stack_rows(target), cfg.shrinkage);
          std::vector<double> sm_scores;
          for (const auto& m : normalized)
            sm_scores.push_back(scoring::selective_mahalanobis_score(file.state, *file.covariances, m).score);
          file.thresholds.push_back(
              {scoring::Backend::SelectiveMahalanobis, scoring::fit_threshold(sm_scores, cfg.threshold_percentile)});
        }

        const fs::path path = model_path(cfg, seed, machine, section);
        model::save_model(file, path);
        const fs::path loss_path = seed_dir(cfg, seed) / ("loss_" + stem + ".csv");
        io::write_text_atomic(loss_path, loss_csv(trained.epoch_loss));
        result.outputs.push_back(path);
        spdlog::info("train {} seed {}: loss {:.5f} -> {:.5f}", stem, seed, trained.epoch_loss.front(),
                     trained.epoch_loss.back());
      } catch (const std::exception& e) {
        report_failure(result, stem + " seed " + std::to_string(seed), e);
      }
    }
  }
  return result;
}

std::string render_score_csv(std::vector<ScoreRow> rows, const std::string& provenance) {
  std::sort(rows.begin(), rows.end(), [](const ScoreRow& a, const ScoreRow& b) { return a.path < b.path; });
  std::ostringstream out;
  out << provenance;
  if (!provenance.empty() && provenance.back() != '\n') out << '\n';
  out << "clip_id,path,score,decision,backend,chosen_domain\n";
  char buf[40];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.score);
    out << r.clip_id << ',' << r.path << ',' << buf << ',' << scoring::to_string(r.decision) << ','
        << scoring::to_string(r.backend) << ',' << scoring::to_string(r.chosen_domain) << '\n';
  }
  return out.str();
}

std::vector<ScoreRow> read_score_csv(const fs::path& path) {
  const auto bytes = io::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::vector<ScoreRow> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      if (line != "clip_id,path,score,decision,backend,chosen_domain")
        throw Error(ErrorCode::CorruptFile, path.string() + ": unexpected score CSV header");
      header = false;
      continue;
    }
    const auto f = io::split(line, ',');
    if (f.size() != 6) throw Error(ErrorCode::CorruptFile, path.string() + ": expected 6 fields in '" + line + "'");
    try {
      rows.push_back({f[0], f[1], std::stod(f[2]), scoring::parse_decision(f[3]), scoring::parse_backend(f[4]),
                      scoring::parse_chosen_domain(f[5])});
    } catch (const std::exception& e) {
      throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
    }
  }
  return rows;
}

CommandResult cmd_test(const RunConfig& cfg) {
  cfg.validate();
  const auto manifest = dataset::scan_dataset(cfg.dataset);
  CommandResult result;
  const auto sections = sections_with(manifest, Split::Test);
  if (sections.empty()) throw Error(ErrorCode::EmptyDataset, "no test clips under " + cfg.dataset.string());

  for (const auto& [machine, section] : sections) {
    const std::string stem = section_stem(machine, section);
    std::vector<ClipFeatures> clips;
    try {
      clips = section_features(cfg, manifest, machine, section, Split::Test);
    } catch (const std::exception& e) {
      report_failure(result, stem, e);
      continue;
    }

    for (const std::uint64_t seed : cfg.seeds) {
      try {
        const fs::path mpath = model_path(cfg, seed, machine, section);
        if (!fs::exists(mpath))
          throw Error(ErrorCode::MissingModel, "no model for " + stem + " seed " + std::to_string(seed) + " at " +
                                                   mpath.string());
        const model::ModelFile file = model::load_model(mpath);
        const scoring::Threshold* threshold = file.threshold_for(cfg.backend);
        if (cfg.backend == scoring::Backend::SelectiveMahalanobis && !file.covariances)
          throw Error(ErrorCode::MissingModel,
                      mpath.string() + " has no covariances; train with --backend selective_mahalanobis");
        if (!threshold)
          throw Error(ErrorCode::MissingModel, mpath.string() + " has no threshold for backend " +
                                                   std::string(scoring::to_string(cfg.backend)));

        std::vector<ScoreRow> rows;
        for (const auto& clip : clips) {
          // Only the features reach the scorer; the clip's name is carried through verbatim.
          const Matrix x = file.state.normalizer.apply(clip.features);
          const scoring::ClipScore s =
              cfg.backend == scoring::Backend::Mse
                  ? scoring::score_mse(file.state, x, *threshold, clip.meta.clip_id)
                  : scoring::score_selective_mahalanobis(file.state, *file.covariances, x, *threshold, clip.meta.clip_id);
          rows.push_back({s.clip_id, dataset::relative_key(manifest.root, clip.meta.path), s.score, s.decision, s.backend,
                          s.chosen_domain});
        }
        const fs::path out = score_path(cfg, seed, machine, section);
        io::write_text_atomic(out, render_score_csv(std::move(rows), provenance_line(cfg, seed)));
        result.outputs.push_back(out);
        spdlog::info("test {} seed {}: {} clips scored", stem, seed, clips.size());
      } catch (const std::exception& e) {
        report_failure(result, stem + " seed " + std::to_string(seed), e);
      }
    }
  }
  return result;
}

metrics::EvalReport evaluate_scores(const std::vector<ScoreRow>& rows, const std::vector<dataset::GroundTruthRow>& truth,
                                    double p) {
  std::map<std::string, const dataset::GroundTruthRow*> by_path;
  for (const auto& t : truth) by_path[t.path] = &t;
  std::vector<std::string> missing;
  std::vector<metrics::LabeledScore> labeled;
  for (const auto& r : rows) {
    const auto it = by_path.find(r.path);
    if (it == by_path.end()) {
      missing.push_back(r.path);
      continue;
    }
    labeled.push_back({r.score, it->second->label, it->second->domain, it->second->section, it->second->machine_type});
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size(); ++i) list += (i ? ", " : "") + missing[i];
    throw Error(ErrorCode::UnmatchedClip, std::to_string(missing.size()) + " scored clip(s) missing from ground truth: " + list);
  }
  return metrics::total_score(labeled, p);
}

CommandResult cmd_evaluate(const RunConfig& cfg) {
  cfg.validate();
  const auto truth = dataset::read_ground_truth(cfg.ground_truth_path());
  CommandResult result;
  std::vector<metrics::EvalReport> reports;
  const std::string backend_dir = std::string(scoring::to_string(cfg.backend));

  for (const std::uint64_t seed : cfg.seeds) {
    const fs::path dir = seed_dir(cfg, seed) / backend_dir;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingModel, "no scores for seed " + std::to_string(seed) + " in " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().filename().string().starts_with("anomaly_score_") && entry.path().extension() == ".csv")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::MissingModel, "no score CSVs in " + dir.string());

    std::vector<ScoreRow> rows;
    for (const auto& f : files) {
      auto part = read_score_csv(f);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    metrics::EvalReport report = evaluate_scores(rows, truth, cfg.pauc_fpr);
    report.provenance["seed"] = std::to_string(seed);
    report.provenance["backend"] = backend_dir;
    report.provenance["config_digest"] = cfg.digest();

    std::map<std::string, const dataset::GroundTruthRow*> by_path;
    for (const auto& t : truth) by_path[t.path] = &t;
    std::vector<metrics::DecisionInput> decisions;
    for (const auto& r : rows) {
      const auto* t = by_path.at(r.path);
      decisions.push_back({t->machine_type, t->section, r.decision == scoring::Decision::Anomaly,
                           t->label == Label::Anomaly});
    }
    std::ostringstream dec;
    dec << "# seed=" << seed << " backend=" << backend_dir << " config_digest=" << cfg.digest() << '\n';
    dec << "machine_type,section,tp,fp,fn,tn,precision,recall,f1\n";
    auto opt = [](const std::optional<double>& v) {
      if (!v) return std::string("undefined");
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.6f", *v);
      return std::string(buf);
    };
    for (const auto& s : metrics::decision_stats(decisions))
      dec << s.machine_type << ',' << s.section << ',' << s.tp << ',' << s.fp << ',' << s.fn << ',' << s.tn << ','
          << opt(s.precision) << ',' << opt(s.recall) << ',' << opt(s.f1) << '\n';

    const std::string tag = "seed_" + std::to_string(seed);
    io::write_text_atomic(report_path(cfg, "report_" + tag, ".csv"), metrics::render_csv(report));
    io::write_text_atomic(report_path(cfg, "report_" + tag, ".txt"), metrics::render_text(report));
    io::write_text_atomic(report_path(cfg, "sections_" + tag, ".csv"), metrics::render_sections_csv(report));
    io::write_text_atomic(report_path(cfg, "decisions_" + tag, ".csv"), dec.str());
    result.outputs.push_back(report_path(cfg, "report_" + tag, ".csv"));
    spdlog::info("evaluate seed {} ({}): total hmean {:.4f}, amean {:.4f}", seed, backend_dir, report.omega_hmean,
                 report.omega_amean);
    reports.push_back(std::move(report));
  }

  const metrics::EvalReport avg = metrics::average_reports(reports);
  io::write_text_atomic(report_path(cfg, "report_average", ".csv"), metrics::render_csv(avg));
  io::write_text_atomic(report_path(cfg, "report_average", ".txt"), metrics::render_text(avg));
  io::write_text_atomic(report_path(cfg, "sections_average", ".csv"), metrics::render_sections_csv(avg));
  result.outputs.push_back(report_path(cfg, "report_average", ".csv"));
  return result;
}

std::string cmd_report(const RunConfig& cfg) {
  fs::path path = report_path(cfg, "report_average", ".csv");
  if (cfg.seeds.size() == 1) {
    const fs::path single = report_path(cfg, "report_seed_" + std::to_string(cfg.seeds.front()), ".csv");
    if (fs::exists(single)) path = single;
  }
  if (!fs::exists(path)) throw Error(ErrorCode::MissingModel, "no report at " + path.string() + "; run evaluate first");
  const auto bytes = io::read_file(path);
  return metrics::render_text(metrics::parse_csv(std::string(bytes.begin(), bytes.end())));
}

}  // namespace asd::pipeline
