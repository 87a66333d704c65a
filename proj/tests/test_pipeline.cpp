#include <catch_amalgamated.hpp>

#include <spdlog/spdlog.h>

#include <map>

#include "asd/error.hpp"
#include "asd/model_file.hpp"
#include "asd/pipeline.hpp"
#include "test_util.hpp"

using namespace asd;
using namespace asd::pipeline;
using asd::testing::slurp;
using asd::testing::slurp_text;
using asd::testing::TempDir;

namespace {

dataset::SynthSpec tiny_spec() {
  auto spec = dataset::SynthSpec::desk_default();
  spec.machines.resize(1);
  spec.duration_s = 0.5;
  spec.test_normal_per_domain = 5;
  spec.test_anomaly_per_domain = 5;
  return spec;
}

// Every regular file under root, keyed by relative path.
std::map<std::string, std::vector<char>> tree(const fs::path& root) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  return out;
}

RunConfig tiny_config(const fs::path& data, const fs::path& out, scoring::Backend backend) {
  RunConfig cfg;
  cfg.dataset = data;
  cfg.out = out;
  cfg.backend = backend;
  cfg.seeds = {7};
  cfg.train.epochs = 2;
  cfg.train.batch_size = 128;
  return cfg;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an asd::Error");
  return ErrorCode::Io;
}

struct Quiet {
  Quiet() { spdlog::set_level(spdlog::level::warn); }
} quiet;

}  // namespace

TEST_CASE("cmd_synth: layout, refusal of a non-empty directory, force, determinism") {
  TempDir dir;
  const auto res = cmd_synth(tiny_spec(), 5, dir / "a", false);
  CHECK(res.ground_truth.size() == 20);
  CHECK(fs::exists(dir / "a" / "ground_truth.csv"));
  CHECK(fs::exists(dir / "a" / "fan" / "train" / "section_00_target_train_normal_0000.wav"));

  CHECK(code_of([&] { cmd_synth(tiny_spec(), 5, dir / "a", false); }) == ErrorCode::InvalidConfig);
  asd::testing::touch(dir / "a" / "stray.txt", "x");
  cmd_synth(tiny_spec(), 5, dir / "a", true);
  CHECK(!fs::exists(dir / "a" / "stray.txt"));

  cmd_synth(tiny_spec(), 5, dir / "b", false);
  CHECK(tree(dir / "a") == tree(dir / "b"));
  cmd_synth(tiny_spec(), 6, dir / "c", false);
  CHECK(tree(dir / "a") != tree(dir / "c"));
}

TEST_CASE("RunConfig: validation and a path-free digest") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.dataset = "/tmp/x";
  cfg.out = "/tmp/x";
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
  cfg.out = "/tmp/y";
  const std::string d = cfg.digest();
  CHECK(d.size() == 8);
  cfg.dataset = "/elsewhere";
  cfg.out = "/other";
  CHECK(cfg.digest() == d);
  cfg.train.epochs = 31;
  CHECK(cfg.digest() != d);

  RunConfig bad;
  bad.seeds.clear();
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
  bad = {};
  bad.threshold_percentile = 1.5;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
  bad = {};
  bad.pauc_fpr = 0.0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidConfig);
  CHECK(RunConfig{.dataset = "/d"}.ground_truth_path() == fs::path("/d/ground_truth.csv"));
}

TEST_CASE("score CSV round trip") {
  TempDir dir;
  std::vector<ScoreRow> rows{{"b", "fan/test/b.wav", 0.1 + 0.2, scoring::Decision::Normal, scoring::Backend::Mse,
                              scoring::ChosenDomain::NotApplicable},
                             {"a", "fan/test/a.wav", 1e-300, scoring::Decision::Anomaly,
                              scoring::Backend::SelectiveMahalanobis, scoring::ChosenDomain::Target}};
  const std::string text = render_score_csv(rows, "# seed=1");
  CHECK(text.find("clip_id,path,score,decision,backend,chosen_domain") != std::string::npos);
  asd::testing::touch(dir / "s.csv", text);
  const auto back = read_score_csv(dir / "s.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].path == "fan/test/a.wav");  // sorted by path
  CHECK(back[0].score == 1e-300);
  CHECK(back[0].chosen_domain == scoring::ChosenDomain::Target);
  CHECK(back[1].score == 0.1 + 0.2);
}

TEST_CASE("train, test and evaluate on a tiny dataset") {
  TempDir dir;
  const fs::path data = dir / "data";
  cmd_synth(tiny_spec(), 3, data, false);

  auto sm = tiny_config(data, dir / "sm", scoring::Backend::SelectiveMahalanobis);
  auto mse = tiny_config(data, dir / "mse", scoring::Backend::Mse);

  REQUIRE(cmd_train(sm).exit_code == kExitOk);
  const fs::path model = model_path(sm, 7, "fan", 0);
  const auto file = model::load_model(model);
  CHECK(file.covariances.has_value());
  CHECK(file.threshold_for(scoring::Backend::Mse) != nullptr);
  CHECK(file.threshold_for(scoring::Backend::SelectiveMahalanobis) != nullptr);
  CHECK(file.config_digest == sm.digest());
  CHECK(fs::exists(dir / "sm" / "seed_7" / "loss_fan_section_00.csv"));

  REQUIRE(cmd_train(mse).exit_code == kExitOk);
  CHECK(!model::load_model(model_path(mse, 7, "fan", 0)).covariances);

  SECTION("training is byte-reproducible") {
    auto again = sm;
    again.out = dir / "sm2";
    REQUIRE(cmd_train(again).exit_code == kExitOk);
    CHECK(slurp(model_path(again, 7, "fan", 0)) == slurp(model));
  }

  SECTION("scores, reports and backend separation") {
    REQUIRE(cmd_test(sm).exit_code == kExitOk);
    REQUIRE(cmd_test(mse).exit_code == kExitOk);
    const auto sm_rows = read_score_csv(score_path(sm, 7, "fan", 0));
    const auto mse_rows = read_score_csv(score_path(mse, 7, "fan", 0));
    CHECK(sm_rows.size() == 20);
    CHECK(mse_rows.size() == 20);
    CHECK(slurp(score_path(sm, 7, "fan", 0)) != slurp(score_path(mse, 7, "fan", 0)));
    for (const auto& r : sm_rows) CHECK(r.chosen_domain != scoring::ChosenDomain::NotApplicable);

    REQUIRE(cmd_evaluate(sm).exit_code == kExitOk);
    for (const char* name : {"report_seed_7.csv", "report_seed_7.txt", "sections_seed_7.csv", "decisions_seed_7.csv",
                             "report_average.csv", "report_average.txt", "sections_average.csv"})
      CHECK(fs::exists(dir / "sm" / "selective_mahalanobis" / name));
    const auto report = metrics::parse_csv(slurp_text(dir / "sm" / "selective_mahalanobis" / "report_seed_7.csv"));
    CHECK(report.provenance.at("seed") == "7");
    CHECK(cmd_report(sm).find("TOTAL score") != std::string::npos);
  }

  SECTION("missing or tampered models are reported per section") {
    auto other = sm;
    other.seeds = {8};
    auto r = cmd_test(other);
    CHECK(r.exit_code == kExitPartial);
    REQUIRE(r.failures.size() == 1);
    CHECK(r.failures[0].find("no model") != std::string::npos);

    auto mse_on_sm = mse;
    mse_on_sm.out = sm.out;
    CHECK(cmd_test(mse_on_sm).exit_code == kExitOk);  // SM models carry both thresholds
    auto sm_on_mse = sm;
    sm_on_mse.out = mse.out;
    r = cmd_test(sm_on_mse);
    REQUIRE(r.failures.size() == 1);
    CHECK(r.failures[0].find("no covariances") != std::string::npos);

    auto bytes = slurp(model);
    bytes[bytes.size() / 2] ^= 0x01;
    io::write_file_atomic(model, bytes);
    r = cmd_test(sm);
    REQUIRE(r.failures.size() == 1);
    CHECK(r.failures[0].find("checksum") != std::string::npos);
  }
}

TEST_CASE("cmd_evaluate on hand-built scores") {
  TempDir dir;
  const fs::path data = dir / "data";
  const auto synth = cmd_synth(tiny_spec(), 3, data, false);
  RunConfig cfg = tiny_config(data, dir / "out", scoring::Backend::Mse);
  cfg.seeds = {1, 2, 3};

  // Perfect separation for every seed.
  for (const auto seed : cfg.seeds) {
    std::vector<ScoreRow> rows;
    for (const auto& t : synth.ground_truth) {
      const bool anomaly = t.label == dataset::Label::Anomaly;
      rows.push_back({fs::path(t.path).stem().string(), t.path, anomaly ? 10.0 + static_cast<double>(seed) : 1.0,
                      anomaly ? scoring::Decision::Anomaly : scoring::Decision::Normal, scoring::Backend::Mse,
                      scoring::ChosenDomain::NotApplicable});
    }
    io::write_text_atomic(score_path(cfg, seed, "fan", 0), render_score_csv(rows, "# hand-built"));
  }
  const auto res = cmd_evaluate(cfg);
  CHECK(res.outputs.size() == 4);
  const auto avg = metrics::parse_csv(slurp_text(dir / "out" / "mse" / "report_average.csv"));
  CHECK(avg.omega_hmean == 1.0);
  CHECK(avg.omega_amean == 1.0);
  const std::string decisions = slurp_text(dir / "out" / "mse" / "decisions_seed_1.csv");
  CHECK(decisions.find("fan,0,10,0,0,10,1.000000,1.000000,1.000000") != std::string::npos);

  // A scored clip missing from the ground truth.
  std::vector<dataset::GroundTruthRow> partial(synth.ground_truth.begin() + 1, synth.ground_truth.end());
  dataset::write_ground_truth(data / "ground_truth.csv", partial);
  try {
    cmd_evaluate(cfg);
    FAIL("expected UnmatchedClip");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnmatchedClip);
    CHECK(std::string(e.what()).find(synth.ground_truth.front().path) != std::string::npos);
  }
}
