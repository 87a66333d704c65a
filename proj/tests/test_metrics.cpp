#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "asd/error.hpp"
#include "asd/metrics.hpp"
#include "asd/rng.hpp"
#include "oracles.hpp"

using namespace asd;
using namespace asd::metrics;
using asd::dataset::Domain;
using asd::dataset::Label;
using Catch::Approx;

namespace {

std::vector<double> draw(Rng& rng, std::size_t n, bool coarse) {
  std::vector<double> v(n);
  // Coarse values force plenty of ties.
  for (auto& x : v) x = coarse ? static_cast<double>(rng.below(6)) : rng.normal();
  return v;
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

// Scores for one section built so that each metric is known in closed form.
void add_section(std::vector<LabeledScore>& out, const std::string& mt, int section, int src_below, int tgt_below) {
  // 10 anomalies at 1..10; source normals: src_below at 0, rest at 100; likewise target.
  for (int i = 1; i <= 10; ++i) out.push_back({static_cast<double>(i), Label::Anomaly, Domain::Unknown, section, mt});
  for (int i = 0; i < 10; ++i)
    out.push_back({i < src_below ? 0.0 : 100.0, Label::Normal, Domain::Source, section, mt});
  for (int i = 0; i < 10; ++i)
    out.push_back({i < tgt_below ? -1.0 : 200.0, Label::Normal, Domain::Target, section, mt});
}

}  // namespace

TEST_CASE("auc: simple cases") {
  CHECK(auc(std::vector<double>{1, 2}, std::vector<double>{3, 4}) == 1.0);
  CHECK(auc(std::vector<double>{3, 4}, std::vector<double>{1, 2}) == 0.0);
  CHECK(auc(std::vector<double>{1, 1}, std::vector<double>{1}) == 0.5);
  CHECK(auc(std::vector<double>{1, 1}, std::vector<double>{1}, TieMode::Literal) == 0.0);
  CHECK(code_of([] { auc(std::vector<double>{}, std::vector<double>{1}); }) == ErrorCode::EmptySet);
  CHECK(code_of([] { auc(std::vector<double>{1}, std::vector<double>{}); }) == ErrorCode::EmptySet);
}

TEST_CASE("auc equals the pairwise oracle exactly") {
  Rng rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const bool coarse = trial % 2 == 0;
    const auto n = draw(rng, 1 + rng.below(30), coarse);
    const auto a = draw(rng, 1 + rng.below(30), coarse);
    REQUIRE(auc(n, a) == asd::testing::auc_double_sum(n, a));
  }
}

TEST_CASE("pauc: simple cases and oracle") {
  CHECK(pauc(std::vector<double>(100, 0.0), std::vector<double>(7, 1.0)) == 1.0);
  CHECK(pauc_normal_count(100, 0.1) == 10);
  CHECK(pauc_normal_count(30, 0.1) == 3);
  CHECK(pauc_normal_count(10, 0.3) == 3);
  CHECK(pauc(std::vector<double>(20, 2.0), std::vector<double>(5, 2.0)) == 0.5);
  CHECK(code_of([] { pauc(std::vector<double>(9, 0.0), std::vector<double>{1}, 0.1); }) == ErrorCode::PTooSmall);
  CHECK(code_of([] { pauc(std::vector<double>{}, std::vector<double>{1}); }) == ErrorCode::EmptySet);

  Rng rng(202);
  for (int trial = 0; trial < 1000; ++trial) {
    const bool coarse = trial % 3 == 0;
    const auto n = draw(rng, 50, coarse);
    const auto a = draw(rng, 50, coarse);
    REQUIRE(pauc(n, a, 0.1) == asd::testing::pauc_double_sum(n, a, 0.1));
  }
}

TEST_CASE("auc properties: monotone invariance and complement symmetry") {
  Rng rng(303);
  for (int trial = 0; trial < 200; ++trial) {
    auto n = draw(rng, 25, false);
    auto a = draw(rng, 20, false);
    const double base = auc(n, a);
    const double partial = pauc(n, a, 0.2);
    auto warp = [](std::vector<double> v) {
      for (auto& x : v) x = std::exp(3.0 * x) + 5.0;
      return v;
    };
    CHECK(auc(warp(n), warp(a)) == base);
    CHECK(pauc(warp(n), warp(a), 0.2) == partial);
    for (auto& x : n) x = -x;
    for (auto& x : a) x = -x;
    CHECK(std::abs(auc(n, a) - (1.0 - base)) < 1e-12);
  }
}

TEST_CASE("hmean and amean") {
  CHECK(hmean(std::vector<double>{0.5, 0.5, 0.5}) == 0.5);
  CHECK(hmean(std::vector<double>{0.8, 0.5}) == Approx(0.6153846153846154).epsilon(1e-15));
  CHECK(std::abs(hmean(std::vector<double>{0.8, 0.5}) - 8.0 / 13.0) < 1e-15);
  CHECK(hmean(std::vector<double>{0.8, 0.0, 0.5}) == 0.0);
  CHECK(amean(std::vector<double>{0.8, 0.5}) == 0.65);
  CHECK(code_of([] { hmean(std::vector<double>{}); }) == ErrorCode::EmptySet);
}

TEST_CASE("total_score: constructed sections") {
  std::vector<LabeledScore> s;
  // fan/0: AUC_src = 0.7 (7 of 10 source normals below every anomaly, the rest above), etc.
  add_section(s, "fan", 0, 7, 7);
  const auto one = total_score(s);
  REQUIRE(one.sections.size() == 1);
  CHECK(one.sections[0].auc_source == 0.7);
  CHECK(one.sections[0].auc_target == 0.7);
  // The 2 hardest of 20 normals sit above every anomaly.
  CHECK(one.sections[0].pauc == 0.0);

  s.clear();
  add_section(s, "fan", 0, 10, 10);
  add_section(s, "fan", 1, 8, 5);
  add_section(s, "valve", 0, 9, 6);
  const auto r = total_score(s);
  REQUIRE(r.sections.size() == 3);
  CHECK(r.machine_types() == std::vector<std::string>{"fan", "valve"});
  std::vector<double> omega;
  for (const auto& sec : r.sections) {
    const int below = static_cast<int>(std::round(sec.auc_source * 10)) + static_cast<int>(std::round(sec.auc_target * 10));
    CHECK(sec.normals_source == 10);
    CHECK(sec.anomalies == 10);
    // Top-2 normals: pAUC is 1 only when every normal is below the anomalies.
    CHECK(sec.pauc == (below == 20 ? 1.0 : 0.0));
    omega.insert(omega.end(), {sec.auc_source, sec.auc_target, sec.pauc});
  }
  CHECK(r.omega_hmean == asd::testing::hmean_oracle(omega));
  CHECK(r.omega_amean == Approx(asd::testing::amean_oracle(omega)).epsilon(1e-15));
  CHECK(r.auc_source.per_machine.at("fan") == asd::testing::hmean_oracle({1.0, 0.8}));
  CHECK(r.auc_target.per_machine.at("valve") == 0.6);
  CHECK(r.auc_target.hmean == Approx(asd::testing::hmean_oracle({1.0, 0.5, 0.6})).epsilon(1e-15));
}

TEST_CASE("total_score: constant metric and perfect DCASE-shaped report") {
  std::vector<LabeledScore> s;
  for (int i = 0; i < 10; ++i) {
    s.push_back({1.0, Label::Normal, Domain::Source, 0, "fan"});
    s.push_back({1.0, Label::Normal, Domain::Target, 0, "fan"});
    s.push_back({1.0, Label::Anomaly, Domain::Source, 0, "fan"});
  }
  const auto flat = total_score(s);
  CHECK(flat.omega_hmean == 0.5);
  CHECK(flat.omega_amean == 0.5);

  s.clear();
  for (const char* mt : {"bearing", "fan", "gearbox", "slider", "ToyCar", "ToyTrain", "valve"})
    for (int section = 0; section < 3; ++section)
      for (int i = 0; i < 10; ++i) {
        s.push_back({0.0, Label::Normal, Domain::Source, section, mt});
        s.push_back({0.1, Label::Normal, Domain::Target, section, mt});
        s.push_back({1.0 + i, Label::Anomaly, i % 2 ? Domain::Source : Domain::Target, section, mt});
      }
  const auto perfect = total_score(s);
  CHECK(perfect.sections.size() == 21);
  CHECK(perfect.omega_hmean == 1.0);
  CHECK(perfect.omega_amean == 1.0);
}

TEST_CASE("total_score: hmean never exceeds amean") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<LabeledScore> s;
    for (int section = 0; section < 2; ++section)
      for (int i = 0; i < 10; ++i) {
        s.push_back({rng.normal(), Label::Normal, Domain::Source, section, "m"});
        s.push_back({rng.normal(), Label::Normal, Domain::Target, section, "m"});
        s.push_back({rng.normal() + 0.5, Label::Anomaly, Domain::Source, section, "m"});
      }
    const auto r = total_score(s);
    REQUIRE(r.omega_hmean <= r.omega_amean + 1e-15);
  }
}

TEST_CASE("total_score: missing cells and moving normals between domains") {
  std::vector<LabeledScore> s;
  add_section(s, "fan", 0, 5, 5);
  auto no_target = s;
  std::erase_if(no_target, [](const LabeledScore& x) { return x.domain == Domain::Target; });
  try {
    total_score(no_target);
    FAIL("expected MissingCell");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingCell);
    CHECK(std::string(e.what()).find("target") != std::string::npos);
  }
  auto no_anomaly = s;
  std::erase_if(no_anomaly, [](const LabeledScore& x) { return x.label == Label::Anomaly; });
  CHECK(code_of([&] { total_score(no_anomaly); }) == ErrorCode::MissingCell);
  CHECK(code_of([] { total_score(std::vector<LabeledScore>{}); }) == ErrorCode::EmptySet);

  // Relabel one source normal as target: denominators change, the anomaly set does not.
  auto moved = s;
  for (auto& x : moved)
    if (x.label == Label::Normal && x.domain == Domain::Source) {
      x.domain = Domain::Target;
      break;
    }
  const auto r = total_score(moved);
  CHECK(r.sections[0].normals_source == 9);
  CHECK(r.sections[0].normals_target == 11);
  CHECK(r.sections[0].anomalies == 10);
}

TEST_CASE("average_reports is the arithmetic mean of every cell") {
  std::vector<LabeledScore> a, b;
  add_section(a, "fan", 0, 10, 6);
  add_section(b, "fan", 0, 8, 9);
  const std::vector<EvalReport> reports{total_score(a), total_score(b)};
  const auto avg = average_reports(reports);
  CHECK(avg.sections[0].auc_source == Approx(0.9).epsilon(1e-15));
  CHECK(avg.sections[0].auc_target == Approx(0.75).epsilon(1e-15));
  CHECK(avg.omega_hmean == Approx((reports[0].omega_hmean + reports[1].omega_hmean) / 2).epsilon(1e-15));
  CHECK(avg.auc_target.per_machine.at("fan") == Approx(0.75).epsilon(1e-15));
  CHECK(code_of([] { average_reports(std::vector<EvalReport>{}); }) == ErrorCode::EmptySet);
}

TEST_CASE("report CSV round trip") {
  std::vector<LabeledScore> s;
  add_section(s, "fan", 0, 7, 9);
  add_section(s, "valve", 3, 10, 4);
  auto r = total_score(s);
  r.provenance["seed"] = "13711";
  const std::string csv = render_csv(r);
  CHECK(csv.find("metric,hmean,amean,fan,valve") != std::string::npos);
  CHECK(csv.find("TOTAL score") != std::string::npos);
  const auto back = parse_csv(csv);
  CHECK(back.omega_hmean == r.omega_hmean);
  CHECK(back.omega_amean == r.omega_amean);
  CHECK(back.auc_source.per_machine == r.auc_source.per_machine);
  CHECK(back.pauc.hmean == r.pauc.hmean);
  CHECK(back.provenance.at("seed") == "13711");
  CHECK(render_text(r).find("TOTAL score") != std::string::npos);
  CHECK(render_sections_csv(r).find("valve,3,") != std::string::npos);
}

TEST_CASE("decision statistics") {
  auto all_correct = confusion_stats(5, 0, 0, 5);
  CHECK(all_correct.precision == 1.0);
  CHECK(all_correct.recall == 1.0);
  CHECK(all_correct.f1 == 1.0);

  auto none_flagged = confusion_stats(0, 0, 4, 6);
  CHECK(!none_flagged.precision);
  CHECK(none_flagged.recall == 0.0);
  CHECK(!none_flagged.f1);

  auto c = confusion_stats(3, 1, 1, 0);
  CHECK(c.precision == 0.75);
  CHECK(c.recall == 0.75);
  CHECK(*c.f1 == Approx(0.75));

  const std::vector<DecisionInput> d{{"fan", 0, true, true}, {"fan", 0, true, false}, {"fan", 0, false, true},
                                     {"fan", 1, false, false}, {"valve", 0, true, true}};
  const auto stats = decision_stats(d);
  REQUIRE(stats.size() == 3);
  CHECK(stats[0].tp == 1);
  CHECK(stats[0].fp == 1);
  CHECK(stats[0].fn == 1);
  CHECK(stats[1].tn == 1);
  CHECK(!stats[1].precision);
  CHECK(!stats[1].recall);
  CHECK(stats[2].precision == 1.0);
}
