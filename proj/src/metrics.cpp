#include "asd/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <tuple>

#include "asd/error.hpp"
#include "asd/io.hpp"

namespace asd::metrics {

double auc(std::span<const double> normals, std::span<const double> anomalies, TieMode ties) {
  if (normals.empty()) throw Error(ErrorCode::EmptySet, "AUC needs at least one normal score");
  if (anomalies.empty()) throw Error(ErrorCode::EmptySet, "AUC needs at least one anomaly score");
  std::vector<double> sorted(normals.begin(), normals.end());
  std::sort(sorted.begin(), sorted.end());
  // Every term is a multiple of 1/2, so the sum is exact in double.
  double wins = 0.0;
  for (double a : anomalies) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), a);
    wins += static_cast<double>(lo - sorted.begin());
    if (ties == TieMode::Half) {
      const auto hi = std::upper_bound(lo, sorted.end(), a);
      wins += 0.5 * static_cast<double>(hi - lo);
    }
  }
  return wins / (static_cast<double>(normals.size()) * static_cast<double>(anomalies.size()));
}

std::size_t pauc_normal_count(std::size_t normals, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "pAUC FPR must be in (0, 1]");
  // The small guard absorbs representation error in p (e.g. 0.3 * 10).
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(normals) + 1e-9));
}

double pauc(std::span<const double> normals, std::span<const double> anomalies, double p, TieMode ties) {
  if (normals.empty()) throw Error(ErrorCode::EmptySet, "pAUC needs at least one normal score");
  if (anomalies.empty()) throw Error(ErrorCode::EmptySet, "pAUC needs at least one anomaly score");
  const std::size_t k = pauc_normal_count(normals.size(), p);
  if (k == 0)
    throw Error(ErrorCode::PTooSmall, "floor(" + std::to_string(p) + " * " + std::to_string(normals.size()) + ") = 0");
  std::vector<double> hardest(normals.begin(), normals.end());
  std::partial_sort(hardest.begin(), hardest.begin() + static_cast<std::ptrdiff_t>(k), hardest.end(),
                    std::greater<>());
  hardest.resize(k);
  return auc(hardest, anomalies, ties);
}

double hmean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptySet, "harmonic mean of an empty set");
  double inv = 0.0;
  for (double v : values) {
    if (v < 0.0) throw Error(ErrorCode::InvalidConfig, "harmonic mean of a negative value");
    if (v == 0.0) return 0.0;
    inv += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv;
}

double amean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptySet, "arithmetic mean of an empty set");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::vector<std::string> EvalReport::machine_types() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : auc_source.per_machine) out.push_back(name);
  return out;
}

namespace {

MetricSummary summarize(const std::vector<SectionResult>& sections, double SectionResult::*field) {
  MetricSummary s;
  std::vector<double> all;
  std::map<std::string, std::vector<double>> by_machine;
  for (const auto& r : sections) {
    all.push_back(r.*field);
    by_machine[r.machine_type].push_back(r.*field);
  }
  s.hmean = hmean(all);
  s.amean = amean(all);
  for (const auto& [name, values] : by_machine) s.per_machine[name] = hmean(values);
  return s;
}

}  // namespace

EvalReport total_score(std::span<const LabeledScore> scores, double p, TieMode ties) {
  struct Cell {
    std::vector<double> normal_source, normal_target, normal_all, anomaly;
  };
  std::map<std::pair<std::string, int>, Cell> cells;
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw Error(ErrorCode::InvalidConfig, "non-finite score in " + s.machine_type);
    Cell& c = cells[{s.machine_type, s.section}];
    if (s.label == dataset::Label::Anomaly) {
      c.anomaly.push_back(s.score);
    } else if (s.label == dataset::Label::Normal) {
      c.normal_all.push_back(s.score);
      if (s.domain == dataset::Domain::Source) {
        c.normal_source.push_back(s.score);
      } else if (s.domain == dataset::Domain::Target) {
        c.normal_target.push_back(s.score);
      } else {
        throw Error(ErrorCode::MissingCell, s.machine_type + " section " + std::to_string(s.section) +
                                                ": normal clip without a domain label");
      }
    } else {
      throw Error(ErrorCode::MissingCell, s.machine_type + " section " + std::to_string(s.section) + ": unlabeled clip");
    }
  }
  if (cells.empty()) throw Error(ErrorCode::EmptySet, "no scores to evaluate");

  EvalReport report;
  report.p = p;
  for (const auto& [key, c] : cells) {
    const auto where = key.first + " section " + std::to_string(key.second);
    if (c.normal_source.empty()) throw Error(ErrorCode::MissingCell, where + " domain source: no normal clips");
    if (c.normal_target.empty()) throw Error(ErrorCode::MissingCell, where + " domain target: no normal clips");
    if (c.anomaly.empty()) throw Error(ErrorCode::MissingCell, where + ": no anomaly clips");
    SectionResult r;
    r.machine_type = key.first;
    r.section = key.second;
    // Each domain's normals are ranked against every anomaly of the section.
    r.auc_source = auc(c.normal_source, c.anomaly, ties);
    r.auc_target = auc(c.normal_target, c.anomaly, ties);
    r.pauc = pauc(c.normal_all, c.anomaly, p, ties);
    r.normals_source = static_cast<int>(c.normal_source.size());
    r.normals_target = static_cast<int>(c.normal_target.size());
    r.anomalies = static_cast<int>(c.anomaly.size());
    report.sections.push_back(r);
  }

  report.auc_source = summarize(report.sections, &SectionResult::auc_source);
  report.auc_target = summarize(report.sections, &SectionResult::auc_target);
  report.pauc = summarize(report.sections, &SectionResult::pauc);
  std::vector<double> omega;
  for (const auto& r : report.sections) {
    omega.push_back(r.auc_source);
    omega.push_back(r.auc_target);
    omega.push_back(r.pauc);
  }
  report.omega_hmean = hmean(omega);
  report.omega_amean = amean(omega);
  return report;
}

EvalReport average_reports(std::span<const EvalReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::EmptySet, "no reports to average");
  const EvalReport& first = reports.front();
  EvalReport avg = first;
  const double n = static_cast<double>(reports.size());

  auto mean_of = [&](auto&& get) {
    double sum = 0.0;
    for (const auto& r : reports) sum += get(r);
    return sum / n;
  };
  auto average_summary = [&](MetricSummary EvalReport::*field) {
    MetricSummary& out = avg.*field;
    out.hmean = mean_of([&](const EvalReport& r) { return (r.*field).hmean; });
    out.amean = mean_of([&](const EvalReport& r) { return (r.*field).amean; });
    for (auto& [name, value] : out.per_machine)
      value = mean_of([&](const EvalReport& r) { return (r.*field).per_machine.at(name); });
  };

  for (const auto& r : reports) {
    if (r.sections.size() != first.sections.size() || r.p != first.p)
      throw Error(ErrorCode::ShapeMismatch, "reports differ in layout and cannot be averaged");
    for (std::size_t i = 0; i < r.sections.size(); ++i)
      if (r.sections[i].machine_type != first.sections[i].machine_type ||
          r.sections[i].section != first.sections[i].section)
        throw Error(ErrorCode::ShapeMismatch, "reports differ in section layout");
    if (r.machine_types() != first.machine_types())
      throw Error(ErrorCode::ShapeMismatch, "reports differ in machine types");
  }
  for (std::size_t i = 0; i < avg.sections.size(); ++i) {
    avg.sections[i].auc_source = mean_of([&](const EvalReport& r) { return r.sections[i].auc_source; });
    avg.sections[i].auc_target = mean_of([&](const EvalReport& r) { return r.sections[i].auc_target; });
    avg.sections[i].pauc = mean_of([&](const EvalReport& r) { return r.sections[i].pauc; });
  }
  average_summary(&EvalReport::auc_source);
  average_summary(&EvalReport::auc_target);
  average_summary(&EvalReport::pauc);
  avg.omega_hmean = mean_of([](const EvalReport& r) { return r.omega_hmean; });
  avg.omega_amean = mean_of([](const EvalReport& r) { return r.omega_amean; });

  avg.provenance.clear();
  for (const auto& [key, value] : first.provenance) {
    std::string joined;
    std::set<std::string> seen;
    for (const auto& r : reports) {
      const auto it = r.provenance.find(key);
      if (it == r.provenance.end() || !seen.insert(it->second).second) continue;
      if (!joined.empty()) joined += ' ';
      joined += it->second;
    }
    avg.provenance[key] = joined;
  }
  avg.provenance["averaged_over"] = std::to_string(reports.size());
  return avg;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* kRowNames[] = {"AUC (source)", "AUC (target)", "pAUC (src & tgt)"};

const MetricSummary& row(const EvalReport& r, int i) {
  return i == 0 ? r.auc_source : (i == 1 ? r.auc_target : r.pauc);
}
MetricSummary& row(EvalReport& r, int i) { return i == 0 ? r.auc_source : (i == 1 ? r.auc_target : r.pauc); }

}  // namespace

std::string render_csv(const EvalReport& report) {
  std::ostringstream out;
  for (const auto& [key, value] : report.provenance) out << "# " << key << '=' << value << '\n';
  out << "# p=" << num(report.p) << '\n';
  const auto machines = report.machine_types();
  out << "metric,hmean,amean";
  for (const auto& m : machines) out << ',' << m;
  out << '\n';
  for (int i = 0; i < 3; ++i) {
    const MetricSummary& s = row(report, i);
    out << kRowNames[i] << ',' << num(s.hmean) << ',' << num(s.amean);
    for (const auto& m : machines) out << ',' << num(s.per_machine.at(m));
    out << '\n';
  }
  out << "TOTAL score," << num(report.omega_hmean) << ',' << num(report.omega_amean);
  for (std::size_t i = 0; i < machines.size(); ++i) out << ',';
  out << '\n';
  return out.str();
}

std::string render_sections_csv(const EvalReport& report) {
  std::ostringstream out;
  for (const auto& [key, value] : report.provenance) out << "# " << key << '=' << value << '\n';
  out << "machine_type,section,auc_source,auc_target,pauc,normals_source,normals_target,anomalies\n";
  for (const auto& s : report.sections)
    out << s.machine_type << ',' << s.section << ',' << num(s.auc_source) << ',' << num(s.auc_target) << ','
        << num(s.pauc) << ',' << s.normals_source << ',' << s.normals_target << ',' << s.anomalies << '\n';
  return out.str();
}

std::string render_text(const EvalReport& report) {
  std::ostringstream out;
  for (const auto& [key, value] : report.provenance) out << key << ": " << value << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "p: %.3g\n", report.p);
  out << buf;
  const auto machines = report.machine_types();
  std::size_t width = 8;
  for (const auto& m : machines) width = std::max(width, m.size() + 2);

  auto cell = [&](const std::string& s) {
    std::string padded = s;
    if (padded.size() < width) padded.insert(0, width - padded.size(), ' ');
    return padded;
  };
  auto fixed = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return cell(buf);
  };
  auto label = [](const std::string& s) {
    std::string padded = s;
    padded.resize(18, ' ');
    return padded;
  };

  out << label("metric") << cell("hmean") << cell("amean");
  for (const auto& m : machines) out << cell(m);
  out << '\n';
  for (int i = 0; i < 3; ++i) {
    const MetricSummary& s = row(report, i);
    out << label(kRowNames[i]) << fixed(s.hmean) << fixed(s.amean);
    for (const auto& m : machines) out << fixed(s.per_machine.at(m));
    out << '\n';
  }
  out << label("TOTAL score") << fixed(report.omega_hmean) << fixed(report.omega_amean) << '\n';
  return out.str();
}

EvalReport parse_csv(const std::string& text) {
  EvalReport report;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> machines;
  bool have_header = false;
  bool have_total = false;
  int rows_seen = 0;
  auto to_double = [](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::CorruptFile, "report value '" + s + "' is not a number");
    }
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string value = line.substr(eq + 1);
      if (key == "p") {
        report.p = to_double(value);
      } else {
        report.provenance[key] = value;
      }
      continue;
    }
    const auto fields = io::split(line, ',');
    if (!have_header) {
      if (fields.size() < 3 || fields[0] != "metric" || fields[1] != "hmean" || fields[2] != "amean")
        throw Error(ErrorCode::CorruptFile, "report header must start with metric,hmean,amean");
      machines.assign(fields.begin() + 3, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != machines.size() + 3) throw Error(ErrorCode::CorruptFile, "report row width mismatch: " + line);
    if (fields[0] == "TOTAL score") {
      report.omega_hmean = to_double(fields[1]);
      report.omega_amean = to_double(fields[2]);
      have_total = true;
      continue;
    }
    int index = -1;
    for (int i = 0; i < 3; ++i)
      if (fields[0] == kRowNames[i]) index = i;
    if (index < 0) throw Error(ErrorCode::CorruptFile, "unknown report row '" + fields[0] + "'");
    MetricSummary& s = row(report, index);
    s.hmean = to_double(fields[1]);
    s.amean = to_double(fields[2]);
    for (std::size_t m = 0; m < machines.size(); ++m) s.per_machine[machines[m]] = to_double(fields[m + 3]);
    ++rows_seen;
  }
  if (!have_header || !have_total || rows_seen != 3) throw Error(ErrorCode::CorruptFile, "incomplete report");
  return report;
}

DecisionStats confusion_stats(int tp, int fp, int fn, int tn) {
  DecisionStats s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.tn = tn;
  if (tp + fp > 0) s.precision = static_cast<double>(tp) / (tp + fp);
  if (tp + fn > 0) s.recall = static_cast<double>(tp) / (tp + fn);
  if (s.precision && s.recall && (*s.precision + *s.recall) > 0.0)
    s.f1 = 2.0 * *s.precision * *s.recall / (*s.precision + *s.recall);
  return s;
}

std::vector<DecisionStats> decision_stats(std::span<const DecisionInput> decisions) {
  std::map<std::pair<std::string, int>, std::array<int, 4>> counts;
  for (const auto& d : decisions) {
    auto& c = counts[{d.machine_type, d.section}];
    if (d.predicted_anomaly && d.is_anomaly) ++c[0];
    if (d.predicted_anomaly && !d.is_anomaly) ++c[1];
    if (!d.predicted_anomaly && d.is_anomaly) ++c[2];
    if (!d.predicted_anomaly && !d.is_anomaly) ++c[3];
  }
  std::vector<DecisionStats> out;
  for (const auto& [key, c] : counts) {
    DecisionStats s = confusion_stats(c[0], c[1], c[2], c[3]);
    s.machine_type = key.first;
    s.section = key.second;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace asd::metrics
