#include "asd/scoring.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "asd/error.hpp"

namespace asd::scoring {

std::string_view to_string(Backend b) { return b == Backend::Mse ? "mse" : "selective_mahalanobis"; }
std::string_view to_string(Decision d) { return d == Decision::Normal ? "normal" : "anomaly"; }

std::string_view to_string(ChosenDomain d) {
  switch (d) {
    case ChosenDomain::Source: return "source";
    case ChosenDomain::Target: return "target";
    case ChosenDomain::NotApplicable: return "n/a";
  }
  return "n/a";
}

Backend parse_backend(std::string_view s) {
  if (s == "mse") return Backend::Mse;
  if (s == "selective_mahalanobis") return Backend::SelectiveMahalanobis;
  throw Error(ErrorCode::InvalidConfig, "unknown backend '" + std::string(s) + "'");
}

Decision parse_decision(std::string_view s) {
  if (s == "normal") return Decision::Normal;
  if (s == "anomaly") return Decision::Anomaly;
  throw Error(ErrorCode::InvalidConfig, "unknown decision '" + std::string(s) + "'");
}

ChosenDomain parse_chosen_domain(std::string_view s) {
  if (s == "source") return ChosenDomain::Source;
  if (s == "target") return ChosenDomain::Target;
  if (s == "n/a") return ChosenDomain::NotApplicable;
  throw Error(ErrorCode::InvalidConfig, "unknown domain '" + std::string(s) + "'");
}

bool DomainCovariances::operator==(const DomainCovariances& o) const {
  return sigma_s_inv.rows() == o.sigma_s_inv.rows() && sigma_t_inv.rows() == o.sigma_t_inv.rows() &&
         sigma_s_inv == o.sigma_s_inv && sigma_t_inv == o.sigma_t_inv && shrinkage_s == o.shrinkage_s &&
         shrinkage_t == o.shrinkage_t && frames_s == o.frames_s && frames_t == o.frames_t;
}

CovarianceFit fit_domain_covariance(const Matrix& residuals, const ShrinkageConfig& cfg) {
  const auto n = residuals.rows();
  if (n < 2) throw Error(ErrorCode::InsufficientFrames, "covariance needs >= 2 frames, got " + std::to_string(n));
  const auto dims = residuals.cols();

  const RowVector mean = residuals.colwise().mean();
  const Matrix centered = residuals.rowwise() - mean;
  Matrix s = (centered.transpose() * centered) / static_cast<double>(n);
  s = 0.5 * (s + s.transpose());
  const double scale = s.diagonal().mean();
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw Error(ErrorCode::SingularCovariance, "residual covariance has zero trace");

  for (double lambda = cfg.lambda; lambda <= cfg.max_lambda * (1.0 + 1e-12); lambda *= cfg.escalation) {
    Matrix sigma = s;
    sigma.diagonal().array() += lambda * scale;
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) continue;
    Matrix inv = llt.solve(Matrix::Identity(dims, dims));
    inv = 0.5 * (inv + inv.transpose());
    if (!inv.allFinite() || Eigen::LLT<Matrix>(inv).info() != Eigen::Success) continue;
    return {std::move(sigma), std::move(inv), lambda, n};
  }
  std::ostringstream msg;
  msg << "Cholesky failed up to shrinkage " << cfg.max_lambda;
  throw Error(ErrorCode::SingularCovariance, msg.str());
}

Matrix residuals(const model::AutoencoderState& state, const Matrix& features) {
  return features - model::reconstruct(state, features);
}

DomainCovariances fit_covariances(const model::AutoencoderState& state, const Matrix& source_frames,
                                  const Matrix& target_frames, const ShrinkageConfig& cfg) {
  if (source_frames.rows() < 2 || target_frames.rows() < 2)
    throw Error(ErrorCode::InsufficientFrames, "need >= 2 frames per domain (source " +
                                                   std::to_string(source_frames.rows()) + ", target " +
                                                   std::to_string(target_frames.rows()) + ")");
  auto src = fit_domain_covariance(residuals(state, source_frames), cfg);
  auto tgt = fit_domain_covariance(residuals(state, target_frames), cfg);
  return {std::move(src.sigma_inv), std::move(tgt.sigma_inv), src.lambda, tgt.lambda, src.frames, tgt.frames};
}

Threshold fit_threshold(std::span<const double> training_scores, double percentile) {
  if (training_scores.size() < 10)
    throw Error(ErrorCode::InsufficientData, "threshold needs >= 10 training scores, got " +
                                                 std::to_string(training_scores.size()));
  if (!(percentile >= 0.0 && percentile <= 1.0)) throw Error(ErrorCode::InvalidConfig, "percentile must be in [0, 1]");
  std::vector<double> sorted(training_scores.begin(), training_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = percentile * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  const double value = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  std::ostringstream rule;
  rule << "empirical percentile p=" << percentile << " (linear) of " << sorted.size() << " training clip scores";
  return {value, rule.str()};
}

double mse_from_residuals(const Matrix& r) {
  if (r.size() == 0) throw Error(ErrorCode::ShapeMismatch, "empty clip");
  return r.squaredNorm() / static_cast<double>(r.size());
}

double mse_score(const model::AutoencoderState& state, const Matrix& features) {
  return mse_from_residuals(residuals(state, features));
}

double mahalanobis_from_residuals(const Matrix& r, const Matrix& sigma_inv) {
  if (r.rows() == 0) throw Error(ErrorCode::ShapeMismatch, "empty clip");
  if (sigma_inv.rows() != r.cols() || sigma_inv.cols() != r.cols())
    throw Error(ErrorCode::ShapeMismatch, "covariance is " + std::to_string(sigma_inv.rows()) + "-dimensional, residuals " +
                                              std::to_string(r.cols()));
  const Vector per_frame = (r * sigma_inv).cwiseProduct(r).rowwise().sum();
  return per_frame.mean() / static_cast<double>(r.cols());
}

SelectiveScore selective_from_residuals(const Matrix& r, const DomainCovariances& cov) {
  SelectiveScore s;
  s.source = mahalanobis_from_residuals(r, cov.sigma_s_inv);
  s.target = mahalanobis_from_residuals(r, cov.sigma_t_inv);
  if (s.target < s.source) {
    s.score = s.target;
    s.chosen = ChosenDomain::Target;
  } else {
    s.score = s.source;
    s.chosen = ChosenDomain::Source;
  }
  return s;
}

SelectiveScore selective_mahalanobis_score(const model::AutoencoderState& state, const DomainCovariances& cov,
                                           const Matrix& features) {
  return selective_from_residuals(residuals(state, features), cov);
}

ClipScore score_mse(const model::AutoencoderState& state, const Matrix& features, const Threshold& threshold,
                    std::string clip_id) {
  ClipScore out;
  out.clip_id = std::move(clip_id);
  out.score = mse_score(state, features);
  out.decision = threshold.exceeded_by(out.score) ? Decision::Anomaly : Decision::Normal;
  out.backend = Backend::Mse;
  out.chosen_domain = ChosenDomain::NotApplicable;
  return out;
}

ClipScore score_selective_mahalanobis(const model::AutoencoderState& state, const DomainCovariances& cov,
                                      const Matrix& features, const Threshold& threshold, std::string clip_id) {
  const SelectiveScore s = selective_mahalanobis_score(state, cov, features);
  ClipScore out;
  out.clip_id = std::move(clip_id);
  out.score = s.score;
  out.decision = threshold.exceeded_by(out.score) ? Decision::Anomaly : Decision::Normal;
  out.backend = Backend::SelectiveMahalanobis;
  out.chosen_domain = s.chosen;
  return out;
}

}  // namespace asd::scoring
