#pragma once

// Clip-level anomaly scores: mean squared reconstruction residual, or the
// selective Mahalanobis score that takes the smaller of two per-domain
// residual distances without being told the clip's domain.

#include <span>
#include <string>
#include <string_view>

#include "asd/linalg.hpp"
#include "asd/model.hpp"

namespace asd::scoring {

enum class Backend { Mse, SelectiveMahalanobis };
enum class Decision { Normal, Anomaly };
enum class ChosenDomain { Source, Target, NotApplicable };

std::string_view to_string(Backend b);
std::string_view to_string(Decision d);
std::string_view to_string(ChosenDomain d);
Backend parse_backend(std::string_view s);
Decision parse_decision(std::string_view s);
ChosenDomain parse_chosen_domain(std::string_view s);

struct ShrinkageConfig {
  double lambda = 1e-3;  // relative to the mean diagonal of the covariance
  double escalation = 10.0;
  double max_lambda = 1.0;
};

struct CovarianceFit {
  Matrix sigma;
  Matrix sigma_inv;
  double lambda = 0.0;
  Eigen::Index frames = 0;
};

// Population covariance of residual rows, shrunk toward a scaled identity
// until Cholesky succeeds; inverse via the Cholesky factor, symmetrized.
CovarianceFit fit_domain_covariance(const Matrix& residuals, const ShrinkageConfig& cfg = {});

struct DomainCovariances {
  Matrix sigma_s_inv;
  Matrix sigma_t_inv;
  double shrinkage_s = 0.0;
  double shrinkage_t = 0.0;
  Eigen::Index frames_s = 0;
  Eigen::Index frames_t = 0;

  bool operator==(const DomainCovariances&) const;
};

// x - reconstruct(x), row per frame, eval mode.
Matrix residuals(const model::AutoencoderState& state, const Matrix& features);

DomainCovariances fit_covariances(const model::AutoencoderState& state, const Matrix& source_frames,
                                  const Matrix& target_frames, const ShrinkageConfig& cfg = {});

struct Threshold {
  double value = 0.0;
  std::string rule;

  bool exceeded_by(double score) const { return score > value; }
};

// Empirical percentile with linear interpolation between order statistics.
Threshold fit_threshold(std::span<const double> training_scores, double percentile = 0.9);

struct ClipScore {
  std::string clip_id;
  double score = 0.0;
  Decision decision = Decision::Normal;
  Backend backend = Backend::Mse;
  ChosenDomain chosen_domain = ChosenDomain::NotApplicable;
};

// Mean over every squared residual entry of the clip.
double mse_from_residuals(const Matrix& residuals);
double mse_score(const model::AutoencoderState& state, const Matrix& features);

struct SelectiveScore {
  double source = 0.0;  // mean over frames of d' S_s^-1 d / dims
  double target = 0.0;
  double score = 0.0;
  ChosenDomain chosen = ChosenDomain::Source;
};

double mahalanobis_from_residuals(const Matrix& residuals, const Matrix& sigma_inv);
SelectiveScore selective_from_residuals(const Matrix& residuals, const DomainCovariances& cov);
SelectiveScore selective_mahalanobis_score(const model::AutoencoderState& state, const DomainCovariances& cov,
                                           const Matrix& features);

ClipScore score_mse(const model::AutoencoderState& state, const Matrix& features, const Threshold& threshold,
                    std::string clip_id = {});
ClipScore score_selective_mahalanobis(const model::AutoencoderState& state, const DomainCovariances& cov,
                                      const Matrix& features, const Threshold& threshold, std::string clip_id = {});

}  // namespace asd::scoring
