#pragma once

#include "ebscore/core.hpp"
#include "ebscore/distzoo.hpp"
#include "ebscore/kernel.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ebscore {

using ScoreFunction = std::function<Vector(const Vector&)>;

/// Inputs of the bandwidth/floor schedule.
struct ScheduleParams {
  Index n = 0;
  Index d = 1;
  double alpha = 1.0;
  double lip = 1.0;
  /// Hoelder exponent of the score; 1 means Lipschitz.
  double beta = 1.0;

  void validate() const;
};

struct Schedule {
  double h = 0.0;
  double eps = 0.0;
  std::vector<std::string> warnings;
};

/// h = (d^3 (alpha^2 ln n)^(d/2) / (L^2 n))^(2/(d+4)).
double theorem1_bandwidth(const ScheduleParams& p);
/// h = (d^(4-beta) (alpha^2 ln n)^(d/2) / (L^2 n))^(2/(d+2 beta+2)).
double holder_bandwidth(const ScheduleParams& p);

/// eps = n^-2 and the Lipschitz or Hoelder bandwidth depending on beta.
/// Warnings flag eps above (2 pi h)^(-d/2) e^(-1/2), h > 1/(4L) and n < e^d.
Schedule choose_schedule(const ScheduleParams& p);

/// {"h": ..., "eps": ..., "warnings": [...]}
std::string schedule_json(const Schedule& schedule);

/// Posterior mean y + h s_h(y) under Gaussian noise of variance h.
Vector tweedie_denoise(const ScoreFunction& score, const Vector& y, double h);

/// grad rho / max(rho, eps) for an analytic Gaussian or mixture density.
Vector analytic_regularized_score(const AnalyticTarget& target_h, double eps, const Vector& x);

/// Regularized KDE score as a type-erased function (shares the estimator).
ScoreFunction as_score_function(std::shared_ptr<const RegularizedScoreEstimator<double>> estimator);

}  // namespace ebscore
