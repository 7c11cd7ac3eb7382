#include "ebscore/estimator.hpp"

#include "json.hpp"

#include <cmath>
#include <numbers>

namespace ebscore {

void ScheduleParams::validate() const {
  require(n >= 3, "schedule: n must be at least 3 so that ln n > 1");
  require(d >= 1, "schedule: d must be positive");
  require(alpha > 0.0 && std::isfinite(alpha), "schedule: alpha must be positive");
  require(lip > 0.0 && std::isfinite(lip), "schedule: lip must be positive");
  require(beta > 0.0 && beta <= 1.0, "schedule: beta must lie in (0, 1]");
}

double theorem1_bandwidth(const ScheduleParams& p) {
  p.validate();
  const double d = static_cast<double>(p.d);
  const double n = static_cast<double>(p.n);
  const double base = std::pow(d, 3.0) * std::pow(p.alpha * p.alpha * std::log(n), d / 2.0) / (p.lip * p.lip * n);
  return std::pow(base, 2.0 / (d + 4.0));
}

double holder_bandwidth(const ScheduleParams& p) {
  p.validate();
  const double d = static_cast<double>(p.d);
  const double n = static_cast<double>(p.n);
  const double base =
      std::pow(d, 4.0 - p.beta) * std::pow(p.alpha * p.alpha * std::log(n), d / 2.0) / (p.lip * p.lip * n);
  return std::pow(base, 2.0 / (d + 2.0 * p.beta + 2.0));
}

Schedule choose_schedule(const ScheduleParams& p) {
  p.validate();
  Schedule s;
  s.h = p.beta == 1.0 ? theorem1_bandwidth(p) : holder_bandwidth(p);
  const double n = static_cast<double>(p.n);
  const double d = static_cast<double>(p.d);
  s.eps = 1.0 / (n * n);
  const double log_floor_limit = -0.5 * d * std::log(2.0 * std::numbers::pi * s.h) - 0.5;
  if (std::log(s.eps) > log_floor_limit) s.warnings.emplace_back("eps exceeds (2 pi h)^(-d/2) e^(-1/2)");
  if (s.h > 1.0 / (4.0 * p.lip)) s.warnings.emplace_back("h exceeds 1/(4L)");
  if (std::log(n) < d) s.warnings.emplace_back("n is below e^d");
  return s;
}

std::string schedule_json(const Schedule& schedule) {
  nlohmann::ordered_json j;
  j["h"] = schedule.h;
  j["eps"] = schedule.eps;
  j["warnings"] = schedule.warnings;
  return j.dump();
}

Vector tweedie_denoise(const ScoreFunction& score, const Vector& y, double h) {
  require(h >= 0.0, "tweedie_denoise: h must be non-negative");
  if (h == 0.0) return y;
  return y + h * score(y);
}

Vector analytic_regularized_score(const AnalyticTarget& target_h, double eps, const Vector& x) {
  if (target_h.mixture() == nullptr) {
    throw UnsupportedOperation("analytic_regularized_score: requires a Gaussian or mixture target, got '" +
                               std::string(target_h.family()) + "'");
  }
  require(eps > 0.0, "analytic_regularized_score: eps must be positive");
  return floor_factor(target_h.log_density(x), std::log(eps)) * target_h.score(x);
}

ScoreFunction as_score_function(std::shared_ptr<const RegularizedScoreEstimator<double>> estimator) {
  return [estimator = std::move(estimator)](const Vector& x) { return (*estimator)(x); };
}

}  // namespace ebscore
