#pragma once

#include "ebscore/core.hpp"
#include "ebscore/distzoo.hpp"
#include "ebscore/io.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ebscore {

enum class ScheduleMode { theorem1, theorem2, fixed };
/// kde: regularized KDE score. oracle: the exact score of the target.
enum class EstimatorKind { kde, oracle };

struct ExperimentConfig {
  TargetSpec target = GaussianMixtureSpec{{1.0}, {Vector::Zero(1)}, 1.0};
  std::vector<Index> n_grid;
  int replicates = 30;
  ScheduleMode mode = ScheduleMode::theorem1;
  /// Used in fixed mode only.
  double fixed_h = 0.0;
  double fixed_eps = 0.0;
  /// Schedule inputs; default to the target's declared values.
  std::optional<double> alpha;
  std::optional<double> lip;
  std::optional<double> beta;
  EstimatorKind estimator = EstimatorKind::kde;
  Index n_eval = 10000;
  std::uint64_t seed = 0;
  std::string output;

  /// Smoothed-empirical Hellinger sweeps: bandwidth of the n sweep, sample
  /// size and bandwidths of the h sweep.
  double hellinger_h = 0.1;
  Index hellinger_n = 4096;
  std::vector<double> h_grid = {0.005, 0.01, 0.02, 0.05, 0.1, 0.2};

  /// OU score sweep: diffusion time.
  double ou_time = 0.5;

  /// Optional slope assertion checked by check_expectation.
  std::optional<double> expect_slope;
  double slope_tolerance = 0.15;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const Json& j);
Json to_json(const ExperimentConfig& config);
TargetSpec target_spec_from_json(const Json& j);
Json to_json(const TargetSpec& spec);

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;
  double intercept = 0.0;
};

/// Least squares of log y on log x; std_error from the residual variance.
SlopeFit fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);

struct CellRecord {
  /// Sweep variable: n, or 1/h for bandwidth sweeps.
  double x = 0.0;
  Index n = 0;
  int replicate = 0;
  double loss = 0.0;
  double std_error = 0.0;
  double h = 0.0;
  double eps = 0.0;
  std::uint64_t seed = 0;
};

struct RateSweepResult {
  std::string kind;
  std::string x_label = "n";
  std::vector<CellRecord> records;
  std::vector<double> xs;
  /// Arithmetic mean over replicates at each x.
  std::vector<double> mean_losses;
  /// NaN with slope_defined = false when some mean loss is not positive.
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept = 0.0;
  bool slope_defined = true;
  std::vector<std::string> warnings;
};

/// Thrown when a cell fails; carries the cells completed before the failure.
class SweepError : public Error {
 public:
  SweepError(const std::string& message, RateSweepResult partial)
      : Error(message), partial_(std::move(partial)) {}
  const RateSweepResult& partial() const { return partial_; }

 private:
  RateSweepResult partial_;
};

/// Score loss of the scheduled estimator against the target score for each
/// (n, replicate) cell, fitted against n.
RateSweepResult run_rate_sweep(const ExperimentConfig& config);
/// H^2(rho_hat_h, rho_h) at h = hellinger_h, fitted against n.
RateSweepResult run_hellinger_sweep(const ExperimentConfig& config);
/// H^2(rho_hat_h, rho_h) at n = hellinger_n over h_grid, fitted against 1/h.
RateSweepResult run_bandwidth_sweep(const ExperimentConfig& config);
/// Loss of the regularized OU empirical score at time ou_time against the
/// exact OU marginal score, eps = n^-2, fitted against n.
RateSweepResult run_ou_score_sweep(const ExperimentConfig& config);

/// True when no slope is asserted or the fitted slope is within tolerance.
bool check_expectation(const ExperimentConfig& config, const RateSweepResult& result);

/// Writes <stem>.csv (one row per cell), <stem>.json (summary with the
/// config and version) and <stem>_plot.dat (x and mean loss) into `dir`.
void write_sweep(const std::filesystem::path& dir, const std::string& stem, const RateSweepResult& result,
                 const Json& config, bool complete);
Json to_json(const RateSweepResult& result);

struct LemmaCheck {
  std::string name;
  std::string instance;
  double measured = 0.0;
  double bound = 0.0;
  /// bound - measured; the check passes when margin >= -tolerance.
  double margin = 0.0;
  bool passed = false;
};

struct LemmaReport {
  double tolerance = 1e-6;
  std::vector<LemmaCheck> checks;
  bool passed() const;
  Json to_json() const;
};

/// ratio_bound, regularization_error, hessian_sandwich,
/// covariance_lower_bound, smoothing_bias, holder_score_difference,
/// holder_ratio.
const std::vector<std::string>& registered_lemma_checks();

/// Runs the named checks; throws ParameterError on an unknown name.
LemmaReport run_lemma_suite(const std::vector<std::string>& names, std::uint64_t seed);

struct LowerBoundRow {
  int dim = 1;
  int grid_m = 0;
  double pert = 0.0;
  /// Unweighted L2 score distance over the flipped cell.
  double separation = 0.0;
  /// chi^2(f_b || f_0) with every bit set.
  double chi_sq = 0.0;
  double lip = 0.0;
};

struct PackingStats {
  int dim = 1;
  int grid_m = 0;
  int length = 0;
  int min_distance = 0;
  int codewords = 0;
  int observed_min_distance = 0;
};

struct LowerBoundReport {
  std::vector<LowerBoundRow> rows;
  std::vector<PackingStats> packing;
  /// One entry per dimension, in the order requested.
  std::vector<int> dims;
  std::vector<SlopeFit> separation_fit;
  std::vector<SlopeFit> chi_sq_fit;
  Json to_json() const;
};

/// Unweighted integral of ||s_a - s_b||^2 over one cell of the unit cube.
double lower_bound_separation(const LowerBoundFamilySpec& a, const LowerBoundFamilySpec& b, Index cell,
                              int points_per_axis);

/// Perturbation family scalings for pert = 1/m, m in m_grid, d in {1, 2}.
/// Throws ConstructionError when a perturbed density is not positive.
LowerBoundReport run_lower_bound_scaling(const std::vector<int>& dims, const std::vector<int>& m_grid,
                                         std::uint64_t seed);

}  // namespace ebscore
