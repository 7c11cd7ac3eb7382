#include "ebscore/harness.hpp"
#include "ebscore/metrics.hpp"
#include "ebscore/parallel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ebscore;

namespace {

ExperimentConfig small_sweep() {
  ExperimentConfig c;
  c.target = GaussianMixtureSpec{{1.0}, {Vector::Zero(1)}, 1.0};
  c.n_grid = {64, 128, 256};
  c.replicates = 3;
  c.n_eval = 500;
  c.seed = 11;
  return c;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(FitLogLogSlope, ExactPowerLaws) {
  const std::vector<double> xs = {1.0, 2.0, 5.0, 10.0, 100.0};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(std::pow(x, -0.4));
  EXPECT_NEAR(fit_loglog_slope(xs, ys).slope, -0.4, 1e-12);
  EXPECT_NEAR(fit_loglog_slope(xs, std::vector<double>(5, 2.0)).slope, 0.0, 1e-15);
  ys.clear();
  for (double x : xs) ys.push_back(3.0 / x);
  const SlopeFit fit = fit_loglog_slope(xs, ys);
  EXPECT_NEAR(fit.slope, -1.0, 1e-12);
  EXPECT_NEAR(fit.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(fit.std_error, 0.0, 1e-12);
}

TEST(FitLogLogSlope, StdErrorFromResiduals) {
  // log y = 0, 1, 0 at log x = 0, 1, 2: slope 0, residuals (-1/3, 2/3, -1/3).
  const std::vector<double> xs = {1.0, std::exp(1.0), std::exp(2.0)};
  const std::vector<double> ys = {1.0, std::exp(1.0), 1.0};
  const SlopeFit fit = fit_loglog_slope(xs, ys);
  EXPECT_NEAR(fit.slope, 0.0, 1e-12);
  EXPECT_NEAR(fit.std_error, std::sqrt((2.0 / 3.0) / 1.0 / 2.0), 1e-12);
}

TEST(FitLogLogSlope, RejectsBadInput) {
  EXPECT_THROW(fit_loglog_slope({1, 2, 3}, {1, 0, 2}), ParameterError);
  EXPECT_THROW(fit_loglog_slope({1, -2, 3}, {1, 1, 2}), ParameterError);
  EXPECT_THROW(fit_loglog_slope({1, 2}, {1, 2}), ParameterError);
  EXPECT_THROW(fit_loglog_slope({1, 2, 3}, {1, 2}), ParameterError);
}

TEST(ExperimentConfig, Invariants) {
  ExperimentConfig c = small_sweep();
  EXPECT_NO_THROW(c.validate());
  c.n_grid = {64, 64, 128};
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_sweep();
  c.n_grid = {64, 128};
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_sweep();
  c.replicates = 2;
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_sweep();
  c.mode = ScheduleMode::fixed;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(ExperimentConfig, JsonRoundTrip) {
  const Json j = Json::parse(R"({
    "target": {"family": "gmm", "weights": [0.5, 0.5], "means": [[-1], [1]], "variance": 0.25},
    "n_grid": [256, 512, 1024], "replicates": 4, "schedule": "fixed", "h": 0.1, "eps": 1e-6,
    "estimator": "oracle", "n_eval": 100, "seed": 5, "expect_slope": -0.4})");
  const ExperimentConfig c = experiment_config_from_json(j);
  EXPECT_EQ(c.mode, ScheduleMode::fixed);
  EXPECT_EQ(c.estimator, EstimatorKind::oracle);
  EXPECT_EQ(c.replicates, 4);
  EXPECT_EQ(std::get<GaussianMixtureSpec>(c.target).variance, 0.25);
  const Json again = to_json(experiment_config_from_json(to_json(c)));
  EXPECT_EQ(again, to_json(c));
}

TEST(ExperimentConfig, RejectsUnknownKeysAndFamilies) {
  EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"replicate": 3})")), ParameterError);
  EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"target": {"family": "cauchy"}})")), ParameterError);
  EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"replicates": "many"})")), ParameterError);
  EXPECT_THROW(experiment_config_from_json(Json::parse(R"({"schedule": "theorem9"})")), ParameterError);
}

TEST(ExperimentConfig, TargetFamilies) {
  const TargetSpec g = target_spec_from_json(Json::parse(R"({"family": "gaussian", "dim": 2})"));
  EXPECT_EQ(std::get<GaussianMixtureSpec>(g).dim(), 2);
  const TargetSpec lb = target_spec_from_json(Json::parse(R"({"family": "lower_bound", "grid_m": 8, "bit": 1})"));
  EXPECT_EQ(std::get<LowerBoundFamilySpec>(lb).bits.size(), 8u);
  const TargetSpec h = target_spec_from_json(Json::parse(R"({"family": "holder", "beta": 0.25})"));
  EXPECT_EQ(std::get<HolderSpec>(h).beta, 0.25);
}

TEST(RateSweep, RecordsAreCompleteAndSeedsDistinct) {
  const RateSweepResult r = run_rate_sweep(small_sweep());
  ASSERT_EQ(r.records.size(), 9u);
  std::set<std::uint64_t> seeds;
  for (const CellRecord& c : r.records) seeds.insert(c.seed);
  EXPECT_EQ(seeds.size(), 9u);
  EXPECT_EQ(r.xs, (std::vector<double>{64, 128, 256}));
  EXPECT_TRUE(r.slope_defined);
  EXPECT_LT(r.slope, 0.0);
  for (const CellRecord& c : r.records) {
    EXPECT_DOUBLE_EQ(c.eps, 1.0 / (static_cast<double>(c.n) * static_cast<double>(c.n)));
    EXPECT_GT(c.loss, 0.0);
  }
}

TEST(RateSweep, MeanIsTakenBeforeLogs) {
  const RateSweepResult r = run_rate_sweep(small_sweep());
  double sum = 0.0;
  for (const CellRecord& c : r.records) {
    if (c.n == 128) sum += c.loss;
  }
  EXPECT_DOUBLE_EQ(r.mean_losses[1], sum / 3.0);
}

TEST(RateSweep, DeterministicAcrossThreadCounts) {
  set_thread_count(1);
  const RateSweepResult a = run_rate_sweep(small_sweep());
  set_thread_count(4);
  const RateSweepResult b = run_rate_sweep(small_sweep());
  set_thread_count(1);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].loss, b.records[i].loss);
  EXPECT_EQ(a.slope, b.slope);
}

TEST(RateSweep, OracleEstimatorHasUndefinedSlope) {
  ExperimentConfig c = small_sweep();
  c.mode = ScheduleMode::fixed;
  c.fixed_h = 0.1;
  c.fixed_eps = 1e-6;
  c.estimator = EstimatorKind::oracle;
  const RateSweepResult r = run_rate_sweep(c);
  for (const CellRecord& cell : r.records) EXPECT_EQ(cell.loss, 0.0);
  EXPECT_FALSE(r.slope_defined);
  EXPECT_TRUE(std::isnan(r.slope));
  EXPECT_FALSE(check_expectation([&] {
    ExperimentConfig e = c;
    e.expect_slope = -0.4;
    return e;
  }(), r));
}

TEST(RateSweep, FixedScheduleUsesConfiguredBandwidth) {
  ExperimentConfig c = small_sweep();
  c.mode = ScheduleMode::fixed;
  c.fixed_h = 0.3;
  c.fixed_eps = 1e-3;
  for (const CellRecord& cell : run_rate_sweep(c).records) {
    EXPECT_EQ(cell.h, 0.3);
    EXPECT_EQ(cell.eps, 1e-3);
  }
}

TEST(HellingerSweep, CellsMatchSmoothedEmpiricalHellinger) {
  ExperimentConfig c = small_sweep();
  c.hellinger_h = 0.2;
  const RateSweepResult r = run_hellinger_sweep(c);
  const std::vector<double> direct =
      smoothed_empirical_hellinger(make_gaussian(0.0, 1.0), 128, 0.2, 3, c.seed);
  std::vector<double> from_sweep;
  for (const CellRecord& cell : r.records) {
    if (cell.n == 128) from_sweep.push_back(cell.loss);
  }
  EXPECT_EQ(from_sweep, direct);
}

TEST(HellingerSweep, SinglePointMatchesTwoGaussianClosedForm) {
  const double h = 0.3;
  const std::uint64_t seed = 4;
  const double x1 = make_gaussian(0.0, 1.0).sample(derive_seed(seed, {1, 0}), 1)(0, 0);
  // H^2 = 2 - 2 BC for N(x1, h) and N(0, 1 + h).
  const double v1 = h;
  const double v2 = 1.0 + h;
  const double bc = std::sqrt(2.0 * std::sqrt(v1 * v2) / (v1 + v2)) * std::exp(-x1 * x1 / (4.0 * (v1 + v2)));
  EXPECT_NEAR(smoothed_empirical_hellinger(make_gaussian(0.0, 1.0), 1, h, 1, seed)[0], 2.0 - 2.0 * bc, 1e-8);
}

TEST(BandwidthSweep, UsesInverseBandwidthAxis) {
  ExperimentConfig c = small_sweep();
  c.hellinger_n = 200;
  c.h_grid = {0.05, 0.1, 0.2};
  const RateSweepResult r = run_bandwidth_sweep(c);
  EXPECT_EQ(r.x_label, "inverse_bandwidth");
  EXPECT_EQ(r.records.size(), 9u);
  EXPECT_NEAR(r.xs.front(), 5.0, 1e-12);
  EXPECT_NEAR(r.xs.back(), 20.0, 1e-12);
  EXPECT_GT(r.slope, 0.0);
}

TEST(OUScoreSweep, LossDecreasesWithN) {
  ExperimentConfig c = small_sweep();
  c.n_grid = {32, 128, 512};
  const RateSweepResult r = run_ou_score_sweep(c);
  EXPECT_LT(r.slope, 0.0);
  EXPECT_NEAR(r.records.front().h, 1.0 - std::exp(-1.0), 1e-15);
}

TEST(WriteSweep, WritesCsvSummaryAndPlotData) {
  const ExperimentConfig c = small_sweep();
  const RateSweepResult r = run_rate_sweep(c);
  const auto dir = std::filesystem::temp_directory_path() / "ebscore_harness_write";
  std::filesystem::remove_all(dir);
  write_sweep(dir, "rate", r, to_json(c), true);
  const std::string csv = slurp(dir / "rate.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  const Json summary = Json::parse(slurp(dir / "rate.json"));
  EXPECT_EQ(summary["version"], std::string(kVersion));
  EXPECT_EQ(summary["status"], "complete");
  EXPECT_EQ(summary["config"]["replicates"], 3);
  const std::string plot = slurp(dir / "rate_plot.dat");
  EXPECT_EQ(std::count(plot.begin(), plot.end(), '\n'), 4);
  const std::string first = slurp(dir / "rate.json");
  write_sweep(dir, "rate", run_rate_sweep(c), to_json(c), true);
  EXPECT_EQ(slurp(dir / "rate.json"), first);
}

TEST(LemmaSuite, EmptyListPasses) {
  const LemmaReport report = run_lemma_suite({}, 1);
  EXPECT_TRUE(report.passed());
  EXPECT_TRUE(report.checks.empty());
  EXPECT_EQ(report.to_json()["passed"], true);
}

TEST(LemmaSuite, UnknownNameIsAParameterError) {
  EXPECT_THROW(run_lemma_suite({"smoothing_bias", "nope"}, 1), ParameterError);
}

TEST(LemmaSuite, SmoothingBiasMatchesGaussianClosedForm) {
  const LemmaReport report = run_lemma_suite({"smoothing_bias"}, 1);
  ASSERT_FALSE(report.checks.empty());
  EXPECT_TRUE(report.passed());
  // Second check: N(0,1), h = 0.1 bias against L^2 h d.
  EXPECT_NEAR(report.checks[1].measured, 0.01 / 1.1, 1e-6);
  EXPECT_EQ(report.checks[1].bound, 0.1);
}

TEST(LemmaSuite, RatioBoundOnStandardNormal) {
  const LemmaReport report = run_lemma_suite({"ratio_bound"}, 1);
  // log(rho/rho_h) peaks at 0 for N(0,1): 0.5 log(1 + h).
  EXPECT_NEAR(report.checks[0].measured, 0.5 * std::log(1.2), 1e-6);
  EXPECT_EQ(report.checks[0].bound, 0.1);
  EXPECT_TRUE(report.passed());
}

TEST(LemmaSuite, EveryRegisteredCheckPasses) {
  const LemmaReport report = run_lemma_suite(registered_lemma_checks(), 3);
  EXPECT_EQ(registered_lemma_checks().size(), 7u);
  for (const LemmaCheck& c : report.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.instance;
}

TEST(LowerBound, IdenticalFamiliesHaveNoSeparation) {
  const LowerBoundFamilySpec a = LowerBoundFamilySpec::filled(1, 4, 1);
  EXPECT_EQ(lower_bound_separation(a, a, 0, 256), 0.0);
}

TEST(LowerBound, CoarsePlanarGridIsNotADensity) {
  EXPECT_THROW(run_lower_bound_scaling({2}, {4, 8, 16}, 1), ConstructionError);
}

TEST(LowerBound, OneDimensionalSlopes) {
  const LowerBoundReport report = run_lower_bound_scaling({1}, {4, 8, 16}, 1);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_NEAR(report.separation_fit[0].slope, 3.0, 0.2);
  EXPECT_NEAR(report.chi_sq_fit[0].slope, 4.0, 0.3);
  for (const PackingStats& p : report.packing) {
    EXPECT_GE(p.observed_min_distance, p.min_distance);
    EXPECT_GE(p.codewords, 2);
  }
}

TEST(LowerBound, RejectsUnsupportedDimensions) {
  EXPECT_THROW(run_lower_bound_scaling({3}, {4, 8, 16}, 1), ParameterError);
  EXPECT_THROW(run_lower_bound_scaling({1}, {4, 8}, 1), ParameterError);
}
