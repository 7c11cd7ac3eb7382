#include "ebscore/harness.hpp"

#include "ebscore/diffusion.hpp"
#include "ebscore/estimator.hpp"
#include "ebscore/kernel.hpp"
#include "ebscore/metrics.hpp"
#include "ebscore/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <set>

namespace ebscore {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* mode_name(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::theorem1:
      return "theorem1";
    case ScheduleMode::theorem2:
      return "theorem2";
    case ScheduleMode::fixed:
      return "fixed";
  }
  return "";
}

Vector vector_from_json(const Json& j) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

std::vector<double> vector_to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    require(known, where + ": unknown key '" + item.key() + "'");
  }
}

void assert_unique_seeds(const std::vector<CellRecord>& records) {
  std::set<std::uint64_t> seen;
  for (const CellRecord& r : records) {
    if (!seen.insert(r.seed).second) throw Error("sweep: cell seed collision, seed " + std::to_string(r.seed));
  }
}

// Means over replicates per distinct x (records sorted by x) and the fit.
void summarize(RateSweepResult& result) {
  std::map<double, std::pair<double, int>> sums;
  for (const CellRecord& r : result.records) {
    auto& [sum, count] = sums[r.x];
    sum += r.loss;
    ++count;
  }
  result.xs.clear();
  result.mean_losses.clear();
  for (const auto& [x, acc] : sums) {
    result.xs.push_back(x);
    result.mean_losses.push_back(acc.first / acc.second);
  }
  const bool positive = result.xs.size() >= 3 && std::all_of(result.mean_losses.begin(), result.mean_losses.end(),
                                                              [](double v) { return v > 0.0 && std::isfinite(v); });
  if (!positive) {
    result.slope_defined = false;
    result.slope = result.slope_stderr = result.intercept = kNaN;
    result.warnings.emplace_back("slope undefined: a mean loss is not positive or fewer than 3 sizes completed");
    return;
  }
  const SlopeFit fit = fit_loglog_slope(result.xs, result.mean_losses);
  result.slope_defined = true;
  result.slope = fit.slope;
  result.slope_stderr = fit.std_error;
  result.intercept = fit.intercept;
}

void sort_records(std::vector<CellRecord>& records) {
  std::sort(records.begin(), records.end(), [](const CellRecord& a, const CellRecord& b) {
    return a.x != b.x ? a.x < b.x : a.replicate < b.replicate;
  });
}

// Runs `cell` for each record in parallel. Failed cells are dropped and the
// first failure (in record order) is rethrown as a SweepError.
RateSweepResult run_cells(RateSweepResult result, const std::function<void(CellRecord&)>& cell) {
  assert_unique_seeds(result.records);
  const std::size_t count = result.records.size();
  std::vector<std::string> failure(count);
  std::vector<char> done(count, 0);
  parallel_for(count, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        cell(result.records[i]);
        done[i] = 1;
      } catch (const std::exception& e) {
        failure[i] = e.what();
      }
    }
  });
  std::vector<CellRecord> completed;
  std::string first_failure;
  for (std::size_t i = 0; i < count; ++i) {
    if (done[i]) {
      completed.push_back(result.records[i]);
    } else if (first_failure.empty()) {
      const CellRecord& r = result.records[i];
      first_failure = "cell (n=" + std::to_string(r.n) + ", replicate=" + std::to_string(r.replicate) +
                      ") failed: " + failure[i];
    }
  }
  sort_records(completed);
  result.records = std::move(completed);
  summarize(result);
  if (!first_failure.empty()) throw SweepError(first_failure, std::move(result));
  return result;
}

// H^2(rho_hat_h, rho_h) for one sample drawn from `seed`; the same draw as
// replicate r of smoothed_empirical_hellinger when seed = derive_seed(s, {n, r}).
double sample_hellinger(const AnalyticTarget& target, const AnalyticTarget& smoothed, Index n, double h,
                        std::uint64_t seed) {
  auto est = std::make_shared<const SmoothedEmpirical<double>>(target.sample(seed, n), h);
  return hellinger_sq_quadrature(log_density_of(est), log_density_of(smoothed), QuadratureGrid::around(target, h));
}

// Cells in replicate-major order so contiguous parallel chunks mix sizes.
std::vector<CellRecord> make_cells(const ExperimentConfig& config, std::uint64_t seed) {
  std::vector<CellRecord> cells;
  for (int r = 0; r < config.replicates; ++r) {
    for (Index n : config.n_grid) {
      CellRecord c;
      c.x = static_cast<double>(n);
      c.n = n;
      c.replicate = r;
      c.seed = derive_seed(seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r)});
      cells.push_back(c);
    }
  }
  return cells;
}

// ---- lemma checks ----

LemmaCheck make_check(const std::string& name, std::string instance, double measured, double bound, double tol) {
  LemmaCheck c;
  c.name = name;
  c.instance = std::move(instance);
  c.measured = measured;
  c.bound = bound;
  c.margin = bound - measured;
  c.passed = std::isfinite(c.margin) && c.margin >= -tol;
  return c;
}

Vector point1(double x) { return Vector::Constant(1, x); }

Vector point2(double x, double y) {
  Vector v(2);
  v << x, y;
  return v;
}

struct NamedTarget {
  std::string label;
  AnalyticTarget target;
};

AnalyticTarget pair_mixture(double center, double variance) {
  return make_gmm({{0.5, 0.5}, {point1(-center), point1(center)}, variance});
}

AnalyticTarget planar_mixture() {
  return make_gmm({{0.3, 0.7}, {point2(-1.0, 0.5), point2(1.0, -0.5)}, 0.5});
}

std::vector<NamedTarget> smooth_targets() {
  return {{"N(0,1)", make_gaussian(0.0, 1.0)},
          {"GMM{+-1, var 1}", pair_mixture(1.0, 1.0)},
          {"GMM{+-1, var 0.25}", pair_mixture(1.0, 0.25)},
          {"2-D GMM", planar_mixture()}};
}

// `count` points spread over mean +/- radius per axis: a line in 1-D, a
// square tensor grid in 2-D.
std::vector<Vector> spread_points(const AnalyticTarget& target, double radius, Index count) {
  std::vector<Vector> out;
  const Vector& mu = target.mean();
  if (target.dim() == 1) {
    for (Index i = 0; i < count; ++i) {
      out.push_back(point1(mu(0) - radius + 2.0 * radius * static_cast<double>(i) / static_cast<double>(count - 1)));
    }
    return out;
  }
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(count))));
  for (Index i = 0; i < side; ++i) {
    for (Index j = 0; j < side; ++j) {
      const double a = -radius + 2.0 * radius * static_cast<double>(i) / static_cast<double>(side - 1);
      const double b = -radius + 2.0 * radius * static_cast<double>(j) / static_cast<double>(side - 1);
      out.push_back(mu + point2(a, b));
    }
  }
  return out;
}

void ratio_bound(LemmaReport& report, std::uint64_t) {
  const std::vector<double> hs = {0.2, 0.1, 0.02, 0.05};
  const auto targets = smooth_targets();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const AnalyticTarget& target = targets[k].target;
    const double h = hs[k];
    const AnalyticTarget smoothed = convolve_gaussian(target, h);
    double worst = -std::numeric_limits<double>::infinity();
    for (const Vector& y : spread_points(target, 8.0 * target.alpha(), 10000)) {
      worst = std::max(worst, target.log_density(y) - smoothed.log_density(y));
    }
    const double bound = static_cast<double>(target.dim()) * target.lip() * h / 2.0;
    report.checks.push_back(make_check("ratio_bound", targets[k].label + ", h=" + format_double(h) +
                                                          ": max log(rho/rho_h) <= d L h / 2",
                                       worst, bound, report.tolerance));
  }
}

void regularization_error(LemmaReport& report, std::uint64_t) {
  struct Instance {
    Index d;
    Index n;
    std::optional<std::pair<double, double>> h_eps;
  };
  const std::vector<Instance> instances = {
      {1, 1000, std::nullopt}, {1, 10000, std::nullopt}, {2, 10000, std::nullopt}, {1, 1000, std::pair{0.1, 1e-2}}};
  for (const Instance& inst : instances) {
    const AnalyticTarget target = make_gaussian(Vector::Zero(inst.d), 1.0);
    double h = 0.0;
    double eps = 0.0;
    if (inst.h_eps) {
      std::tie(h, eps) = *inst.h_eps;
    } else {
      const Schedule s = choose_schedule({inst.n, inst.d, target.alpha(), target.lip(), 1.0});
      h = s.h;
      eps = s.eps;
    }
    const AnalyticTarget smoothed = convolve_gaussian(target, h);
    const double measured = score_distance_quadrature(
        [&](const Vector& x) { return analytic_regularized_score(smoothed, eps, x); }, score_of(smoothed),
        log_density_of(smoothed), QuadratureGrid::around(target, h));
    const double d = static_cast<double>(inst.d);
    const double n = static_cast<double>(inst.n);
    const double alpha = target.alpha();
    const double bound = 2.0 * eps / h * std::pow(64.0 * alpha * alpha * std::log(n), d / 2.0) *
                             std::log(1.0 / (eps * std::pow(2.0 * std::numbers::pi * h, d / 2.0))) +
                         2.0 * std::pow(d, 1.5) / (h * n * n);
    report.checks.push_back(make_check("regularization_error",
                                       "N(0, I_" + std::to_string(inst.d) + "), n=" + std::to_string(inst.n) +
                                           ", h=" + format_double(h) + ", eps=" + format_double(eps),
                                       measured, bound, report.tolerance));
  }
}

void hessian_sandwich(LemmaReport& report, std::uint64_t seed) {
  for (const NamedTarget& named : smooth_targets()) {
    const double lip = named.target.lip();
    for (double t : {0.0, 0.25 / lip, 0.5 / lip}) {
      const AnalyticTarget smoothed = t > 0.0 ? convolve_gaussian(named.target, t) : named.target;
      std::vector<Vector> points;
      if (named.target.dim() == 1) {
        points = spread_points(smoothed, 6.0 * smoothed.alpha(), 1000);
      } else {
        const Matrix unit = halton_points(1000, 2, seed);
        const double radius = 6.0 * smoothed.alpha();
        for (Index i = 0; i < unit.rows(); ++i) {
          points.push_back(smoothed.mean() + (2.0 * unit.row(i).transpose().array() - 1.0).matrix() * radius);
        }
      }
      double top = -std::numeric_limits<double>::infinity();
      double bottom = std::numeric_limits<double>::infinity();
      for (const Vector& y : points) {
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(smoothed.hessian_log_density(y), Eigen::EigenvaluesOnly);
        top = std::max(top, eig.eigenvalues().maxCoeff());
        bottom = std::min(bottom, eig.eigenvalues().minCoeff());
      }
      const std::string instance = named.label + ", L=" + format_double(lip) + ", t=" + format_double(t);
      report.checks.push_back(make_check("hessian_sandwich", instance + ": max eigenvalue <= L/(1-tL)", top,
                                         lip / (1.0 - t * lip), report.tolerance));
      report.checks.push_back(make_check("hessian_sandwich", instance + ": -min eigenvalue <= L/(1+tL)", -bottom,
                                         lip / (1.0 + t * lip), report.tolerance));
    }
  }
}

void covariance_lower_bound(LemmaReport& report, std::uint64_t seed) {
  const std::vector<NamedTarget> targets = {{"N(0,1)", make_gaussian(0.0, 1.0)},
                                            {"GMM{+-1, var 1}", pair_mixture(1.0, 1.0)},
                                            {"2-D GMM", planar_mixture()}};
  const Index draws = 1000000;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const AnalyticTarget& target = targets[k].target;
    const Matrix x = target.sample(derive_seed(seed, {0xc0ull, k}), draws);
    const Matrix centered = x.rowwise() - x.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(draws - 1);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const double smallest = eig.eigenvalues()(0);
    const Vector projected = centered * eig.eigenvectors().col(0);
    const double m2 = projected.array().square().mean();
    const double m4 = projected.array().square().square().mean();
    const double se = std::sqrt((m4 - m2 * m2) / static_cast<double>(draws));
    const double floor = 1.0 / target.lip() - 5.0 * se;
    // Reported as floor <= smallest eigenvalue.
    report.checks.push_back(make_check("covariance_lower_bound",
                                       targets[k].label + ", L=" + format_double(target.lip()) +
                                           ": 1/L - 5 se <= min eigenvalue of covariance",
                                       floor, smallest, report.tolerance));
  }
}

// int ||s_h - s||^2 rho_h on the grid nodes of a numerically smoothed table.
double tabulated_bias(const AnalyticTarget& target, const SmoothedTable& table, double step) {
  double sum = 0.0;
  for (Index i = 0; i < table.nodes.size(); ++i) {
    const double gap = table.score(i) - target.score(point1(table.nodes(i)))(0);
    sum += gap * gap * std::exp(table.log_density(i));
  }
  return sum * step;
}

void smoothing_bias(LemmaReport& report, std::uint64_t) {
  const std::string name = "smoothing_bias";
  for (Index d : {1, 2}) {
    const double h = 0.1;
    const AnalyticTarget target = make_gaussian(Vector::Zero(d), 1.0);
    const AnalyticTarget smoothed = convolve_gaussian(target, h);
    const double value = score_distance_quadrature(score_of(smoothed), score_of(target), log_density_of(smoothed),
                                                   QuadratureGrid::around(target, h));
    const double exact = static_cast<double>(d) * h * h / (1.0 + h);
    const std::string label = "N(0, I_" + std::to_string(d) + "), h=0.1";
    report.checks.push_back(make_check(name, label + ": |quadrature - d h^2/(1+h)|", std::abs(value - exact), 0.0,
                                       report.tolerance));
    report.checks.push_back(make_check(name, label + ": bias <= L^2 h d", value, h * static_cast<double>(d),
                                       report.tolerance));
  }
  const std::vector<std::pair<NamedTarget, double>> mixtures = {
      {{"GMM{+-1, var 1}", pair_mixture(1.0, 1.0)}, 0.1},
      {{"GMM{+-1, var 0.25}", pair_mixture(1.0, 0.25)}, 0.02},
      {{"2-D GMM", planar_mixture()}, 0.05}};
  for (const auto& [named, h] : mixtures) {
    const AnalyticTarget smoothed = convolve_gaussian(named.target, h);
    const double value = score_distance_quadrature(score_of(smoothed), score_of(named.target),
                                                   log_density_of(smoothed), QuadratureGrid::around(named.target, h));
    const double lip = named.target.lip();
    report.checks.push_back(make_check(name, named.label + ", h=" + format_double(h) + ": bias <= L^2 h d", value,
                                       lip * lip * h * static_cast<double>(named.target.dim()), report.tolerance));
  }
  // Families without a closed-form smoothing use a tabulated convolution.
  const std::vector<std::pair<NamedTarget, double>> numeric = {
      {{"Hoelder beta=0.5", make_holder_target({0.5})}, 0.05},
      {{"perturbed normal m=4", make_lower_bound_target(LowerBoundFamilySpec::filled(1, 4, 1))}, 0.01}};
  for (const auto& [named, h] : numeric) {
    const QuadratureGrid grid = QuadratureGrid::around(named.target, h);
    const SmoothedTable table = smooth_numerically(named.target, h, grid);
    const double value = tabulated_bias(named.target, table, grid.cell_volume());
    const double lip = named.target.lip();
    const double beta = named.target.holder_beta();
    report.checks.push_back(make_check(name, named.label + ", h=" + format_double(h) + ": bias <= L^2 (h d)^beta",
                                       value, lip * lip * std::pow(h, beta), report.tolerance));
  }
}

double mean_abs_deviation(const AnalyticTarget& target) {
  const Matrix x = target.sample(std::uint64_t{7}, 100000);
  return (x.rowwise() - target.mean().transpose()).rowwise().norm().mean();
}

void holder_score_difference(LemmaReport& report, std::uint64_t) {
  const std::string name = "holder_score_difference";
  const std::vector<NamedTarget> targets = {{"GMM{+-1, var 1}", pair_mixture(1.0, 1.0)},
                                            {"2-D GMM", planar_mixture()}};
  for (const NamedTarget& named : targets) {
    const double lip = named.target.lip();
    const double spread = mean_abs_deviation(named.target);
    for (double h : {0.1, 1.0}) {
      const AnalyticTarget smoothed = convolve_gaussian(named.target, h);
      double worst = 0.0;
      for (const Vector& y : spread_points(named.target, 8.0 * named.target.alpha(), 2500)) {
        const double bound = 4.0 * lip * ((y - named.target.mean()).norm() + spread);
        worst = std::max(worst, (smoothed.score(y) - named.target.score(y)).norm() / bound);
      }
      report.checks.push_back(make_check(name, named.label + ", h=" + format_double(h) +
                                                   ": max ||s_h - s|| / (4L(||y-mu|| + A)^beta) <= 1",
                                         worst, 1.0, report.tolerance));
    }
  }
  const AnalyticTarget holder = make_holder_target({0.5});
  const double spread = mean_abs_deviation(holder);
  for (double h : {0.05, 0.5}) {
    const QuadratureGrid grid = QuadratureGrid::around(holder, h);
    const SmoothedTable table = smooth_numerically(holder, h, grid);
    double worst = 0.0;
    for (Index i = 0; i < table.nodes.size(); ++i) {
      const double y = table.nodes(i);
      if (std::abs(y) > 6.0) continue;
      const double bound = 4.0 * holder.lip() * std::pow(std::abs(y) + spread, 0.5);
      worst = std::max(worst, std::abs(table.score(i) - holder.score(point1(y))(0)) / bound);
    }
    report.checks.push_back(make_check(name, "Hoelder beta=0.5, h=" + format_double(h) +
                                                 ": max ||s_h - s|| / (4L(||y-mu|| + A)^beta) <= 1",
                                       worst, 1.0, report.tolerance));
  }
}

void holder_ratio(LemmaReport& report, std::uint64_t) {
  const std::string name = "holder_ratio";
  const AnalyticTarget target = pair_mixture(1.0, 1.0);
  const double lip = target.lip();
  const double spread = mean_abs_deviation(target);
  const double beta = 1.0;
  const auto rhs = [&](double t, double distance) {
    return 5.0 * lip * std::pow(t, (1.0 + beta) / 2.0) +
           4.0 * lip * std::sqrt(t) * (std::pow(distance, beta) + std::pow(spread, beta));
  };
  for (auto [a, t] : {std::pair{0.05, 0.05}, std::pair{0.25, 0.25}, std::pair{0.1, 0.5}}) {
    const AnalyticTarget pa = convolve_gaussian(target, a);
    const AnalyticTarget pat = convolve_gaussian(target, a + t);
    double worst = -std::numeric_limits<double>::infinity();
    for (const Vector& y : spread_points(target, 8.0 * target.alpha(), 2001)) {
      worst = std::max(worst, pa.log_density(y) - pat.log_density(y) - rhs(t, (y - target.mean()).norm()));
    }
    report.checks.push_back(make_check(name, "GMM{+-1, var 1}, a=" + format_double(a) + ", t=" + format_double(t) +
                                                 ": max log(rho_a/rho_(a+t)) - bound <= 0",
                                       worst, 0.0, report.tolerance));
  }
  for (double t : {0.1, 0.5}) {
    const AnalyticTarget pt = convolve_gaussian(target, t);
    double worst = -std::numeric_limits<double>::infinity();
    for (const Vector& y : spread_points(target, 8.0 * target.alpha(), 2001)) {
      worst = std::max(worst, target.log_density(y) - pt.log_density(y));
    }
    report.checks.push_back(make_check(name, "GMM{+-1, var 1}, t=" + format_double(t) +
                                                 ": max log(rho/rho_t) <= L (t d)^((1+beta)/2)",
                                       worst, lip * std::pow(t, (1.0 + beta) / 2.0), report.tolerance));
  }
  // beta = 0.5 through tabulated smoothing; rho_a for a = 0 is the target itself.
  const AnalyticTarget holder = make_holder_target({0.5});
  const double hb = holder.holder_beta();
  const double hlip = holder.lip();
  const double hspread = mean_abs_deviation(holder);
  for (auto [a, t] : {std::pair{0.0, 0.1}, std::pair{0.05, 0.05}, std::pair{0.25, 0.25}}) {
    const QuadratureGrid grid = QuadratureGrid::around(holder, a + t);
    const SmoothedTable upper = smooth_numerically(holder, a + t, grid);
    std::optional<SmoothedTable> lower;
    if (a > 0.0) lower = smooth_numerically(holder, a, grid);
    double worst = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < grid.size(); ++i) {
      const double y = upper.nodes(i);
      if (std::abs(y) > 6.0) continue;
      const double log_a = lower ? lower->log_density(i) : holder.log_density(point1(y));
      const double bound = a > 0.0 ? 5.0 * hlip * std::pow(t, (1.0 + hb) / 2.0) +
                                         4.0 * hlip * std::sqrt(t) * (std::pow(std::abs(y), hb) + std::pow(hspread, hb))
                                   : hlip * std::pow(t, (1.0 + hb) / 2.0);
      worst = std::max(worst, log_a - upper.log_density(i) - bound);
    }
    report.checks.push_back(make_check(name, "Hoelder beta=0.5, a=" + format_double(a) + ", t=" + format_double(t) +
                                                 ": max log(rho_a/rho_(a+t)) - bound <= 0",
                                       worst, 0.0, report.tolerance));
  }
}

using LemmaRunner = void (*)(LemmaReport&, std::uint64_t);

const std::vector<std::pair<std::string, LemmaRunner>>& lemma_table() {
  static const std::vector<std::pair<std::string, LemmaRunner>> table = {
      {"ratio_bound", ratio_bound},
      {"regularization_error", regularization_error},
      {"hessian_sandwich", hessian_sandwich},
      {"covariance_lower_bound", covariance_lower_bound},
      {"smoothing_bias", smoothing_bias},
      {"holder_score_difference", holder_score_difference},
      {"holder_ratio", holder_ratio}};
  return table;
}

// ---- lower bound family ----

LowerBoundFamilySpec single_bit(int dim, int m) {
  LowerBoundFamilySpec spec = LowerBoundFamilySpec::filled(dim, m, 0);
  spec.bits[0] = 1;
  return spec;
}

double chi_sq_on_cube(const AnalyticTarget& f, const AnalyticTarget& f0, int points_per_axis) {
  std::vector<double> lo(static_cast<std::size_t>(f.dim()), 0.0);
  std::vector<double> hi(static_cast<std::size_t>(f.dim()), 1.0);
  const QuadratureGrid grid = QuadratureGrid::box(lo, hi, points_per_axis);
  const auto count = static_cast<std::size_t>(grid.size());
  std::vector<double> terms(count);
  parallel_for(count, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Vector x = grid.node(static_cast<Index>(i));
      const double base = f0.density(x);
      const double gap = f.density(x) - base;
      terms[i] = gap * gap / base;
    }
  });
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum * grid.cell_volume();
}

}  // namespace

// ---- config ----

void ExperimentConfig::validate() const {
  require(n_grid.size() >= 3, "config: n_grid needs at least 3 entries");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    require(n_grid[i] >= 3, "config: n_grid entries must be at least 3");
    require(i == 0 || n_grid[i] > n_grid[i - 1], "config: n_grid must be strictly increasing");
  }
  require(replicates >= 3, "config: replicates must be at least 3");
  require(n_eval >= 2, "config: n_eval must be at least 2");
  if (mode == ScheduleMode::fixed) {
    require(fixed_h > 0.0 && fixed_eps > 0.0, "config: fixed schedule needs h > 0 and eps > 0");
  }
  require(!alpha || *alpha > 0.0, "config: alpha must be positive");
  require(!lip || *lip > 0.0, "config: lip must be positive");
  require(!beta || (*beta > 0.0 && *beta <= 1.0), "config: beta must lie in (0, 1]");
  require(hellinger_h > 0.0 && hellinger_n >= 1, "config: hellinger_h and hellinger_n must be positive");
  require(h_grid.size() >= 3, "config: h_grid needs at least 3 entries");
  for (std::size_t i = 0; i < h_grid.size(); ++i) {
    require(h_grid[i] > 0.0 && (i == 0 || h_grid[i] > h_grid[i - 1]), "config: h_grid must be positive and increasing");
  }
  require(ou_time > 0.0, "config: ou_time must be positive");
  require(slope_tolerance > 0.0, "config: slope_tolerance must be positive");
  std::visit([](const auto& s) { s.validate(); }, target);
}

TargetSpec target_spec_from_json(const Json& j) {
  require(j.is_object(), "config: target must be a mapping");
  const std::string family = j.value("family", std::string("gaussian"));
  if (family == "gaussian") {
    check_keys(j, {"family", "dim", "mean", "variance"}, "target");
    const Vector mean = j.contains("mean") ? vector_from_json(j["mean"]) : Vector::Zero(j.value("dim", 1));
    require(!j.contains("dim") || j["dim"].get<Index>() == mean.size(), "target: dim does not match mean");
    return GaussianMixtureSpec{{1.0}, {mean}, j.value("variance", 1.0)};
  }
  if (family == "gmm") {
    check_keys(j, {"family", "weights", "means", "variance"}, "target");
    require(j.contains("weights") && j.contains("means"), "target: gmm needs weights and means");
    GaussianMixtureSpec spec;
    spec.weights = j["weights"].get<std::vector<double>>();
    for (const Json& m : j["means"]) spec.means.push_back(vector_from_json(m));
    spec.variance = j.value("variance", 1.0);
    return spec;
  }
  if (family == "lower_bound") {
    check_keys(j, {"family", "dim", "grid_m", "pert_scale", "bits", "bit"}, "target");
    LowerBoundFamilySpec spec = LowerBoundFamilySpec::filled(j.value("dim", 1), j.value("grid_m", 4), j.value("bit", 0));
    if (j.contains("pert_scale")) spec.pert_scale = j["pert_scale"].get<double>();
    if (j.contains("bits")) spec.bits = j["bits"].get<std::vector<int>>();
    return spec;
  }
  if (family == "holder") {
    check_keys(j, {"family", "beta"}, "target");
    return HolderSpec{j.value("beta", 0.5)};
  }
  throw ParameterError("target: unknown family '" + family + "'");
}

Json to_json(const TargetSpec& spec) {
  Json j;
  if (const auto* g = std::get_if<GaussianMixtureSpec>(&spec)) {
    j["family"] = "gmm";
    j["weights"] = g->weights;
    j["means"] = Json::array();
    for (const Vector& m : g->means) j["means"].push_back(vector_to_std(m));
    j["variance"] = g->variance;
  } else if (const auto* lb = std::get_if<LowerBoundFamilySpec>(&spec)) {
    j["family"] = "lower_bound";
    j["dim"] = lb->dim;
    j["grid_m"] = lb->grid_m;
    j["pert_scale"] = lb->pert_scale;
    j["bits"] = lb->bits;
  } else {
    j["family"] = "holder";
    j["beta"] = std::get<HolderSpec>(spec).beta;
  }
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  require(j.is_object(), "config: top level must be a mapping");
  check_keys(j,
             {"target", "n_grid", "replicates", "schedule", "h", "eps", "alpha", "lip", "beta", "estimator", "n_eval",
              "seed", "output", "hellinger_h", "hellinger_n", "h_grid", "ou_time", "expect_slope", "slope_tolerance"},
             "config");
  ExperimentConfig c;
  try {
    if (j.contains("target")) c.target = target_spec_from_json(j["target"]);
    if (j.contains("n_grid")) c.n_grid = j["n_grid"].get<std::vector<Index>>();
    c.replicates = j.value("replicates", c.replicates);
    const std::string mode = j.value("schedule", std::string("theorem1"));
    if (mode == "theorem1") {
      c.mode = ScheduleMode::theorem1;
    } else if (mode == "theorem2") {
      c.mode = ScheduleMode::theorem2;
    } else if (mode == "fixed") {
      c.mode = ScheduleMode::fixed;
    } else {
      throw ParameterError("config: unknown schedule '" + mode + "'");
    }
    c.fixed_h = j.value("h", 0.0);
    c.fixed_eps = j.value("eps", 0.0);
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("lip")) c.lip = j["lip"].get<double>();
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    const std::string estimator = j.value("estimator", std::string("kde"));
    require(estimator == "kde" || estimator == "oracle", "config: estimator must be kde or oracle");
    c.estimator = estimator == "kde" ? EstimatorKind::kde : EstimatorKind::oracle;
    c.n_eval = j.value("n_eval", c.n_eval);
    c.seed = j.value("seed", c.seed);
    c.output = j.value("output", c.output);
    c.hellinger_h = j.value("hellinger_h", c.hellinger_h);
    c.hellinger_n = j.value("hellinger_n", c.hellinger_n);
    if (j.contains("h_grid")) c.h_grid = j["h_grid"].get<std::vector<double>>();
    c.ou_time = j.value("ou_time", c.ou_time);
    if (j.contains("expect_slope")) c.expect_slope = j["expect_slope"].get<double>();
    c.slope_tolerance = j.value("slope_tolerance", c.slope_tolerance);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["target"] = to_json(c.target);
  j["n_grid"] = c.n_grid;
  j["replicates"] = c.replicates;
  j["schedule"] = mode_name(c.mode);
  if (c.mode == ScheduleMode::fixed) {
    j["h"] = c.fixed_h;
    j["eps"] = c.fixed_eps;
  }
  if (c.alpha) j["alpha"] = *c.alpha;
  if (c.lip) j["lip"] = *c.lip;
  if (c.beta) j["beta"] = *c.beta;
  j["estimator"] = c.estimator == EstimatorKind::kde ? "kde" : "oracle";
  j["n_eval"] = c.n_eval;
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["hellinger_h"] = c.hellinger_h;
  j["hellinger_n"] = c.hellinger_n;
  j["h_grid"] = c.h_grid;
  j["ou_time"] = c.ou_time;
  if (c.expect_slope) j["expect_slope"] = *c.expect_slope;
  j["slope_tolerance"] = c.slope_tolerance;
  return j;
}

// ---- fitting ----

SlopeFit fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size(), "fit_loglog_slope: length mismatch");
  require(xs.size() >= 3, "fit_loglog_slope: needs at least 3 points");
  const auto count = static_cast<Index>(xs.size());
  Vector lx(count);
  Vector ly(count);
  for (Index i = 0; i < count; ++i) {
    const double x = xs[static_cast<std::size_t>(i)];
    const double y = ys[static_cast<std::size_t>(i)];
    require(x > 0.0 && y > 0.0 && std::isfinite(x) && std::isfinite(y),
            "fit_loglog_slope: values must be positive and finite");
    lx(i) = std::log(x);
    ly(i) = std::log(y);
  }
  const double mx = lx.mean();
  const double my = ly.mean();
  const Vector cx = lx.array() - mx;
  const Vector cy = ly.array() - my;
  const double sxx = cx.squaredNorm();
  require(sxx > 0.0, "fit_loglog_slope: x values must not all coincide");
  SlopeFit fit;
  fit.slope = cx.dot(cy) / sxx;
  fit.intercept = my - fit.slope * mx;
  const double residual = (cy - fit.slope * cx).squaredNorm();
  fit.std_error = std::sqrt(residual / static_cast<double>(count - 2) / sxx);
  return fit;
}

// ---- sweeps ----

RateSweepResult run_rate_sweep(const ExperimentConfig& config) {
  config.validate();
  const AnalyticTarget target = make_target(config.target);
  ScheduleParams params;
  params.d = target.dim();
  params.alpha = config.alpha.value_or(target.alpha());
  params.lip = config.lip.value_or(target.lip());
  params.beta = config.mode == ScheduleMode::theorem1 ? 1.0 : config.beta.value_or(target.holder_beta());

  RateSweepResult result;
  result.kind = "score_loss";
  std::map<Index, Schedule> schedules;
  for (Index n : config.n_grid) {
    Schedule s;
    if (config.mode == ScheduleMode::fixed) {
      s.h = config.fixed_h;
      s.eps = config.fixed_eps;
    } else {
      params.n = n;
      s = choose_schedule(params);
    }
    for (const std::string& w : s.warnings) result.warnings.push_back("n=" + std::to_string(n) + ": " + w);
    schedules[n] = s;
  }
  result.records = make_cells(config, config.seed);
  for (CellRecord& c : result.records) {
    c.h = schedules[c.n].h;
    c.eps = schedules[c.n].eps;
  }
  return run_cells(std::move(result), [&](CellRecord& c) {
    ScoreFunction shat;
    if (config.estimator == EstimatorKind::oracle) {
      shat = score_of(target);
    } else {
      const Matrix sample = target.sample(derive_seed(c.seed, {0}), c.n);
      shat = as_score_function(std::make_shared<const RegularizedScoreEstimator<double>>(sample, c.h, c.eps));
    }
    const MCEstimate loss = score_loss_mc(shat, target, config.n_eval, derive_seed(c.seed, {1}));
    c.loss = loss.value;
    c.std_error = loss.std_error;
  });
}

RateSweepResult run_hellinger_sweep(const ExperimentConfig& config) {
  config.validate();
  const AnalyticTarget target = make_target(config.target);
  const AnalyticTarget smoothed = convolve_gaussian(target, config.hellinger_h);
  RateSweepResult result;
  result.kind = "smoothed_empirical_hellinger";
  result.records = make_cells(config, config.seed);
  for (CellRecord& c : result.records) c.h = config.hellinger_h;
  return run_cells(std::move(result), [&](CellRecord& c) {
    c.loss = sample_hellinger(target, smoothed, c.n, c.h, c.seed);
  });
}

RateSweepResult run_bandwidth_sweep(const ExperimentConfig& config) {
  config.validate();
  const AnalyticTarget target = make_target(config.target);
  RateSweepResult result;
  result.kind = "smoothed_empirical_hellinger_bandwidth";
  result.x_label = "inverse_bandwidth";
  for (int r = 0; r < config.replicates; ++r) {
    for (std::size_t k = 0; k < config.h_grid.size(); ++k) {
      CellRecord c;
      c.h = config.h_grid[k];
      c.x = 1.0 / c.h;
      c.n = config.hellinger_n;
      c.replicate = r;
      c.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(c.n), static_cast<std::uint64_t>(r), k});
      result.records.push_back(c);
    }
  }
  std::vector<AnalyticTarget> smoothed;
  for (double h : config.h_grid) smoothed.push_back(convolve_gaussian(target, h));
  return run_cells(std::move(result), [&](CellRecord& c) {
    const auto k = static_cast<std::size_t>(std::find(config.h_grid.begin(), config.h_grid.end(), c.h) -
                                            config.h_grid.begin());
    c.loss = sample_hellinger(target, smoothed[k], c.n, c.h, c.seed);
  });
}

RateSweepResult run_ou_score_sweep(const ExperimentConfig& config) {
  config.validate();
  const AnalyticTarget target = make_target(config.target);
  const AnalyticTarget marginal = ou_marginal(target, config.ou_time);
  RateSweepResult result;
  result.kind = "ou_score_loss";
  result.records = make_cells(config, config.seed);
  for (CellRecord& c : result.records) {
    const double n = static_cast<double>(c.n);
    c.h = ou_variance(config.ou_time);
    c.eps = 1.0 / (n * n);
  }
  return run_cells(std::move(result), [&](CellRecord& c) {
    const OUScoreModel model(target.sample(derive_seed(c.seed, {0}), c.n), c.eps);
    const auto smoothed = std::make_shared<const SmoothedEmpirical<double>>(model.at(config.ou_time));
    const ScoreFunction shat = [&model, smoothed](const Vector& x) { return model.score(*smoothed, x); };
    const MCEstimate loss = score_loss_mc(shat, marginal, config.n_eval, derive_seed(c.seed, {1}));
    c.loss = loss.value;
    c.std_error = loss.std_error;
  });
}

bool check_expectation(const ExperimentConfig& config, const RateSweepResult& result) {
  if (!config.expect_slope) return true;
  return result.slope_defined && std::abs(result.slope - *config.expect_slope) <= config.slope_tolerance;
}

Json to_json(const RateSweepResult& result) {
  Json j;
  j["kind"] = result.kind;
  j["x_label"] = result.x_label;
  j["xs"] = result.xs;
  j["mean_losses"] = result.mean_losses;
  j["slope_defined"] = result.slope_defined;
  j["slope"] = result.slope_defined ? Json(result.slope) : Json(nullptr);
  j["slope_stderr"] = result.slope_defined ? Json(result.slope_stderr) : Json(nullptr);
  j["intercept"] = result.slope_defined ? Json(result.intercept) : Json(nullptr);
  j["cells"] = result.records.size();
  j["warnings"] = result.warnings;
  return j;
}

void write_sweep(const std::filesystem::path& dir, const std::string& stem, const RateSweepResult& result,
                 const Json& config, bool complete) {
  std::string csv = "x,n,replicate,loss,std_error,h,eps,seed\n";
  for (const CellRecord& r : result.records) {
    csv += format_double(r.x) + ',' + std::to_string(r.n) + ',' + std::to_string(r.replicate) + ',' +
           format_double(r.loss) + ',' + format_double(r.std_error) + ',' + format_double(r.h) + ',' +
           format_double(r.eps) + ',' + std::to_string(r.seed) + '\n';
  }
  write_text(dir / (stem + ".csv"), csv);

  std::string plot = "# " + result.x_label + " mean_" + result.kind + "\n";
  for (std::size_t i = 0; i < result.xs.size(); ++i) {
    plot += format_double(result.xs[i]) + ' ' + format_double(result.mean_losses[i]) + '\n';
  }
  write_text(dir / (stem + "_plot.dat"), plot);

  Json summary;
  summary["version"] = std::string(kVersion);
  summary["status"] = complete ? "complete" : "partial";
  summary["config"] = config;
  summary["result"] = to_json(result);
  write_text(dir / (stem + ".json"), summary.dump(2) + "\n");
}

// ---- lemma suite ----

bool LemmaReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const LemmaCheck& c) { return c.passed; });
}

Json LemmaReport::to_json() const {
  Json j;
  j["version"] = std::string(kVersion);
  j["tolerance"] = tolerance;
  j["passed"] = passed();
  j["checks"] = Json::array();
  for (const LemmaCheck& c : checks) {
    Json item;
    item["name"] = c.name;
    item["instance"] = c.instance;
    item["measured"] = c.measured;
    item["bound"] = c.bound;
    item["margin"] = c.margin;
    item["passed"] = c.passed;
    j["checks"].push_back(item);
  }
  return j;
}

const std::vector<std::string>& registered_lemma_checks() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : lemma_table()) out.push_back(entry.first);
    return out;
  }();
  return names;
}

LemmaReport run_lemma_suite(const std::vector<std::string>& names, std::uint64_t seed) {
  std::vector<LemmaRunner> runners;
  for (const std::string& name : names) {
    const auto& table = lemma_table();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == name; });
    require(it != table.end(), "lemma suite: unknown check '" + name + "'");
    runners.push_back(it->second);
  }
  LemmaReport report;
  for (LemmaRunner run : runners) run(report, seed);
  return report;
}

// ---- lower bound ----

double lower_bound_separation(const LowerBoundFamilySpec& a, const LowerBoundFamilySpec& b, Index cell,
                              int points_per_axis) {
  require(a.dim == b.dim && a.grid_m == b.grid_m, "lower_bound_separation: families differ in shape");
  const AnalyticTarget fa = make_lower_bound_target(a);
  const AnalyticTarget fb = make_lower_bound_target(b);
  require(cell >= 0 && cell < a.cell_count(), "lower_bound_separation: cell out of range");
  std::vector<double> lo;
  std::vector<double> hi;
  Index rest = cell;
  for (int t = 0; t < a.dim; ++t) {
    const double corner = static_cast<double>(rest % a.grid_m) / a.grid_m;
    rest /= a.grid_m;
    lo.push_back(corner);
    hi.push_back(corner + 1.0 / a.grid_m);
  }
  return score_distance_quadrature(score_of(fa), score_of(fb), {}, QuadratureGrid::box(lo, hi, points_per_axis));
}

LowerBoundReport run_lower_bound_scaling(const std::vector<int>& dims, const std::vector<int>& m_grid,
                                         std::uint64_t seed) {
  require(!dims.empty(), "lower bound: dims must not be empty");
  require(m_grid.size() >= 3, "lower bound: m_grid needs at least 3 entries");
  for (int d : dims) require(d == 1 || d == 2, "lower bound: dims must be 1 or 2");
  for (std::size_t i = 0; i < m_grid.size(); ++i) {
    require(m_grid[i] >= 1 && (i == 0 || m_grid[i] > m_grid[i - 1]), "lower bound: m_grid must be increasing");
  }
  LowerBoundReport report;
  report.dims = dims;
  for (int d : dims) {
    std::vector<double> perts;
    std::vector<double> separations;
    std::vector<double> chis;
    for (int m : m_grid) {
      const LowerBoundFamilySpec flipped = single_bit(d, m);
      const LowerBoundFamilySpec base = LowerBoundFamilySpec::filled(d, m, 0);
      const LowerBoundFamilySpec full = LowerBoundFamilySpec::filled(d, m, 1);
      const AnalyticTarget full_target = make_lower_bound_target(full);
      LowerBoundRow row;
      row.dim = d;
      row.grid_m = m;
      row.pert = full.pert_scale;
      row.separation = lower_bound_separation(flipped, base, 0, d == 1 ? 4096 : 256);
      row.chi_sq = chi_sq_on_cube(full_target, make_lower_bound_target(base), d == 1 ? 256 * m : 32 * m);
      row.lip = full_target.lip();
      report.rows.push_back(row);
      perts.push_back(row.pert);
      separations.push_back(row.separation);
      chis.push_back(row.chi_sq);

      PackingStats p;
      p.dim = d;
      p.grid_m = m;
      p.length = static_cast<int>(full.cell_count());
      p.min_distance = std::max(1, p.length / 8);
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(m)}));
      const auto code = gilbert_varshamov_packing(p.length, p.min_distance, 64, 2000, rng);
      p.codewords = static_cast<int>(code.size());
      p.observed_min_distance = p.length;
      for (std::size_t i = 0; i < code.size(); ++i) {
        for (std::size_t k = i + 1; k < code.size(); ++k) {
          p.observed_min_distance = std::min(p.observed_min_distance, hamming_distance(code[i], code[k]));
        }
      }
      report.packing.push_back(p);
    }
    report.separation_fit.push_back(fit_loglog_slope(perts, separations));
    report.chi_sq_fit.push_back(fit_loglog_slope(perts, chis));
  }
  return report;
}

Json LowerBoundReport::to_json() const {
  Json j;
  j["version"] = std::string(kVersion);
  j["rows"] = Json::array();
  for (const LowerBoundRow& r : rows) {
    j["rows"].push_back({{"dim", r.dim}, {"grid_m", r.grid_m}, {"pert", r.pert}, {"separation", r.separation},
                         {"chi_sq", r.chi_sq}, {"lip", r.lip}});
  }
  j["fits"] = Json::array();
  for (std::size_t k = 0; k < dims.size(); ++k) {
    j["fits"].push_back({{"dim", dims[k]},
                         {"separation_slope", separation_fit[k].slope},
                         {"separation_stderr", separation_fit[k].std_error},
                         {"chi_sq_slope", chi_sq_fit[k].slope},
                         {"chi_sq_stderr", chi_sq_fit[k].std_error}});
  }
  j["packing"] = Json::array();
  for (const PackingStats& p : packing) {
    j["packing"].push_back({{"dim", p.dim}, {"grid_m", p.grid_m}, {"length", p.length},
                            {"min_distance", p.min_distance}, {"codewords", p.codewords},
                            {"observed_min_distance", p.observed_min_distance}});
  }
  return j;
}

}  // namespace ebscore
