#include "ebscore/metrics.hpp"

#include "ebscore/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

namespace ebscore {
namespace {

constexpr Index kBlock = 2048;
constexpr double kCoverageTolerance = 1e-6;

// Sums f over the grid in fixed-size blocks; the block partials are combined
// serially, so the result does not depend on the number of workers.
template <std::size_t K, typename F>
std::array<double, K> grid_sums(const QuadratureGrid& grid, const F& f) {
  const Index total = grid.size();
  const Index blocks = (total + kBlock - 1) / kBlock;
  std::vector<std::array<double, K>> partial(static_cast<std::size_t>(blocks));
  parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      std::array<double, K> acc{};
      const Index first = static_cast<Index>(b) * kBlock;
      const Index last = std::min(total, first + kBlock);
      for (Index i = first; i < last; ++i) {
        const std::array<double, K> v = f(grid.node(i));
        for (std::size_t k = 0; k < K; ++k) acc[k] += v[k];
      }
      partial[b] = acc;
    }
  });
  std::array<double, K> out{};
  for (const auto& p : partial)
    for (std::size_t k = 0; k < K; ++k) out[k] += p[k];
  for (double& v : out) v *= grid.cell_volume();
  return out;
}

std::string describe(const Vector& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ')';
  return os.str();
}

// Evaluates summand(Y_j) for Y_j drawn from `sampler` in parallel, then
// reduces serially.
MCEstimate monte_carlo(const SamplerFunction& sampler, Index n_eval, std::uint64_t seed, const char* metric,
                       const std::function<double(const Vector&)>& summand) {
  require(n_eval >= 2, std::string(metric) + ": n_eval must be at least 2");
  Rng rng(seed);
  const Matrix draws = sampler(rng, n_eval);
  Vector values(n_eval);
  parallel_for(static_cast<std::size_t>(n_eval), [&](std::size_t begin, std::size_t end) {
    Vector y(draws.cols());
    for (auto j = static_cast<Index>(begin); j < static_cast<Index>(end); ++j) {
      y = draws.row(j).transpose();
      const double v = summand(y);
      if (!std::isfinite(v)) {
        throw EvaluationError(std::string(metric) + ": non-finite summand at " + describe(y));
      }
      values(j) = v;
    }
  });
  MCEstimate est;
  est.n_eval = n_eval;
  est.seed = seed;
  const double mean = values.sum() / static_cast<double>(n_eval);
  const double var = (values.array() - mean).square().sum() / static_cast<double>(n_eval - 1);
  est.value = mean;
  est.raw_value = mean;
  est.std_error = std::sqrt(var / static_cast<double>(n_eval));
  return est;
}

void check_coverage(double mass_p, double mass_q, const char* metric) {
  if (1.0 - mass_p > kCoverageTolerance || 1.0 - mass_q > kCoverageTolerance) {
    throw CoverageError(std::string(metric) + ": grid misses more than 1e-6 of the mass (p " +
                        std::to_string(mass_p) + ", q " + std::to_string(mass_q) + ")");
  }
}

}  // namespace

Index QuadratureGrid::size() const {
  Index total = 1;
  for (Index t = 0; t < dim(); ++t) total *= points_per_axis;
  return total;
}

double QuadratureGrid::cell_volume() const {
  double volume = 1.0;
  for (std::size_t t = 0; t < lo.size(); ++t) volume *= (hi[t] - lo[t]) / points_per_axis;
  return volume;
}

Vector QuadratureGrid::node(Index flat) const {
  Vector x(dim());
  for (Index t = 0; t < dim(); ++t) {
    const auto a = static_cast<std::size_t>(t);
    x(t) = lo[a] + (static_cast<double>(flat % points_per_axis) + 0.5) * (hi[a] - lo[a]) / points_per_axis;
    flat /= points_per_axis;
  }
  return x;
}

void QuadratureGrid::validate() const {
  require(dim() >= 1 && dim() <= 2, "quadrature grid: dim must be 1 or 2");
  require(hi.size() == lo.size(), "quadrature grid: bounds differ in length");
  require(points_per_axis >= 1, "quadrature grid: points_per_axis must be positive");
  for (std::size_t t = 0; t < lo.size(); ++t) require(hi[t] > lo[t], "quadrature grid: hi must exceed lo");
  require(std::pow(static_cast<double>(points_per_axis), static_cast<double>(dim())) <= 1e7,
          "quadrature grid: more than 1e7 points");
}

QuadratureGrid QuadratureGrid::box(std::vector<double> lo, std::vector<double> hi, int points_per_axis) {
  QuadratureGrid grid{std::move(lo), std::move(hi), points_per_axis};
  grid.validate();
  return grid;
}

QuadratureGrid QuadratureGrid::around(const AnalyticTarget& target, double h, int points_per_axis) {
  require(h >= 0.0, "quadrature grid: h must be non-negative");
  const Index d = target.dim();
  const double half = 8.0 * std::sqrt(target.alpha() * target.alpha() + h);
  std::vector<double> lo, hi;
  for (Index t = 0; t < d; ++t) {
    lo.push_back(target.mean()(t) - half);
    hi.push_back(target.mean()(t) + half);
  }
  if (points_per_axis == 0) points_per_axis = d == 1 ? 4096 : 512;
  return box(std::move(lo), std::move(hi), points_per_axis);
}

LogDensityFunction log_density_of(const AnalyticTarget& target) {
  return [target](const Vector& x) { return target.log_density(x); };
}

LogDensityFunction log_density_of(std::shared_ptr<const SmoothedEmpirical<double>> est) {
  return [est = std::move(est)](const Vector& x) { return log_density(*est, x); };
}

SamplerFunction sampler_of(const AnalyticTarget& target) {
  return [target](Rng& rng, Index count) { return target.sample(rng, count); };
}

ScoreFunction score_of(const AnalyticTarget& target) {
  return [target](const Vector& x) { return target.score(x); };
}

MCEstimate score_loss_mc(const ScoreFunction& shat, const AnalyticTarget& target, Index n_eval, std::uint64_t seed) {
  return score_loss_weighted(shat, score_of(target), target, n_eval, seed);
}

MCEstimate score_loss_weighted(const ScoreFunction& shat, const ScoreFunction& s_ref, const AnalyticTarget& weight,
                               Index n_eval, std::uint64_t seed) {
  return monte_carlo(sampler_of(weight), n_eval, seed, "score_loss",
                     [&](const Vector& y) { return (shat(y) - s_ref(y)).squaredNorm(); });
}

MCEstimate relative_fisher_mc(const ScoreFunction& p_score, const ScoreFunction& q_score,
                              const SamplerFunction& sampler_p, Index n_eval, std::uint64_t seed) {
  return monte_carlo(sampler_p, n_eval, seed, "relative_fisher",
                     [&](const Vector& y) { return (p_score(y) - q_score(y)).squaredNorm(); });
}

MCEstimate hellinger_sq_mc(const LogDensityFunction& p, const LogDensityFunction& q, const SamplerFunction& sampler_p,
                           Index n_eval, std::uint64_t seed) {
  MCEstimate ratio = monte_carlo(sampler_p, n_eval, seed, "hellinger_sq",
                                 [&](const Vector& y) { return std::exp(0.5 * (q(y) - p(y))); });
  MCEstimate out = ratio;
  out.raw_value = 2.0 - 2.0 * ratio.value;
  out.value = std::clamp(out.raw_value, 0.0, 2.0);
  out.std_error = 2.0 * ratio.std_error;
  return out;
}

MCEstimate kl_mc(const LogDensityFunction& p, const LogDensityFunction& q, const SamplerFunction& sampler_p,
                 Index n_eval, std::uint64_t seed) {
  return monte_carlo(sampler_p, n_eval, seed, "kl", [&](const Vector& y) { return p(y) - q(y); });
}

double grid_mass(const LogDensityFunction& p, const QuadratureGrid& grid) {
  grid.validate();
  return grid_sums<1>(grid, [&](const Vector& x) { return std::array<double, 1>{std::exp(p(x))}; })[0];
}

double hellinger_sq_quadrature(const LogDensityFunction& p, const LogDensityFunction& q, const QuadratureGrid& grid) {
  grid.validate();
  const auto sums = grid_sums<3>(grid, [&](const Vector& x) {
    const double lp = p(x);
    const double lq = q(x);
    const double gap = std::exp(0.5 * lp) - std::exp(0.5 * lq);
    return std::array<double, 3>{gap * gap, std::exp(lp), std::exp(lq)};
  });
  check_coverage(sums[1], sums[2], "hellinger_sq_quadrature");
  return sums[0];
}

double tv_quadrature(const LogDensityFunction& p, const LogDensityFunction& q, const QuadratureGrid& grid) {
  grid.validate();
  const auto sums = grid_sums<3>(grid, [&](const Vector& x) {
    const double dp = std::exp(p(x));
    const double dq = std::exp(q(x));
    return std::array<double, 3>{0.5 * std::abs(dp - dq), dp, dq};
  });
  check_coverage(sums[1], sums[2], "tv_quadrature");
  return sums[0];
}

double chi_sq_quadrature(const LogDensityFunction& p, const LogDensityFunction& q, const QuadratureGrid& grid) {
  grid.validate();
  const auto sums = grid_sums<3>(grid, [&](const Vector& x) {
    const double lp = p(x);
    const double lq = q(x);
    const double dp = std::exp(lp);
    const double dq = std::exp(lq);
    // (p - q)^2 / q = q (exp(lp - lq) - 1)^2 stays finite where both underflow.
    const double ratio = std::expm1(lp - lq);
    return std::array<double, 3>{dq * ratio * ratio, dp, dq};
  });
  check_coverage(sums[1], sums[2], "chi_sq_quadrature");
  return sums[0];
}

double score_distance_quadrature(const ScoreFunction& s1, const ScoreFunction& s2, const LogDensityFunction& weight,
                                 const QuadratureGrid& grid) {
  grid.validate();
  return grid_sums<1>(grid, [&](const Vector& x) {
    const double w = weight ? std::exp(weight(x)) : 1.0;
    return std::array<double, 1>{w == 0.0 ? 0.0 : w * (s1(x) - s2(x)).squaredNorm()};
  })[0];
}

std::vector<double> smoothed_empirical_hellinger(const AnalyticTarget& target, Index n, double h, int replicates,
                                                 std::uint64_t seed) {
  require(n >= 1, "smoothed_empirical_hellinger: n must be positive");
  require(replicates >= 1, "smoothed_empirical_hellinger: replicates must be positive");
  const AnalyticTarget smoothed = convolve_gaussian(target, h);
  const QuadratureGrid grid = QuadratureGrid::around(target, h);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    const Matrix sample =
        target.sample(derive_seed(seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r)}), n);
    auto est = std::make_shared<const SmoothedEmpirical<double>>(sample, h);
    out.push_back(hellinger_sq_quadrature(log_density_of(est), log_density_of(smoothed), grid));
  }
  return out;
}

SmoothedTable smooth_numerically(const AnalyticTarget& target, double h, const QuadratureGrid& grid) {
  require(target.dim() == 1 && grid.dim() == 1, "smooth_numerically: one-dimensional targets only");
  require(h > 0.0, "smooth_numerically: h must be positive");
  grid.validate();
  const Index count = grid.size();
  SmoothedTable table;
  table.nodes.resize(count);
  Vector density(count);
  for (Index i = 0; i < count; ++i) {
    table.nodes(i) = grid.node(i)(0);
    density(i) = target.density(grid.node(i));
  }
  const double step = grid.cell_volume();
  const double norm = step / std::sqrt(2.0 * std::numbers::pi * h);
  table.log_density.resize(count);
  table.score.resize(count);
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t begin, std::size_t end) {
    for (auto i = static_cast<Index>(begin); i < static_cast<Index>(end); ++i) {
      const double y = table.nodes(i);
      double mass = 0.0;
      double slope = 0.0;
      for (Index j = 0; j < count; ++j) {
        const double gap = table.nodes(j) - y;
        const double k = density(j) * std::exp(-gap * gap / (2.0 * h));
        mass += k;
        slope += k * gap / h;
      }
      table.log_density(i) = std::log(mass * norm);
      table.score(i) = slope / mass;
    }
  });
  return table;
}

HistogramComparison compare_histogram(const Vector& samples, const AnalyticTarget& target, int bins, double lo,
                                      double hi, int subdivisions) {
  require(target.dim() == 1, "compare_histogram: one-dimensional targets only");
  require(bins >= 1 && hi > lo && subdivisions >= 1, "compare_histogram: invalid binning");
  require(samples.size() >= 1, "compare_histogram: empty sample");
  HistogramComparison out;
  out.empirical.assign(static_cast<std::size_t>(bins) + 1, 0.0);
  out.expected.assign(static_cast<std::size_t>(bins) + 1, 0.0);
  const double width = (hi - lo) / bins;
  for (Index i = 0; i < samples.size(); ++i) {
    const double x = samples(i);
    std::size_t bin = static_cast<std::size_t>(bins);
    if (x >= lo && x <= hi) bin = std::min(static_cast<std::size_t>((x - lo) / width), static_cast<std::size_t>(bins - 1));
    out.empirical[bin] += 1.0;
  }
  for (double& p : out.empirical) p /= static_cast<double>(samples.size());

  double inside = 0.0;
  Vector x(1);
  for (int b = 0; b < bins; ++b) {
    double mass = 0.0;
    for (int s = 0; s < subdivisions; ++s) {
      x(0) = lo + width * (b + (s + 0.5) / subdivisions);
      mass += target.density(x);
    }
    out.expected[static_cast<std::size_t>(b)] = mass * width / subdivisions;
    inside += out.expected[static_cast<std::size_t>(b)];
  }
  out.expected.back() = std::max(0.0, 1.0 - inside);

  for (std::size_t b = 0; b < out.empirical.size(); ++b) {
    out.tv += 0.5 * std::abs(out.empirical[b] - out.expected[b]);
    const double gap = std::sqrt(out.empirical[b]) - std::sqrt(out.expected[b]);
    out.hellinger_sq += gap * gap;
  }
  return out;
}

}  // namespace ebscore
