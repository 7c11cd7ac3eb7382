#pragma once

#include "ebscore/core.hpp"
#include "ebscore/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

namespace ebscore {

/// Which summation path SmoothedEmpirical uses for a query.
enum class KernelPath {
  /// Cell list when the sample spans many cutoff radii, brute force otherwise.
  automatic,
  /// Exact O(n) sum over every point. The reference path.
  brute,
  /// Only points within sqrt(2h (ln n + 40 ln 10)) of the query.
  pruned,
};

template <typename Scalar>
struct KernelEvaluation {
  Scalar log_density;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> score;
};

/// Gaussian-smoothed empirical distribution (1/n) sum_i N(X_i, h I).
///
/// Points are stored column-wise in a canonical (lexicographic) order, so
/// evaluations are bitwise invariant under permutations of the input rows.
template <typename Scalar = double>
class SmoothedEmpirical {
 public:
  using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using ArrayS = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  /// `points` holds one sample per row; `h` is the kernel variance.
  SmoothedEmpirical(const MatrixS& points, Scalar h, KernelPath path = KernelPath::automatic)
      : h_(h), path_(path) {
    require(points.rows() >= 1, "SmoothedEmpirical: empty sample");
    require(points.cols() >= 1, "SmoothedEmpirical: zero-dimensional sample");
    require(h > Scalar(0) && std::isfinite(static_cast<double>(h)), "SmoothedEmpirical: h must be positive");
    require(points.allFinite(), "SmoothedEmpirical: non-finite sample coordinate");

    const Index n = points.rows();
    const Index d = points.cols();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      for (Index t = 0; t < d; ++t) {
        if (points(a, t) != points(b, t)) return points(a, t) < points(b, t);
      }
      return false;
    });
    points_.resize(d, n);
    for (Index i = 0; i < n; ++i) points_.col(i) = points.row(order[static_cast<std::size_t>(i)]).transpose();

    inv_two_h_ = Scalar(1) / (Scalar(2) * h_);
    log_norm_ = -std::log(static_cast<Scalar>(n)) -
                Scalar(0.5) * static_cast<Scalar>(d) * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * h_);
    build_cells();
  }

  Index size() const { return points_.cols(); }
  Index dim() const { return points_.rows(); }
  Scalar bandwidth() const { return h_; }
  /// d x n, canonical order.
  const MatrixS& points() const { return points_; }
  /// Radius beyond which the pruned path drops kernel terms.
  Scalar cutoff_radius() const { return std::sqrt(cutoff_sq_); }
  bool pruning_available() const { return !cell_keys_.empty(); }

  KernelEvaluation<Scalar> evaluate(const VectorS& x) const {
    require(x.size() == dim(), "SmoothedEmpirical: query dimension mismatch");
    switch (path_) {
      case KernelPath::brute: return evaluate_brute(x);
      case KernelPath::pruned: return evaluate_pruned(x);
      case KernelPath::automatic: return prefer_pruned_ ? evaluate_pruned(x) : evaluate_brute(x);
    }
    return evaluate_brute(x);
  }

  KernelEvaluation<Scalar> evaluate_brute(const VectorS& x) const {
    ArrayS& e = scratch();
    const Index n = size();
    e.resize(n);
    if (dim() == 1) {
      e = (points_.row(0).transpose().array() - x(0)).square();
    } else {
      e = (points_.colwise() - x).colwise().squaredNorm().transpose().array();
    }
    const Scalar nearest = e.minCoeff();
    e = ((nearest - e) * inv_two_h_).exp();
    const Scalar total = e.sum();
    KernelEvaluation<Scalar> out;
    out.log_density = -nearest * inv_two_h_ + std::log(total) + log_norm_;
    if (dim() == 1) {
      out.score = VectorS::Constant(1, ((points_.row(0).transpose().array() * e).sum() / total - x(0)) / h_);
    } else {
      out.score = (points_ * e.matrix() / total - x) / h_;
    }
    return out;
  }

  /// Falls back to brute force when no point lies within the cutoff, or when
  /// the nearest term is below 1e-20 so dropped terms could matter relatively.
  KernelEvaluation<Scalar> evaluate_pruned(const VectorS& x) const {
    if (!pruning_available()) return evaluate_brute(x);
    const Index d = dim();
    CellKey center{};
    for (Index t = 0; t < d; ++t) {
      const Scalar c = std::floor(x(t) / cell_side_);
      if (!(std::abs(c) < Scalar(1e15))) return evaluate_brute(x);
      center[static_cast<std::size_t>(t)] = static_cast<std::int64_t>(c);
    }

    ArrayS& e = scratch();
    std::vector<Index>& ids = candidate_scratch();
    ids.clear();
    const int neighbors = d == 1 ? 3 : (d == 2 ? 9 : 27);
    for (int code = 0; code < neighbors; ++code) {
      CellKey key = center;
      int rest = code;
      for (Index t = 0; t < d; ++t) {
        key[static_cast<std::size_t>(t)] += rest % 3 - 1;
        rest /= 3;
      }
      const auto it = std::lower_bound(cell_keys_.begin(), cell_keys_.end(), key);
      if (it == cell_keys_.end() || *it != key) continue;
      const auto cell = static_cast<std::size_t>(it - cell_keys_.begin());
      for (Index j = cell_starts_[cell]; j < cell_starts_[cell + 1]; ++j) ids.push_back(j);
    }

    e.resize(static_cast<Index>(ids.size()));
    Index kept = 0;
    Scalar nearest = std::numeric_limits<Scalar>::infinity();
    for (Index j : ids) {
      const Scalar dist = (cell_points_.col(j) - x).squaredNorm();
      if (dist > cutoff_sq_) continue;
      ids[static_cast<std::size_t>(kept)] = j;
      e(kept++) = dist;
      nearest = std::min(nearest, dist);
    }
    if (kept == 0 || nearest * inv_two_h_ > Scalar(20) * std::numbers::ln10_v<Scalar>) return evaluate_brute(x);

    Scalar total = 0;
    VectorS weighted = VectorS::Zero(d);
    for (Index k = 0; k < kept; ++k) {
      const Scalar w = std::exp((nearest - e(k)) * inv_two_h_);
      total += w;
      weighted += w * cell_points_.col(ids[static_cast<std::size_t>(k)]);
    }
    KernelEvaluation<Scalar> out;
    out.log_density = -nearest * inv_two_h_ + std::log(total) + log_norm_;
    out.score = (weighted / total - x) / h_;
    return out;
  }

 private:
  using CellKey = std::array<std::int64_t, 3>;

  static ArrayS& scratch() {
    thread_local ArrayS buffer;
    return buffer;
  }

  static std::vector<Index>& candidate_scratch() {
    thread_local std::vector<Index> buffer;
    return buffer;
  }

  void build_cells() {
    const Index n = size();
    const Index d = dim();
    const Scalar log_n = std::log(static_cast<Scalar>(n));
    cutoff_sq_ = Scalar(2) * h_ * (log_n + Scalar(40) * std::numbers::ln10_v<Scalar>);
    cell_side_ = std::sqrt(cutoff_sq_);
    if (d > 3) return;

    std::vector<std::pair<CellKey, Index>> keyed(static_cast<std::size_t>(n));
    std::int64_t widest = 0;
    for (Index i = 0; i < n; ++i) {
      CellKey key{};
      for (Index t = 0; t < d; ++t) {
        const Scalar c = std::floor(points_(t, i) / cell_side_);
        if (!(std::abs(c) < Scalar(1e15))) return;
        key[static_cast<std::size_t>(t)] = static_cast<std::int64_t>(c);
      }
      keyed[static_cast<std::size_t>(i)] = {key, i};
    }
    // Canonical point order is already lexicographic, so a stable sort by cell
    // key keeps the within-cell order canonical as well.
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (Index t = 0; t < d; ++t) {
      std::int64_t lo = std::numeric_limits<std::int64_t>::max();
      std::int64_t hi = std::numeric_limits<std::int64_t>::min();
      for (const auto& [key, i] : keyed) {
        lo = std::min(lo, key[static_cast<std::size_t>(t)]);
        hi = std::max(hi, key[static_cast<std::size_t>(t)]);
      }
      widest = std::max(widest, hi - lo + 1);
    }

    cell_points_.resize(d, n);
    for (Index j = 0; j < n; ++j) {
      const auto& [key, i] = keyed[static_cast<std::size_t>(j)];
      cell_points_.col(j) = points_.col(i);
      if (cell_keys_.empty() || cell_keys_.back() != key) {
        cell_keys_.push_back(key);
        cell_starts_.push_back(j);
      }
    }
    cell_starts_.push_back(n);
    prefer_pruned_ = widest >= 8;
  }

  MatrixS points_;
  Scalar h_;
  KernelPath path_;
  Scalar inv_two_h_ = 0;
  Scalar log_norm_ = 0;
  Scalar cutoff_sq_ = 0;
  Scalar cell_side_ = 1;
  bool prefer_pruned_ = false;
  MatrixS cell_points_;
  std::vector<CellKey> cell_keys_;
  std::vector<Index> cell_starts_;
};

template <typename Scalar>
Scalar log_density(const SmoothedEmpirical<Scalar>& est, const typename SmoothedEmpirical<Scalar>::VectorS& x) {
  return est.evaluate(x).log_density;
}

/// Gradient of log rho_h: sum_i softmax_i (X_i - x) / h.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> raw_score(const SmoothedEmpirical<Scalar>& est,
                                                   const typename SmoothedEmpirical<Scalar>::VectorS& x) {
  return est.evaluate(x).score;
}

/// Scale applied to the raw score: min(1, rho / eps), computed in log space.
template <typename Scalar>
Scalar floor_factor(Scalar log_density, Scalar log_eps) {
  return std::exp(std::min(Scalar(0), log_density - log_eps));
}

/// grad rho_h / max(rho_h, eps) for the smoothed empirical distribution.
template <typename Scalar = double>
class RegularizedScoreEstimator {
 public:
  using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  RegularizedScoreEstimator(SmoothedEmpirical<Scalar> base, Scalar eps) : base_(std::move(base)), eps_(eps) {
    require(eps > Scalar(0) && std::isfinite(static_cast<double>(eps)), "RegularizedScoreEstimator: eps must be positive");
    log_eps_ = std::log(eps_);
  }

  RegularizedScoreEstimator(const MatrixS& points, Scalar h, Scalar eps, KernelPath path = KernelPath::automatic)
      : RegularizedScoreEstimator(SmoothedEmpirical<Scalar>(points, h, path), eps) {}

  const SmoothedEmpirical<Scalar>& base() const { return base_; }
  Scalar eps() const { return eps_; }
  Index dim() const { return base_.dim(); }

  /// False when eps exceeds (2 pi h)^(-d/2) e^(-1/2), the largest floor for
  /// which the regret bounds apply.
  bool floor_precondition_holds() const {
    const Scalar d = static_cast<Scalar>(base_.dim());
    const Scalar limit = -Scalar(0.5) * d * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * base_.bandwidth()) -
                         Scalar(0.5);
    return log_eps_ <= limit;
  }

  VectorS operator()(const VectorS& x) const {
    const KernelEvaluation<Scalar> e = base_.evaluate(x);
    return floor_factor(e.log_density, log_eps_) * e.score;
  }

  /// One regularized score per query row, evaluated in parallel.
  MatrixS batch(const MatrixS& queries) const {
    require(queries.cols() == dim(), "RegularizedScoreEstimator: query dimension mismatch");
    MatrixS out(queries.rows(), queries.cols());
    parallel_for(static_cast<std::size_t>(queries.rows()), [&](std::size_t begin, std::size_t end) {
      VectorS x(dim());
      for (auto r = static_cast<Index>(begin); r < static_cast<Index>(end); ++r) {
        x = queries.row(r).transpose();
        out.row(r) = (*this)(x).transpose();
      }
    });
    return out;
  }

 private:
  SmoothedEmpirical<Scalar> base_;
  Scalar eps_;
  Scalar log_eps_ = 0;
};

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> regularized_score(const RegularizedScoreEstimator<Scalar>& est,
                                                           const typename RegularizedScoreEstimator<Scalar>::VectorS& x) {
  return est(x);
}

}  // namespace ebscore
