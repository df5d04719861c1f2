#pragma once

/// Weakly dependent stationary sequences with exactly computable moments.
///
/// Four laws are supported, all centred with unit marginal variance:
///   - Gaussian AR(1):  X_k = rho X_{k-1} + sqrt(1 - rho^2) e_k, started from
///     the stationary N(0, 1) marginal;
///   - Gaussian MA(q):  X_k = sum_j c_j e_{k-j}, with c rescaled to unit norm;
///   - Rademacher i.i.d. signs;
///   - Rademacher product MDS: X_k = e_{k-1} e_k with i.i.d. signs e, a
///     martingale difference sequence whose squares are identically one.
///
/// Alongside sampling, each law exposes exact autocovariances, exact product
/// moments (Isserlis pairings for Gaussians, sign enumeration for Rademacher
/// laws), and a dependence profile: coefficient sequences that dominate the
/// product covariances entering the quadratic-form variance bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "quadvar/matrix.hpp"
#include "quadvar/rng.hpp"

namespace quadvar {

struct GaussianAR1 {
  double rho = 0.0;
};

struct GaussianMA {
  std::vector<double> coeffs;  // unit Euclidean norm after construction
};

struct RademacherIID {};

struct RademacherProductMDS {};

/// A validated stationary sequence law.  Immutable once built.
class CovarianceModel {
 public:
  using Law = std::variant<GaussianAR1, GaussianMA, RademacherIID, RademacherProductMDS>;

  static CovarianceModel gaussian_ar1(double rho) {
    if (!std::isfinite(rho) || !(std::abs(rho) < 1.0))
      throw std::invalid_argument("GaussianAR1: |rho| must be < 1, got " + std::to_string(rho));
    return CovarianceModel(GaussianAR1{rho});
  }

  static CovarianceModel gaussian_ma(std::vector<double> coeffs) {
    if (coeffs.empty()) throw std::invalid_argument("GaussianMA: coefficient list is empty");
    double norm2 = 0.0;
    for (double c : coeffs) {
      if (!std::isfinite(c)) throw std::invalid_argument("GaussianMA: non-finite coefficient");
      norm2 += c * c;
    }
    if (norm2 == 0.0) throw std::invalid_argument("GaussianMA: all coefficients are zero");
    const double scale = 1.0 / std::sqrt(norm2);
    for (double& c : coeffs) c *= scale;
    return CovarianceModel(GaussianMA{std::move(coeffs)});
  }

  static CovarianceModel rademacher_iid() { return CovarianceModel(RademacherIID{}); }
  static CovarianceModel rademacher_product_mds() {
    return CovarianceModel(RademacherProductMDS{});
  }

  const Law& law() const noexcept { return law_; }

  bool is_gaussian() const noexcept {
    return std::holds_alternative<GaussianAR1>(law_) || std::holds_alternative<GaussianMA>(law_);
  }
  bool is_rademacher() const noexcept { return !is_gaussian(); }

  /// Largest lag at which distinct coordinates can still be dependent, or
  /// nullopt-like max() for infinite-range laws.
  std::size_t dependence_range() const noexcept {
    return std::visit(
        [](const auto& l) -> std::size_t {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, GaussianAR1>)
            return l.rho == 0.0 ? 0 : std::numeric_limits<std::size_t>::max();
          else if constexpr (std::is_same_v<L, GaussianMA>)
            return l.coeffs.size() - 1;
          else if constexpr (std::is_same_v<L, RademacherIID>)
            return 0;
          else
            return 1;
        },
        law_);
  }

  std::string name() const {
    return std::visit(
        [](const auto& l) -> std::string {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, GaussianAR1>)
            return "gaussian_ar1";
          else if constexpr (std::is_same_v<L, GaussianMA>)
            return "gaussian_ma";
          else if constexpr (std::is_same_v<L, RademacherIID>)
            return "rademacher_iid";
          else
            return "rademacher_product_mds";
        },
        law_);
  }

 private:
  explicit CovarianceModel(Law law) : law_(std::move(law)) {}
  Law law_;
};

struct SamplePath {
  std::vector<double> values;
  CovarianceModel model;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Draws a stationary path of length p from the (seed, stream) Philox stream.
/// Identical arguments give bit-identical values.
inline SamplePath generate_path(const CovarianceModel& model, std::size_t p, std::uint64_t seed,
                                std::uint64_t stream = 0) {
  if (p == 0) throw std::invalid_argument("generate_path: p must be >= 1");
  RandomStream rng(seed, stream);
  std::vector<double> x(p);
  std::visit(
      [&](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GaussianAR1>) {
          const double innovation = std::sqrt(1.0 - l.rho * l.rho);
          x[0] = rng.normal();
          for (std::size_t t = 1; t < p; ++t) x[t] = l.rho * x[t - 1] + innovation * rng.normal();
        } else if constexpr (std::is_same_v<L, GaussianMA>) {
          const std::size_t q = l.coeffs.size() - 1;
          std::vector<double> e(p + q);
          for (double& v : e) v = rng.normal();
          // x[t] = sum_j c_j e[t + q - j]
          for (std::size_t t = 0; t < p; ++t) {
            double s = 0.0;
            for (std::size_t j = 0; j <= q; ++j) s += l.coeffs[j] * e[t + q - j];
            x[t] = s;
          }
        } else if constexpr (std::is_same_v<L, RademacherIID>) {
          for (double& v : x) v = rng.sign();
        } else {
          double previous = rng.sign();
          for (std::size_t t = 0; t < p; ++t) {
            const double current = rng.sign();
            x[t] = previous * current;
            previous = current;
          }
        }
      },
      model.law());
  return SamplePath{std::move(x), model, seed, stream};
}

/// Exact cov(X_t, X_{t+j}); symmetric in j.
inline double autocovariance(const CovarianceModel& model, std::int64_t j) {
  const std::uint64_t lag = static_cast<std::uint64_t>(j < 0 ? -j : j);
  return std::visit(
      [lag](const auto& l) -> double {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GaussianAR1>) {
          return lag == 0 ? 1.0 : std::pow(l.rho, static_cast<double>(lag));
        } else if constexpr (std::is_same_v<L, GaussianMA>) {
          const std::size_t q = l.coeffs.size() - 1;
          if (lag > q) return 0.0;
          double s = 0.0;
          for (std::size_t k = 0; k + lag <= q; ++k) s += l.coeffs[k] * l.coeffs[k + lag];
          return s;
        } else {
          return lag == 0 ? 1.0 : 0.0;
        }
      },
      model.law());
}

/// p x p Toeplitz covariance matrix of (X_1, ..., X_p).
inline Matrix covariance_matrix(const CovarianceModel& model, std::size_t p) {
  std::vector<double> acov(p);
  for (std::size_t j = 0; j < p; ++j) acov[j] = autocovariance(model, static_cast<std::int64_t>(j));
  Matrix s(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < p; ++k) s(i, k) = acov[i > k ? i - k : k - i];
  return s;
}

/// E[X_i X_j X_k X_l] for a centred Gaussian quadruple from its six pairwise
/// covariances (Isserlis / Wick).
constexpr double isserlis_fourth_moment(double s_ij, double s_ik, double s_il, double s_jk,
                                        double s_jl, double s_kl) noexcept {
  return s_ij * s_kl + s_ik * s_jl + s_il * s_jk;
}

namespace detail {

// Sum over perfect matchings of the index list (hafnian of the covariance
// submatrix).  Only used for short lists.
inline double gaussian_moment(const CovarianceModel& model, std::vector<std::int64_t> idx) {
  if (idx.empty()) return 1.0;
  if (idx.size() % 2 == 1) return 0.0;
  const std::int64_t first = idx.front();
  double total = 0.0;
  for (std::size_t m = 1; m < idx.size(); ++m) {
    std::vector<std::int64_t> rest;
    rest.reserve(idx.size() - 2);
    for (std::size_t r = 1; r < idx.size(); ++r)
      if (r != m) rest.push_back(idx[r]);
    total += autocovariance(model, idx[m] - first) * gaussian_moment(model, std::move(rest));
  }
  return total;
}

// Driving-sign indices that X_t depends on.
inline void driving_signs(const CovarianceModel& model, std::int64_t t,
                          std::vector<std::int64_t>& out) {
  if (std::holds_alternative<RademacherIID>(model.law())) {
    out.push_back(t);
  } else {
    out.push_back(t - 1);
    out.push_back(t);
  }
}

// Exact expectation by enumerating every configuration of the driving signs
// that the product touches.  All configurations are equally likely.
inline double rademacher_moment(const CovarianceModel& model, std::span<const std::int64_t> idx) {
  std::vector<std::int64_t> signs;
  for (std::int64_t t : idx) driving_signs(model, t, signs);
  std::sort(signs.begin(), signs.end());
  signs.erase(std::unique(signs.begin(), signs.end()), signs.end());
  const std::size_t d = signs.size();
  if (d > 24) throw std::invalid_argument("rademacher moment: too many driving signs");

  std::vector<std::vector<std::size_t>> factors(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    std::vector<std::int64_t> own;
    driving_signs(model, idx[a], own);
    for (std::int64_t s : own)
      factors[a].push_back(static_cast<std::size_t>(
          std::lower_bound(signs.begin(), signs.end(), s) - signs.begin()));
  }

  std::int64_t sum = 0;
  const std::uint64_t configs = std::uint64_t{1} << d;
  for (std::uint64_t bits = 0; bits < configs; ++bits) {
    int product = 1;
    for (const auto& f : factors)
      for (std::size_t s : f) product *= ((bits >> s) & 1u) ? -1 : 1;
    sum += product;
  }
  return static_cast<double>(sum) / static_cast<double>(configs);
}

}  // namespace detail

/// Exact E[prod_a X_{idx[a]}] (indices may repeat).
inline double exact_moment(const CovarianceModel& model, std::span<const std::int64_t> idx) {
  if (model.is_gaussian())
    return detail::gaussian_moment(model, std::vector<std::int64_t>(idx.begin(), idx.end()));
  return detail::rademacher_moment(model, idx);
}

/// Exact cov(prod X_left, prod X_right).
inline double product_covariance(const CovarianceModel& model,
                                 std::span<const std::int64_t> left,
                                 std::span<const std::int64_t> right) {
  std::vector<std::int64_t> joint(left.begin(), left.end());
  joint.insert(joint.end(), right.begin(), right.end());
  return exact_moment(model, joint) - exact_moment(model, left) * exact_moment(model, right);
}

/// The covariance families that a dependence profile must dominate, at one
/// index tuple i < j < k < l.
struct TupleCovariances {
  double head;      // |cov(X_i, X_j X_k X_l)|, charged to gap j - i
  double tail;      // |cov(X_i X_j X_k, X_l)|, charged to gap l - k
  double middle;    // |cov(X_i X_j, X_k X_l)|, charged to gap k - j
  double crossed;   // max(|cov(X_i X_k, X_j X_l)|, |cov(X_i X_l, X_j X_k)|)
};

inline TupleCovariances tuple_covariances(const CovarianceModel& model, std::int64_t i,
                                          std::int64_t j, std::int64_t k, std::int64_t l) {
  using I = std::int64_t;
  auto cov = [&](std::initializer_list<I> a, std::initializer_list<I> b) {
    return std::abs(product_covariance(model, std::span<const I>(a.begin(), a.size()),
                                       std::span<const I>(b.begin(), b.size())));
  };
  return TupleCovariances{
      cov({i}, {j, k, l}), cov({i, j, k}, {l}), cov({i, j}, {k, l}),
      std::max(cov({i, k}, {j, l}), cov({i, l}, {j, k}))};
}

/// phi_k <= scale * ratio^k for every k beyond the stored lags.
struct GeometricTail {
  double scale = 0.0;
  double ratio = 0.0;

  double at(std::size_t k) const { return scale == 0.0 ? 0.0 : scale * std::pow(ratio, k); }
  /// sum_{k > lag} scale ratio^k
  double sum_after(std::size_t lag) const {
    if (scale == 0.0 || ratio == 0.0) return 0.0;
    return scale * std::pow(ratio, static_cast<double>(lag + 1)) / (1.0 - ratio);
  }
  /// sum_{k > lag} k scale ratio^k
  double weighted_sum_after(std::size_t lag) const {
    if (scale == 0.0 || ratio == 0.0) return 0.0;
    const double L = static_cast<double>(lag);
    return scale * std::pow(ratio, L + 1.0) * ((L + 1.0) - L * ratio) /
           ((1.0 - ratio) * (1.0 - ratio));
  }
};

/// Dependence coefficients of a sequence.
///
///   mixed(k)   dominates |cov(X_i, X_j X_k X_l)|, |cov(X_i X_j X_k, X_l)|,
///              |cov(X_i X_j, X_k X_l)| and |cov(X_i, X_j)| at the relevant gap;
///              non-increasing and non-negative.
///   squares(k) dominates cov(X_i^2, X_j^2) at gap j - i.
///
/// Aggregates: fourth_moment = sup E X^4, lag_weighted_sum = sum k mixed(k),
/// squares_sum = sum squares(k); both sums include the geometric tails.
class DependenceProfile {
 public:
  DependenceProfile(std::vector<double> mixed, std::vector<double> squares, double fourth_moment,
                    GeometricTail mixed_tail = {}, GeometricTail squares_tail = {})
      : mixed_(std::move(mixed)),
        squares_(std::move(squares)),
        fourth_moment_(fourth_moment),
        mixed_tail_(mixed_tail),
        squares_tail_(squares_tail) {
    if (mixed_.empty() || mixed_.size() != squares_.size())
      throw std::invalid_argument("DependenceProfile: coefficient lists must be non-empty and equal length");
    if (!(fourth_moment_ >= 1.0))
      throw std::invalid_argument("DependenceProfile: fourth moment must be >= 1");
    for (std::size_t k = 0; k < mixed_.size(); ++k) {
      if (!(mixed_[k] >= 0.0) || !(squares_[k] >= 0.0))
        throw std::invalid_argument("DependenceProfile: coefficients must be non-negative");
      if (k > 0 && mixed_[k] > mixed_[k - 1])
        throw std::invalid_argument("DependenceProfile: mixed coefficients must be non-increasing");
    }
    for (const auto* t : {&mixed_tail_, &squares_tail_})
      if (t->scale < 0.0 || t->ratio < 0.0 || t->ratio >= 1.0)
        throw std::invalid_argument("DependenceProfile: tail needs scale >= 0 and ratio in [0, 1)");
    if (mixed_tail_.at(mixed_.size() + 1) > mixed_.back())
      throw std::invalid_argument("DependenceProfile: mixed tail exceeds last stored coefficient");

    lag_weighted_sum_ = mixed_tail_.weighted_sum_after(max_lag());
    squares_sum_ = squares_tail_.sum_after(max_lag());
    for (std::size_t k = 1; k <= max_lag(); ++k) {
      lag_weighted_sum_ += static_cast<double>(k) * mixed_[k - 1];
      squares_sum_ += squares_[k - 1];
    }
  }

  /// mixed(k) = c * r^k and squares(k) = c2 * r2^k with exact tails.
  static DependenceProfile geometric(double scale, double ratio, double squares_scale,
                                     double squares_ratio, double fourth_moment,
                                     std::size_t max_lag) {
    if (max_lag == 0) throw std::invalid_argument("DependenceProfile: max_lag must be >= 1");
    std::vector<double> mixed(max_lag), squares(max_lag);
    const GeometricTail mt{scale, ratio}, st{squares_scale, squares_ratio};
    for (std::size_t k = 1; k <= max_lag; ++k) {
      mixed[k - 1] = mt.at(k);
      squares[k - 1] = st.at(k);
    }
    return DependenceProfile(std::move(mixed), std::move(squares), fourth_moment, mt, st);
  }

  /// All coefficients zero (independent or martingale-difference structure).
  static DependenceProfile null(double fourth_moment, std::size_t max_lag = 1) {
    if (max_lag == 0) throw std::invalid_argument("DependenceProfile: max_lag must be >= 1");
    return DependenceProfile(std::vector<double>(max_lag, 0.0), std::vector<double>(max_lag, 0.0),
                             fourth_moment);
  }

  std::size_t max_lag() const noexcept { return mixed_.size(); }
  std::span<const double> mixed() const noexcept { return mixed_; }
  std::span<const double> squares() const noexcept { return squares_; }
  const GeometricTail& mixed_tail() const noexcept { return mixed_tail_; }
  const GeometricTail& squares_tail() const noexcept { return squares_tail_; }

  /// Coefficient at gap k >= 1, falling back to the tail envelope.
  double mixed_at(std::size_t k) const {
    if (k == 0) throw std::invalid_argument("DependenceProfile: gap must be >= 1");
    return k <= max_lag() ? mixed_[k - 1] : mixed_tail_.at(k);
  }
  double squares_at(std::size_t k) const {
    if (k == 0) throw std::invalid_argument("DependenceProfile: gap must be >= 1");
    return k <= max_lag() ? squares_[k - 1] : squares_tail_.at(k);
  }

  double fourth_moment() const noexcept { return fourth_moment_; }
  double lag_weighted_sum() const noexcept { return lag_weighted_sum_; }
  double squares_sum() const noexcept { return squares_sum_; }

  /// Coefficient of the zero-diagonal and fourth-moment bounds.
  double hollow_coefficient() const noexcept { return fourth_moment_ + lag_weighted_sum_; }
  /// Coefficient of the general-matrix and linear-process bounds.
  double full_coefficient() const noexcept {
    return fourth_moment_ + lag_weighted_sum_ + squares_sum_;
  }

 private:
  std::vector<double> mixed_;
  std::vector<double> squares_;
  double fourth_moment_;
  GeometricTail mixed_tail_;
  GeometricTail squares_tail_;
  double lag_weighted_sum_ = 0.0;
  double squares_sum_ = 0.0;
};

/// Per-gap suprema of the exact tuple covariances over all tuples inside a
/// window of consecutive indices.  Entry g - 1 holds gap g.
struct GapSuprema {
  std::vector<double> mixed;    // head/tail/middle/pair families
  std::vector<double> squares;  // cov(X_i^2, X_j^2)
};

inline GapSuprema exact_gap_suprema(const CovarianceModel& model, std::size_t window) {
  if (window < 2) throw std::invalid_argument("exact_gap_suprema: window must be >= 2");
  const auto w = static_cast<std::int64_t>(window);
  GapSuprema sup{std::vector<double>(window - 1, 0.0), std::vector<double>(window - 1, 0.0)};
  auto bump = [](std::vector<double>& v, std::int64_t gap, double value) {
    auto& slot = v[static_cast<std::size_t>(gap - 1)];
    slot = std::max(slot, value);
  };
  for (std::int64_t i = 1; i <= w; ++i)
    for (std::int64_t j = i + 1; j <= w; ++j) {
      bump(sup.mixed, j - i, std::abs(autocovariance(model, j - i)));
      const std::int64_t si[] = {i, i}, sj[] = {j, j};
      bump(sup.squares, j - i, product_covariance(model, si, sj));
      for (std::int64_t k = j + 1; k <= w; ++k)
        for (std::int64_t l = k + 1; l <= w; ++l) {
          const auto c = tuple_covariances(model, i, j, k, l);
          bump(sup.mixed, j - i, c.head);
          bump(sup.mixed, l - k, c.tail);
          bump(sup.mixed, k - j, c.middle);
        }
    }
  return sup;
}

/// Builds a valid profile for the model.
///
/// Gaussian AR(1) uses the closed-form envelope mixed(k) = 3|rho|^k (each of
/// the three Isserlis pairings contributes at most |rho|^gap) and
/// squares(k) = 2 rho^{2k}, with exact geometric tails.  Gaussian MA uses the
/// same envelope built from the running supremum of |C(j)|; its lags are
/// extended to the MA order so the tail is exactly zero.  Rademacher laws are
/// profiled by exact sign enumeration inside a window; beyond their
/// dependence range every family vanishes.
inline DependenceProfile dependence_profile(const CovarianceModel& model, std::size_t max_lag,
                                            std::size_t window = 12) {
  if (max_lag == 0) throw std::invalid_argument("dependence_profile: max_lag must be >= 1");
  return std::visit(
      [&](const auto& l) -> DependenceProfile {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GaussianAR1>) {
          const double r = std::abs(l.rho);
          return DependenceProfile::geometric(3.0, r, 2.0, r * r, 3.0, max_lag);
        } else if constexpr (std::is_same_v<L, GaussianMA>) {
          const std::size_t q = l.coeffs.size() - 1;
          const std::size_t lags = std::max(max_lag, q);
          std::vector<double> mixed(lags, 0.0), squares(lags, 0.0);
          double running = 0.0;
          for (std::size_t k = lags; k >= 1; --k) {
            const double c = autocovariance(model, static_cast<std::int64_t>(k));
            running = std::max(running, std::abs(c));
            mixed[k - 1] = 3.0 * running;
            squares[k - 1] = 2.0 * c * c;
          }
          return DependenceProfile(std::move(mixed), std::move(squares), 3.0);
        } else {
          const std::size_t range = model.dependence_range();
          if (window < range + 2)
            throw std::invalid_argument("dependence_profile: window shorter than dependence range");
          const GapSuprema sup = exact_gap_suprema(model, window);
          std::vector<double> mixed(max_lag, 0.0), squares(max_lag, 0.0);
          for (std::size_t k = 1; k <= std::min(max_lag, window - 1); ++k) {
            mixed[k - 1] = sup.mixed[k - 1];
            squares[k - 1] = std::max(0.0, sup.squares[k - 1]);
          }
          for (std::size_t k = max_lag - 1; k >= 1; --k)
            mixed[k - 1] = std::max(mixed[k - 1], mixed[k]);
          const std::int64_t four[] = {1, 1, 1, 1};
          return DependenceProfile(std::move(mixed), std::move(squares),
                                   exact_moment(model, four));
        }
      },
      model.law());
}

/// sum over q, r >= 1 of min(mixed(q), mixed(r)): literal double sum over the
/// stored lags plus the analytic tail sum_{k > L} (2k - 1) tail(k), which
/// covers every pair whose larger index exceeds L.
inline double min_phi_double_sum(const DependenceProfile& profile) {
  const std::size_t L = profile.max_lag();
  const auto phi = profile.mixed();
  double total = 0.0;
  for (std::size_t q = 0; q < L; ++q)
    for (std::size_t r = 0; r < L; ++r) total += std::min(phi[q], phi[r]);
  const auto& tail = profile.mixed_tail();
  total += 2.0 * tail.weighted_sum_after(L) - tail.sum_after(L);
  return total;
}

}  // namespace quadvar
