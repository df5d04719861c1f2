#pragma once

/// Quadratic forms x'Ax of weakly dependent vectors: evaluation, exact and
/// Monte Carlo variances, and the coefficient-times-trace variance bounds.
///
/// The bounds are reported without the unspecified universal constant: each
/// BoundReport carries coefficient_sum * trace_term, and callers compare
/// variances against a known multiple of it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "quadvar/dependence_models.hpp"
#include "quadvar/matrix.hpp"
#include "quadvar/parallel.hpp"
#include "quadvar/rng.hpp"

namespace quadvar {

struct VarianceEstimate {
  double mean = 0.0;
  double variance = 0.0;
  double std_error_of_variance = 0.0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
};

enum class BoundKind {
  FourthMoment,           // E(x'a)^4 <= c (a'a)^2
  HollowVariance,         // var(x'Ax) for zero-diagonal A
  GeneralVariance,        // var(x'Ax) for any square A
  LinearProcessVariance,  // var(y'Ay) for y a linear transform of x
};

inline std::string_view to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::FourthMoment: return "fourth_moment";
    case BoundKind::HollowVariance: return "hollow_variance";
    case BoundKind::GeneralVariance: return "general_variance";
    case BoundKind::LinearProcessVariance: return "linear_process_variance";
  }
  return "unknown";
}

/// bound_value = coefficient_sum * trace_term.
struct BoundReport {
  double bound_value = 0.0;
  double trace_term = 0.0;
  double coefficient_sum = 0.0;
  BoundKind kind = BoundKind::GeneralVariance;
};

/// sum_{i,j} a_ij x_i x_j
inline double evaluate(std::span<const double> x, const Matrix& a) {
  a.require_square("evaluate");
  if (x.size() != a.rows())
    throw std::invalid_argument("evaluate: vector length " + std::to_string(x.size()) +
                                " does not match matrix dimension " + std::to_string(a.rows()));
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto row = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += row[j] * x[j];
    total += x[i] * s;
  }
  return total;
}

/// (A + A') / 2.  Leaves the form unchanged and never increases tr(AA').
inline Matrix symmetrize(const Matrix& a) {
  a.require_square("symmetrize");
  Matrix b(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) b(i, j) = 0.5 * (a(i, j) + a(j, i));
  return b;
}

/// tr(AB) without forming the product.
inline double trace_product(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows() || a.rows() != b.cols())
    throw std::invalid_argument("trace_product: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) s += row[k] * b(k, i);
  }
  return s;
}

/// tr(AA') = sum of squared entries.
inline double trace_aat(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

namespace detail {
inline void require_symmetric(const Matrix& sigma, const char* what) {
  sigma.require_square(what);
  if (relative_asymmetry(sigma) > 1e-12)
    throw std::invalid_argument(std::string(what) + ": covariance matrix is not symmetric");
}

inline void require_conformable(const Matrix& sigma, const Matrix& a, const char* what) {
  a.require_square(what);
  if (sigma.rows() != a.rows())
    throw std::invalid_argument(std::string(what) + ": covariance is " +
                                std::to_string(sigma.rows()) + "x" + std::to_string(sigma.rows()) +
                                " but matrix is " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.rows()));
}
}  // namespace detail

/// var(x'Ax) for x ~ N(0, Sigma): 2 tr((Sigma B)^2) with B the symmetric part
/// of A.
inline double gaussian_exact_variance(const Matrix& sigma, const Matrix& a) {
  detail::require_symmetric(sigma, "gaussian_exact_variance");
  detail::require_conformable(sigma, a, "gaussian_exact_variance");
  const Matrix m = sigma * symmetrize(a);
  return 2.0 * trace_product(m, m);
}

/// E(x'a)^4 for x ~ N(0, Sigma): 3 (a' Sigma a)^2.
inline double gaussian_fourth_moment(const Matrix& sigma, std::span<const double> a) {
  detail::require_symmetric(sigma, "gaussian_fourth_moment");
  if (sigma.rows() != a.size())
    throw std::invalid_argument("gaussian_fourth_moment: dimension mismatch");
  const double quad = evaluate(a, sigma);
  return 3.0 * quad * quad;
}

namespace detail {
struct MomentSummary {
  double mean;
  double variance;      // unbiased
  double fourth_central;
};

inline MomentSummary summarize(std::span<const double> v) {
  const auto n = static_cast<double>(v.size());
  long double sum = 0.0L;
  for (double x : v) sum += x;
  const double mean = static_cast<double>(sum / v.size());
  long double m2 = 0.0L, m4 = 0.0L;
  for (double x : v) {
    const long double d = x - mean;
    const long double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  return {mean, static_cast<double>(m2 / (n - 1.0)), static_cast<double>(m4 / n)};
}
}  // namespace detail

/// Monte Carlo variance of x'Ax over independent paths; replicate r uses the
/// Philox stream (seed, r).  The standard error uses the finite-sample
/// variance of the unbiased sample variance,
/// (mu4 - sigma^4) / R + 2 sigma^4 / (R (R - 1)), with the first term clipped
/// at zero so the estimate stays positive when the form takes only two
/// symmetric values.
inline VarianceEstimate mc_variance(const CovarianceModel& model, const Matrix& a,
                                    std::size_t replicates, std::uint64_t seed) {
  if (replicates < 100)
    throw std::invalid_argument("mc_variance: need at least 100 replicates, got " +
                                std::to_string(replicates));
  a.require_square("mc_variance");
  const std::size_t p = a.rows();
  std::vector<double> values(replicates);
  parallel_for(replicates, [&](std::size_t r) {
    values[r] = evaluate(generate_path(model, p, seed, r).values, a);
  });
  const auto s = detail::summarize(values);
  const auto R = static_cast<double>(replicates);
  const double v2 = s.variance * s.variance;
  const double se2 = std::max(0.0, s.fourth_central - v2) / R + 2.0 * v2 / (R * (R - 1.0));
  return VarianceEstimate{s.mean, s.variance, std::sqrt(se2), replicates, seed};
}

namespace detail {
// Visits every equally likely value of the path vector for a Rademacher law.
template <typename Visit>
void enumerate_rademacher_paths(const CovarianceModel& model, std::size_t p, Visit&& visit) {
  const bool product = std::holds_alternative<RademacherProductMDS>(model.law());
  if (!model.is_rademacher())
    throw std::invalid_argument("brute force enumeration needs a Rademacher model");
  if (p == 0 || p > 20)
    throw std::invalid_argument("brute force enumeration supports 1 <= p <= 20, got p = " +
                                std::to_string(p));
  const std::size_t signs = product ? p + 1 : p;
  const std::uint64_t configs = std::uint64_t{1} << signs;
  std::vector<double> e(signs), x(p);
  for (std::uint64_t bits = 0; bits < configs; ++bits) {
    for (std::size_t s = 0; s < signs; ++s) e[s] = ((bits >> s) & 1u) ? -1.0 : 1.0;
    for (std::size_t t = 0; t < p; ++t) x[t] = product ? e[t] * e[t + 1] : e[t];
    visit(std::span<const double>(x));
  }
}
}  // namespace detail

/// Exact var(x'Ax) for Rademacher laws by enumerating every sign pattern.
inline double brute_force_variance(const CovarianceModel& model, const Matrix& a) {
  a.require_square("brute_force_variance");
  std::vector<double> values;
  values.reserve(std::size_t{1} << std::min<std::size_t>(a.rows() + 1, 21));
  detail::enumerate_rademacher_paths(model, a.rows(),
                                     [&](std::span<const double> x) { values.push_back(evaluate(x, a)); });
  long double sum = 0.0L;
  for (double v : values) sum += v;
  const long double mean = sum / values.size();
  long double ss = 0.0L;
  for (double v : values) ss += (v - mean) * (v - mean);
  return static_cast<double>(ss / values.size());
}

/// Exact E(x'a)^4 for Rademacher laws by enumeration.
inline double brute_force_fourth_moment(const CovarianceModel& model, std::span<const double> a) {
  long double sum = 0.0L;
  std::uint64_t count = 0;
  detail::enumerate_rademacher_paths(model, a.size(), [&](std::span<const double> x) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * x[i];
    sum += s * s * s * s;
    ++count;
  });
  return static_cast<double>(sum / count);
}

struct MomentEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t replicates = 0;
};

/// Monte Carlo E(x'a)^4 with its standard error.
inline MomentEstimate mc_fourth_moment(const CovarianceModel& model, std::span<const double> a,
                                       std::size_t replicates, std::uint64_t seed) {
  if (replicates < 100)
    throw std::invalid_argument("mc_fourth_moment: need at least 100 replicates");
  std::vector<double> values(replicates);
  parallel_for(replicates, [&](std::size_t r) {
    const auto path = generate_path(model, a.size(), seed, r);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * path.values[i];
    values[r] = s * s * s * s;
  });
  const auto s = detail::summarize(values);
  return {s.mean, std::sqrt(s.variance / static_cast<double>(replicates)), replicates};
}

inline BoundReport fourth_moment_bound(const DependenceProfile& profile,
                                       std::span<const double> a) {
  double norm2 = 0.0;
  for (double v : a) norm2 += v * v;
  const double trace_term = norm2 * norm2;
  const double coeff = profile.hollow_coefficient();
  return {coeff * trace_term, trace_term, coeff, BoundKind::FourthMoment};
}

/// Variance bound for zero-diagonal matrices.  The diagonal must be exactly
/// zero; the first offending index is reported otherwise.
inline BoundReport hollow_variance_bound(const DependenceProfile& profile, const Matrix& a) {
  a.require_square("hollow_variance_bound");
  for (std::size_t i = 0; i < a.rows(); ++i)
    if (a(i, i) != 0.0)
      throw std::invalid_argument("hollow_variance_bound: diagonal entry (" + std::to_string(i) +
                                  ", " + std::to_string(i) + ") = " + std::to_string(a(i, i)) +
                                  " is nonzero; the bound requires a zero diagonal");
  const double trace_term = trace_aat(a);
  const double coeff = profile.hollow_coefficient();
  return {coeff * trace_term, trace_term, coeff, BoundKind::HollowVariance};
}

inline BoundReport variance_bound(const DependenceProfile& profile, const Matrix& a) {
  a.require_square("variance_bound");
  const double trace_term = trace_aat(a);
  const double coeff = profile.full_coefficient();
  return {coeff * trace_term, trace_term, coeff, BoundKind::GeneralVariance};
}

/// Bound for y = Gamma x with Gamma Gamma' = Sigma: coefficient times
/// tr(Sigma A Sigma A').
inline BoundReport linear_process_variance_bound(const DependenceProfile& profile,
                                                 const Matrix& sigma, const Matrix& a) {
  detail::require_symmetric(sigma, "linear_process_variance_bound");
  detail::require_conformable(sigma, a, "linear_process_variance_bound");
  const double trace_term = trace_product(sigma * a, sigma * a.transpose());
  const double coeff = profile.full_coefficient();
  return {coeff * trace_term, trace_term, coeff, BoundKind::LinearProcessVariance};
}

/// Exact variance of x'Ax when one is available: the Gaussian trace formula,
/// or enumeration for Rademacher laws with p <= 20.  Returns false otherwise.
inline bool exact_variance(const CovarianceModel& model, const Matrix& a, double& out) {
  if (model.is_gaussian()) {
    out = gaussian_exact_variance(covariance_matrix(model, a.rows()), a);
    return true;
  }
  if (a.rows() <= 20) {
    out = brute_force_variance(model, a);
    return true;
  }
  return false;
}

/// Largest observed ratio var(x'Ax) / (general variance bound) over a family
/// of matrices.  Exact variances are used where available, Monte Carlo
/// otherwise; 0/0 counts as 0.
inline double empirical_constant(const CovarianceModel& model, std::span<const Matrix> matrices,
                                 std::size_t replicates, std::uint64_t seed) {
  if (matrices.empty()) throw std::invalid_argument("empirical_constant: empty matrix family");
  double worst = 0.0;
  for (std::size_t idx = 0; idx < matrices.size(); ++idx) {
    const Matrix& a = matrices[idx];
    a.require_square("empirical_constant");
    double var = 0.0;
    if (!exact_variance(model, a, var))
      var = mc_variance(model, a, replicates, derive_seed(seed, idx)).variance;
    const auto profile = dependence_profile(model, std::max<std::size_t>(a.rows(), 1));
    const double bound = variance_bound(profile, a).bound_value;
    const double ratio = (bound == 0.0 && var == 0.0) ? 0.0 : var / bound;
    worst = std::max(worst, ratio);
  }
  return worst;
}

/// Seeded test matrices by generator name:
///   identity, zero, ones, hollow_ones, gaussian (i.i.d. N(0,1) entries),
///   hollow_gaussian (zero diagonal), symmetric_gaussian, diagonal_gaussian.
inline Matrix make_matrix(std::string_view generator, std::size_t p, std::uint64_t seed) {
  if (p == 0) throw std::invalid_argument("make_matrix: p must be >= 1");
  RandomStream rng(derive_seed(seed, 0x6d6174726978ull), 0);
  Matrix a(p, p);
  if (generator == "identity") return Matrix::identity(p);
  if (generator == "zero") return a;
  if (generator == "ones" || generator == "hollow_ones") {
    for (double& v : a.data()) v = 1.0;
    if (generator == "hollow_ones")
      for (std::size_t i = 0; i < p; ++i) a(i, i) = 0.0;
    return a;
  }
  if (generator == "gaussian" || generator == "hollow_gaussian") {
    for (double& v : a.data()) v = rng.normal();
    if (generator == "hollow_gaussian")
      for (std::size_t i = 0; i < p; ++i) a(i, i) = 0.0;
    return a;
  }
  if (generator == "symmetric_gaussian") {
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i; j < p; ++j) a(i, j) = a(j, i) = rng.normal();
    return a;
  }
  if (generator == "diagonal_gaussian") {
    for (std::size_t i = 0; i < p; ++i) a(i, i) = rng.normal();
    return a;
  }
  throw std::invalid_argument("make_matrix: unknown generator '" + std::string(generator) + "'");
}

/// Seeded test vectors: ones, unit (first coordinate), gaussian.
inline std::vector<double> make_vector(std::string_view generator, std::size_t p,
                                       std::uint64_t seed) {
  if (p == 0) throw std::invalid_argument("make_vector: p must be >= 1");
  std::vector<double> v(p, 0.0);
  if (generator == "ones") {
    std::fill(v.begin(), v.end(), 1.0);
  } else if (generator == "unit") {
    v[0] = 1.0;
  } else if (generator == "gaussian") {
    RandomStream rng(derive_seed(seed, 0x766563746f72ull), 0);
    for (double& x : v) x = rng.normal();
  } else {
    throw std::invalid_argument("make_vector: unknown generator '" + std::string(generator) + "'");
  }
  return v;
}

}  // namespace quadvar
