#pragma once

/// Sample-covariance spectra and their limit laws.
///
/// The limit law of the eigenvalues of n^{-1} Y Y' (p/n -> c, columns i.i.d.
/// copies of a weakly dependent vector with population spectral law P) has a
/// Stieltjes transform solving
///
///   m(z) = sum_k w_k / (lambda_k (1 - c - c z m(z)) - z),   Im z > 0,
///
/// for a discrete P = sum_k w_k delta_{lambda_k}.  This header provides the
/// fixed-point solver for that equation, the Marchenko-Pastur closed form as
/// an oracle, an in-house cyclic Jacobi eigensolver, and Kolmogorov distances
/// between empirical and limit distributions.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "quadvar/dependence_models.hpp"
#include "quadvar/errors.hpp"
#include "quadvar/matrix.hpp"
#include "quadvar/parallel.hpp"
#include "quadvar/quadform.hpp"

namespace quadvar {

using complex = std::complex<double>;

struct SpectralAtom {
  double lambda = 0.0;
  double weight = 0.0;
};

/// Discrete population spectral law plus the aspect ratio c = lim p/n.
class SpectralModel {
 public:
  SpectralModel(std::vector<SpectralAtom> atoms, double c) : atoms_(std::move(atoms)), c_(c) {
    if (atoms_.empty()) throw std::invalid_argument("SpectralModel: no atoms");
    if (!(c_ > 0.0) || !std::isfinite(c_))
      throw std::invalid_argument("SpectralModel: c must be positive");
    double total = 0.0;
    for (const auto& a : atoms_) {
      if (!(a.lambda >= 0.0) || !std::isfinite(a.lambda))
        throw std::invalid_argument("SpectralModel: atom locations must be >= 0");
      if (!(a.weight > 0.0)) throw std::invalid_argument("SpectralModel: weights must be > 0");
      total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("SpectralModel: weights sum to " + std::to_string(total) +
                                  ", expected 1");
    std::stable_sort(atoms_.begin(), atoms_.end(),
                     [](const SpectralAtom& a, const SpectralAtom& b) { return a.lambda < b.lambda; });
  }

  /// Single atom at lambda.
  static SpectralModel point(double lambda, double c) { return SpectralModel({{lambda, 1.0}}, c); }

  std::span<const SpectralAtom> atoms() const noexcept { return atoms_; }
  double c() const noexcept { return c_; }
  double max_lambda() const noexcept { return atoms_.back().lambda; }

 private:
  std::vector<SpectralAtom> atoms_;
  double c_;
};

/// Sorted eigenvalues of a symmetric matrix.
struct ESD {
  std::vector<double> eigenvalues;

  std::size_t size() const noexcept { return eigenvalues.size(); }
  bool is_psd(double tol = 1e-10) const {
    return eigenvalues.empty() || eigenvalues.front() >= -tol;
  }
};

struct StieltjesValue {
  complex z;
  complex m;
  double residual = 0.0;
  long iterations = 0;
};

/// Diagonal Sigma_p whose eigenvalue multiplicities follow the atom weights.
/// Multiplicities are floor(w p) plus one extra for the largest remainders;
/// equal remainders favour the smaller lambda.  Atoms occupy contiguous
/// diagonal blocks in increasing lambda order.
inline Matrix population_sigma(const SpectralModel& model, std::size_t p) {
  const auto atoms = model.atoms();
  if (p < atoms.size())
    throw std::invalid_argument("population_sigma: p = " + std::to_string(p) +
                                " is smaller than the atom count " + std::to_string(atoms.size()));
  std::vector<std::size_t> mult(atoms.size());
  std::vector<double> remainder(atoms.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const double share = atoms[k].weight * static_cast<double>(p);
    mult[k] = static_cast<std::size_t>(std::floor(share));
    remainder[k] = share - static_cast<double>(mult[k]);
    assigned += mult[k];
  }
  std::vector<std::size_t> order(atoms.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; assigned < p; ++r, ++assigned) ++mult[order[r % order.size()]];

  std::vector<double> diag;
  diag.reserve(p);
  for (std::size_t k = 0; k < atoms.size(); ++k) diag.insert(diag.end(), mult[k], atoms[k].lambda);
  return Matrix::diagonal(diag);
}

/// Lower-triangular Gamma with Gamma Gamma' = Sigma.
inline Matrix cholesky(const Matrix& sigma) {
  sigma.require_square("cholesky");
  if (relative_asymmetry(sigma) > 1e-12)
    throw std::invalid_argument("cholesky: matrix is not symmetric");
  const std::size_t n = sigma.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = sigma(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 1e-12))
      throw std::invalid_argument("cholesky: matrix is not positive definite (pivot " +
                                  std::to_string(j) + " = " + std::to_string(pivot) + ")");
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = sigma(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / d;
    }
  }
  return l;
}

/// n^{-1} Y Y' for a p x n data matrix.
inline Matrix sample_covariance_from_columns(const Matrix& y) {
  const std::size_t p = y.rows();
  const auto n = static_cast<double>(y.cols());
  if (y.cols() == 0) throw std::invalid_argument("sample_covariance: no columns");
  Matrix s(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    const auto ri = y.row(i);
    for (std::size_t k = i; k < p; ++k) {
      const auto rk = y.row(k);
      double acc = 0.0;
      for (std::size_t j = 0; j < ri.size(); ++j) acc += ri[j] * rk[j];
      s(i, k) = s(k, i) = acc / n;
    }
  }
  return s;
}

/// S = n^{-1} Y Y' where column j of Y is Gamma x_j, Gamma the Cholesky factor
/// of population_sigma(spec, p) and x_j the path from stream (seed, j).
inline Matrix sample_covariance_matrix(const CovarianceModel& model, const SpectralModel& spec,
                                       std::size_t p, std::size_t n, std::uint64_t seed) {
  if (p == 0 || n == 0) throw std::invalid_argument("sample_covariance_matrix: p, n must be >= 1");
  const Matrix gamma = cholesky(population_sigma(spec, p));
  Matrix y(p, n);
  parallel_for(n, [&](std::size_t j) {
    const auto x = generate_path(model, p, seed, j);
    const auto col = gamma * std::span<const double>(x.values);
    for (std::size_t i = 0; i < p; ++i) y(i, j) = col[i];
  });
  return sample_covariance_from_columns(y);
}

struct JacobiResult {
  ESD esd;
  Matrix vectors;  // columns are eigenvectors in esd order (empty unless requested)
  int sweeps = 0;
};

/// Cyclic-by-row Jacobi rotations until the off-diagonal Frobenius norm is at
/// most tol * ||S||_F.  At most 100 sweeps.
inline JacobiResult jacobi_eigen(const Matrix& s, double tol, bool want_vectors = false) {
  s.require_square("jacobi_eigenvalues");
  if (!(tol > 0.0)) throw std::invalid_argument("jacobi_eigenvalues: tol must be > 0");
  if (relative_asymmetry(s) > 1e-10)
    throw std::invalid_argument("jacobi_eigenvalues: matrix is not symmetric");
  const std::size_t n = s.rows();
  Matrix a = symmetrize(s);
  Matrix v = want_vectors ? Matrix::identity(n) : Matrix();
  const double target = tol * s.frobenius_norm();

  auto off_norm = [&] {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(off);
  };

  int sweep = 0;
  for (; off_norm() > target; ++sweep) {
    if (sweep == 100)
      throw ConvergenceError("jacobi_eigenvalues: no convergence in 100 sweeps", off_norm(), sweep);
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        if (want_vectors)
          for (std::size_t k = 0; k < n; ++k) {
            const double vkp = v(k, p), vkq = v(k, q);
            v(k, p) = c * vkp - sn * vkq;
            v(k, q) = sn * vkp + c * vkq;
          }
      }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  JacobiResult result;
  result.esd.eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.esd.eigenvalues[i] = a(order[i], order[i]);
  if (want_vectors) {
    result.vectors = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) result.vectors(k, i) = v(k, order[i]);
  }
  result.sweeps = sweep;
  return result;
}

inline ESD jacobi_eigenvalues(const Matrix& s, double tol = 1e-14) {
  return jacobi_eigen(s, tol, false).esd;
}

/// m_p(z) = p^{-1} sum_i 1 / (lambda_i - z).
inline complex empirical_stieltjes(const ESD& esd, complex z) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("empirical_stieltjes: Im z must be > 0");
  if (esd.eigenvalues.empty()) throw std::invalid_argument("empirical_stieltjes: empty ESD");
  complex sum = 0.0;
  for (double l : esd.eigenvalues) sum += 1.0 / (l - z);
  return sum / static_cast<double>(esd.size());
}

/// Right-hand side of the limit equation at m.
inline complex stieltjes_map(const SpectralModel& spec, complex z, complex m) {
  const double c = spec.c();
  const complex shrink = 1.0 - c - c * z * m;
  complex sum = 0.0;
  for (const auto& a : spec.atoms()) sum += a.weight / (a.lambda * shrink - z);
  return sum;
}

/// |m - F(m)| / max(1, |m|) for the limit equation.  The scaling only matters
/// when |m| > 1, which needs Im z < 1; there the absolute error floor of
/// double arithmetic grows with |m|.
inline double stieltjes_residual(const SpectralModel& spec, complex z, complex m) {
  return std::abs(m - stieltjes_map(spec, z, m)) / std::max(1.0, std::abs(m));
}

/// The root that is a Stieltjes transform: Im m > 0 and the companion
/// transform -(1 - c)/z + c m also has positive imaginary part.  For c > 1
/// the equation has other roots in the upper half plane.
inline bool stieltjes_admissible(const SpectralModel& spec, complex z, complex m) {
  const double c = spec.c();
  return m.imag() > 0.0 && (-(1.0 - c) / z + c * m).imag() > 0.0;
}

namespace detail {

/// One Newton step on g(m) = m - F(m), halved until the residual drops and
/// the iterate stays admissible.
inline std::optional<std::pair<complex, double>> newton_step(const SpectralModel& spec,
                                                             complex z, complex m,
                                                             double residual) {
  const double c = spec.c();
  const complex shrink = 1.0 - c - c * z * m;
  complex f = 0.0, df = 0.0;
  for (const auto& a : spec.atoms()) {
    const complex d = a.lambda * shrink - z;
    f += a.weight / d;
    df += a.weight * a.lambda * c * z / (d * d);
  }
  const complex slope = 1.0 - df;
  if (std::abs(slope) == 0.0) return std::nullopt;
  const complex step = (m - f) / slope;
  for (double t = 1.0; t > 1e-12; t *= 0.5) {
    const complex next = m - t * step;
    if (!stieltjes_admissible(spec, z, next)) continue;
    const double r = stieltjes_residual(spec, z, next);
    if (r < residual) return std::make_pair(next, r);
  }
  return std::nullopt;
}

}  // namespace detail

struct StieltjesOptions {
  double tol = 1e-12;
  long max_iter = 10000;
  /// Starting point; defaults to -1/z.
  std::optional<complex> initial{};
};

namespace detail {

struct FixedPointRun {
  complex m;
  double residual = 0.0;
  long iterations = 0;
  bool converged = false;
};

/// Each iteration takes the better of a damped fixed-point step
/// m <- (1 - g) m + g F(m) and a backtracking Newton step on m - F(m); both
/// must keep the iterate admissible.  g starts at 0.5, is halved when neither step lowers the
/// residual and grows back after accepted damped steps; the run stops once g
/// falls below 1/1024.
inline FixedPointRun fixed_point(const SpectralModel& spec, complex z, complex m, double tol,
                                 long max_iter) {
  FixedPointRun run{m, stieltjes_residual(spec, z, m)};
  double gamma = 0.5;
  while (run.residual > tol) {
    if (run.iterations >= max_iter) return run;
    ++run.iterations;
    const complex damped = (1.0 - gamma) * run.m + gamma * stieltjes_map(spec, z, run.m);
    const double r = stieltjes_admissible(spec, z, damped)
                         ? stieltjes_residual(spec, z, damped)
                         : std::numeric_limits<double>::infinity();
    const auto newton = newton_step(spec, z, run.m, run.residual);
    if (newton && newton->second < r) {
      run.m = newton->first;
      run.residual = newton->second;
    } else if (r < run.residual) {
      run.m = damped;
      run.residual = r;
      gamma = std::min(0.5, 2.0 * gamma);
    } else {
      gamma *= 0.5;
      if (gamma < 1.0 / 1024.0) return run;
    }
  }
  run.converged = stieltjes_admissible(spec, z, run.m);
  return run;
}

}  // namespace detail

namespace detail {

/// Iterates the companion form mc <- -1 / (z - c sum w lambda / (1 + lambda mc))
/// with mc = -(1 - c)/z + c m.  The map sends the upper half plane into a
/// bounded disc inside it, so the iteration converges from any start there;
/// it stops once the residual of m falls to `tol`.
inline FixedPointRun companion_iteration(const SpectralModel& spec, complex z, double tol,
                                         long max_iter) {
  const double c = spec.c();
  complex mc = -1.0 / z;
  auto to_m = [&](complex v) { return (v + (1.0 - c) / z) / c; };
  FixedPointRun run{to_m(mc), stieltjes_residual(spec, z, to_m(mc))};
  while (run.residual > tol && run.iterations < max_iter) {
    ++run.iterations;
    complex t = 0.0;
    for (const auto& a : spec.atoms()) t += a.weight * a.lambda / (1.0 + a.lambda * mc);
    mc = -1.0 / (z - c * t);
    run.m = to_m(mc);
    run.residual = stieltjes_residual(spec, z, run.m);
  }
  run.converged = run.residual <= tol && stieltjes_admissible(spec, z, run.m);
  return run;
}

}  // namespace detail

namespace detail {

/// fixed_point from `start`; if that stalls, at most 500 companion iterations
/// to bring the residual below 1e-6, then fixed_point again from there.
inline FixedPointRun solve_at(const SpectralModel& spec, complex z, complex start, double tol,
                              long budget) {
  auto run = fixed_point(spec, z, start, tol, budget);
  long used = run.iterations;
  if (!run.converged && used < budget) {
    const auto rough =
        companion_iteration(spec, z, std::max(tol, 1e-6), std::min(500L, budget - used));
    used += rough.iterations;
    if (rough.converged) {
      run = fixed_point(spec, z, rough.m, tol, budget - used);
      used += run.iterations;
    }
  }
  run.iterations = used;
  return run;
}

}  // namespace detail

/// Solves the limit equation at z with detail::solve_at from the initial
/// point.  If that fails close to the real axis, the solve is repeated along
/// the vertical path from Re z + i down to z, each point warm-started from
/// the previous one and the step refined where a point fails.  `max_iter`
/// bounds the total iteration count.
inline StieltjesValue limit_stieltjes(const SpectralModel& spec, complex z,
                                      const StieltjesOptions& opt = {}) {
  if (!(z.imag() > 0.0)) throw std::invalid_argument("limit_stieltjes: Im z must be > 0");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("limit_stieltjes: tol must be > 0");
  auto where = [&] {
    return "z = (" + std::to_string(z.real()) + ", " + std::to_string(z.imag()) + ")";
  };
  auto run = detail::solve_at(spec, z, opt.initial.value_or(-1.0 / z), opt.tol, opt.max_iter);
  long used = run.iterations;
  if (!run.converged && z.imag() < 1.0 && used < opt.max_iter) {
    complex w(z.real(), 1.0);
    auto step = detail::solve_at(spec, w, -1.0 / w, opt.tol, opt.max_iter - used);
    used += step.iterations;
    double ratio = 0.5;
    while (step.converged && w.imag() > z.imag() && used < opt.max_iter) {
      const complex next(z.real(), std::max(z.imag(), w.imag() * ratio));
      auto trial = detail::solve_at(spec, next, step.m, opt.tol, opt.max_iter - used);
      used += trial.iterations;
      if (trial.converged) {
        w = next;
        step = trial;
        ratio = std::max(0.5 * ratio, 1e-3);
      } else {
        ratio = std::sqrt(ratio);
        if (ratio > 0.999) break;
      }
    }
    if (step.converged && w == z) run = step;
    else run.residual = std::min(run.residual, step.residual);
  }
  run.iterations = used;
  if (!run.converged) {
    if (used >= opt.max_iter)
      throw ConvergenceError("limit_stieltjes: no convergence at " + where() + ", last residual " +
                                 std::to_string(run.residual),
                             run.residual, used);
    throw ConvergenceError("limit_stieltjes: stalled at " + where() + ", last residual " +
                               std::to_string(run.residual),
                           run.residual, used);
  }
  return {z, run.m, run.residual, run.iterations};
}

inline StieltjesValue limit_stieltjes(const SpectralModel& spec, complex z, double tol,
                                      long max_iter) {
  StieltjesOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return limit_stieltjes(spec, z, opt);
}

/// Marchenko-Pastur Stieltjes transform: the admissible root (see
/// stieltjes_admissible) of c z m^2 + (z - (1 - c)) m + 1 = 0.
inline complex mp_closed_form(double c, complex z) {
  if (!(c > 0.0)) throw std::invalid_argument("mp_closed_form: c must be > 0");
  if (!(z.imag() > 0.0)) throw std::invalid_argument("mp_closed_form: Im z must be > 0");
  const complex a = c * z;
  const complex b = z - (1.0 - c);
  const complex disc = std::sqrt(b * b - 4.0 * a);
  // Stable pair: q = -(b + s disc)/2 with |b + s disc| maximal; roots q/a, 1/q.
  const complex plus = b + disc, minus = b - disc;
  const complex q = -0.5 * (std::abs(plus) >= std::abs(minus) ? plus : minus);
  const complex r1 = q / a;
  const complex r2 = 1.0 / q;
  auto admissible = [&](complex m) { return m.imag() > 0.0 && (-(1.0 - c) / z + c * m).imag() > 0.0; };
  if (admissible(r1) != admissible(r2)) return admissible(r1) ? r1 : r2;
  return r1.imag() >= r2.imag() ? r1 : r2;
}

/// Stieltjes inversion: Im m(x + i eps) / pi, clipped at zero.
inline double density_from_stieltjes(const SpectralModel& spec, double x, double epsilon = 1e-3,
                                     const StieltjesOptions& opt = {}) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("density_from_stieltjes: epsilon must be > 0");
  const auto v = limit_stieltjes(spec, complex(x, epsilon), opt);
  return std::max(0.0, v.m.imag() / std::numbers::pi);
}

/// Spectral density sum_j C(j) e^{i j omega} of the sequence (the population
/// covariance eigenvalue profile of long Toeplitz sections).
inline double spectral_density(const CovarianceModel& model, double omega) {
  return std::visit(
      [&](const auto& l) -> double {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GaussianAR1>) {
          return (1.0 - l.rho * l.rho) / (1.0 - 2.0 * l.rho * std::cos(omega) + l.rho * l.rho);
        } else if constexpr (std::is_same_v<L, GaussianMA>) {
          double s = autocovariance(model, 0);
          for (std::size_t j = 1; j < l.coeffs.size(); ++j)
            s += 2.0 * autocovariance(model, static_cast<std::int64_t>(j)) *
                 std::cos(static_cast<double>(j) * omega);
          return s;
        } else {
          return 1.0;
        }
      },
      model.law());
}

/// Limit population law when the columns are Gamma x with x drawn from a
/// dependent sequence: the block-diagonal Sigma_p of population_sigma times
/// the Toeplitz covariance of x.  Each block's eigenvalues converge to the
/// law of lambda_a f(U), U uniform on (0, pi), discretised at `resolution`
/// midpoint quantiles.  Independent sequences return `spec` itself.
inline SpectralModel column_population_law(const CovarianceModel& model,
                                           const SpectralModel& spec,
                                           std::size_t resolution = 512) {
  const std::size_t range = model.dependence_range();
  bool white = range != std::numeric_limits<std::size_t>::max();
  for (std::size_t j = 1; white && j <= range; ++j)
    white = autocovariance(model, static_cast<std::int64_t>(j)) == 0.0;
  if (white) return spec;
  if (resolution == 0) throw std::invalid_argument("column_population_law: resolution must be > 0");
  std::vector<SpectralAtom> atoms;
  atoms.reserve(spec.atoms().size() * resolution);
  double total = 0.0;
  for (const auto& a : spec.atoms())
    for (std::size_t k = 0; k < resolution; ++k) {
      const double omega =
          std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(resolution);
      const double w = a.weight / static_cast<double>(resolution);
      atoms.push_back({a.lambda * spectral_density(model, omega), w});
      total += w;
    }
  for (auto& a : atoms) a.weight /= total;
  return SpectralModel(std::move(atoms), spec.c());
}

/// CDF of the limit law, obtained by integrating the Stieltjes-inversion
/// density on a uniform grid (trapezoid rule).  The integration runs left to
/// right with each solve warm-started from its neighbour.
class LimitLawCdf {
 public:
  explicit LimitLawCdf(const SpectralModel& spec, double epsilon = 1e-3, double spacing = 0.0)
      : epsilon_(epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("LimitLawCdf: epsilon must be > 0");
    const double h = spacing > 0.0 ? spacing : epsilon;
    const double edge = spec.max_lambda() * (1.0 + std::sqrt(spec.c())) *
                        (1.0 + std::sqrt(spec.c()));
    lo_ = -0.5;
    const double hi = 1.1 * edge + 0.5;
    const auto points = static_cast<std::size_t>(std::ceil((hi - lo_) / h)) + 1;
    h_ = (hi - lo_) / static_cast<double>(points - 1);
    density_.resize(points);
    StieltjesOptions opt;
    for (std::size_t i = 0; i < points; ++i) {
      const complex z(lo_ + h_ * static_cast<double>(i), epsilon_);
      StieltjesValue v;
      try {
        v = limit_stieltjes(spec, z, opt);
      } catch (const ConvergenceError&) {
        opt.initial.reset();
        v = limit_stieltjes(spec, z, opt);
      }
      opt.initial = v.m;
      density_[i] = std::max(0.0, v.m.imag() / std::numbers::pi);
    }
    cumulative_.assign(points, 0.0);
    for (std::size_t i = 1; i < points; ++i)
      cumulative_[i] = cumulative_[i - 1] + 0.5 * h_ * (density_[i - 1] + density_[i]);
  }

  double operator()(double x) const {
    if (x <= lo_) return 0.0;
    const double pos = (x - lo_) / h_;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= cumulative_.size()) return std::min(1.0, cumulative_.back());
    const double frac = pos - static_cast<double>(i);
    return std::min(1.0, cumulative_[i] + frac * (cumulative_[i + 1] - cumulative_[i]));
  }

  double total_mass() const { return cumulative_.back(); }

 private:
  double epsilon_;
  double lo_ = 0.0;
  double h_ = 0.0;
  std::vector<double> density_;
  std::vector<double> cumulative_;
};

/// sup_x |F_p(x) - cdf(x)| evaluated at the eigenvalue breakpoints: F_p(lambda)
/// against cdf(lambda) and the left limits F_p(lambda-) against cdf(lambda-).
template <typename Cdf>
double kolmogorov_distance(const ESD& esd, Cdf&& cdf) {
  const auto& ev = esd.eigenvalues;
  const auto p = static_cast<double>(ev.size());
  double worst = 0.0;
  std::size_t i = 0;
  while (i < ev.size()) {
    std::size_t j = i;
    while (j + 1 < ev.size() && ev[j + 1] == ev[i]) ++j;
    const double f = cdf(ev[i]);
    const double f_left = cdf(std::nextafter(ev[i], -std::numeric_limits<double>::infinity()));
    const double right = static_cast<double>(j + 1) / p;
    const double left = static_cast<double>(i) / p;
    worst = std::max({worst, std::abs(right - f), std::abs(left - f_left)});
    i = j + 1;
  }
  return worst;
}

}  // namespace quadvar
