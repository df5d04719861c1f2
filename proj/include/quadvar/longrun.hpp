#pragma once

/// Kernel long-run variance estimation for a centred stationary sequence.
///
/// Estimator: sigma2_hat = n^{-1} sum_{s,t} K(|s - t| / m) X_s X_t.
/// Kernel conditions checked here:
///   (a) K(0) = 1, K continuous at 0, sup |K| finite;
///   (b) the non-increasing envelope Kbar(x) = sup_{y >= x} |K(y)| is square
///       integrable on [0, inf);
///   (c) k_q = lim_{x -> 0+} (K(x) - 1) / x^q exists for some q > 0.
/// Diagnostics: the exact finite-n bias, its leading-term expansion, the
/// variance bound with the universal constant factored out, and the squared
/// bias term 4 (k_q Gamma_q)^2 / m^{2q}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "quadvar/dependence_models.hpp"
#include "quadvar/parallel.hpp"

namespace quadvar {

enum class KernelType { Bartlett, Parzen, QuadraticSpectral, Truncated, Tabulated };

enum class ExponentStatus { Ok, Degenerate, Failed };

/// Local behaviour K(x) - 1 ~ k_q x^q at zero.  Degenerate means K == 1 near
/// zero (q = +inf convention, k_q = 0).
struct KernelExponent {
  double q = 0.0;
  double k_q = 0.0;
  ExponentStatus status = ExponentStatus::Ok;
};

class Kernel {
 public:
  static Kernel bartlett() { return Kernel(KernelType::Bartlett); }
  static Kernel parzen() { return Kernel(KernelType::Parzen); }
  static Kernel truncated() { return Kernel(KernelType::Truncated); }

  static Kernel quadratic_spectral() {
    static const std::shared_ptr<const EnvelopeTable> table = [] {
      return std::make_shared<const EnvelopeTable>(build_table(
          [](double x) { return std::abs(qs_value(x)); }, kGridSpacing, kQsExtent,
          &qs_tail_bound));
    }();
    Kernel k(KernelType::QuadraticSpectral);
    k.table_ = table;
    return k;
  }

  /// Piecewise-linear kernel through (grid[i], values[i]); zero beyond the
  /// last knot.  The grid must start at 0 and increase strictly.
  static Kernel tabulated(std::vector<double> grid, std::vector<double> values) {
    if (grid.size() < 2 || grid.size() != values.size())
      throw std::invalid_argument("tabulated kernel: need >= 2 knots with matching values");
    if (grid.front() != 0.0)
      throw std::invalid_argument("tabulated kernel: grid must start at x = 0");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!std::isfinite(grid[i]) || !std::isfinite(values[i]))
        throw std::invalid_argument("tabulated kernel: non-finite knot");
      if (i > 0 && !(grid[i] > grid[i - 1]))
        throw std::invalid_argument("tabulated kernel: grid must be strictly increasing");
    }
    Kernel k(KernelType::Tabulated);
    auto knots = std::make_shared<Knots>(Knots{std::move(grid), std::move(values)});
    k.knots_ = knots;
    const double extent = knots->x.back();
    k.table_ = std::make_shared<const EnvelopeTable>(build_table(
        [knots](double x) { return std::abs(knots->eval(x)); }, std::min(kGridSpacing, extent),
        extent, nullptr));
    return k;
  }

  /// Two-column CSV (x, K(x)); an optional non-numeric header line is skipped.
  static Kernel load_tabulated_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tabulated kernel file '" + path + "'");
    std::vector<double> xs, ks;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream fields(line);
      double x = 0.0, k = 0.0;
      if (!(fields >> x >> k)) {
        if (line_no == 1 && xs.empty()) continue;
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 'x,K(x)'");
      }
      xs.push_back(x);
      ks.push_back(k);
    }
    return tabulated(std::move(xs), std::move(ks));
  }

  static Kernel by_name(std::string_view name) {
    if (name == "bartlett") return bartlett();
    if (name == "parzen") return parzen();
    if (name == "quadratic_spectral") return quadratic_spectral();
    if (name == "truncated") return truncated();
    throw std::invalid_argument("unknown kernel '" + std::string(name) + "'");
  }

  KernelType type() const noexcept { return type_; }

  std::string name() const {
    switch (type_) {
      case KernelType::Bartlett: return "bartlett";
      case KernelType::Parzen: return "parzen";
      case KernelType::QuadraticSpectral: return "quadratic_spectral";
      case KernelType::Truncated: return "truncated";
      case KernelType::Tabulated: return "tabulated";
    }
    return "unknown";
  }

  /// K(x) for x >= 0.
  double operator()(double x) const {
    switch (type_) {
      case KernelType::Bartlett: return x < 1.0 ? 1.0 - x : 0.0;
      case KernelType::Parzen:
        if (x <= 0.5) return 1.0 - 6.0 * x * x + 6.0 * x * x * x;
        if (x <= 1.0) return 2.0 * (1.0 - x) * (1.0 - x) * (1.0 - x);
        return 0.0;
      case KernelType::QuadraticSpectral: return qs_value(x);
      case KernelType::Truncated: return x <= 1.0 ? 1.0 : 0.0;
      case KernelType::Tabulated: return knots_->eval(x);
    }
    return 0.0;
  }

  /// Kbar(x) = sup_{y >= x} |K(y)|.  Exact for the monotone kernels; a
  /// backward-maximum table (spacing 1e-4) plus an analytic tail otherwise.
  double envelope(double x) const {
    if (!table_) return std::abs((*this)(x));
    return table_->at(x);
  }

  /// K(x) = 0 for all x beyond this point, if such a point exists.
  std::optional<double> support() const {
    switch (type_) {
      case KernelType::Bartlett:
      case KernelType::Parzen:
      case KernelType::Truncated: return 1.0;
      case KernelType::Tabulated: return knots_->x.back();
      case KernelType::QuadraticSpectral: return std::nullopt;
    }
    return std::nullopt;
  }

  double sup_abs() const {
    if (type_ == KernelType::Tabulated) {
      double s = 0.0;
      for (double v : knots_->k) s = std::max(s, std::abs(v));
      return s;
    }
    return envelope(0.0);
  }

  /// Integral of Kbar^2 over [0, inf).
  double envelope_sq_integral() const {
    switch (type_) {
      case KernelType::Bartlett: return 1.0 / 3.0;
      case KernelType::Parzen: return 151.0 / 560.0;
      case KernelType::Truncated: return 1.0;
      default: return table_->square_integral;
    }
  }

  KernelExponent exponent() const {
    switch (type_) {
      case KernelType::Bartlett: return {1.0, -1.0, ExponentStatus::Ok};
      case KernelType::Parzen: return {2.0, -6.0, ExponentStatus::Ok};
      case KernelType::QuadraticSpectral:
        return {2.0, -18.0 * std::numbers::pi * std::numbers::pi / 125.0, ExponentStatus::Ok};
      case KernelType::Truncated:
        return {std::numeric_limits<double>::infinity(), 0.0, ExponentStatus::Degenerate};
      case KernelType::Tabulated: return numerical_exponent();
    }
    return {0.0, 0.0, ExponentStatus::Failed};
  }

 private:
  static constexpr double kGridSpacing = 1e-4;
  static constexpr double kQsExtent = 200.0;

  struct Knots {
    std::vector<double> x;
    std::vector<double> k;

    double eval(double t) const {
      if (t > x.back()) return 0.0;
      const auto it = std::upper_bound(x.begin(), x.end(), t);
      if (it == x.end()) return k.back();
      const auto i = static_cast<std::size_t>(it - x.begin());
      const double w = (t - x[i - 1]) / (x[i] - x[i - 1]);
      return k[i - 1] + w * (k[i] - k[i - 1]);
    }
  };

  struct EnvelopeTable {
    double spacing = 0.0;
    double extent = 0.0;
    double (*tail)(double) = nullptr;  // majorant of |K| beyond extent, non-increasing
    std::vector<double> backmax;       // backmax[i] = sup_{y >= i h} |K(y)|
    double square_integral = 0.0;

    double at(double x) const {
      if (x >= extent) return tail ? tail(x) : 0.0;
      return backmax[static_cast<std::size_t>(x / spacing)];
    }
  };

  template <typename Abs>
  static EnvelopeTable build_table(Abs&& abs_k, double spacing, double extent,
                                   double (*tail)(double)) {
    EnvelopeTable t;
    t.spacing = spacing;
    t.extent = extent;
    t.tail = tail;
    const auto cells = static_cast<std::size_t>(std::ceil(extent / spacing));
    t.backmax.assign(cells + 1, 0.0);
    double running = tail ? tail(extent) : 0.0;
    for (std::size_t i = cells + 1; i-- > 0;) {
      running = std::max(running, abs_k(std::min(extent, static_cast<double>(i) * spacing)));
      t.backmax[i] = running;
    }
    // Left-endpoint sum: an upper sum for a non-increasing function.
    double integral = 0.0;
    for (std::size_t i = 0; i < cells; ++i) integral += t.backmax[i] * t.backmax[i] * spacing;
    if (tail) integral += qs_tail_square_integral(extent);
    t.square_integral = integral;
    return t;
  }

  static double qs_value(double x) {
    const double y = 1.2 * std::numbers::pi * x;
    if (y < 0.1) {
      const double y2 = y * y;
      return 1.0 - y2 / 10.0 + y2 * y2 / 280.0 - y2 * y2 * y2 / 15120.0;
    }
    return 3.0 / (y * y) * (std::sin(y) / y - std::cos(y));
  }

  // |K(x)| <= 3 (1 + 1/y) / y^2 with y = 6 pi x / 5.
  static double qs_tail_bound(double x) {
    const double y = 1.2 * std::numbers::pi * x;
    return 3.0 * (1.0 + 1.0 / y) / (y * y);
  }

  // Integral over [X, inf) of the squared tail majorant, itself bounded by
  // 9 (1 + 1/y_X)^2 / (3 a^4 X^3) with a = 6 pi / 5.
  static double qs_tail_square_integral(double extent) {
    const double a = 1.2 * std::numbers::pi;
    const double yx = a * extent;
    const double lead = 1.0 + 1.0 / yx;
    return 9.0 * lead * lead / (3.0 * std::pow(a, 4) * std::pow(extent, 3));
  }

  // Successive estimates at x = 2^-j: q_j = log2(d_j / d_{j+1}) with
  // d_j = K(x_j) - 1, then k_q = d / x^q.  Certified when both sequences
  // settle to 1e-8 relative.
  KernelExponent numerical_exponent() const {
    const double x_max = std::min(0.5, knots_->x[1]);
    std::vector<double> xs, ds;
    for (int j = 0; j < 40; ++j) {
      const double x = std::ldexp(x_max, -j);
      xs.push_back(x);
      ds.push_back((*this)(x) - (*this)(0.0));
    }
    if ((*this)(0.0) != 1.0) return {0.0, 0.0, ExponentStatus::Failed};
    if (std::all_of(ds.begin(), ds.end(), [](double d) { return d == 0.0; }))
      return {std::numeric_limits<double>::infinity(), 0.0, ExponentStatus::Degenerate};
    std::vector<double> qs, ks;
    for (std::size_t j = 0; j + 1 < ds.size(); ++j) {
      if (ds[j] == 0.0 || ds[j + 1] == 0.0 || (ds[j] > 0) != (ds[j + 1] > 0))
        return {0.0, 0.0, ExponentStatus::Failed};
      const double q = std::log2(ds[j] / ds[j + 1]);
      qs.push_back(q);
      ks.push_back(ds[j + 1] / std::pow(xs[j + 1], q));
      if (ks.size() >= 3) {
        const std::size_t n = ks.size();
        const bool q_settled = std::abs(qs[n - 1] - qs[n - 2]) <= 1e-8 * std::abs(qs[n - 1]) &&
                               std::abs(qs[n - 2] - qs[n - 3]) <= 1e-8 * std::abs(qs[n - 1]);
        const bool k_settled =
            std::abs(ks[n - 1] - ks[n - 2]) <= 1e-8 * std::max(1.0, std::abs(ks[n - 1]));
        if (q_settled && k_settled && qs.back() > 0.0)
          return {qs.back(), ks.back(), ExponentStatus::Ok};
      }
    }
    return {0.0, 0.0, ExponentStatus::Failed};
  }

  explicit Kernel(KernelType type) : type_(type) {}

  KernelType type_;
  std::shared_ptr<const Knots> knots_;
  std::shared_ptr<const EnvelopeTable> table_;
};

inline double kernel_eval(const Kernel& k, double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("kernel_eval: x must be >= 0");
  return k(x);
}

inline double kernel_envelope(const Kernel& k, double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("kernel_envelope: x must be >= 0");
  return k.envelope(x);
}

inline KernelExponent kernel_kq(const Kernel& k) { return k.exponent(); }

struct KernelAssumptions {
  bool a_pass = false;  // K(0) = 1, continuity at 0, bounded
  bool b_pass = false;  // square-integrable envelope
  ExponentStatus c = ExponentStatus::Failed;
  bool continuous_at_zero = false;
  double sup_abs = 0.0;
  double envelope_sq_integral = 0.0;
  KernelExponent exponent;
};

inline std::string_view to_string(ExponentStatus s) {
  switch (s) {
    case ExponentStatus::Ok: return "pass";
    case ExponentStatus::Degenerate: return "degenerate";
    case ExponentStatus::Failed: return "fail";
  }
  return "fail";
}

inline KernelAssumptions check_assumptions(const Kernel& k) {
  KernelAssumptions r;
  r.sup_abs = k.sup_abs();
  r.continuous_at_zero = true;
  for (int i = 1; i <= 100; ++i)
    r.continuous_at_zero = r.continuous_at_zero && std::abs(k(1e-5 * i) - 1.0) <= 0.01;
  r.a_pass = std::abs(k(0.0) - 1.0) <= 1e-12 && r.continuous_at_zero && std::isfinite(r.sup_abs);
  r.envelope_sq_integral = k.envelope_sq_integral();
  r.b_pass = std::isfinite(r.envelope_sq_integral);
  r.exponent = k.exponent();
  r.c = r.exponent.status;
  return r;
}

struct LRVEstimate {
  double value = 0.0;
  std::size_t n = 0;
  double m = 0.0;
  Kernel kernel = Kernel::bartlett();
};

namespace detail {
// Largest lag with a possibly nonzero weight.
inline std::size_t max_kernel_lag(const Kernel& k, double m, std::size_t n) {
  if (n == 0) return 0;
  if (const auto s = k.support()) {
    const double lag = std::floor(*s * m);
    if (lag < static_cast<double>(n - 1)) return static_cast<std::size_t>(lag);
  }
  return n - 1;
}

// sum_t x_t x_{t+j} for j = 0..max_lag.
inline std::vector<double> lag_products(std::span<const double> x, std::size_t max_lag) {
  std::vector<double> g(max_lag + 1, 0.0);
  for (std::size_t j = 0; j <= max_lag; ++j) {
    double s = 0.0;
    for (std::size_t t = 0; t + j < x.size(); ++t) s += x[t] * x[t + j];
    g[j] = s;
  }
  return g;
}

inline double lrv_from_lag_products(std::span<const double> g, const Kernel& k, double m,
                                    std::size_t n) {
  const std::size_t lags = std::min(g.size() - 1, max_kernel_lag(k, m, n));
  double s = k(0.0) * g[0];
  for (std::size_t j = 1; j <= lags; ++j) s += 2.0 * k(static_cast<double>(j) / m) * g[j];
  return s / static_cast<double>(n);
}
}  // namespace detail

/// sigma2_hat in lag form, truncated at the kernel support when compact.
inline LRVEstimate estimate_lrv(std::span<const double> x, const Kernel& k, double m) {
  if (!(m > 0.0)) throw std::invalid_argument("estimate_lrv: bandwidth m must be > 0");
  if (x.empty()) throw std::invalid_argument("estimate_lrv: empty path");
  const auto g = detail::lag_products(x, detail::max_kernel_lag(k, m, x.size()));
  return {detail::lrv_from_lag_products(g, k, m, x.size()), x.size(), m, k};
}

inline LRVEstimate estimate_lrv(const SamplePath& path, const Kernel& k, double m) {
  return estimate_lrv(std::span<const double>(path.values), k, m);
}

namespace detail {
// Sums sum_{j >= 1} j^q C(j) (or plain C(j) for q = 0) with a certified
// bound on what is left out.
inline double weighted_autocovariance_sum(const CovarianceModel& model, double q,
                                          double tail_tol) {
  if (!(tail_tol > 0.0)) throw std::invalid_argument("tail_tol must be > 0");
  const std::size_t range = model.dependence_range();
  auto term = [&](std::size_t j) {
    return std::pow(static_cast<double>(j), q) * autocovariance(model, static_cast<std::int64_t>(j));
  };
  double sum = 0.0;
  if (range != std::numeric_limits<std::size_t>::max()) {
    for (std::size_t j = 1; j <= range; ++j) sum += term(j);
    return sum;
  }
  const auto* ar = std::get_if<GaussianAR1>(&model.law());
  if (ar == nullptr) throw std::domain_error("autocovariance tail cannot be certified");
  const double r = std::abs(ar->rho);
  for (std::size_t j = 1; j < 100000000; ++j) {
    sum += term(j);
    // |term(k)| decays with ratio at most ((j+2)/(j+1))^q r for k > j + 1.
    const double ratio = std::pow(static_cast<double>(j + 2) / static_cast<double>(j + 1), q) * r;
    if (ratio < 1.0) {
      const double next = std::pow(static_cast<double>(j + 1), q) *
                          std::pow(r, static_cast<double>(j + 1));
      if (next / (1.0 - ratio) <= tail_tol) return sum;
    }
  }
  throw std::domain_error("autocovariance tail cannot be certified");
}
}  // namespace detail

/// sigma^2 = sum_j cov(X_t, X_{t+j}).
inline double lrv_true(const CovarianceModel& model, double tail_tol = 1e-14) {
  if (const auto* ar = std::get_if<GaussianAR1>(&model.law()))
    return (1.0 + ar->rho) / (1.0 - ar->rho);
  return autocovariance(model, 0) + 2.0 * detail::weighted_autocovariance_sum(model, 0.0, tail_tol);
}

/// Gamma_q = sum_{j >= 1} j^q cov(X_t, X_{t+j}).
inline double gamma_q(const CovarianceModel& model, double q, double tail_tol = 1e-14) {
  if (!(q >= 0.0)) throw std::invalid_argument("gamma_q: q must be >= 0");
  return detail::weighted_autocovariance_sum(model, q, tail_tol);
}

struct BiasReport {
  double exact = 0.0;    // E sigma2_hat - sigma^2 at this (m, n)
  double leading = 0.0;  // 2 sum_{j=1}^n (K(j/m) - 1) C(j)
  double remainder() const { return exact - leading; }
};

/// Exact finite-n bias: sum_{|j| < n} (1 - |j|/n) K(|j|/m) C(j) - sigma^2.
inline BiasReport exact_bias(const CovarianceModel& model, const Kernel& k, double m,
                             std::size_t n) {
  if (!(m > 0.0)) throw std::invalid_argument("exact_bias: bandwidth m must be > 0");
  if (n == 0) throw std::invalid_argument("exact_bias: n must be >= 1");
  const double nd = static_cast<double>(n);
  double expectation = k(0.0) * autocovariance(model, 0);
  double leading = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    const double c = autocovariance(model, static_cast<std::int64_t>(j));
    if (c == 0.0) continue;
    const double kj = k(static_cast<double>(j) / m);
    if (j < n) expectation += 2.0 * (1.0 - static_cast<double>(j) / nd) * kj * c;
    leading += 2.0 * (kj - 1.0) * c;
  }
  return {expectation - lrv_true(model), leading};
}

/// (coefficient sum) * (1/n + 2 (m/n) int Kbar^2).
inline double variance_bound_c_free(const DependenceProfile& profile, const Kernel& k, double m,
                                    std::size_t n) {
  if (!(m > 0.0) || n == 0) throw std::invalid_argument("variance_bound_c_free: need m > 0, n >= 1");
  const double integral = k.envelope_sq_integral();
  if (!std::isfinite(integral))
    throw std::domain_error("variance_bound_c_free: envelope is not square integrable");
  const double nd = static_cast<double>(n);
  return profile.full_coefficient() * (1.0 / nd + 2.0 * (m / nd) * integral);
}

struct MSEReport {
  double exact_bias = 0.0;
  double variance_bound_c_free = 0.0;
  double squared_bias_leading = 0.0;
  double gamma_q = 0.0;  // 0 when the kernel exponent is degenerate
  double sigma2_true = 0.0;
};

inline MSEReport mse_bound(const DependenceProfile& profile, const CovarianceModel& model,
                           const Kernel& k, double m, std::size_t n) {
  const auto checks = check_assumptions(k);
  if (!checks.a_pass) throw std::domain_error("mse_bound: kernel " + k.name() + " fails (a)");
  if (!checks.b_pass) throw std::domain_error("mse_bound: kernel " + k.name() + " fails (b)");
  if (checks.c == ExponentStatus::Failed)
    throw std::domain_error("mse_bound: kernel " + k.name() + " fails (c)");
  MSEReport r;
  r.exact_bias = exact_bias(model, k, m, n).exact;
  r.variance_bound_c_free = variance_bound_c_free(profile, k, m, n);
  r.sigma2_true = lrv_true(model);
  if (checks.c == ExponentStatus::Ok) {
    const auto [q, kq, status] = checks.exponent;
    r.gamma_q = gamma_q(model, q);
    const double term = kq * r.gamma_q;
    r.squared_bias_leading = 4.0 * term * term / std::pow(m, 2.0 * q);
  }
  return r;
}

/// sum_{j,k,l = 1..max_lag} |kappa(X_0, X_j, X_k, X_l)| with the standard
/// fourth cumulant of centred variables.
inline double cumulant_sum(const CovarianceModel& model, std::size_t max_lag) {
  if (max_lag == 0) throw std::invalid_argument("cumulant_sum: max_lag must be >= 1");
  auto c = [&](std::int64_t a, std::int64_t b) { return autocovariance(model, b - a); };
  const auto L = static_cast<std::int64_t>(max_lag);
  double total = 0.0;
  for (std::int64_t j = 1; j <= L; ++j)
    for (std::int64_t k = 1; k <= L; ++k)
      for (std::int64_t l = 1; l <= L; ++l) {
        const std::int64_t idx[] = {0, j, k, l};
        const double kappa =
            exact_moment(model, idx) - c(0, j) * c(k, l) - c(0, k) * c(j, l) - c(0, l) * c(j, k);
        total += std::abs(kappa);
      }
  return total;
}

struct LrvMonteCarlo {
  double m = 0.0;
  double mean = 0.0;
  double mse = 0.0;
  double mse_std_error = 0.0;
};

/// Monte Carlo mean and mean-square error of sigma2_hat for several
/// bandwidths over shared paths; replicate r uses stream (seed, r).
inline std::vector<LrvMonteCarlo> mc_lrv(const CovarianceModel& model, const Kernel& k,
                                         std::size_t n, std::span<const double> bandwidths,
                                         std::size_t replicates, std::uint64_t seed) {
  if (replicates < 2) throw std::invalid_argument("mc_lrv: need at least 2 replicates");
  if (bandwidths.empty()) throw std::invalid_argument("mc_lrv: no bandwidths");
  std::size_t lags = 0;
  for (double m : bandwidths) {
    if (!(m > 0.0)) throw std::invalid_argument("mc_lrv: bandwidth must be > 0");
    lags = std::max(lags, detail::max_kernel_lag(k, m, n));
  }
  const double target = lrv_true(model);
  const std::size_t nm = bandwidths.size();
  std::vector<double> est(replicates * nm);
  parallel_for(replicates, [&](std::size_t r) {
    const auto path = generate_path(model, n, seed, r);
    const auto g = detail::lag_products(path.values, lags);
    for (std::size_t b = 0; b < nm; ++b)
      est[r * nm + b] = detail::lrv_from_lag_products(g, k, bandwidths[b], n);
  });
  std::vector<LrvMonteCarlo> out(nm);
  const auto R = static_cast<double>(replicates);
  for (std::size_t b = 0; b < nm; ++b) {
    double sum = 0.0, sq = 0.0, sq2 = 0.0;
    for (std::size_t r = 0; r < replicates; ++r) {
      const double v = est[r * nm + b];
      const double e2 = (v - target) * (v - target);
      sum += v;
      sq += e2;
      sq2 += e2 * e2;
    }
    const double mse = sq / R;
    const double var_e2 = std::max(0.0, sq2 / R - mse * mse);
    out[b] = {bandwidths[b], sum / R, mse, std::sqrt(var_e2 / (R - 1.0))};
  }
  return out;
}

}  // namespace quadvar
