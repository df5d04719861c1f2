// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "quadvar/quadvar.hpp"

using namespace quadvar;
using I = std::int64_t;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome r;
  try {
    r = check();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!r.pass) ++failures;
  std::printf("criterion %2d %s: %s (%s; %.1f s)\n", id, title.c_str(), r.pass ? "PASS" : "FAIL",
              r.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

oracle::Dense to_dense(const Matrix& m) {
  oracle::Dense d(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
  return d;
}

Outcome gaussian_oracle() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0;
  for (double rho : {0.0, 0.5, 0.9}) {
    const auto model = CovarianceModel::gaussian_ar1(rho);
    const Matrix sigma = covariance_matrix(model, 50);
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const Matrix a = make_matrix("gaussian", 50, s);
      const auto est = mc_variance(model, a, 100000, 1000 + s);
      worst = std::max(worst, std::abs(est.variance - gaussian_exact_variance(sigma, a)) / est.std_error_of_variance);
    }
  }
  const double t = seconds_since(start);
  return {worst <= 4 && t <= 60, fmt("max |z| = %.2f", worst) + fmt(", %.1f s <= 60 s", t)};
}

Outcome enumeration_oracle() {
  double worst_z = 0, worst_exact = 0;
  for (const auto& model : {CovarianceModel::rademacher_iid(), CovarianceModel::rademacher_product_mds()}) {
    const bool product = std::holds_alternative<RademacherProductMDS>(model.law());
    for (std::uint64_t s = 1; s <= 3; ++s) {
      const Matrix a = make_matrix("gaussian", 6 + 2 * s, s);
      const double exact = brute_force_variance(model, a);
      const double ref = oracle::enumerated_form_variance(to_dense(a), product);
      worst_exact = std::max(worst_exact, std::abs(exact - ref) / std::max(1.0, std::abs(ref)));
      const auto est = mc_variance(model, a, 100000, 2000 + s);
      worst_z = std::max(worst_z, std::abs(est.variance - exact) / est.std_error_of_variance);
    }
  }
  return {worst_z <= 4 && worst_exact <= 1e-12,
          fmt("max |z| = %.2f", worst_z) + fmt(", brute force vs enumeration rel %.1e", worst_exact)};
}

Outcome bound_domination() {
  int violations = 0, checks = 0;
  double worst = 0;
  auto check = [&](double exact, double bound) {
    ++checks;
    worst = std::max(worst, exact / bound);
    if (!(exact <= 3 * bound)) ++violations;
  };
  for (double rho : {0.0, 0.5, 0.9}) {
    const auto model = CovarianceModel::gaussian_ar1(rho);
    for (std::size_t p : {10u, 30u, 50u}) {
      const auto prof = dependence_profile(model, p);
      const auto white = dependence_profile(CovarianceModel::gaussian_ar1(0.0), p);
      const Matrix sigma = covariance_matrix(model, p);
      const Matrix gamma = cholesky(sigma);
      for (std::uint64_t s = 0; s < 20; ++s) {
        const Matrix hollow = make_matrix("hollow_gaussian", p, s);
        const Matrix general = make_matrix("gaussian", p, s);
        check(gaussian_exact_variance(sigma, hollow), hollow_variance_bound(prof, hollow).bound_value);
        check(gaussian_exact_variance(sigma, general), variance_bound(prof, general).bound_value);
        check(gaussian_exact_variance(gamma * gamma.transpose(), general),
              linear_process_variance_bound(white, sigma, general).bound_value);
      }
      for (std::uint64_t s = 0; s < 5; ++s) {
        const auto a = make_vector("gaussian", p, s);
        check(gaussian_fourth_moment(sigma, a), fourth_moment_bound(prof, a).bound_value);
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(checks) +
                               fmt(" checks, max exact/bound %.3f", worst)};
}

Outcome profile_validity() {
  const std::vector<CovarianceModel> models{
      CovarianceModel::gaussian_ar1(0.0), CovarianceModel::gaussian_ar1(0.5), CovarianceModel::gaussian_ar1(0.9),
      CovarianceModel::gaussian_ma({1.0, 0.6, -0.3}), CovarianceModel::rademacher_iid(),
      CovarianceModel::rademacher_product_mds()};
  const double tol = 1e-12;
  int violations = 0;
  long checks = 0;
  auto le = [&](double a, double b) {
    ++checks;
    if (!(a <= b + tol)) ++violations;
  };
  for (const auto& model : models) {
    const auto prof = dependence_profile(model, 10);
    auto phi = [&](I g) { return prof.mixed_at(static_cast<std::size_t>(g)); };
    for (I i = 1; i <= 12; ++i)
      for (I j = i + 1; j <= 12; ++j) {
        if (j - i > 10) continue;
        le(std::abs(autocovariance(model, j - i)), phi(j - i));
        const I si[] = {i, i}, sj[] = {j, j};
        le(product_covariance(model, si, sj), prof.squares_at(static_cast<std::size_t>(j - i)));
        for (I k = j + 1; k <= 12; ++k)
          for (I l = k + 1; l <= 12; ++l) {
            const auto c = tuple_covariances(model, i, j, k, l);
            const I idx[] = {i, j, k, l};
            const double e4 = std::abs(exact_moment(model, idx));
            if (j - i <= 10) le(c.head, phi(j - i));
            if (l - k <= 10) le(c.tail, phi(l - k));
            if (k - j <= 10) le(c.middle, phi(k - j));
            if (l - i <= 10) {
              le(c.middle, 2 * std::min({phi(j - i), phi(k - j), phi(l - k)}));
              le(c.crossed, 2 * std::min(phi(j - i), phi(l - k)));
              le(e4, std::min(phi(j - i), phi(l - k)));
            }
          }
      }
    le(min_phi_double_sum(prof), 2 * prof.lag_weighted_sum());
  }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(checks) + " checks"};
}

Outcome stieltjes_vs_closed_form() {
  const auto start = std::chrono::steady_clock::now();
  double worst_diff = 0, worst_res = 0, min_im = 1;
  for (double c : {0.1, 0.5, 1.0, 2.0}) {
    const auto spec = SpectralModel::point(1, c);
    for (int i = 0; i < 50; ++i) {
      const complex z(-2.0 + 8.0 * i / 49.0, 1.0);
      const auto v = limit_stieltjes(spec, z, 1e-12, 10000);
      worst_diff = std::max(worst_diff, std::abs(v.m - mp_closed_form(c, z)));
      worst_res = std::max(worst_res, stieltjes_residual(spec, z, v.m));
      min_im = std::min(min_im, v.m.imag());
    }
  }
  const double t = seconds_since(start);
  return {worst_diff <= 1e-10 && worst_res <= 1e-12 && min_im > 0 && t <= 5,
          fmt("max |dm| %.1e", worst_diff) + fmt(", max residual %.1e", worst_res) + fmt(", min Im m %.3g", min_im)};
}

Outcome esd_convergence() {
  const auto start = std::chrono::steady_clock::now();
  const auto model = CovarianceModel::gaussian_ar1(0.5);
  const std::vector<std::uint64_t> seeds{1000, 1001, 1002, 1003};
  bool pass = true;
  std::string detail;
  for (const auto& [spec, threshold, label] :
       {std::tuple{SpectralModel::point(1, 0.5), 0.08, "I"},
        std::tuple{SpectralModel({{1, 0.5}, {3, 0.5}}, 0.5), 0.10, "two-atom"}}) {
    const LimitLawCdf cdf(column_population_law(model, spec));
    std::vector<double> d;
    for (std::size_t p : {50u, 100u, 200u}) {
      double total = 0;
      for (auto s : seeds) {
        const Matrix sample = sample_covariance_matrix(model, spec, p, 2 * p, s);
        total += kolmogorov_distance(jacobi_eigenvalues(sample), cdf);
      }
      d.push_back(total / seeds.size());
    }
    const bool ok = d[2] <= threshold && d[0] > d[1] && d[1] > d[2];
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + label + fmt(" %.4f", d[0]) + fmt(" > %.4f", d[1]) +
              fmt(" > %.4f", d[2]) + fmt(" <= %.2f", threshold);
  }
  const double t = seconds_since(start);
  return {pass && t <= 120, detail + fmt("; %.0f s <= 120 s", t)};
}

Outcome mp_density() {
  const double spot = density_from_stieltjes(SpectralModel::point(1, 1), 1.0, 1e-3);
  const double want = std::sqrt(3.0) / (2 * std::numbers::pi);
  const auto spec = SpectralModel::point(1, 0.5);
  const double a = (1 - std::sqrt(0.5)) * (1 - std::sqrt(0.5)), b = (1 + std::sqrt(0.5)) * (1 + std::sqrt(0.5));
  const double mass = oracle::simpson([&](double x) { return density_from_stieltjes(spec, x, 1e-3); }, a, b, 4000);
  return {std::abs(spot - want) <= 0.005 && std::abs(mass - 1) <= 0.02,
          fmt("f(1) = %.5f", spot) + fmt(" vs %.5f", want) + fmt(", mass %.4f", mass)};
}

Outcome bias_identity() {
  double worst = 0;
  const std::size_t n = 200;
  for (double rho : {0.5, 0.9, -0.4})
    for (const auto& k : {Kernel::bartlett(), Kernel::parzen(), Kernel::truncated(), Kernel::quadratic_spectral()})
      for (double m : {5.0, 20.0}) {
        const auto model = CovarianceModel::gaussian_ar1(rho);
        const double naive = oracle::naive_lrv_expectation([&](long d) { return std::pow(rho, std::abs(d)); },
                                                           [&](double x) { return k(x); }, m, n);
        const double got = exact_bias(model, k, m, n).exact + lrv_true(model);
        worst = std::max(worst, std::abs(got - naive) / std::abs(naive));
      }
  const auto model = CovarianceModel::gaussian_ar1(0.5);
  const auto bart = Kernel::bartlett();
  const double partial = oracle::bias_leading_partial_sum(0.5, [&](double x) { return bart(x); }, 10, 2000);
  const double leading = exact_bias(model, bart, 10, 4000).leading;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double nn : {1000.0, 2000.0, 4000.0}) {
    const double x = std::log(nn), y = std::log(std::abs(exact_bias(model, bart, 10, std::size_t(nn)).remainder()));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double slope = (3 * sxy - sx * sy) / (3 * sxx - sx * sx);
  return {worst <= 1e-12 && std::abs(leading - partial) <= 1e-5 && std::abs(partial + 0.39961) <= 1e-5 &&
              -slope >= 0.8 && -slope <= 1.2,
          fmt("rel err %.1e", worst) + fmt(", leading %.6f", leading) + fmt(" (oracle %.6f)", partial) +
              fmt(", remainder exponent %.3f", -slope)};
}

struct Sweep {
  std::vector<double> mse, ratio;
  double seconds = 0;
};

const Sweep& lrv_sweep() {
  static const Sweep sweep = [] {
    const auto start = std::chrono::steady_clock::now();
    const auto model = CovarianceModel::gaussian_ar1(0.5);
    const auto profile = dependence_profile(model, 50);
    const auto k = Kernel::bartlett();
    Sweep s;
    for (std::size_t n : {2000u, 8000u, 32000u}) {
      const double m = std::cbrt(static_cast<double>(n));
      const std::vector<double> ms{m};
      const auto mc = mc_lrv(model, k, n, ms, 500, 3);
      const auto b = mse_bound(profile, model, k, m, n);
      s.mse.push_back(mc[0].mse);
      s.ratio.push_back(mc[0].mse / (b.variance_bound_c_free + b.squared_bias_leading));
    }
    s.seconds = seconds_since(start);
    return s;
  }();
  return sweep;
}

Outcome consistency_sweep() {
  const auto& s = lrv_sweep();
  return {s.mse[0] > s.mse[1] && s.mse[1] > s.mse[2] && s.mse[2] <= 0.05 && s.seconds <= 300,
          fmt("MSE %.4f", s.mse[0]) + fmt(" > %.4f", s.mse[1]) + fmt(" > %.4f", s.mse[2]) + " (<= 0.05)"};
}

Outcome mse_shape() {
  const auto& s = lrv_sweep();
  const auto model = CovarianceModel::gaussian_ar1(0.5);
  const auto profile = dependence_profile(model, 50);
  const auto k = Kernel::bartlett();
  const std::size_t n = 32000;
  const std::vector<double> ms{2, 8, 32, 128};
  const auto mc = mc_lrv(model, k, n, ms, 500, 3);
  double worst = *std::max_element(s.ratio.begin(), s.ratio.end());
  std::vector<double> mse;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto b = mse_bound(profile, model, k, ms[i], n);
    worst = std::max(worst, mc[i].mse / (b.variance_bound_c_free + b.squared_bias_leading));
    mse.push_back(mc[i].mse);
  }
  const auto best = std::min_element(mse.begin(), mse.end()) - mse.begin();
  const bool interior = best > 0 && best + 1 < static_cast<long>(mse.size());
  std::string curve;
  for (std::size_t i = 0; i < ms.size(); ++i) curve += fmt(" m=%.0f:", ms[i]) + fmt("%.4f", mse[i]);
  return {worst <= 3 && interior, fmt("max ratio %.3f", worst) + "; MSE" + curve + (interior ? ", interior min" : ", min at edge")};
}

Outcome kernel_suite() {
  const auto b = check_assumptions(Kernel::bartlett());
  const auto p = check_assumptions(Kernel::parzen());
  const auto t = check_assumptions(Kernel::truncated());
  const auto q = check_assumptions(Kernel::quadratic_spectral());
  const double bartlett_int = oracle::simpson([](double x) { return (1 - x) * (1 - x); }, 0, 1, 2);
  double cumulants = 0;
  for (const auto& m : {CovarianceModel::gaussian_ar1(0.0), CovarianceModel::gaussian_ar1(0.5),
                        CovarianceModel::gaussian_ar1(0.9), CovarianceModel::gaussian_ma({1.0, 0.6, -0.3})})
    cumulants = std::max(cumulants, cumulant_sum(m, 10));
  const bool pass = b.exponent.q == 1 && b.exponent.k_q == -1 && b.envelope_sq_integral == 1.0 / 3.0 &&
                    std::abs(bartlett_int - 1.0 / 3.0) < 1e-15 && p.exponent.q == 2 && p.exponent.k_q == -6 &&
                    t.c == ExponentStatus::Degenerate && q.a_pass && q.b_pass && q.c == ExponentStatus::Ok &&
                    std::isfinite(q.envelope_sq_integral) && cumulants <= 1e-12;
  return {pass, fmt("QS int Kbar^2 = %.8f", q.envelope_sq_integral) + fmt(", max Gaussian cumulant sum %.1e", cumulants)};
}

Outcome reproducibility() {
  int configs = 0, mismatches = 0;
  std::string bad;
  for (const auto& entry : std::filesystem::directory_iterator(QUADVAR_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    const auto cfg = load_config(entry.path());
    const auto fmt_ = parse_format(cfg.format);
    set_thread_count(1);
    const std::string a = format_records(run(cfg), fmt_);
    const std::string b = format_records(run(cfg), fmt_);
    set_thread_count(4);
    const std::string c = format_records(run(cfg), fmt_);
    set_thread_count(0);
    ++configs;
    if (a != b || a != c) {
      ++mismatches;
      bad += " " + entry.path().filename().string();
    }
  }
  return {configs >= 6 && mismatches == 0,
          std::to_string(configs) + " configs, " + std::to_string(mismatches) + " mismatches" + bad};
}

}  // namespace

int main() {
  report(1, "Gaussian oracle equivalence", gaussian_oracle);
  report(2, "enumeration oracle equivalence", enumeration_oracle);
  report(3, "bound domination", bound_domination);
  report(4, "profile validity", profile_validity);
  report(5, "Stieltjes fixed point vs closed form", stieltjes_vs_closed_form);
  report(6, "ESD convergence", esd_convergence);
  report(7, "MP density", mp_density);
  report(8, "bias identity", bias_identity);
  report(9, "consistency sweep", consistency_sweep);
  report(10, "MSE bound shape", mse_shape);
  report(11, "kernel suite", kernel_suite);
  report(12, "reproducibility", reproducibility);
  std::printf("%s: %d of 12 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
