#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "oracles.hpp"
#include "quadvar/longrun.hpp"

using namespace quadvar;

namespace {

std::vector<Kernel> named_kernels() {
  return {Kernel::bartlett(), Kernel::parzen(), Kernel::truncated(), Kernel::quadratic_spectral()};
}

// Quadratic spectral kernel written out from its definition.
double qs_reference(double x) {
  if (x == 0.0) return 1.0;
  const double a = 6.0 * std::numbers::pi * x / 5.0;
  return 25.0 / (12.0 * std::numbers::pi * std::numbers::pi * x * x) * (std::sin(a) / a - std::cos(a));
}

}  // namespace

TEST(Kernel, SpecValues) {
  EXPECT_EQ(kernel_eval(Kernel::bartlett(), 0.0), 1.0);
  EXPECT_DOUBLE_EQ(kernel_eval(Kernel::bartlett(), 0.25), 0.75);
  EXPECT_DOUBLE_EQ(kernel_eval(Kernel::parzen(), 0.5), 0.25);
  EXPECT_DOUBLE_EQ(kernel_eval(Kernel::parzen(), 0.75), 2.0 * 0.25 * 0.25 * 0.25);
  EXPECT_EQ(kernel_eval(Kernel::parzen(), 1.5), 0.0);
  EXPECT_EQ(kernel_eval(Kernel::truncated(), 1.0), 1.0);
  EXPECT_EQ(kernel_eval(Kernel::truncated(), 1.01), 0.0);
  EXPECT_EQ(kernel_eval(Kernel::quadratic_spectral(), 0.0), 1.0);
  for (const auto& k : named_kernels()) EXPECT_THROW(kernel_eval(k, -0.1), std::invalid_argument);
}

TEST(Kernel, QuadraticSpectralMatchesDefinition) {
  const auto k = Kernel::quadratic_spectral();
  for (double x : {0.1, 0.5, 1.0, 2.5, 7.0, 40.0})
    EXPECT_NEAR(k(x), qs_reference(x), 1e-12) << x;
  // The closed form cancels badly near 0; compare with its Taylor series
  // 1 - a^2/10 + a^4/280 - a^6/15120, a = 6 pi x / 5.
  for (double x : {1e-6, 1e-4, 1e-3, 1e-2}) {
    const double a = 6.0 * std::numbers::pi * x / 5.0, a2 = a * a;
    EXPECT_NEAR(k(x), 1.0 - a2 / 10.0 + a2 * a2 / 280.0 - a2 * a2 * a2 / 15120.0, 1e-15) << x;
  }
}

TEST(Kernel, Envelopes) {
  EXPECT_DOUBLE_EQ(kernel_envelope(Kernel::bartlett(), 0.25), 0.75);
  EXPECT_EQ(kernel_envelope(Kernel::truncated(), 2.0), 0.0);
  for (const auto& k : named_kernels()) EXPECT_NEAR(kernel_envelope(k, 0.0), 1.0, 1e-12) << k.name();
  EXPECT_THROW(kernel_envelope(Kernel::parzen(), -1.0), std::invalid_argument);
}

TEST(Kernel, EnvelopeIsNonIncreasingAndDominates) {
  oracle::Gen g(31);
  auto tab = Kernel::tabulated({0, 0.5, 1, 2, 3}, {1, 0.2, 0.4, -0.3, 0.1});
  auto kernels = named_kernels();
  kernels.push_back(tab);
  for (const auto& k : kernels) {
    double prev = kernel_envelope(k, 0.0);
    for (int i = 1; i <= 4000; ++i) {
      const double x = 0.005 * i;
      const double e = kernel_envelope(k, x);
      EXPECT_LE(e, prev + 1e-15) << k.name() << " x=" << x;
      prev = e;
    }
    for (int i = 0; i < 500; ++i) {
      const double x = g.uniform(0, 20);
      EXPECT_GE(kernel_envelope(k, x) + 1e-12, std::abs(k(x))) << k.name() << " x=" << x;
    }
  }
  EXPECT_NEAR(kernel_envelope(tab, 0.5), 0.4, 1e-12);
}

TEST(Kernel, Exponents) {
  auto b = kernel_kq(Kernel::bartlett());
  EXPECT_EQ(b.q, 1.0);
  EXPECT_EQ(b.k_q, -1.0);
  auto p = kernel_kq(Kernel::parzen());
  EXPECT_EQ(p.q, 2.0);
  EXPECT_EQ(p.k_q, -6.0);
  auto t = kernel_kq(Kernel::truncated());
  EXPECT_EQ(t.status, ExponentStatus::Degenerate);
  EXPECT_EQ(t.k_q, 0.0);
}

TEST(Kernel, ExponentsAgreeWithSmallArgumentRatios) {
  for (const auto& k : {Kernel::bartlett(), Kernel::parzen(), Kernel::quadratic_spectral()}) {
    const auto e = kernel_kq(k);
    const double x = 1e-4;
    EXPECT_NEAR((k(x) - 1.0) / std::pow(x, e.q), e.k_q, 1e-3 * std::abs(e.k_q)) << k.name();
  }
}

TEST(Kernel, TabulatedExponentIsEstimated) {
  std::vector<double> grid, values;
  for (int i = 0; i <= 2000; ++i) {
    grid.push_back(i * 1e-3);
    values.push_back(std::max(0.0, 1.0 - 2.0 * i * 1e-3));
  }
  const auto e = kernel_kq(Kernel::tabulated(grid, values));
  ASSERT_EQ(e.status, ExponentStatus::Ok);
  EXPECT_NEAR(e.q, 1.0, 1e-6);
  EXPECT_NEAR(e.k_q, -2.0, 1e-6);
}

TEST(Kernel, AssumptionReports) {
  const auto b = check_assumptions(Kernel::bartlett());
  EXPECT_TRUE(b.a_pass);
  EXPECT_TRUE(b.b_pass);
  EXPECT_EQ(b.c, ExponentStatus::Ok);
  EXPECT_DOUBLE_EQ(b.envelope_sq_integral, 1.0 / 3.0);

  const auto t = check_assumptions(Kernel::truncated());
  EXPECT_TRUE(t.a_pass);
  EXPECT_TRUE(t.b_pass);
  EXPECT_EQ(t.envelope_sq_integral, 1.0);
  EXPECT_EQ(to_string(t.c), "degenerate");

  const auto q = check_assumptions(Kernel::quadratic_spectral());
  EXPECT_TRUE(q.a_pass);
  EXPECT_TRUE(q.b_pass);
  EXPECT_EQ(q.c, ExponentStatus::Ok);
  EXPECT_TRUE(std::isfinite(q.envelope_sq_integral));

  const auto bad = check_assumptions(Kernel::tabulated({0, 1}, {0.5, 0}));
  EXPECT_FALSE(bad.a_pass);
}

TEST(Kernel, EnvelopeIntegralsMatchQuadrature) {
  const auto parzen = Kernel::parzen();
  const double want = oracle::simpson([&](double x) { return parzen(x) * parzen(x); }, 0, 1, 20000);
  EXPECT_NEAR(parzen.envelope_sq_integral(), want, 1e-12);
  EXPECT_NEAR(want, 151.0 / 560.0, 1e-12);

  // QS: |K| is bounded by 25/(12 pi^2 x^2) (1 + 5/(6 pi x)), so the tail
  // beyond 200 is below 1e-8; the envelope never falls below |K|.
  const auto qs = Kernel::quadratic_spectral();
  const double abs_sq = oracle::simpson([&](double x) { return qs(x) * qs(x); }, 0, 200, 400000);
  EXPECT_GE(qs.envelope_sq_integral(), abs_sq - 1e-8);
  EXPECT_NEAR(qs.envelope_sq_integral(), 0.50243970446, 1e-6);
}

TEST(Kernel, TabulatedCsvRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "quadvar_kernel_test.csv";
  {
    std::ofstream out(path);
    out << "x,K\n0,1\n0.5,0.5\n1,0\n";
  }
  const auto k = Kernel::load_tabulated_csv(path.string());
  EXPECT_DOUBLE_EQ(k(0.25), 0.75);
  EXPECT_EQ(k(2.0), 0.0);
  std::filesystem::remove(path);
  EXPECT_THROW(Kernel::load_tabulated_csv("/nonexistent/k.csv"), std::runtime_error);
  EXPECT_THROW(Kernel::tabulated({0.1, 1}, {1, 0}), std::invalid_argument);
  EXPECT_THROW(Kernel::tabulated({0, 1, 1}, {1, 0, 0}), std::invalid_argument);
  EXPECT_THROW(Kernel::by_name("gaussian"), std::invalid_argument);
}

TEST(EstimateLrv, SpecExamples) {
  const std::vector<double> x{1.0, -2.0, 0.5, 3.0};
  EXPECT_DOUBLE_EQ(estimate_lrv(x, Kernel::bartlett(), 1.0).value, (1 + 4 + 0.25 + 9) / 4.0);
  const std::vector<double> ones{1.0, 1.0};
  EXPECT_DOUBLE_EQ(estimate_lrv(ones, Kernel::bartlett(), 2.0).value, 1.5);
  const std::vector<double> zeros(10, 0.0);
  EXPECT_EQ(estimate_lrv(zeros, Kernel::parzen(), 3.0).value, 0.0);
  EXPECT_THROW(estimate_lrv(x, Kernel::bartlett(), 0.0), std::invalid_argument);
  EXPECT_THROW(estimate_lrv(std::vector<double>{}, Kernel::bartlett(), 1.0), std::invalid_argument);
}

TEST(EstimateLrv, LagFormEqualsNaiveDoubleSum) {
  oracle::Gen g(32);
  for (const auto& k : named_kernels())
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 1 + g.index(200);
      const double m = g.uniform(0.3, 40);
      std::vector<double> x(n);
      for (double& v : x) v = g.uniform(-2, 2);
      const double want = oracle::naive_lrv(x, [&](double u) { return k(u); }, m);
      const double got = estimate_lrv(x, k, m).value;
      EXPECT_LE(std::abs(got - want), 1e-12 * std::max(1.0, std::abs(want))) << k.name() << " n=" << n;
    }
}

TEST(EstimateLrv, MonteCarloMeanMatchesExactBias) {
  const auto model = CovarianceModel::gaussian_ar1(0.5);
  const auto k = Kernel::bartlett();
  const std::size_t n = 1000, reps = 2000;
  std::vector<double> est(reps);
  for (std::size_t r = 0; r < reps; ++r) est[r] = estimate_lrv(generate_path(model, n, 77, r), k, 10).value;
  double mean = 0, sq = 0;
  for (double v : est) mean += v;
  mean /= reps;
  for (double v : est) sq += (v - mean) * (v - mean);
  const double se = std::sqrt(sq / (reps - 1) / reps);
  const double want = lrv_true(model) + exact_bias(model, k, 10, n).exact;
  EXPECT_LE(std::abs(mean - want), 4 * se) << mean << " vs " << want;
}

TEST(LrvTrue, SpecExamples) {
  EXPECT_DOUBLE_EQ(lrv_true(CovarianceModel::gaussian_ar1(0.5)), 3.0);
  EXPECT_EQ(lrv_true(CovarianceModel::rademacher_iid()), 1.0);
  EXPECT_EQ(lrv_true(CovarianceModel::rademacher_product_mds()), 1.0);
  const auto ma = CovarianceModel::gaussian_ma({1.0, 0.5});
  EXPECT_NEAR(lrv_true(ma), autocovariance(ma, 0) + 2 * autocovariance(ma, 1), 1e-15);
}

TEST(GammaQ, SpecExamples) {
  const auto ar = CovarianceModel::gaussian_ar1(0.5);
  EXPECT_NEAR(gamma_q(ar, 1), 2.0, 1e-12);
  EXPECT_NEAR(gamma_q(ar, 2), 6.0, 1e-12);
  double partial = 0;
  for (int j = 1; j <= 2000; ++j) partial += double(j) * j * std::pow(0.5, j);
  EXPECT_NEAR(gamma_q(ar, 2), partial, 1e-12);
  EXPECT_EQ(gamma_q(CovarianceModel::rademacher_iid(), 1.5), 0.0);
  EXPECT_EQ(gamma_q(CovarianceModel::gaussian_ar1(0.0), 2.0), 0.0);
  EXPECT_THROW(gamma_q(ar, -1), std::invalid_argument);
}

TEST(ExactBias, WhiteNoiseIsUnbiased) {
  for (double m : {1.0, 5.0, 50.0})
    EXPECT_EQ(exact_bias(CovarianceModel::rademacher_iid(), Kernel::bartlett(), m, 100).exact, 0.0);
}

TEST(ExactBias, LeadingTermForAr1Bartlett) {
  const auto model = CovarianceModel::gaussian_ar1(0.5);
  const auto k = Kernel::bartlett();
  const double oracle_value = oracle::bias_leading_partial_sum(0.5, [&](double x) { return k(x); }, 10, 2000);
  EXPECT_NEAR(oracle_value, -0.399609375, 1e-12);
  EXPECT_NEAR(exact_bias(model, k, 10, 4000).leading, oracle_value, 1e-5);
}

TEST(ExactBias, EqualsNaiveExpectation) {
  const std::size_t n = 200;
  for (const auto& model : {CovarianceModel::gaussian_ar1(0.5), CovarianceModel::gaussian_ar1(-0.7),
                            CovarianceModel::gaussian_ma({1.0, 0.4, -0.3})})
    for (const auto& k : named_kernels())
      for (double m : {3.0, 17.5, 250.0}) {
        auto c = [&](long d) { return autocovariance(model, d); };
        const double want = oracle::naive_lrv_expectation(c, [&](double x) { return k(x); }, m, n);
        const double got = exact_bias(model, k, m, n).exact + lrv_true(model);
        EXPECT_LE(std::abs(got - want), 1e-12 * std::abs(want)) << model.name() << " " << k.name() << " m=" << m;
      }
}

TEST(ExactBias, TruncatedKernelWithWideBandwidth) {
  const auto model = CovarianceModel::gaussian_ar1(0.6);
  const std::size_t n = 50;
  double want = 0;
  for (std::size_t j = 1; j <= n; ++j) want -= 2.0 / n * j * std::pow(0.6, j);
  // Tail 2 sum_{j > n} rho^j.
  want -= 2.0 * std::pow(0.6, n + 1) / (1 - 0.6);
  EXPECT_NEAR(exact_bias(model, Kernel::truncated(), 60, n).exact, want, 1e-12);
}

TEST(ExactBias, RemainderIsOrderOneOverN) {
  const auto model = CovarianceModel::gaussian_ar1(0.5);
  const auto k = Kernel::bartlett();
  std::vector<double> logn, logr;
  for (std::size_t n : {1000, 2000, 4000}) {
    logn.push_back(std::log(double(n)));
    logr.push_back(std::log(std::abs(exact_bias(model, k, 10, n).remainder())));
  }
  const double slope = (logr[2] - logr[0]) / (logn[2] - logn[0]);
  EXPECT_GE(-slope, 0.8);
  EXPECT_LE(-slope, 1.2);
}

TEST(VarianceBound, SpecExamples) {
  const auto unit = DependenceProfile::null(1.0);
  EXPECT_NEAR(variance_bound_c_free(unit, Kernel::bartlett(), 3, 300), 0.01, 1e-15);
  EXPECT_NEAR(variance_bound_c_free(unit, Kernel::truncated(), 100, 100), 0.01 + 2.0, 1e-14);
  double prev = variance_bound_c_free(unit, Kernel::bartlett(), 10, 100);
  for (std::size_t n : {1000, 10000, 100000}) {
    const double b = variance_bound_c_free(unit, Kernel::bartlett(), 10, n);
    EXPECT_LT(b, prev);
    prev = b;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(MseBound, SpecExamples) {
  const auto ar = CovarianceModel::gaussian_ar1(0.5);
  const auto profile = dependence_profile(ar, 20);
  const auto r = mse_bound(profile, ar, Kernel::bartlett(), 10, 1000);
  EXPECT_NEAR(r.squared_bias_leading, 0.16, 1e-12);
  EXPECT_NEAR(r.gamma_q, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.sigma2_true, 3.0);
  EXPECT_GE(r.variance_bound_c_free, 0.0);

  const auto white = CovarianceModel::rademacher_iid();
  for (const auto& k : {Kernel::bartlett(), Kernel::parzen(), Kernel::quadratic_spectral()})
    EXPECT_EQ(mse_bound(dependence_profile(white, 5), white, k, 10, 1000).squared_bias_leading, 0.0);

  const auto t = mse_bound(profile, ar, Kernel::truncated(), 10, 1000);
  EXPECT_EQ(t.squared_bias_leading, 0.0);
  EXPECT_EQ(t.exact_bias, exact_bias(ar, Kernel::truncated(), 10, 1000).exact);
  EXPECT_NE(t.exact_bias, 0.0);

  EXPECT_THROW(mse_bound(profile, ar, Kernel::tabulated({0, 1}, {0.5, 0}), 10, 1000), std::domain_error);
}

TEST(CumulantSum, GaussianModelsVanish) {
  for (const auto& m : {CovarianceModel::gaussian_ar1(0.0), CovarianceModel::gaussian_ar1(0.5),
                        CovarianceModel::gaussian_ar1(0.9), CovarianceModel::gaussian_ma({1, 0.5, 0.25})})
    EXPECT_LE(cumulant_sum(m, 10), 1e-12) << m.name();
}

TEST(CumulantSum, RademacherIidIsZero) {
  EXPECT_EQ(cumulant_sum(CovarianceModel::rademacher_iid(), 5), 0.0);
}

TEST(CumulantSum, ProductLawMatchesEnumeration) {
  double want = 0;
  for (int j = 1; j <= 3; ++j)
    for (int k = 1; k <= 3; ++k)
      for (int l = 1; l <= 3; ++l) {
        auto c = [](int a, int b) { return a == b ? 1.0 : 0.0; };
        const double kappa = oracle::product_law_moment({0, j, k, l}) - c(0, j) * c(k, l) - c(0, k) * c(j, l) -
                             c(0, l) * c(j, k);
        want += std::abs(kappa);
      }
  EXPECT_NEAR(cumulant_sum(CovarianceModel::rademacher_product_mds(), 3), want, 1e-12);
  EXPECT_THROW(cumulant_sum(CovarianceModel::rademacher_iid(), 0), std::invalid_argument);
}

TEST(MonteCarloLrv, ReproducibleAcrossThreadCounts) {
  const auto model = CovarianceModel::gaussian_ar1(0.5);
  const std::vector<double> ms{2, 8};
  set_thread_count(1);
  const auto a = mc_lrv(model, Kernel::bartlett(), 500, ms, 50, 9);
  set_thread_count(4);
  const auto b = mc_lrv(model, Kernel::bartlett(), 500, ms, 50, 9);
  set_thread_count(0);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    EXPECT_EQ(a[i].mse, b[i].mse);
    EXPECT_EQ(a[i].mean, b[i].mean);
  }
}
