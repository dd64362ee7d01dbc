#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "iqrtest/dgp.hpp"
#include "iqrtest/errors.hpp"
#include "iqrtest/moment_test.hpp"
#include "helpers.hpp"

using namespace iqrtest;

namespace {

std::map<double, CdfCurve> synthetic_curves(const std::vector<double>& taus,
                                            std::size_t y_points,
                                            double shift_per_tau = 0.0) {
  std::map<double, CdfCurve> curves;
  std::size_t k = 0;
  for (const double tau : taus) {
    CdfCurve c;
    c.tau = tau;
    c.normalization = Normalization::logistic;
    for (std::size_t j = 0; j < y_points; ++j) {
      c.y.push_back(0.1 * static_cast<double>(j + 1));
      const double base =
          static_cast<double>(j + 1) / static_cast<double>(y_points + 1);
      c.values.push_back(std::clamp(base + shift_per_tau * static_cast<double>(k),
                                    0.0, 1.0));
    }
    curves[tau] = std::move(c);
    ++k;
  }
  return curves;
}

DgpSpec small_logistic_spec(std::uint64_t seed, int n = 40, int m = 4) {
  DgpSpec spec;
  spec.n_respondents = n;
  spec.scenarios_per_respondent = m;
  spec.family = Family::logistic;
  spec.sigma = ScalarDist::uniform(0.5, 1.5);
  spec.attribute_names = {"x"};
  spec.slopes = {ScalarDist::degenerate(0.5)};
  spec.attribute_ranges = {{-1.0, 1.0}};
  spec.numeraire_range = {-2.0, 2.0};
  spec.seed = seed;
  return spec;
}

TestConfig quick_config(NullKind kind, std::uint64_t seed) {
  TestConfig cfg;
  cfg.null_kind = kind;
  cfg.bootstrap_b = 32;
  cfg.sims_l = 1000;
  cfg.a_count = 40;
  cfg.seed = seed;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("moment vector dimensions match the combinatorics") {
  const std::vector<double> taus{0.1, 0.25, 0.75, 0.9};
  const auto curves = synthetic_curves(taus, 19);
  const MomentVector ev1 = build_moment_vector(curves, NullKind::ev1);
  CHECK(ev1.entries.size() == 114);  // C(4,2) * 19
  CHECK(ev1.index.size() == 114);
  const MomentVector sym = build_moment_vector(curves, NullKind::symmetry);
  CHECK(sym.entries.size() == 38);  // 2 mirrored pairs * 19
  // Deterministic order: first pair lexicographic, y ascending.
  CHECK(ev1.index[0].tau == 0.1);
  CHECK(ev1.index[0].tau_prime == 0.25);
  CHECK(ev1.index[0].y == doctest::Approx(0.1));
  CHECK(ev1.index[19].tau == 0.1);
  CHECK(ev1.index[19].tau_prime == 0.75);
  CHECK(sym.index[0].tau == 0.1);
  CHECK(sym.index[0].tau_prime == 0.9);
}

TEST_CASE("identical curves give a zero statistic under any weighting") {
  const auto curves = synthetic_curves({0.1, 0.25, 0.75, 0.9}, 7);
  const MomentVector m = build_moment_vector(curves, NullKind::ev1);
  CHECK(m.entries.norm() == 0.0);
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd a(m.entries.size(), m.entries.size());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
    }
    const Eigen::MatrixXd omega = a * a.transpose();
    CHECK(test_statistic(m.entries, omega) == 0.0);
    const std::map<double, double> cvs{{0.10, 0.0}, {0.05, 0.0}, {0.01, 0.0}};
    CHECK(decide(test_statistic(m.entries, omega), cvs) == "fail-to-reject");
  }
}

TEST_CASE("moment vector input validation") {
  auto curves = synthetic_curves({0.25, 0.75}, 5);
  curves[0.75].y[2] += 1e-3;
  CHECK_THROWS_WITH_AS(build_moment_vector(curves, NullKind::ev1),
                       doctest::Contains("y grids"), InputError);
  const auto unpaired = synthetic_curves({0.25, 0.9}, 5);
  CHECK_THROWS_WITH_AS(build_moment_vector(unpaired, NullKind::symmetry),
                       doctest::Contains("mirrored"), InputError);
}

TEST_CASE("test statistic values") {
  Eigen::VectorXd m(2);
  Eigen::MatrixXd omega(2, 2);

  m << 0.0, 0.0;
  omega = Eigen::MatrixXd::Identity(2, 2);
  CHECK(test_statistic(m, omega) == 0.0);

  m << 1.0, 0.0;
  CHECK(test_statistic(m, omega) == doctest::Approx(1.0));

  m << 1.0, 1.0;
  omega << 2.0, 0.0, 0.0, 2.0;
  CHECK(test_statistic(m, omega) == doctest::Approx(2.0));

  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(test_statistic(wrong, omega), InputError);
}

TEST_CASE("statistic is invariant to simultaneous permutations") {
  Rng rng(17);
  const int dim = 6;
  Eigen::VectorXd m(dim);
  Eigen::MatrixXd a(dim, dim);
  for (int i = 0; i < dim; ++i) {
    m[i] = rng.normal();
    for (int j = 0; j < dim; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd omega = a * a.transpose();  // PSD
  std::vector<int> perm(dim);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[0], perm[4]);
  std::swap(perm[2], perm[5]);
  Eigen::VectorXd mp(dim);
  Eigen::MatrixXd op(dim, dim);
  for (int i = 0; i < dim; ++i) {
    mp[i] = m[perm[i]];
    for (int j = 0; j < dim; ++j) op(i, j) = omega(perm[i], perm[j]);
  }
  CHECK(test_statistic(mp, op) == doctest::Approx(test_statistic(m, omega)));
}

TEST_CASE("regularized inverse") {
  SUBCASE("identity with zero ridge stays the identity") {
    const Weighting w = regularized_inverse(Eigen::MatrixXd::Identity(3, 3), 0.0);
    CHECK((w.omega - Eigen::MatrixXd::Identity(3, 3)).norm() ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(w.ridge_used == 0.0);
  }

  SUBCASE("diagonal inverse") {
    Eigen::MatrixXd cov(2, 2);
    cov << 4.0, 0.0, 0.0, 1.0;
    const Weighting w = regularized_inverse(cov, 0.0);
    CHECK(w.omega(0, 0) == doctest::Approx(0.25));
    CHECK(w.omega(1, 1) == doctest::Approx(1.0));
    CHECK(w.omega(0, 1) == doctest::Approx(0.0));
  }

  SUBCASE("singular matrix with ridge inverts without failure") {
    Eigen::MatrixXd cov(2, 2);
    cov << 1.0, 1.0, 1.0, 1.0;  // rank one
    const Weighting w = regularized_inverse(cov, 1e-6);
    CHECK(std::isfinite(w.omega(0, 0)));
    CHECK(std::isfinite(w.omega(1, 1)));
    // Factorization reproduces the ridged matrix.
    CHECK((w.chol_lower * w.chol_lower.transpose() - w.sigma_ridged).norm() ==
          doctest::Approx(0.0).epsilon(1e-10));
  }

  SUBCASE("zero-dimensional input is an error") {
    CHECK_THROWS_AS(regularized_inverse(Eigen::MatrixXd(0, 0), 1e-6), InputError);
  }
}

TEST_CASE("critical values from the half-normal oracle") {
  Eigen::MatrixXd cov(1, 1);
  cov << 1.0;
  const Weighting w = regularized_inverse(cov, 0.0);
  const Rng rng(2024);
  const auto cvs =
      simulate_critical_values(w, 10000, {0.10, 0.05, 0.01, 0.5}, rng, 2);
  // S = |Z|, so c(alpha) is the (1-alpha) quantile of the half normal,
  // i.e. the normal quantile at 1 - alpha/2.
  CHECK(std::fabs(cvs.at(0.05) - 1.959964) <= 0.05);
  CHECK(std::fabs(cvs.at(0.5) - 0.674490) <= 0.03);
  CHECK(cvs.at(0.10) <= cvs.at(0.05));
  CHECK(cvs.at(0.05) <= cvs.at(0.01));
  CHECK_THROWS_AS(simulate_critical_values(w, 999, {0.05}, rng, 1), InputError);
  CHECK_THROWS_AS(simulate_critical_values(w, 1000, {}, rng, 1), InputError);
  CHECK_THROWS_AS(simulate_critical_values(w, 1000, {1.5}, rng, 1), InputError);
}

TEST_CASE("gaussian draws reproduce the ridged covariance") {
  Eigen::MatrixXd cov(3, 3);
  cov << 2.0, 0.5, 0.3, 0.5, 1.5, 0.4, 0.3, 0.4, 1.0;
  const Weighting w = regularized_inverse(cov, 1e-6);
  const Rng master(7);
  const int draws = 50000;
  Eigen::MatrixXd sample = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  std::vector<Eigen::VectorXd> zs;
  zs.reserve(draws);
  for (int l = 0; l < draws; ++l) {
    Rng r = master.substream(rng_stream::kCriticalValues, static_cast<std::uint64_t>(l));
    zs.push_back(gaussian_draw(w, r));
    mean += zs.back();
  }
  mean /= draws;
  for (const auto& z : zs) {
    sample += (z - mean) * (z - mean).transpose();
  }
  sample /= draws - 1;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(std::fabs(sample(i, j) - w.sigma_ridged(i, j)) <=
            0.05 * std::fabs(w.sigma_ridged(i, j)));
    }
  }
}

TEST_CASE("decisions") {
  const std::map<double, double> cvs{{0.10, 35.83}, {0.05, 36.18}, {0.01, 36.88}};
  CHECK(decide(51.09, cvs) == "reject-at-1%");
  CHECK(decision_label(decide(51.09, cvs)) == "Reject at 1%");

  const std::map<double, double> cvs2{{0.10, 16.49}, {0.05, 16.81}, {0.01, 17.37}};
  CHECK(decide(13.64, cvs2) == "fail-to-reject");
  CHECK(decision_label(decide(13.64, cvs2)) == "Do not reject");

  // Exactly hitting a critical value does not reject at that level.
  const std::map<double, double> cvs3{{0.10, 1.0}, {0.05, 2.0}, {0.01, 3.0}};
  CHECK(decide(2.0, cvs3) == "reject-at-10%");
  CHECK(decide(1.0, cvs3) == "fail-to-reject");
  CHECK(decide(2.5, cvs3) == "reject-at-5%");
  CHECK(decide(3.0001, cvs3) == "reject-at-1%");
}

TEST_CASE("decision strength is monotone in the statistic") {
  const std::map<double, double> cvs{{0.10, 1.0}, {0.05, 2.0}, {0.01, 3.0}};
  const auto strength = [&](double stat) {
    const std::string d = decide(stat, cvs);
    if (d == "fail-to-reject") return 0;
    if (d == "reject-at-10%") return 1;
    if (d == "reject-at-5%") return 2;
    return 3;
  };
  int prev = 0;
  for (double stat = 0.0; stat < 5.0; stat += 0.1) {
    const int cur = strength(stat);
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("bootstrap covariance determinism and shape") {
  const Dataset ds = simulate(small_logistic_spec(42));
  TestConfig cfg = quick_config(NullKind::ev1, 7);
  PipelineOptions opts;
  const CoefficientGrid grid = fit_stage(ds, opts);
  const auto built = make_grid_spec(ds, grid, cfg.taus, cfg.normalization,
                                    cfg.a_count, std::nullopt, std::nullopt);
  const Rng rng(cfg.seed);
  const auto [cov1, reps1] = bootstrap_covariance(ds, cfg, built.grid, 32, rng);
  const auto [cov2, reps2] = bootstrap_covariance(ds, cfg, built.grid, 32, rng);
  CHECK(cov1.b_used == 32);
  CHECK((cov1.matrix - cov2.matrix).norm() == 0.0);
  CHECK(reps1.rows() == 32);
  CHECK(reps1.cols() == cov1.matrix.rows());

  // Thread count must not change the result.
  TestConfig threaded = cfg;
  threaded.threads = 2;
  const auto [cov3, reps3] = bootstrap_covariance(ds, threaded, built.grid, 32, rng);
  CHECK((cov1.matrix - cov3.matrix).norm() == 0.0);

  CHECK_THROWS_AS(bootstrap_covariance(ds, cfg, built.grid, 29, rng), InputError);
}

TEST_CASE("bootstrap covariance is positive semi-definite") {
  const Dataset ds = simulate(small_logistic_spec(43));
  TestConfig cfg = quick_config(NullKind::ev1, 8);
  PipelineOptions opts;
  const CoefficientGrid grid = fit_stage(ds, opts);
  const auto built = make_grid_spec(ds, grid, cfg.taus, cfg.normalization,
                                    cfg.a_count, std::nullopt, std::nullopt);
  const auto [cov, reps] = bootstrap_covariance(ds, cfg, built.grid, 40, Rng(9));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov.matrix);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("bootstrap variances sit near Monte Carlo truth") {
  // Independent oracle: the true sampling variance of the moment vector via
  // 200 fresh samples from the same process, compared coordinate-wise with
  // one bootstrap covariance estimate. An asymmetric process under the
  // symmetry null keeps the moments well away from degeneracy, so their
  // variance is regular sampling variation rather than grid quantization.
  TestConfig cfg = quick_config(NullKind::symmetry, 11);
  cfg.taus = {0.25, 0.75};
  cfg.outcome = OutcomeTransform::log;
  cfg.a_count = 100;
  DgpSpec base = small_logistic_spec(100, 150, 4);
  base.family = Family::shifted_exponential;
  base.sigma = ScalarDist::uniform(1.0, 1.6);
  base.numeraire_range = {0.1, 0.5};
  base.attribute_ranges = {{-0.05, 0.05}};

  const Dataset first = simulate(base);
  PipelineOptions opts;
  opts.outcome = cfg.outcome;
  const CoefficientGrid grid0 = fit_stage(first, opts);
  const auto built = make_grid_spec(first, grid0, cfg.taus, cfg.normalization,
                                    cfg.a_count, std::nullopt, std::nullopt);

  const int mc = 200;
  Eigen::MatrixXd draws;
  for (int r = 0; r < mc; ++r) {
    DgpSpec spec = base;
    spec.seed = 5000 + static_cast<std::uint64_t>(r);
    const Dataset ds = simulate(spec);
    const CoefficientGrid grid = fit_stage(ds, opts);
    std::map<double, CdfCurve> curves;
    for (const double tau : cfg.taus) {
      curves[tau] = estimate_iqr_distribution(ds, grid, tau,
                                              CounterfactualSpec::observed(),
                                              built.grid, cfg.normalization);
    }
    const MomentVector m = build_moment_vector(curves, cfg.null_kind);
    if (draws.size() == 0) {
      draws.resize(mc, m.entries.size());
    }
    draws.row(r) = m.entries.transpose();
  }
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const Eigen::VectorXd true_var =
      (centered.array().square().colwise().sum() / (mc - 1)).transpose();

  const auto [cov, reps] = bootstrap_covariance(first, cfg, built.grid, 200, Rng(12));
  int compared = 0;
  for (Eigen::Index i = 0; i < true_var.size(); ++i) {
    // Compare only coordinates whose variation sits well above the curve
    // quantization floor of (1/a_count)^2; below it both estimates measure
    // grid discreteness, not sampling variation.
    if (true_var[i] < 1e-3 || cov.matrix(i, i) < 1e-3) continue;
    const double ratio = cov.matrix(i, i) / true_var[i];
    CHECK(ratio >= 1.0 / 3.0);
    CHECK(ratio <= 3.0);
    ++compared;
  }
  CHECK(compared >= 5);
}

TEST_CASE("degenerate bootstrap collapses the test to zero") {
  // Single respondent: every resample is the same dataset, the covariance is
  // all zeros, every coordinate is dropped, and the statistic is 0.
  const Dataset ds = make_dataset(
      testutil::basic_schema(), {testutil::obs("a", "s1", 0.6, 41, 40, 1, 0),
                                 testutil::obs("a", "s2", 0.4, 39.5, 40, 0, 1),
                                 testutil::obs("a", "s3", 0.7, 42, 40, 2, 0),
                                 testutil::obs("a", "s4", 0.35, 39, 40, 0, 0),
                                 testutil::obs("a", "s5", 0.55, 40.5, 40, 1, 1)});
  TestConfig cfg = quick_config(NullKind::ev1, 3);
  cfg.taus = {0.25, 0.75};
  const TestReport report = run_test(ds, cfg);
  CHECK(report.statistic == 0.0);
  CHECK(report.decision == "fail-to-reject");
  CHECK(report.dim_used == 0);
  CHECK(report.dropped.size() == static_cast<std::size_t>(report.dim_m));
}

TEST_CASE("drop_degenerate_coords removes flat coordinates") {
  MomentVector m;
  m.entries = Eigen::Vector3d(0.1, 0.2, 0.3);
  m.index = {{0.1, 0.25, 1.0}, {0.1, 0.25, 2.0}, {0.1, 0.25, 3.0}};
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
  cov(0, 0) = 1.0;
  cov(2, 2) = 2.0;
  cov(0, 2) = cov(2, 0) = 0.5;
  const DropResult d = drop_degenerate_coords(m, cov);
  CHECK(d.m.size() == 2);
  CHECK(d.dropped.size() == 1);
  CHECK(d.dropped[0].y == 2.0);
  CHECK(d.cov(0, 1) == 0.5);
}

TEST_CASE("run_test end to end on a small fixture") {
  const Dataset ds = simulate(small_logistic_spec(1234));
  TestConfig cfg = quick_config(NullKind::ev1, 99);
  const TestReport report = run_test(ds, cfg);

  CHECK(report.dim_m == 114);
  CHECK(report.b_used == 32);
  CHECK(report.statistic >= 0.0);
  CHECK(report.critical_values.size() == 3);
  CHECK(report.critical_values.at(0.10) <= report.critical_values.at(0.05));
  CHECK(report.critical_values.at(0.05) <= report.critical_values.at(0.01));
  CHECK(!report.decision.empty());
  for (const auto& [tau, curve] : report.curves) {
    validate_cdf_curve(curve);
  }

  SUBCASE("report json is byte-stable across reruns and thread counts") {
    const std::string a = report_json(report);
    const TestReport again = run_test(ds, cfg);
    CHECK(a == report_json(again));
    TestConfig threaded = cfg;
    threaded.threads = 2;
    const TestReport parallel = run_test(ds, threaded);
    CHECK(a == report_json(parallel));
  }

  SUBCASE("symmetry null runs and reports the reduced dimension") {
    TestConfig sym = cfg;
    sym.null_kind = NullKind::symmetry;
    const TestReport s = run_test(ds, sym);
    CHECK(s.dim_m == 38);
  }

  SUBCASE("report table mirrors the published layout") {
    const std::string table = report_table(report);
    CHECK(table.find("Statistic") != std::string::npos);
    CHECK(table.find("10%") != std::string::npos);
    CHECK(table.find("5%") != std::string::npos);
    CHECK(table.find("1%") != std::string::npos);
    CHECK(table.find("Decision") != std::string::npos);
    CHECK(table.find("EV1") != std::string::npos);
  }
}

TEST_CASE("run_test validates tau levels") {
  const Dataset ds = simulate(small_logistic_spec(5));
  TestConfig cfg = quick_config(NullKind::ev1, 1);
  cfg.taus = {0.5};
  CHECK_THROWS_AS(run_test(ds, cfg), InputError);
}
