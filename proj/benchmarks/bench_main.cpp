#include <benchmark/benchmark.h>

#include "iqrtest/dgp.hpp"
#include "iqrtest/iqr.hpp"
#include "iqrtest/moment_test.hpp"
#include "iqrtest/quantile_regression.hpp"

using namespace iqrtest;

namespace {

DgpSpec bench_spec(int respondents) {
  DgpSpec spec;
  spec.n_respondents = respondents;
  spec.scenarios_per_respondent = 5;
  spec.family = Family::logistic;
  spec.sigma = ScalarDist::uniform(0.5, 1.5);
  spec.attribute_names = {"x"};
  spec.slopes = {ScalarDist::degenerate(0.5)};
  spec.attribute_ranges = {{-1.0, 1.0}};
  spec.numeraire_range = {-2.0, 2.0};
  spec.seed = 1;
  return spec;
}

void BM_FitQrGrid(benchmark::State& state) {
  const Dataset ds = simulate(bench_spec(static_cast<int>(state.range(0))));
  const auto design = build_design(ds);
  const auto outcomes = make_outcomes(ds, OutcomeTransform::log_odds);
  const auto levels = default_qr_levels();
  for (auto _ : state) {
    auto grid = fit_qr_grid(design, outcomes, levels, OutcomeTransform::log_odds);
    benchmark::DoNotOptimize(grid);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(design.size() * levels.size()));
}
BENCHMARK(BM_FitQrGrid)->Arg(100)->Arg(400)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_EstimateCurve(benchmark::State& state) {
  const Dataset ds = simulate(bench_spec(static_cast<int>(state.range(0))));
  PipelineOptions opts;
  const CoefficientGrid grid = fit_stage(ds, opts);
  const auto built = make_grid_spec(ds, grid, {0.25, 0.75}, Normalization::logistic,
                                    100, std::nullopt, std::nullopt);
  for (auto _ : state) {
    auto curve =
        estimate_iqr_distribution(ds, grid, 0.75, CounterfactualSpec::observed(),
                                  built.grid, Normalization::logistic);
    benchmark::DoNotOptimize(curve);
  }
}
BENCHMARK(BM_EstimateCurve)->Arg(100)->Arg(400)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_BootstrapCovariance(benchmark::State& state) {
  const Dataset ds = simulate(bench_spec(100));
  TestConfig cfg;
  cfg.a_count = 50;
  cfg.threads = 1;
  PipelineOptions opts;
  const CoefficientGrid grid = fit_stage(ds, opts);
  const auto built = make_grid_spec(ds, grid, cfg.taus, cfg.normalization,
                                    cfg.a_count, std::nullopt, std::nullopt);
  for (auto _ : state) {
    auto cov = bootstrap_covariance(ds, cfg, built.grid,
                                    static_cast<int>(state.range(0)), Rng(3));
    benchmark::DoNotOptimize(cov);
  }
}
BENCHMARK(BM_BootstrapCovariance)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_CriticalValues(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(9);
  Eigen::MatrixXd a(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) a(i, j) = rng.normal();
  }
  const Weighting w = regularized_inverse(a * a.transpose(), 1e-6);
  for (auto _ : state) {
    auto cvs = simulate_critical_values(w, 2000, {0.10, 0.05, 0.01}, Rng(11), 1);
    benchmark::DoNotOptimize(cvs);
  }
}
BENCHMARK(BM_CriticalValues)->Arg(38)->Arg(114)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
