#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iqrtest/dataset.hpp"
#include "iqrtest/normalization.hpp"
#include "iqrtest/quantile_regression.hpp"
#include "iqrtest/rng.hpp"

namespace iqrtest {

// Evaluation grids shared by the estimators. The quantile-level grid is the
// midpoint rule a_k = (k-0.5)/a_count with weight 1/a_count; the shift grid
// is uniform with s_count points starting at s_lo; y holds the points the
// estimated distribution functions are evaluated on.
struct GridSpec {
  int a_count = 100;
  double s_lo = -10.0;
  double s_step = 0.01;
  int s_count = 2001;
  std::vector<double> y;

  std::vector<double> a_levels() const;
  double a_weight() const { return 1.0 / static_cast<double>(a_count); }
  double s_hi() const { return s_lo + s_step * (s_count - 1); }
  void validate() const;
};

struct CdfCurve {
  std::vector<double> y;
  std::vector<double> values;  // nondecreasing, in [0,1]
  double tau = 0.0;
  Normalization normalization = Normalization::logistic;
};

void validate_cdf_curve(const CdfCurve& curve);

// Scenario distribution the population curves are averaged over: either the
// observed design rows (equal weights) or an explicit weighted list.
struct CounterfactualSpec {
  enum class Mode { observed, explicit_list };
  Mode mode = Mode::observed;
  std::vector<DesignRow> rows;
  std::vector<double> weights;

  static CounterfactualSpec observed() { return {}; }
  static CounterfactualSpec explicit_list(std::vector<DesignRow> rows,
                                          std::vector<double> weights);
};

// Measure (in numeraire units) of the shift values s within the grid range
// at which the predicted conditional quantile falls inside the probability
// band [1-tau_hi, 1-tau_lo]. Computed as the exact length of the band
// preimage intersected with [s_lo, s_hi] - the limit of the band-indicator
// Riemann sum as the step shrinks, with no grid-position jitter.
double band_measure(const CoefficientGrid& grid, const DesignRow& row, double a,
                    double tau_lo, double tau_hi, const GridSpec& gs);

// Estimated population CDF of the normalized interquantile range at level
// tau (band [1-tau, 0.5] for tau > 0.5, [0.5, 1-tau] for tau < 0.5),
// averaged over the counterfactual scenario set.
CdfCurve estimate_iqr_distribution(const Dataset& ds, const CoefficientGrid& grid,
                                   double tau, const CounterfactualSpec& cf,
                                   const GridSpec& gs, Normalization norm);

// Population CDF of the tau-quantile of the ex-ante return, evaluated at
// transfer s: the double Riemann sum over quantile levels and scenarios.
double quantile_distribution_at(const Dataset& ds, const CoefficientGrid& grid,
                                double tau, double s, const CounterfactualSpec& cf,
                                const GridSpec& gs);

// Same over the whole s grid, sorted ascending (monotone rearrangement) so
// the reported values form a valid distribution function.
std::vector<double> quantile_distribution_curve(const Dataset& ds,
                                                const CoefficientGrid& grid,
                                                double tau,
                                                const CounterfactualSpec& cf,
                                                const GridSpec& gs);

struct BandPair {
  CdfCurve lower;
  CdfCurve upper;
};

struct PipelineOptions {
  OutcomeTransform outcome = OutcomeTransform::log_odds;
  std::vector<double> qr_levels = default_qr_levels();
  int threads = 1;
};

// Design + outcome construction + quantile-regression sweep in one step.
CoefficientGrid fit_stage(const Dataset& ds, const PipelineOptions& opts);

struct GridBuildResult {
  GridSpec grid;
  std::vector<std::string> warnings;
};

// Builds the evaluation grids from the original sample. The s grid is sized
// so predicted band crossings lie strictly inside (unless overridden); the y
// grid takes 19 evenly spaced quantiles of the pooled normalized band
// measures, frozen here so later bootstrap replicates reuse it unchanged.
GridBuildResult make_grid_spec(const Dataset& ds, const CoefficientGrid& grid,
                               const std::vector<double>& taus, Normalization norm,
                               int a_count,
                               const std::optional<std::array<double, 3>>& s_override,
                               const std::optional<std::vector<double>>& y_override);

// Pointwise percentile bands across block-bootstrap re-estimates of the
// curve (full refit per replicate), monotonized into valid CDF envelopes.
BandPair bootstrap_confidence_bands(const Dataset& ds, int b_replicates, double tau,
                                    const CounterfactualSpec& cf, const GridSpec& gs,
                                    Normalization norm, double level, const Rng& rng,
                                    const PipelineOptions& opts);

// `tau, y, value, lower, upper` rows; bands optional (empty cells when absent).
std::string curves_csv(const std::vector<CdfCurve>& curves,
                       const std::vector<BandPair>* bands = nullptr);

}  // namespace iqrtest
