#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "iqrtest/dataset.hpp"

namespace iqrtest {

// What was regressed on the design rows. Band comparisons and predictions
// map back to the probability scale through the matching inverse.
enum class OutcomeTransform { direct, log_odds, log };

const char* to_string(OutcomeTransform t);
OutcomeTransform outcome_transform_from_string(const std::string& name);

// Stated probabilities exactly at 0 or 1 have no finite log-odds; they are
// winsorized into [0.01, 0.99] before the log-odds transform ([0.01, 1] for
// the plain log transform). The direct transform uses probabilities as-is.
inline constexpr double kWinsorLow = 0.01;
inline constexpr double kWinsorHigh = 0.99;

std::vector<double> make_outcomes(const Dataset& ds, OutcomeTransform transform);

struct QrFit {
  Eigen::VectorXd beta;
  double objective = 0.0;  // total check loss at beta
  int iterations = 0;
  bool converged = false;
};

double check_loss(const Eigen::VectorXd& residuals, double tau);

// Linear quantile regression at level tau by simplex descent over
// interpolation vertices (exact minimizer of the piecewise-linear check-loss
// objective, deterministic for fixed inputs). Throws InputError naming the
// collinear columns when the design is rank deficient; `names` labels the
// columns in that message when provided.
QrFit fit_qr(const std::vector<DesignRow>& rows, const std::vector<double>& outcomes,
             double tau, const std::vector<std::string>* names = nullptr);

// Coefficient vectors over a grid of quantile levels, linearly interpolated
// in between and held constant beyond the first/last level.
struct CoefficientGrid {
  std::vector<double> levels;  // strictly increasing, in (0,1)
  Eigen::MatrixXd coefs;       // one row per level
  OutcomeTransform transform = OutcomeTransform::log_odds;
};

// The levels the regressions are run on: 0.01, 0.05, 0.15, ..., 0.95, 0.99.
// Midpoint steps avoid the probability heaping typical of survey answers.
std::vector<double> default_qr_levels();

CoefficientGrid fit_qr_grid(const std::vector<DesignRow>& rows,
                            const std::vector<double>& outcomes,
                            const std::vector<double>& levels,
                            OutcomeTransform transform,
                            const std::vector<std::string>* names = nullptr);

Eigen::VectorXd interpolate_coefs(const CoefficientGrid& grid, double a);

// r(w)·beta_a mapped to the probability scale: inverse log-odds / exp for the
// transformed outcomes, clamping to [0,1] for the direct one.
double predict_quantile(const CoefficientGrid& grid, double a, const DesignRow& row);

// `level, coef_<name>, ...` rows for inspection.
std::string coefficient_grid_csv(const CoefficientGrid& grid,
                                 const std::vector<std::string>& names);

// Per-respondent least-absolute-deviation fit of log-odds outcomes on the
// respondent's own scenarios. Respondents with too few scenarios or a rank
// deficient within-respondent design are flagged and skipped.
struct IndividualFit {
  std::string respondent_id;
  bool estimable = false;
  std::string note;  // skip reason when not estimable
  Eigen::VectorXd beta;
  double objective = 0.0;
};

std::vector<IndividualFit> fit_individual_lad(const Dataset& ds);

}  // namespace iqrtest
