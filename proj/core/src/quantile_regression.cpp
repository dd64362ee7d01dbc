#include "iqrtest/quantile_regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "iqrtest/csv.hpp"
#include "iqrtest/errors.hpp"
#include "iqrtest/mathutil.hpp"

namespace iqrtest {

const char* to_string(OutcomeTransform t) {
  switch (t) {
    case OutcomeTransform::direct: return "direct";
    case OutcomeTransform::log_odds: return "log-odds";
    case OutcomeTransform::log: return "log";
  }
  return "?";
}

OutcomeTransform outcome_transform_from_string(const std::string& name) {
  if (name == "direct") return OutcomeTransform::direct;
  if (name == "log-odds" || name == "logodds") return OutcomeTransform::log_odds;
  if (name == "log") return OutcomeTransform::log;
  throw InputError("unknown outcome transform '" + name +
                   "' (expected direct, log-odds, or log)");
}

std::vector<double> make_outcomes(const Dataset& ds, OutcomeTransform transform) {
  std::vector<double> out;
  out.reserve(ds.n_rows());
  for (const auto& o : ds.observations) {
    switch (transform) {
      case OutcomeTransform::direct:
        out.push_back(o.prob);
        break;
      case OutcomeTransform::log_odds:
        out.push_back(logit(std::clamp(o.prob, kWinsorLow, kWinsorHigh)));
        break;
      case OutcomeTransform::log:
        out.push_back(std::log(std::clamp(o.prob, kWinsorLow, 1.0)));
        break;
    }
  }
  return out;
}

double check_loss(const Eigen::VectorXd& residuals, double tau) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    const double u = residuals[i];
    total += u * (tau - (u < 0.0 ? 1.0 : 0.0));
  }
  return total;
}

namespace {

std::string default_name(std::size_t j) { return "column " + std::to_string(j); }

void check_full_rank(const Eigen::MatrixXd& x,
                     const std::vector<std::string>* names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  const auto rank = qr.rank();
  if (rank >= x.cols()) return;
  const auto perm = qr.colsPermutation().indices();
  std::ostringstream msg;
  msg << "design is rank deficient; collinear columns:";
  for (Eigen::Index k = rank; k < x.cols(); ++k) {
    const auto j = static_cast<std::size_t>(perm[k]);
    msg << ' '
        << (names && j < names->size() ? (*names)[j] : default_name(j));
  }
  throw InputError(msg.str());
}

// Greedy selection of p linearly independent rows (Gram-Schmidt over rows in
// file order). The design is known to have full column rank at this point.
std::vector<Eigen::Index> initial_basis(const Eigen::MatrixXd& x) {
  const Eigen::Index p = x.cols();
  std::vector<Eigen::Index> basis;
  std::vector<Eigen::VectorXd> ortho;
  for (Eigen::Index i = 0; i < x.rows() && std::ssize(basis) < p; ++i) {
    Eigen::VectorXd v = x.row(i).transpose();
    for (const auto& u : ortho) {
      v -= u.dot(v) * u;
    }
    const double norm = v.norm();
    if (norm > 1e-10 * (x.row(i).norm() + 1.0)) {
      ortho.push_back(v / norm);
      basis.push_back(i);
    }
  }
  return basis;
}

struct SolveState {
  Eigen::VectorXd beta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Exact simplex descent over interpolation vertices. At each vertex the
// solution interpolates the p basis rows; edges relax one basis row at a
// time, and the weighted-median line search walks through all residual sign
// changes along the edge in a single step.
SolveState solve_vertex(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        double tau, std::vector<Eigen::Index>& basis) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const double y_scale = y.cwiseAbs().mean() + 1.0;
  const double zero_tol = 1e-11 * y_scale;
  const int max_iter = static_cast<int>(100 * n + 1000);

  SolveState st;
  Eigen::MatrixXd xb(p, p);
  Eigen::VectorXd yb(p);
  double prev_objective = std::numeric_limits<double>::infinity();

  for (st.iterations = 0; st.iterations < max_iter; ++st.iterations) {
    for (Eigen::Index k = 0; k < p; ++k) {
      xb.row(k) = x.row(basis[static_cast<std::size_t>(k)]);
      yb[k] = y[basis[static_cast<std::size_t>(k)]];
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(xb);
    st.beta = lu.solve(yb);
    const Eigen::VectorXd resid = y - x * st.beta;
    st.objective = check_loss(resid, tau);
    if (st.objective > prev_objective + 1e-12 * (1.0 + prev_objective)) {
      // No exact descent possible any more: numerical noise floor reached.
      st.converged = true;
      return st;
    }
    prev_objective = std::min(prev_objective, st.objective);

    // Edge directions d_j = Xb^{-1} e_j; G(i,j) = x_i' d_j.
    const Eigen::MatrixXd binv = lu.solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd gain = x * binv;

    double best_slope = 0.0;
    Eigen::Index best_j = -1;
    double best_sign = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      double slope_pos = 0.0, slope_neg = 0.0;
      double mass = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double g = gain(i, j);
        mass += std::fabs(g);
        const double r = resid[i];
        if (r > zero_tol) {
          slope_pos += -tau * g;
          slope_neg += tau * g;
        } else if (r < -zero_tol) {
          slope_pos += (1.0 - tau) * g;
          slope_neg += -(1.0 - tau) * g;
        } else {
          slope_pos += std::max(-tau * g, (1.0 - tau) * g);
          slope_neg += std::max(tau * g, -(1.0 - tau) * g);
        }
      }
      const double tol = 1e-12 * (mass + 1.0);
      if (slope_pos < best_slope - tol && slope_pos < -tol) {
        best_slope = slope_pos;
        best_j = j;
        best_sign = 1.0;
      }
      if (slope_neg < best_slope - tol && slope_neg < -tol) {
        best_slope = slope_neg;
        best_j = j;
        best_sign = -1.0;
      }
    }
    if (best_j < 0) {
      st.converged = true;
      return st;
    }

    // Weighted-median line search along beta + t * sign * d_j, t > 0.
    std::vector<std::pair<double, Eigen::Index>> breaks;
    breaks.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double g = best_sign * gain(i, best_j);
      const double r = resid[i];
      if (std::fabs(r) <= zero_tol) continue;  // kink at t = 0, already in slope
      if (std::fabs(g) < 1e-14) continue;
      const double t = r / g;
      if (t > 0.0) breaks.emplace_back(t, i);
    }
    std::sort(breaks.begin(), breaks.end());
    double slope = best_slope;
    Eigen::Index entering = -1;
    for (const auto& [t, i] : breaks) {
      slope += std::fabs(best_sign * gain(i, best_j));
      if (slope >= 0.0) {
        entering = i;
        break;
      }
    }
    if (entering < 0) {
      // Objective unbounded along the edge; cannot happen for tau in (0,1)
      // with a full-rank design unless the numbers have degenerated.
      st.converged = false;
      return st;
    }
    basis[static_cast<std::size_t>(best_j)] = entering;
  }
  st.converged = false;
  return st;
}

Eigen::MatrixXd to_matrix(const std::vector<DesignRow>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(rows.front().regressors.size());
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& reg = rows[static_cast<std::size_t>(i)].regressors;
    if (std::ssize(reg) != p) {
      throw InputError("design rows have inconsistent lengths");
    }
    for (Eigen::Index j = 0; j < p; ++j) {
      x(i, j) = reg[static_cast<std::size_t>(j)];
    }
  }
  return x;
}

QrFit fit_qr_matrix(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double tau,
                    const std::vector<std::string>* names,
                    std::vector<Eigen::Index>* warm_basis) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InputError("quantile level must lie strictly in (0,1)");
  }
  if (x.rows() == 0) {
    throw InputError("empty design");
  }

  // All outcomes equal: intercept picks up the common value, slopes zero.
  if ((y.array() == y[0]).all()) {
    QrFit fit;
    fit.beta = Eigen::VectorXd::Zero(x.cols());
    fit.beta[0] = y[0];
    const Eigen::VectorXd resid = y - x * fit.beta;
    fit.objective = check_loss(resid, tau);
    fit.converged = true;
    return fit;
  }

  check_full_rank(x, names);

  std::vector<Eigen::Index> basis;
  if (warm_basis && std::ssize(*warm_basis) == x.cols()) {
    basis = *warm_basis;
  } else {
    basis = initial_basis(x);
  }
  if (std::ssize(basis) != x.cols()) {
    throw InputError("could not select an independent starting basis");
  }
  SolveState st = solve_vertex(x, y, tau, basis);
  if (warm_basis) *warm_basis = basis;

  QrFit fit;
  fit.beta = std::move(st.beta);
  fit.objective = st.objective;
  fit.iterations = st.iterations;
  fit.converged = st.converged;
  return fit;
}

}  // namespace

QrFit fit_qr(const std::vector<DesignRow>& rows, const std::vector<double>& outcomes,
             double tau, const std::vector<std::string>* names) {
  if (rows.empty()) {
    throw InputError("fit_qr: no rows");
  }
  if (rows.size() != outcomes.size()) {
    throw InputError("fit_qr: outcome count does not match row count");
  }
  const Eigen::MatrixXd x = to_matrix(rows);
  const Eigen::VectorXd y =
      Eigen::Map<const Eigen::VectorXd>(outcomes.data(),
                                        static_cast<Eigen::Index>(outcomes.size()));
  return fit_qr_matrix(x, y, tau, names, nullptr);
}

std::vector<double> default_qr_levels() {
  std::vector<double> levels{0.01};
  for (int k = 0; k < 10; ++k) {
    levels.push_back(0.05 + 0.10 * k);
  }
  levels.push_back(0.99);
  return levels;
}

CoefficientGrid fit_qr_grid(const std::vector<DesignRow>& rows,
                            const std::vector<double>& outcomes,
                            const std::vector<double>& levels,
                            OutcomeTransform transform,
                            const std::vector<std::string>* names) {
  if (levels.empty()) {
    throw InputError("fit_qr_grid: no quantile levels");
  }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (!(levels[k] > 0.0 && levels[k] < 1.0)) {
      throw InputError("fit_qr_grid: levels must lie strictly in (0,1)");
    }
    if (k > 0 && !(levels[k] > levels[k - 1])) {
      throw InputError("fit_qr_grid: levels must be strictly increasing");
    }
  }
  if (rows.empty()) {
    throw InputError("fit_qr_grid: no rows");
  }
  if (rows.size() != outcomes.size()) {
    throw InputError("fit_qr_grid: outcome count does not match row count");
  }

  const Eigen::MatrixXd x = to_matrix(rows);
  const Eigen::VectorXd y =
      Eigen::Map<const Eigen::VectorXd>(outcomes.data(),
                                        static_cast<Eigen::Index>(outcomes.size()));

  CoefficientGrid grid;
  grid.levels = levels;
  grid.transform = transform;
  grid.coefs.resize(static_cast<Eigen::Index>(levels.size()), x.cols());
  // Adjacent levels have nearby solutions; reusing the previous basis makes
  // the sweep nearly free after the first fit.
  std::vector<Eigen::Index> basis;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    try {
      const QrFit fit = fit_qr_matrix(x, y, levels[k], names, &basis);
      grid.coefs.row(static_cast<Eigen::Index>(k)) = fit.beta.transpose();
    } catch (const InputError& e) {
      throw InputError("level " + format_double(levels[k]) + ": " + e.what());
    }
  }
  return grid;
}

Eigen::VectorXd interpolate_coefs(const CoefficientGrid& grid, double a) {
  if (!(a > 0.0 && a < 1.0)) {
    throw InputError("interpolate_coefs: level must lie strictly in (0,1)");
  }
  const auto& lv = grid.levels;
  if (a <= lv.front()) return grid.coefs.row(0).transpose();
  if (a >= lv.back()) {
    return grid.coefs.row(grid.coefs.rows() - 1).transpose();
  }
  const auto hi = std::upper_bound(lv.begin(), lv.end(), a);
  const auto k = static_cast<Eigen::Index>(hi - lv.begin());
  const double a0 = lv[static_cast<std::size_t>(k - 1)];
  const double a1 = lv[static_cast<std::size_t>(k)];
  const double w = (a - a0) / (a1 - a0);
  return ((1.0 - w) * grid.coefs.row(k - 1) + w * grid.coefs.row(k)).transpose();
}

double predict_quantile(const CoefficientGrid& grid, double a, const DesignRow& row) {
  const Eigen::VectorXd beta = interpolate_coefs(grid, a);
  const Eigen::Map<const Eigen::VectorXd> reg(
      row.regressors.data(), static_cast<Eigen::Index>(row.regressors.size()));
  const double linear = reg.dot(beta);
  switch (grid.transform) {
    case OutcomeTransform::direct: return std::clamp(linear, 0.0, 1.0);
    case OutcomeTransform::log_odds: return inv_logit(linear);
    case OutcomeTransform::log: return std::min(std::exp(linear), 1.0);
  }
  return linear;
}

std::string coefficient_grid_csv(const CoefficientGrid& grid,
                                 const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "level";
  for (Eigen::Index j = 0; j < grid.coefs.cols(); ++j) {
    const auto sj = static_cast<std::size_t>(j);
    out << ",coef_" << (sj < names.size() ? names[sj] : default_name(sj));
  }
  out << "\n";
  for (std::size_t k = 0; k < grid.levels.size(); ++k) {
    out << format_double(grid.levels[k]);
    for (Eigen::Index j = 0; j < grid.coefs.cols(); ++j) {
      out << ',' << format_double(grid.coefs(static_cast<Eigen::Index>(k), j));
    }
    out << "\n";
  }
  return out.str();
}

std::vector<IndividualFit> fit_individual_lad(const Dataset& ds) {
  const std::vector<DesignRow> design = build_design(ds);
  const std::vector<double> outcomes = make_outcomes(ds, OutcomeTransform::log_odds);
  const std::vector<std::string> names = regressor_names(ds.schema);
  const std::size_t p = 2 + ds.schema.attributes.size();

  std::vector<IndividualFit> fits;
  fits.reserve(ds.n_respondents());
  std::size_t estimable = 0;
  for (const auto& group : ds.respondents) {
    IndividualFit f;
    f.respondent_id = group.id;
    if (group.rows.size() < p) {
      f.note = "insufficient scenarios (" + std::to_string(group.rows.size()) +
               " < " + std::to_string(p) + ")";
      fits.push_back(std::move(f));
      continue;
    }
    std::vector<DesignRow> rows;
    std::vector<double> y;
    for (const std::size_t r : group.rows) {
      rows.push_back(design[r]);
      y.push_back(outcomes[r]);
    }
    try {
      QrFit fit = fit_qr(rows, y, 0.5, &names);
      f.estimable = true;
      f.beta = std::move(fit.beta);
      f.objective = fit.objective;
      ++estimable;
    } catch (const InputError& e) {
      f.note = e.what();
    }
    fits.push_back(std::move(f));
  }
  if (estimable == 0) {
    throw InputError("fit_individual_lad: no respondent is estimable");
  }
  return fits;
}

}  // namespace iqrtest
