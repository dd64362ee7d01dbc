#include "iqrtest/iqr.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "iqrtest/csv.hpp"
#include "iqrtest/errors.hpp"
#include "iqrtest/mathutil.hpp"
#include "iqrtest/parallel.hpp"

namespace iqrtest {

double logistic_iqr(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InputError("normalization level must lie strictly in (0,1)");
  }
  if (tau == 0.5) {
    throw InputError("degenerate normalization at tau = 0.5");
  }
  return std::fabs(std::log(tau / (1.0 - tau)));
}

double normal_iqr(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InputError("normalization level must lie strictly in (0,1)");
  }
  if (tau == 0.5) {
    throw InputError("degenerate normalization at tau = 0.5");
  }
  return std::fabs(normal_quantile(tau));
}

const char* to_string(Normalization n) {
  switch (n) {
    case Normalization::logistic: return "logistic";
    case Normalization::normal: return "normal";
    case Normalization::none: return "none";
  }
  return "?";
}

Normalization normalization_from_string(const std::string& name) {
  if (name == "logistic") return Normalization::logistic;
  if (name == "normal") return Normalization::normal;
  if (name == "none") return Normalization::none;
  throw InputError("unknown normalization '" + name + "'");
}

double iqr_norm(Normalization n, double tau) {
  switch (n) {
    case Normalization::logistic: return logistic_iqr(tau);
    case Normalization::normal: return normal_iqr(tau);
    case Normalization::none: return 1.0;
  }
  return 1.0;
}

std::vector<double> GridSpec::a_levels() const {
  std::vector<double> levels(static_cast<std::size_t>(a_count));
  for (int k = 0; k < a_count; ++k) {
    levels[static_cast<std::size_t>(k)] =
        (static_cast<double>(k) + 0.5) / static_cast<double>(a_count);
  }
  return levels;
}

void GridSpec::validate() const {
  if (a_count < 1) throw InputError("grid: a_count must be positive");
  if (!(s_step > 0.0)) throw InputError("grid: s_step must be positive");
  if (s_count < 1) throw InputError("grid: s_count must be positive");
  for (std::size_t k = 1; k < y.size(); ++k) {
    if (!(y[k] > y[k - 1])) {
      throw InputError("grid: y points must be strictly increasing");
    }
  }
}

void validate_cdf_curve(const CdfCurve& curve) {
  if (curve.y.size() != curve.values.size()) {
    throw InputError("curve: y/value length mismatch");
  }
  for (std::size_t k = 0; k < curve.values.size(); ++k) {
    if (!(curve.values[k] >= 0.0 && curve.values[k] <= 1.0)) {
      throw InputError("curve: value outside [0,1]");
    }
    if (k > 0 && curve.values[k] < curve.values[k - 1]) {
      throw InputError("curve: values must be nondecreasing");
    }
  }
}

CounterfactualSpec CounterfactualSpec::explicit_list(std::vector<DesignRow> rows,
                                                     std::vector<double> weights) {
  if (rows.empty() || rows.size() != weights.size()) {
    throw InputError("counterfactual: rows and weights must align and be nonempty");
  }
  double total = 0.0;
  for (const double w : weights) {
    if (w < 0.0) throw InputError("counterfactual: negative weight");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw InputError("counterfactual: weights must sum to 1");
  }
  CounterfactualSpec cf;
  cf.mode = Mode::explicit_list;
  cf.rows = std::move(rows);
  cf.weights = std::move(weights);
  return cf;
}

namespace {

struct ResolvedScenarios {
  std::vector<DesignRow> storage;  // used in observed mode
  const std::vector<DesignRow>* rows = nullptr;
  std::vector<double> weights;
  bool uniform = false;  // equal weights: integer counting stays exact
};

ResolvedScenarios resolve_scenarios(const Dataset& ds, const CounterfactualSpec& cf) {
  ResolvedScenarios out;
  if (cf.mode == CounterfactualSpec::Mode::observed) {
    out.storage = build_design(ds);
    if (out.storage.empty()) {
      throw InputError("empty scenario set");
    }
    out.rows = &out.storage;
    out.weights.assign(out.storage.size(), 1.0 / static_cast<double>(out.storage.size()));
    out.uniform = true;
  } else {
    if (cf.rows.empty()) {
      throw InputError("empty scenario set");
    }
    out.rows = &cf.rows;
    out.weights = cf.weights;
  }
  return out;
}

// Probability band [p_lo, p_hi] mapped to the linear prediction scale of the
// fitted outcome transform. The maps are strictly increasing, so the band
// indicator on the probability scale and on the linear scale agree.
struct LinearBand {
  double lo;
  double hi;
};

LinearBand linear_band(OutcomeTransform t, double p_lo, double p_hi) {
  switch (t) {
    case OutcomeTransform::direct: return {p_lo, p_hi};
    case OutcomeTransform::log_odds: return {logit(p_lo), logit(p_hi)};
    case OutcomeTransform::log: return {std::log(p_lo), std::log(p_hi)};
  }
  return {p_lo, p_hi};
}

double linear_point(OutcomeTransform t, double p) {
  switch (t) {
    case OutcomeTransform::direct: return p;
    case OutcomeTransform::log_odds: return logit(p);
    case OutcomeTransform::log: return std::log(p);
  }
  return p;
}

// Measure of {s in [s_lo, s_hi]: lo <= xi0 - s * slope <= hi}. The predicted
// quantile is linear in the shift, so the band preimage is an interval and
// its length is exact; summing band indicators over the s grid converges to
// this value as the step shrinks, but the grid sum itself carries a position
// jitter of order one step per band, and that jitter differs across bands in
// a way that acts as bias in the moment differences. The closed form is the
// limit the grid sum approximates and keeps mathematically equal bands
// exactly equal.
double band_length(double xi0, double slope, double lo, double hi,
                   const GridSpec& gs) {
  if (slope == 0.0) {
    return (xi0 >= lo && xi0 <= hi) ? gs.s_hi() - gs.s_lo : 0.0;
  }
  double s_first = (xi0 - hi) / slope;
  double s_last = (xi0 - lo) / slope;
  if (s_first > s_last) std::swap(s_first, s_last);
  return std::max(0.0, std::min(s_last, gs.s_hi()) - std::max(s_first, gs.s_lo));
}

struct BandLevels {
  double tau_lo;
  double tau_hi;
};

// tau > 0.5 measures between the median and the upper tail, tau < 0.5
// between the lower tail and the median.
BandLevels band_levels(double tau) {
  if (!(tau > 0.0 && tau < 1.0) || tau == 0.5) {
    throw InputError("tau must lie strictly in (0,1) and differ from 0.5");
  }
  return tau > 0.5 ? BandLevels{0.5, tau} : BandLevels{tau, 0.5};
}

}  // namespace

double band_measure(const CoefficientGrid& grid, const DesignRow& row, double a,
                    double tau_lo, double tau_hi, const GridSpec& gs) {
  if (!(tau_lo > 0.0 && tau_lo < tau_hi && tau_hi < 1.0)) {
    throw InputError("band_measure: need 0 < tau_lo < tau_hi < 1");
  }
  const Eigen::VectorXd beta = interpolate_coefs(grid, a);
  const Eigen::Map<const Eigen::VectorXd> reg(
      row.regressors.data(), static_cast<Eigen::Index>(row.regressors.size()));
  const double xi0 = reg.dot(beta);
  const double slope = beta[static_cast<Eigen::Index>(row.numeraire_coord)];
  const LinearBand band = linear_band(grid.transform, 1.0 - tau_hi, 1.0 - tau_lo);
  return band_length(xi0, slope, band.lo, band.hi, gs);
}

namespace {

// All band measures for one tau band: values[row * a_count + k].
std::vector<double> all_band_measures(const std::vector<DesignRow>& rows,
                                      const CoefficientGrid& grid, double tau,
                                      const GridSpec& gs) {
  const BandLevels bl = band_levels(tau);
  const LinearBand band = linear_band(grid.transform, 1.0 - bl.tau_hi, 1.0 - bl.tau_lo);
  const std::vector<double> a_levels = gs.a_levels();
  std::vector<double> values(rows.size() * a_levels.size());
  for (std::size_t k = 0; k < a_levels.size(); ++k) {
    const Eigen::VectorXd beta = interpolate_coefs(grid, a_levels[k]);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& reg = rows[r].regressors;
      const Eigen::Map<const Eigen::VectorXd> x(
          reg.data(), static_cast<Eigen::Index>(reg.size()));
      const double xi0 = x.dot(beta);
      const double slope = beta[static_cast<Eigen::Index>(rows[r].numeraire_coord)];
      values[r * a_levels.size() + k] = band_length(xi0, slope, band.lo, band.hi, gs);
    }
  }
  return values;
}

}  // namespace

CdfCurve estimate_iqr_distribution(const Dataset& ds, const CoefficientGrid& grid,
                                   double tau, const CounterfactualSpec& cf,
                                   const GridSpec& gs, Normalization norm) {
  gs.validate();
  const ResolvedScenarios sc = resolve_scenarios(ds, cf);
  const double norm_factor = iqr_norm(norm, tau);
  std::vector<double> measures = all_band_measures(*sc.rows, grid, tau, gs);

  CdfCurve curve;
  curve.tau = tau;
  curve.normalization = norm;
  curve.y = gs.y;
  curve.values.reserve(gs.y.size());

  if (sc.uniform) {
    // Equal scenario weights: the curve value is an exact count ratio.
    std::sort(measures.begin(), measures.end());
    const double denom = static_cast<double>(measures.size());
    std::size_t pos = 0;
    for (const double y : gs.y) {
      const double threshold = y * norm_factor;
      while (pos < measures.size() && measures[pos] <= threshold) ++pos;
      curve.values.push_back(static_cast<double>(pos) / denom);
    }
    return curve;
  }

  // Sort weighted measures once; each curve value is a prefix weight sum.
  std::vector<std::pair<double, double>> weighted(measures.size());
  const double da = gs.a_weight();
  for (std::size_t r = 0; r < sc.rows->size(); ++r) {
    for (int k = 0; k < gs.a_count; ++k) {
      const std::size_t i = r * static_cast<std::size_t>(gs.a_count) +
                            static_cast<std::size_t>(k);
      weighted[i] = {measures[i], sc.weights[r] * da};
    }
  }
  std::sort(weighted.begin(), weighted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::size_t pos = 0;
  double cum = 0.0;
  for (const double y : gs.y) {
    const double threshold = y * norm_factor;
    while (pos < weighted.size() && weighted[pos].first <= threshold) {
      cum += weighted[pos].second;
      ++pos;
    }
    curve.values.push_back(std::clamp(cum, 0.0, 1.0));
  }
  return curve;
}

double quantile_distribution_at(const Dataset& ds, const CoefficientGrid& grid,
                                double tau, double s, const CounterfactualSpec& cf,
                                const GridSpec& gs) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InputError("quantile_distribution_at: tau must lie strictly in (0,1)");
  }
  gs.validate();
  const ResolvedScenarios sc = resolve_scenarios(ds, cf);
  const double threshold = linear_point(grid.transform, 1.0 - tau);
  const std::vector<double> a_levels = gs.a_levels();
  std::vector<long> counts(sc.rows->size(), 0);
  for (std::size_t k = 0; k < a_levels.size(); ++k) {
    const Eigen::VectorXd beta = interpolate_coefs(grid, a_levels[k]);
    for (std::size_t r = 0; r < sc.rows->size(); ++r) {
      const auto& reg = (*sc.rows)[r].regressors;
      const Eigen::Map<const Eigen::VectorXd> x(
          reg.data(), static_cast<Eigen::Index>(reg.size()));
      const double xi =
          x.dot(beta) -
          s * beta[static_cast<Eigen::Index>((*sc.rows)[r].numeraire_coord)];
      if (xi <= threshold) ++counts[r];
    }
  }
  if (sc.uniform) {
    long total = 0;
    for (const long c : counts) total += c;
    return static_cast<double>(total) /
           (static_cast<double>(sc.rows->size()) * static_cast<double>(gs.a_count));
  }
  double total = 0.0;
  for (std::size_t r = 0; r < counts.size(); ++r) {
    total += sc.weights[r] * static_cast<double>(counts[r]);
  }
  return std::clamp(total / static_cast<double>(gs.a_count), 0.0, 1.0);
}

std::vector<double> quantile_distribution_curve(const Dataset& ds,
                                                const CoefficientGrid& grid,
                                                double tau,
                                                const CounterfactualSpec& cf,
                                                const GridSpec& gs) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(gs.s_count));
  for (int j = 0; j < gs.s_count; ++j) {
    values.push_back(quantile_distribution_at(
        ds, grid, tau, gs.s_lo + gs.s_step * static_cast<double>(j), cf, gs));
  }
  // Quantile crossing can make the raw values wiggle; sorting (monotone
  // rearrangement) restores a valid distribution function.
  std::sort(values.begin(), values.end());
  return values;
}

CoefficientGrid fit_stage(const Dataset& ds, const PipelineOptions& opts) {
  const std::vector<DesignRow> design = build_design(ds);
  const std::vector<double> outcomes = make_outcomes(ds, opts.outcome);
  const std::vector<std::string> names = regressor_names(ds.schema);
  return fit_qr_grid(design, outcomes, opts.qr_levels, opts.outcome, &names);
}

GridBuildResult make_grid_spec(const Dataset& ds, const CoefficientGrid& grid,
                               const std::vector<double>& taus, Normalization norm,
                               int a_count,
                               const std::optional<std::array<double, 3>>& s_override,
                               const std::optional<std::vector<double>>& y_override) {
  GridBuildResult out;
  out.grid.a_count = a_count;

  const std::vector<DesignRow> design = build_design(ds);
  const std::vector<double> a_levels = out.grid.a_levels();

  // Band-crossing endpoints on the observed data, for every tau band.
  std::vector<double> endpoints;
  endpoints.reserve(design.size() * a_levels.size() * taus.size());
  bool zero_slope_seen = false;
  for (const double a : a_levels) {
    const Eigen::VectorXd beta = interpolate_coefs(grid, a);
    for (const auto& row : design) {
      const Eigen::Map<const Eigen::VectorXd> x(
          row.regressors.data(), static_cast<Eigen::Index>(row.regressors.size()));
      const double xi0 = x.dot(beta);
      const double slope = beta[static_cast<Eigen::Index>(row.numeraire_coord)];
      if (slope == 0.0) {
        zero_slope_seen = true;
        continue;
      }
      for (const double tau : taus) {
        const BandLevels bl = band_levels(tau);
        const LinearBand band =
            linear_band(grid.transform, 1.0 - bl.tau_hi, 1.0 - bl.tau_lo);
        endpoints.push_back(std::fabs((xi0 - band.lo) / slope));
        endpoints.push_back(std::fabs((xi0 - band.hi) / slope));
      }
    }
  }

  if (s_override) {
    const auto& [lo, hi, step] = *s_override;
    if (!(hi > lo) || !(step > 0.0)) {
      throw InputError("s grid override needs lo < hi and step > 0");
    }
    out.grid.s_lo = lo;
    out.grid.s_step = step;
    out.grid.s_count = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::size_t truncated = 0;
    for (const double e : endpoints) {
      if (e > out.grid.s_hi() || -e < out.grid.s_lo) ++truncated;
    }
    if (truncated > 0) {
      out.warnings.push_back(
          "s grid truncates " + std::to_string(truncated) +
          " predicted band crossings; measures near the grid edge are cut off");
    }
  } else {
    double s_max = 10.0;
    if (endpoints.empty()) {
      out.warnings.push_back(
          "numeraire slope is zero at every quantile level; band measures are "
          "degenerate and the default s grid [-10, 10] is used");
    } else {
      std::sort(endpoints.begin(), endpoints.end());
      const double bulk = quantile_sorted(endpoints, 0.995);
      s_max = 1.25 * bulk;
      if (s_max <= 0.0) s_max = 1.0;
      // Round up to two significant digits for a stable config echo.
      const double mag = std::pow(10.0, std::floor(std::log10(s_max)) - 1.0);
      s_max = std::ceil(s_max / mag) * mag;
      if (endpoints.back() > s_max) {
        std::size_t beyond = endpoints.size() -
                             static_cast<std::size_t>(std::lower_bound(endpoints.begin(),
                                                                       endpoints.end(),
                                                                       s_max) -
                                                      endpoints.begin());
        out.warnings.push_back(
            "auto-sized s grid clips " + std::to_string(beyond) +
            " of " + std::to_string(endpoints.size()) +
            " extreme band-crossing endpoints");
      }
    }
    out.grid.s_lo = -s_max;
    out.grid.s_count = 2001;
    out.grid.s_step = 2.0 * s_max / 2000.0;
  }
  if (zero_slope_seen) {
    out.warnings.push_back(
        "numeraire slope is zero at some quantile levels; affected band "
        "measures are all-or-nothing");
  }

  if (y_override) {
    out.grid.y = *y_override;
  } else {
    // Pooled normalized band measures from the original sample; freezing the
    // resulting quantile grid keeps the moment vector's meaning fixed across
    // bootstrap replicates.
    std::vector<double> pooled;
    for (const double tau : taus) {
      const double norm_factor = iqr_norm(norm, tau);
      std::vector<double> m = all_band_measures(design, grid, tau, out.grid);
      for (double& v : m) v /= norm_factor;
      pooled.insert(pooled.end(), m.begin(), m.end());
    }
    std::sort(pooled.begin(), pooled.end());
    // The pooled values form atoms (one per quantile-level grid point), each
    // smeared by rounding noise. An evaluation point placed on an atom
    // compares curves at a tie, where the last bits decide which side each
    // level lands on; so collapse ulp-close values into atoms and put every
    // evaluation point in the middle of a real gap.
    const auto tol = [](double x) { return 1e-9 * std::max(std::abs(x), 1.0); };
    std::vector<double> atoms;  // running max of each cluster
    for (const double v : pooled) {
      if (atoms.empty() || v > atoms.back() + tol(atoms.back())) {
        atoms.push_back(v);
      } else {
        atoms.back() = v;
      }
    }
    const auto tie_safe = [&](double q) {
      auto next = std::upper_bound(atoms.begin(), atoms.end(), q + tol(q));
      if (next == atoms.end()) {
        return atoms.back() + 10.0 * tol(atoms.back());
      }
      const double below = next == atoms.begin() ? q : *(next - 1);
      return 0.5 * (below + *next);
    };
    std::vector<double> y;
    for (int k = 1; k <= 19; ++k) {
      y.push_back(tie_safe(quantile_sorted(pooled, 0.05 * k)));
    }
    y.erase(std::unique(y.begin(), y.end()), y.end());
    if (y.size() < 19) {
      out.warnings.push_back(
          "pooled band measures are heavily tied; y grid reduced to " +
          std::to_string(y.size()) + " distinct points");
    }
    out.grid.y = std::move(y);
  }
  out.grid.validate();
  return out;
}

BandPair bootstrap_confidence_bands(const Dataset& ds, int b_replicates, double tau,
                                    const CounterfactualSpec& cf, const GridSpec& gs,
                                    Normalization norm, double level, const Rng& rng,
                                    const PipelineOptions& opts) {
  if (b_replicates < 2) {
    throw InputError("bootstrap_confidence_bands: need at least 2 replicates");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw InputError("bootstrap_confidence_bands: level must lie in (0,1)");
  }
  const std::size_t b = static_cast<std::size_t>(b_replicates);
  std::vector<std::vector<double>> rep_values(b);
  std::vector<char> failed(b, 0);
  parallel_for(b, opts.threads, [&](std::size_t i) {
    try {
      Rng r = rng.substream(rng_stream::kBands, i);
      const Dataset resampled = block_resample(ds, r);
      const CoefficientGrid grid_b = fit_stage(resampled, opts);
      rep_values[i] =
          estimate_iqr_distribution(resampled, grid_b, tau, cf, gs, norm).values;
    } catch (const std::exception&) {
      failed[i] = 1;
    }
  });
  const auto failures =
      static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  if (failures * 10 > b) {
    throw InputError("bootstrap_confidence_bands: more than 10% of replicates failed (" +
                     std::to_string(failures) + "/" + std::to_string(b) + ")");
  }

  BandPair bands;
  bands.lower.tau = bands.upper.tau = tau;
  bands.lower.normalization = bands.upper.normalization = norm;
  bands.lower.y = bands.upper.y = gs.y;
  const double alpha = 1.0 - level;
  std::vector<double> column;
  for (std::size_t j = 0; j < gs.y.size(); ++j) {
    column.clear();
    for (std::size_t i = 0; i < b; ++i) {
      if (!failed[i]) column.push_back(rep_values[i][j]);
    }
    std::sort(column.begin(), column.end());
    bands.lower.values.push_back(quantile_sorted(column, alpha / 2.0));
    bands.upper.values.push_back(quantile_sorted(column, 1.0 - alpha / 2.0));
  }
  // Tightest monotone envelope: running max from the left below, running min
  // from the right above.
  for (std::size_t j = 1; j < bands.lower.values.size(); ++j) {
    bands.lower.values[j] = std::max(bands.lower.values[j], bands.lower.values[j - 1]);
  }
  for (std::size_t j = bands.upper.values.size(); j-- > 1;) {
    bands.upper.values[j - 1] = std::min(bands.upper.values[j - 1], bands.upper.values[j]);
  }
  return bands;
}

std::string curves_csv(const std::vector<CdfCurve>& curves,
                       const std::vector<BandPair>* bands) {
  if (bands && bands->size() != curves.size()) {
    throw InputError("curves_csv: band list does not match curve list");
  }
  std::ostringstream out;
  out << "tau,y,value,lower,upper\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& curve = curves[c];
    for (std::size_t j = 0; j < curve.y.size(); ++j) {
      out << format_double(curve.tau) << ',' << format_double(curve.y[j]) << ','
          << format_double(curve.values[j]) << ',';
      if (bands) {
        out << format_double((*bands)[c].lower.values[j]) << ','
            << format_double((*bands)[c].upper.values[j]);
      } else {
        out << ',';
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace iqrtest
