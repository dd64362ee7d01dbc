#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "iqrtest/dataset.hpp"
#include "iqrtest/normalization.hpp"

namespace iqrtest {

// Distribution family of the resolvable-uncertainty shock, parameterized so
// that shock/scale has a fixed standardized law. For the logistic family the
// scale is the logistic scale parameter, which makes the normalized
// interquantile range equal the scale exactly at every level.
enum class Family { logistic, normal, uniform, shifted_exponential };

const char* to_string(Family f);
Family family_from_string(const std::string& name);

// Standardized quantile of the shock family.
double family_quantile(Family f, double tau);

// Pr(index + shock >= 0) for a standardized shock, index measured in units
// of the scale.
double family_prob(Family f, double index);

// Scalar distribution used for scales and slopes.
struct ScalarDist {
  enum class Kind { degenerate, uniform, two_point };
  Kind kind = Kind::degenerate;
  double a = 1.0;  // degenerate value / uniform lower / first point
  double b = 0.0;  // uniform upper / second point
  double p = 0.5;  // probability of the first point (two_point only)

  double draw(Rng& rng) const;
  double cdf(double x) const;
  double min_support() const;
  double max_support() const;

  static ScalarDist degenerate(double v) { return {Kind::degenerate, v, 0.0, 0.0}; }
  static ScalarDist uniform(double lo, double hi) {
    return {Kind::uniform, lo, hi, 0.0};
  }
  static ScalarDist two_point(double x1, double x2, double prob_first) {
    return {Kind::two_point, x1, x2, prob_first};
  }
};

enum class Rounding { none, nearest_005, nearest_010 };

// Synthetic stated-choice design. Respondent-level preferences (scale and
// slopes) are drawn once per respondent; scenario attributes are drawn
// independently of them, uniformly on the configured ranges.
struct DgpSpec {
  int n_respondents = 100;
  int scenarios_per_respondent = 5;
  Family family = Family::logistic;
  ScalarDist sigma = ScalarDist::degenerate(1.0);  // support must be positive
  std::vector<std::string> attribute_names;        // one per attribute
  std::vector<ScalarDist> slopes;                  // one per attribute
  std::pair<double, double> numeraire_range{-2.0, 2.0};
  std::vector<std::pair<double, double>> attribute_ranges;
  NumeraireTransform numeraire_transform = NumeraireTransform::level;
  Rounding rounding = Rounding::none;
  std::uint64_t seed = 1;
};

DgpSpec dgp_spec_from_json(const std::string& text, const std::string& origin);
DgpSpec load_dgp_spec(const std::string& path);
std::string dgp_spec_json(const DgpSpec& spec);

Dataset simulate(const DgpSpec& spec);

// Analytic population CDF of the normalized interquantile range implied by
// the generator, evaluated at y. Exact benchmark for the estimated curves.
double oracle_iqr_cdf(const DgpSpec& spec, double tau, double y, Normalization norm);

// sup_y |G_tau(y) - G_{1-tau}(y)| for tau < 0.5. Exactly zero for the
// symmetric families; positive for the shifted exponential.
double oracle_symmetry_gap(const DgpSpec& spec, double tau);

// Analytic curves and symmetry gaps for a tau set, as a JSON document.
std::string oracle_json(const DgpSpec& spec, const std::vector<double>& taus,
                        Normalization norm);

}  // namespace iqrtest
