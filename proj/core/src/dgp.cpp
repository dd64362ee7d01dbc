#include "iqrtest/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iqrtest/csv.hpp"
#include "iqrtest/errors.hpp"
#include "iqrtest/mathutil.hpp"

namespace iqrtest {

const char* to_string(Family f) {
  switch (f) {
    case Family::logistic: return "logistic";
    case Family::normal: return "normal";
    case Family::uniform: return "uniform";
    case Family::shifted_exponential: return "shifted_exponential";
  }
  return "?";
}

Family family_from_string(const std::string& name) {
  if (name == "logistic") return Family::logistic;
  if (name == "normal") return Family::normal;
  if (name == "uniform") return Family::uniform;
  if (name == "shifted_exponential" || name == "shifted-exponential") {
    return Family::shifted_exponential;
  }
  throw InputError("unknown family '" + name + "'");
}

double family_quantile(Family f, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InputError("family_quantile: tau must lie strictly in (0,1)");
  }
  switch (f) {
    case Family::logistic: return std::log(tau / (1.0 - tau));
    case Family::normal: return normal_quantile(tau);
    case Family::uniform: return 2.0 * tau - 1.0;
    case Family::shifted_exponential: return -std::log(1.0 - tau) - 1.0;
  }
  return 0.0;
}

double family_prob(Family f, double index) {
  switch (f) {
    case Family::logistic: return inv_logit(index);
    case Family::normal: return normal_cdf(index);
    case Family::uniform: return std::clamp((index + 1.0) / 2.0, 0.0, 1.0);
    case Family::shifted_exponential:
      return index >= 1.0 ? 1.0 : std::exp(index - 1.0);
  }
  return 0.0;
}

double ScalarDist::draw(Rng& rng) const {
  switch (kind) {
    case Kind::degenerate: return a;
    case Kind::uniform: return rng.uniform(a, b);
    case Kind::two_point: return rng.bernoulli(p) ? a : b;
  }
  return a;
}

double ScalarDist::cdf(double x) const {
  switch (kind) {
    case Kind::degenerate: return x >= a ? 1.0 : 0.0;
    case Kind::uniform:
      if (b <= a) return x >= a ? 1.0 : 0.0;
      return std::clamp((x - a) / (b - a), 0.0, 1.0);
    case Kind::two_point:
      return (x >= a ? p : 0.0) + (x >= b ? 1.0 - p : 0.0);
  }
  return 0.0;
}

double ScalarDist::min_support() const {
  return kind == Kind::two_point ? std::min(a, b) : a;
}

double ScalarDist::max_support() const {
  switch (kind) {
    case Kind::degenerate: return a;
    case Kind::uniform: return b;
    case Kind::two_point: return std::max(a, b);
  }
  return a;
}

namespace {

nlohmann::ordered_json dist_to_json(const ScalarDist& d) {
  nlohmann::ordered_json j;
  switch (d.kind) {
    case ScalarDist::Kind::degenerate:
      j["kind"] = "degenerate";
      j["value"] = d.a;
      break;
    case ScalarDist::Kind::uniform:
      j["kind"] = "uniform";
      j["lo"] = d.a;
      j["hi"] = d.b;
      break;
    case ScalarDist::Kind::two_point:
      j["kind"] = "two_point";
      j["first"] = d.a;
      j["second"] = d.b;
      j["p_first"] = d.p;
      break;
  }
  return j;
}

ScalarDist dist_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("kind")) {
    throw InputError(where + ": distribution needs a \"kind\"");
  }
  const auto kind = j["kind"].get<std::string>();
  if (kind == "degenerate") {
    return ScalarDist::degenerate(j.at("value").get<double>());
  }
  if (kind == "uniform") {
    const double lo = j.at("lo").get<double>();
    const double hi = j.at("hi").get<double>();
    if (!(hi > lo)) throw InputError(where + ": uniform needs lo < hi");
    return ScalarDist::uniform(lo, hi);
  }
  if (kind == "two_point") {
    const double p = j.at("p_first").get<double>();
    if (!(p >= 0.0 && p <= 1.0)) throw InputError(where + ": p_first outside [0,1]");
    return ScalarDist::two_point(j.at("first").get<double>(),
                                 j.at("second").get<double>(), p);
  }
  throw InputError(where + ": unknown distribution kind '" + kind + "'");
}

void validate_spec(const DgpSpec& spec) {
  if (spec.n_respondents < 1 || spec.scenarios_per_respondent < 1) {
    throw InputError("dgp spec: respondent and scenario counts must be positive");
  }
  if (spec.sigma.min_support() <= 0.0) {
    throw InputError("dgp spec: scale support must be strictly positive");
  }
  if (spec.attribute_names.size() != spec.slopes.size() ||
      spec.attribute_names.size() != spec.attribute_ranges.size()) {
    throw InputError("dgp spec: attributes, slopes, and ranges must align");
  }
  if (!(spec.numeraire_range.second > spec.numeraire_range.first)) {
    throw InputError("dgp spec: numeraire range must have positive width");
  }
  for (const auto& [lo, hi] : spec.attribute_ranges) {
    if (!(hi >= lo)) throw InputError("dgp spec: attribute range inverted");
  }
}

double apply_rounding(double p, Rounding r) {
  double step = 0.0;
  switch (r) {
    case Rounding::none: return p;
    case Rounding::nearest_005: step = 0.05; break;
    case Rounding::nearest_010: step = 0.10; break;
  }
  return std::clamp(std::round(p / step) * step, 0.0, 1.0);
}

}  // namespace

DgpSpec dgp_spec_from_json(const std::string& text, const std::string& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(origin + ": invalid JSON: " + e.what());
  }
  DgpSpec spec;
  try {
    spec.n_respondents = doc.at("n_respondents").get<int>();
    spec.scenarios_per_respondent = doc.at("scenarios_per_respondent").get<int>();
    spec.family = family_from_string(doc.at("family").get<std::string>());
    spec.sigma = dist_from_json(doc.at("sigma_dist"), origin + " sigma_dist");
    if (doc.contains("attributes")) {
      for (const auto& attr : doc["attributes"]) {
        spec.attribute_names.push_back(attr.at("name").get<std::string>());
        spec.slopes.push_back(
            dist_from_json(attr.at("slope"), origin + " attribute slope"));
        spec.attribute_ranges.emplace_back(attr.at("range").at(0).get<double>(),
                                           attr.at("range").at(1).get<double>());
      }
    }
    const auto& nr = doc.at("numeraire_range");
    spec.numeraire_range = {nr.at(0).get<double>(), nr.at(1).get<double>()};
    if (doc.contains("numeraire_transform")) {
      const auto t = doc["numeraire_transform"].get<std::string>();
      spec.numeraire_transform =
          t == "log" ? NumeraireTransform::log : NumeraireTransform::level;
    }
    if (doc.contains("rounding")) {
      const auto r = doc["rounding"].get<std::string>();
      if (r == "none") spec.rounding = Rounding::none;
      else if (r == "0.05") spec.rounding = Rounding::nearest_005;
      else if (r == "0.10") spec.rounding = Rounding::nearest_010;
      else throw InputError(origin + ": rounding must be none, 0.05, or 0.10");
    }
    if (doc.contains("seed")) spec.seed = doc["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(origin + ": " + e.what());
  }
  validate_spec(spec);
  return spec;
}

DgpSpec load_dgp_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open dgp spec '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return dgp_spec_from_json(buf.str(), path);
}

std::string dgp_spec_json(const DgpSpec& spec) {
  nlohmann::ordered_json j;
  j["n_respondents"] = spec.n_respondents;
  j["scenarios_per_respondent"] = spec.scenarios_per_respondent;
  j["family"] = to_string(spec.family);
  j["sigma_dist"] = dist_to_json(spec.sigma);
  auto attrs = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < spec.attribute_names.size(); ++a) {
    nlohmann::ordered_json attr;
    attr["name"] = spec.attribute_names[a];
    attr["slope"] = dist_to_json(spec.slopes[a]);
    attr["range"] = {spec.attribute_ranges[a].first, spec.attribute_ranges[a].second};
    attrs.push_back(attr);
  }
  j["attributes"] = attrs;
  j["numeraire_range"] = {spec.numeraire_range.first, spec.numeraire_range.second};
  j["numeraire_transform"] = to_string(spec.numeraire_transform);
  switch (spec.rounding) {
    case Rounding::none: j["rounding"] = "none"; break;
    case Rounding::nearest_005: j["rounding"] = "0.05"; break;
    case Rounding::nearest_010: j["rounding"] = "0.10"; break;
  }
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

Dataset simulate(const DgpSpec& spec) {
  validate_spec(spec);
  const Rng master(spec.seed);
  const double num_base = 100.0;

  std::vector<Observation> obs;
  obs.reserve(static_cast<std::size_t>(spec.n_respondents) *
              static_cast<std::size_t>(spec.scenarios_per_respondent));
  for (int i = 0; i < spec.n_respondents; ++i) {
    Rng rng = master.substream(rng_stream::kRespondent, static_cast<std::uint64_t>(i));
    const double sigma = spec.sigma.draw(rng);
    std::vector<double> slopes(spec.slopes.size());
    for (std::size_t a = 0; a < spec.slopes.size(); ++a) {
      slopes[a] = spec.slopes[a].draw(rng);
    }
    for (int t = 0; t < spec.scenarios_per_respondent; ++t) {
      const double d_num =
          rng.uniform(spec.numeraire_range.first, spec.numeraire_range.second);
      std::vector<double> d_attr(spec.attribute_ranges.size());
      double index = d_num;
      for (std::size_t a = 0; a < spec.attribute_ranges.size(); ++a) {
        d_attr[a] =
            rng.uniform(spec.attribute_ranges[a].first, spec.attribute_ranges[a].second);
        index += d_attr[a] * slopes[a];
      }
      Observation o;
      o.respondent_id = "r" + std::to_string(i + 1);
      o.scenario_id = "s" + std::to_string(t + 1);
      o.prob = apply_rounding(family_prob(spec.family, index / sigma), spec.rounding);
      o.numeraire0 = num_base;
      o.numeraire1 = spec.numeraire_transform == NumeraireTransform::log
                         ? num_base * std::exp(d_num)
                         : num_base + d_num;
      o.attrs0.assign(spec.attribute_ranges.size(), 0.0);
      o.attrs1 = d_attr;
      obs.push_back(std::move(o));
    }
  }
  Schema schema;
  schema.attributes = spec.attribute_names;
  schema.numeraire_transform = spec.numeraire_transform;
  schema.prob_scale = 1.0;
  return make_dataset(std::move(schema), std::move(obs));
}

namespace {

// Normalized interquantile distance of the family: |q(tau)-q(0.5)| divided
// by the configured normalization constant.
double normalized_width(const DgpSpec& spec, double tau, Normalization norm) {
  if (tau == 0.5) {
    throw InputError("oracle: tau = 0.5 is degenerate");
  }
  const double width =
      std::fabs(family_quantile(spec.family, tau) - family_quantile(spec.family, 0.5));
  return width / iqr_norm(norm, tau);
}

}  // namespace

double oracle_iqr_cdf(const DgpSpec& spec, double tau, double y, Normalization norm) {
  const double c = normalized_width(spec, tau, norm);
  if (c <= 0.0) {
    throw InputError("oracle: degenerate interquantile width");
  }
  return spec.sigma.cdf(y / c);
}

double oracle_symmetry_gap(const DgpSpec& spec, double tau) {
  if (!(tau > 0.0 && tau < 0.5)) {
    throw InputError("oracle_symmetry_gap: tau must lie in (0, 0.5)");
  }
  switch (spec.family) {
    case Family::logistic:
    case Family::normal:
    case Family::uniform:
      return 0.0;  // q(tau) and q(1-tau) are mirror images around the median
    case Family::shifted_exponential:
      break;
  }
  const double c1 = normalized_width(spec, tau, Normalization::logistic);
  const double c2 = normalized_width(spec, 1.0 - tau, Normalization::logistic);
  // Both curves are CDFs of sigma * c; scan knots and a dense grid.
  std::vector<double> candidates;
  const double top = spec.sigma.max_support() * std::max(c1, c2) * 1.05 + 1e-9;
  for (const double knot : {spec.sigma.min_support(), spec.sigma.max_support()}) {
    for (const double c : {c1, c2}) {
      candidates.push_back(knot * c - 1e-12);
      candidates.push_back(knot * c);
      candidates.push_back(knot * c + 1e-12);
    }
  }
  for (int k = 0; k <= 4000; ++k) {
    candidates.push_back(top * k / 4000.0);
  }
  double gap = 0.0;
  for (const double y : candidates) {
    gap = std::max(gap, std::fabs(spec.sigma.cdf(y / c1) - spec.sigma.cdf(y / c2)));
  }
  return gap;
}

std::string oracle_json(const DgpSpec& spec, const std::vector<double>& taus,
                        Normalization norm) {
  nlohmann::ordered_json j;
  j["tool"] = "iqrtest";
  j["version"] = "0.1.0";
  j["family"] = to_string(spec.family);
  j["normalization"] = to_string(norm);
  // The analytic curves depend on the distributional spec only, never on the
  // seed, so the echo leaves the seed out.
  auto spec_echo = nlohmann::ordered_json::parse(dgp_spec_json(spec));
  spec_echo.erase("seed");
  j["spec"] = spec_echo;
  auto curves = nlohmann::ordered_json::array();
  double y_top = 0.0;
  for (const double tau : taus) {
    y_top = std::max(y_top, spec.sigma.max_support() *
                                normalized_width(spec, tau, norm));
  }
  for (const double tau : taus) {
    nlohmann::ordered_json c;
    c["tau"] = tau;
    c["scale_multiplier"] = normalized_width(spec, tau, norm);
    auto knots = nlohmann::ordered_json::array();
    for (int k = 0; k <= 200; ++k) {
      const double y = 1.2 * y_top * k / 200.0;
      knots.push_back({y, oracle_iqr_cdf(spec, tau, y, norm)});
    }
    c["cdf"] = knots;
    curves.push_back(c);
  }
  j["curves"] = curves;
  auto gaps = nlohmann::ordered_json::array();
  for (const double tau : taus) {
    if (tau < 0.5) {
      nlohmann::ordered_json g;
      g["tau"] = tau;
      g["sup_gap"] = oracle_symmetry_gap(spec, tau);
      gaps.push_back(g);
    }
  }
  j["symmetry_gaps"] = gaps;
  return j.dump(2) + "\n";
}

}  // namespace iqrtest
