#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "iqrtest/csv.hpp"
#include "iqrtest/dataset.hpp"
#include "iqrtest/dgp.hpp"
#include "iqrtest/errors.hpp"
#include "iqrtest/iqr.hpp"
#include "iqrtest/moment_test.hpp"
#include "iqrtest/parallel.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using iqrtest::InputError;

struct CommonArgs {
  std::string data_path;
  std::string schema_path;
  double prob_scale = 0.0;  // 0 = take from schema
  std::vector<double> taus{0.1, 0.25, 0.75, 0.9};
  std::string outcome = "log-odds";
  bool direct = false;
  std::string normalization = "logistic";
  int a_count = 100;
  std::vector<double> s_grid;  // lo, hi, step
  std::vector<double> y_grid;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_dir = ".";
};

void add_common_flags(CLI::App* cmd, CommonArgs& args, bool needs_data) {
  auto* data = cmd->add_option("--data", args.data_path, "Input CSV file");
  auto* schema = cmd->add_option("--schema", args.schema_path, "Schema JSON file");
  if (needs_data) {
    data->required();
    schema->required();
  }
  cmd->add_option("--prob-scale", args.prob_scale,
                  "Probability scale of the raw data (1 or 100); overrides the schema");
  cmd->add_option("--taus", args.taus, "Comma-separated quantile levels")
      ->delimiter(',');
  cmd->add_option("--outcome", args.outcome,
                  "Outcome transform: direct, log-odds, or log");
  cmd->add_flag("--direct", args.direct, "Shorthand for --outcome direct");
  cmd->add_option("--normalization", args.normalization,
                  "Interquantile normalization: logistic or normal");
  cmd->add_option("--agrid", args.a_count, "Number of quantile-level grid points");
  cmd->add_option("--sgrid", args.s_grid, "Shift grid as lo,hi,step")->delimiter(',');
  cmd->add_option("--ygrid", args.y_grid, "Explicit y evaluation points")
      ->delimiter(',');
  cmd->add_option("--seed", args.seed, "Master seed");
  cmd->add_option("--threads", args.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--out", args.out_dir, "Output directory");
}

iqrtest::Schema resolve_schema(const CommonArgs& args) {
  iqrtest::Schema schema = iqrtest::load_schema(args.schema_path);
  if (args.prob_scale != 0.0) {
    if (args.prob_scale != 1.0 && args.prob_scale != 100.0) {
      throw InputError("--prob-scale must be 1 or 100");
    }
    schema.prob_scale = args.prob_scale;
  }
  return schema;
}

iqrtest::OutcomeTransform resolve_outcome(const CommonArgs& args) {
  if (args.direct) return iqrtest::OutcomeTransform::direct;
  return iqrtest::outcome_transform_from_string(args.outcome);
}

std::optional<std::array<double, 3>> resolve_s_grid(const CommonArgs& args) {
  if (args.s_grid.empty()) return std::nullopt;
  if (args.s_grid.size() != 3) {
    throw InputError("--sgrid needs exactly lo,hi,step");
  }
  return std::array<double, 3>{args.s_grid[0], args.s_grid[1], args.s_grid[2]};
}

std::optional<std::vector<double>> resolve_y_grid(const CommonArgs& args) {
  if (args.y_grid.empty()) return std::nullopt;
  return args.y_grid;
}

std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << content;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const CommonArgs& args) {
  const iqrtest::Schema schema = resolve_schema(args);
  const iqrtest::Dataset ds = iqrtest::load_dataset(args.data_path, schema);

  std::printf("dataset: %s\n", args.data_path.c_str());
  std::printf("respondents: %zu\n", ds.n_respondents());
  std::printf("observations: %zu\n", ds.n_rows());

  std::size_t min_rows = ds.n_rows(), max_rows = 0;
  for (const auto& g : ds.respondents) {
    min_rows = std::min(min_rows, g.rows.size());
    max_rows = std::max(max_rows, g.rows.size());
  }
  std::printf("scenarios per respondent: min %zu, max %zu\n", min_rows, max_rows);

  // Probability heaping: how concentrated the answers are on coarse grids.
  std::size_t at_tenths = 0, at_twentieths = 0, at_bounds = 0;
  for (const auto& o : ds.observations) {
    const double p = o.prob;
    if (std::fabs(p * 10.0 - std::round(p * 10.0)) < 1e-9) ++at_tenths;
    if (std::fabs(p * 20.0 - std::round(p * 20.0)) < 1e-9) ++at_twentieths;
    if (p == 0.0 || p == 1.0) ++at_bounds;
  }
  const double n = static_cast<double>(ds.n_rows());
  std::printf("prob heaping: %.1f%% at multiples of 0.10, %.1f%% at 0.05, %.1f%% at {0,1}\n",
              100.0 * at_tenths / n, 100.0 * at_twentieths / n, 100.0 * at_bounds / n);

  const auto design = iqrtest::build_design(ds);
  const auto names = iqrtest::regressor_names(ds.schema);
  int warnings = 0;
  for (std::size_t j = 1; j < names.size(); ++j) {
    double lo = design[0].regressors[j], hi = lo;
    for (const auto& row : design) {
      lo = std::min(lo, row.regressors[j]);
      hi = std::max(hi, row.regressors[j]);
    }
    if (lo == hi) {
      if (j == 1) {
        std::printf("warning: numeraire has no variation; band measures are undefined\n");
      } else {
        std::printf("warning: %s has no variation\n", names[j].c_str());
      }
      ++warnings;
    }
  }
  if (ds.n_respondents() < 2) {
    std::printf("warning: single respondent; sampling variation cannot be estimated\n");
    ++warnings;
  }
  std::printf("checks passed%s\n", warnings ? " with warnings" : "");
  return 0;
}

// ---------------------------------------------------------------------------
// estimate-iqr

int cmd_estimate_iqr(const CommonArgs& args, int bootstrap_b, double band_level) {
  const iqrtest::Schema schema = resolve_schema(args);
  const iqrtest::Dataset ds = iqrtest::load_dataset(args.data_path, schema);
  const iqrtest::Normalization norm =
      iqrtest::normalization_from_string(args.normalization);

  iqrtest::PipelineOptions opts;
  opts.outcome = resolve_outcome(args);
  opts.threads = args.threads;

  const iqrtest::CoefficientGrid grid = iqrtest::fit_stage(ds, opts);
  const auto built =
      iqrtest::make_grid_spec(ds, grid, args.taus, norm, args.a_count,
                              resolve_s_grid(args), resolve_y_grid(args));
  for (const auto& w : built.warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }

  const auto cf = iqrtest::CounterfactualSpec::observed();
  std::vector<iqrtest::CdfCurve> curves;
  std::vector<iqrtest::BandPair> bands;
  const iqrtest::Rng rng(args.seed);
  for (const double tau : args.taus) {
    curves.push_back(
        iqrtest::estimate_iqr_distribution(ds, grid, tau, cf, built.grid, norm));
    if (bootstrap_b > 0) {
      bands.push_back(iqrtest::bootstrap_confidence_bands(
          ds, bootstrap_b, tau, cf, built.grid, norm, band_level,
          rng.substream(iqrtest::rng_stream::kMonteCarlo,
                        static_cast<std::uint64_t>(curves.size())),
          opts));
    }
  }

  const auto out = prepare_out_dir(args.out_dir);
  write_file(out / "curves.csv",
             iqrtest::curves_csv(curves, bands.empty() ? nullptr : &bands));
  write_file(out / "coefficients.csv",
             iqrtest::coefficient_grid_csv(grid, iqrtest::regressor_names(schema)));

  nlohmann::ordered_json run;
  run["tool"] = "iqrtest";
  run["version"] = kVersion;
  run["command"] = "estimate-iqr";
  run["data"] = args.data_path;
  run["schema"] = args.schema_path;
  run["taus"] = args.taus;
  run["outcome"] = iqrtest::to_string(opts.outcome);
  run["normalization"] = iqrtest::to_string(norm);
  run["qr_levels"] = opts.qr_levels;
  run["grid"] = {{"a_count", built.grid.a_count},
                 {"s_lo", built.grid.s_lo},
                 {"s_step", built.grid.s_step},
                 {"s_count", built.grid.s_count},
                 {"y", built.grid.y}};
  run["bootstrap"] = bootstrap_b;
  run["band_level"] = band_level;
  run["seed"] = args.seed;
  run["warnings"] = built.warnings;
  write_file(out / "run.json", run.dump(2) + "\n");

  std::printf("wrote %s and %s\n", (out / "curves.csv").c_str(),
              (out / "run.json").c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// test

int cmd_test(const CommonArgs& args, const std::string& null_name, int bootstrap_b,
             int sims, const std::vector<double>& alphas, double ridge) {
  const iqrtest::Schema schema = resolve_schema(args);
  const iqrtest::Dataset ds = iqrtest::load_dataset(args.data_path, schema);

  iqrtest::TestConfig cfg;
  cfg.null_kind = iqrtest::null_kind_from_string(null_name);
  cfg.taus = args.taus;
  cfg.outcome = resolve_outcome(args);
  cfg.normalization = iqrtest::normalization_from_string(args.normalization);
  cfg.a_count = args.a_count;
  cfg.s_grid = resolve_s_grid(args);
  cfg.y_grid = resolve_y_grid(args);
  cfg.bootstrap_b = bootstrap_b;
  cfg.sims_l = sims;
  cfg.alphas = alphas;
  cfg.ridge = ridge;
  cfg.seed = args.seed;
  cfg.threads = args.threads;

  iqrtest::TestReport report = iqrtest::run_test(ds, cfg);
  report.data_file = args.data_path;
  report.schema_file = args.schema_path;

  const auto out = prepare_out_dir(args.out_dir);
  std::vector<iqrtest::CdfCurve> curves;
  for (const auto& [tau, curve] : report.curves) {
    curves.push_back(curve);
  }
  write_file(out / "curves.csv", iqrtest::curves_csv(curves));
  report.curve_files = {(out / "curves.csv").string()};

  write_file(out / "report.json", iqrtest::report_json(report));
  const std::string table = iqrtest::report_table(report);
  write_file(out / "report.txt", table);

  for (const auto& w : report.warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  std::fputs(table.c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const std::string& spec_path, std::uint64_t seed_override,
                 bool seed_given, const std::vector<double>& taus,
                 const std::string& normalization, const std::string& out_dir) {
  iqrtest::DgpSpec spec = iqrtest::load_dgp_spec(spec_path);
  if (seed_given) spec.seed = seed_override;
  const iqrtest::Normalization norm =
      iqrtest::normalization_from_string(normalization);

  const iqrtest::Dataset ds = iqrtest::simulate(spec);
  const auto out = prepare_out_dir(out_dir);
  write_file(out / "data.csv", iqrtest::dataset_csv(ds));

  nlohmann::ordered_json schema;
  schema["attributes"] = spec.attribute_names;
  schema["numeraire_transform"] = iqrtest::to_string(spec.numeraire_transform);
  schema["prob_scale"] = 1;
  write_file(out / "schema.json", schema.dump(2) + "\n");

  write_file(out / "oracle.json", iqrtest::oracle_json(spec, taus, norm));

  std::printf("wrote %s (%zu respondents, %zu rows), %s, %s\n",
              (out / "data.csv").c_str(), ds.n_respondents(), ds.n_rows(),
              (out / "schema.json").c_str(), (out / "oracle.json").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric distribution tests for stated-choice uncertainty"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs validate_args;
  CLI::App* validate = app.add_subcommand("validate", "Check a survey CSV");
  add_common_flags(validate, validate_args, true);

  CommonArgs est_args;
  int est_bootstrap = 0;
  double band_level = 0.90;
  CLI::App* est = app.add_subcommand(
      "estimate-iqr", "Estimate normalized interquantile-range distributions");
  add_common_flags(est, est_args, true);
  est->add_option("--bootstrap", est_bootstrap,
                  "Bootstrap replicates for confidence bands (0 = none)");
  est->add_option("--band-level", band_level, "Confidence band coverage");

  CommonArgs test_args;
  std::string null_name;
  int test_bootstrap = 500;
  int sims = 10000;
  std::vector<double> alphas{0.10, 0.05, 0.01};
  double ridge = 1e-6;
  CLI::App* test = app.add_subcommand("test", "Run a distribution-equality test");
  add_common_flags(test, test_args, true);
  test->add_option("--null", null_name, "Null hypothesis: ev1 or symmetry")
      ->required();
  test->add_option("--bootstrap", test_bootstrap, "Bootstrap replicates");
  test->add_option("--sims", sims, "Gaussian draws for critical values");
  test->add_option("--alpha", alphas, "Significance levels")->delimiter(',');
  test->add_option("--ridge", ridge, "Relative ridge for the covariance inverse");

  std::string spec_path;
  std::uint64_t sim_seed = 0;
  std::vector<double> sim_taus{0.1, 0.25, 0.75, 0.9};
  std::string sim_norm = "logistic";
  std::string sim_out = ".";
  CLI::App* sim = app.add_subcommand("simulate", "Generate synthetic survey data");
  sim->add_option("--spec", spec_path, "Generator spec JSON")->required();
  auto* seed_opt = sim->add_option("--seed", sim_seed, "Override the generator seed");
  sim->add_option("--taus", sim_taus, "Levels for the oracle curves")->delimiter(',');
  sim->add_option("--normalization", sim_norm, "Oracle normalization");
  sim->add_option("--out", sim_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (validate->parsed()) return cmd_validate(validate_args);
    if (est->parsed()) return cmd_estimate_iqr(est_args, est_bootstrap, band_level);
    if (test->parsed()) {
      return cmd_test(test_args, null_name, test_bootstrap, sims, alphas, ridge);
    }
    if (sim->parsed()) {
      return cmd_simulate(spec_path, sim_seed, seed_opt->count() > 0, sim_taus,
                          sim_norm, sim_out);
    }
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 2;
}
