#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iqrtest/rng.hpp"

namespace iqrtest {

enum class NumeraireTransform { level, log };

const char* to_string(NumeraireTransform t);

// Dataset-level description of the survey columns. Loaded from a JSON
// document of the form
//   { "attributes": ["hours", ...],
//     "numeraire_transform": "log" | "level",
//     "prob_scale": 1 | 100 }
struct Schema {
  std::vector<std::string> attributes;
  NumeraireTransform numeraire_transform = NumeraireTransform::level;
  double prob_scale = 1.0;  // raw probability values are divided by this
};

Schema schema_from_json(const std::string& text, const std::string& origin);
Schema load_schema(const std::string& path);

// One survey row: a respondent states the chance of choosing option 1 over
// option 0 in a scenario described by the two options' attributes.
struct Observation {
  std::string respondent_id;
  std::string scenario_id;
  double prob = 0.0;  // in [0,1] after any rescale
  double numeraire1 = 0.0;
  double numeraire0 = 0.0;
  std::vector<double> attrs1;
  std::vector<double> attrs0;
};

struct RespondentGroup {
  std::string id;
  std::vector<std::size_t> rows;  // indices into Dataset::observations
};

// Immutable after construction; `respondents` partitions the row indices in
// first-appearance order, preserving file order within a respondent.
struct Dataset {
  Schema schema;
  std::vector<Observation> observations;
  std::vector<RespondentGroup> respondents;

  std::size_t n_rows() const { return observations.size(); }
  std::size_t n_respondents() const { return respondents.size(); }
};

// Groups and validates observations. Requires at least one respondent;
// probs in [0,1], attribute lengths matching the schema, and strictly
// positive numeraires when the log transform is configured.
Dataset make_dataset(Schema schema, std::vector<Observation> observations);

// Reads the standard CSV layout: respondent_id, scenario_id, prob, num1,
// num0, plus x1_<name>/x0_<name> per schema attribute. Extra columns are
// ignored. Sampling-variation estimates need at least two respondents; the
// validate command warns about single-respondent files.
Dataset load_dataset(const std::string& path, const Schema& schema);

std::string dataset_csv(const Dataset& ds);

// Differenced regression row: [1, T(num1)-T(num0), attrs1-attrs0...] with T
// the configured numeraire transform.
struct DesignRow {
  std::vector<double> regressors;
  std::size_t numeraire_coord = 1;
};

// {"intercept", "d_num", "d_<attr>", ...} matching DesignRow::regressors.
std::vector<std::string> regressor_names(const Schema& schema);

std::vector<DesignRow> build_design(const Dataset& ds);

// Counterfactual numeraire transfer: subtracts s from the numeraire
// coordinate, leaving everything else untouched.
DesignRow shift_numeraire(const DesignRow& row, double s);

// Block bootstrap: draws n_respondents respondent blocks with replacement,
// copying every scenario row of a drawn respondent. Drawn blocks get fresh
// ids (original id + "#" + draw position) so the grouping stays a partition.
Dataset block_resample(const Dataset& ds, Rng& rng);

}  // namespace iqrtest
