#include "iqrtest/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "iqrtest/csv.hpp"
#include "iqrtest/errors.hpp"

namespace iqrtest {

const char* to_string(NumeraireTransform t) {
  return t == NumeraireTransform::log ? "log" : "level";
}

Schema schema_from_json(const std::string& text, const std::string& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(origin + ": invalid JSON: " + e.what());
  }
  Schema schema;
  if (!doc.contains("attributes") || !doc["attributes"].is_array()) {
    throw InputError(origin + ": schema needs an \"attributes\" array");
  }
  for (const auto& a : doc["attributes"]) {
    if (!a.is_string()) {
      throw InputError(origin + ": attribute names must be strings");
    }
    schema.attributes.push_back(a.get<std::string>());
  }
  if (doc.contains("numeraire_transform")) {
    const auto t = doc["numeraire_transform"].get<std::string>();
    if (t == "log") {
      schema.numeraire_transform = NumeraireTransform::log;
    } else if (t == "level") {
      schema.numeraire_transform = NumeraireTransform::level;
    } else {
      throw InputError(origin + ": numeraire_transform must be \"log\" or \"level\"");
    }
  }
  if (doc.contains("prob_scale")) {
    schema.prob_scale = doc["prob_scale"].get<double>();
    if (schema.prob_scale != 1.0 && schema.prob_scale != 100.0) {
      throw InputError(origin + ": prob_scale must be 1 or 100");
    }
  }
  return schema;
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open schema file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return schema_from_json(buf.str(), path);
}

namespace {

void validate_observation(const Observation& obs, const Schema& schema,
                          const std::string& where) {
  if (!(obs.prob >= 0.0 && obs.prob <= 1.0)) {
    throw InputError(where + ": probability out of range (" +
                     format_double(obs.prob) + ")");
  }
  if (obs.attrs1.size() != schema.attributes.size() ||
      obs.attrs0.size() != schema.attributes.size()) {
    throw InputError(where + ": attribute count does not match schema");
  }
  if (schema.numeraire_transform == NumeraireTransform::log &&
      (obs.numeraire1 <= 0.0 || obs.numeraire0 <= 0.0)) {
    throw InputError(where + ": nonpositive numeraire under log transform");
  }
}

std::vector<RespondentGroup> group_rows(const std::vector<Observation>& obs) {
  std::vector<RespondentGroup> groups;
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto [it, inserted] = position.emplace(obs[i].respondent_id, groups.size());
    if (inserted) {
      groups.push_back({obs[i].respondent_id, {}});
    }
    groups[it->second].rows.push_back(i);
  }
  return groups;
}

}  // namespace

Dataset make_dataset(Schema schema, std::vector<Observation> observations) {
  if (observations.empty()) {
    throw InputError("dataset has no observations");
  }
  for (std::size_t i = 0; i < observations.size(); ++i) {
    validate_observation(observations[i], schema, "row " + std::to_string(i + 1));
  }
  Dataset ds;
  ds.schema = std::move(schema);
  ds.observations = std::move(observations);
  ds.respondents = group_rows(ds.observations);
  return ds;
}

Dataset load_dataset(const std::string& path, const Schema& schema) {
  const CsvTable table = read_csv_file(path);
  const std::size_t c_resp = table.column("respondent_id");
  const std::size_t c_scen = table.column("scenario_id");
  const std::size_t c_prob = table.column("prob");
  const std::size_t c_num1 = table.column("num1");
  const std::size_t c_num0 = table.column("num0");
  std::vector<std::size_t> c_x1, c_x0;
  for (const auto& name : schema.attributes) {
    c_x1.push_back(table.column("x1_" + name));
    c_x0.push_back(table.column("x0_" + name));
  }

  std::vector<Observation> obs;
  obs.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    // +2: header line plus 1-based numbering.
    const std::string where = path + ":" + std::to_string(r + 2);
    Observation o;
    o.respondent_id = row[c_resp];
    o.scenario_id = row[c_scen];
    o.prob = parse_double(row[c_prob], where + " (prob)") / schema.prob_scale;
    o.numeraire1 = parse_double(row[c_num1], where + " (num1)");
    o.numeraire0 = parse_double(row[c_num0], where + " (num0)");
    for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
      o.attrs1.push_back(
          parse_double(row[c_x1[a]], where + " (x1_" + schema.attributes[a] + ")"));
      o.attrs0.push_back(
          parse_double(row[c_x0[a]], where + " (x0_" + schema.attributes[a] + ")"));
    }
    validate_observation(o, schema, where);
    obs.push_back(std::move(o));
  }
  if (obs.empty()) {
    throw InputError(path + ": no data rows");
  }
  return make_dataset(schema, std::move(obs));
}

std::string dataset_csv(const Dataset& ds) {
  std::ostringstream out;
  out << "respondent_id,scenario_id,prob,num1,num0";
  for (const auto& a : ds.schema.attributes) {
    out << ",x1_" << a << ",x0_" << a;
  }
  out << "\n";
  for (const auto& o : ds.observations) {
    out << csv_escape(o.respondent_id) << ',' << csv_escape(o.scenario_id) << ','
        << format_double(o.prob * ds.schema.prob_scale) << ','
        << format_double(o.numeraire1) << ',' << format_double(o.numeraire0);
    for (std::size_t a = 0; a < ds.schema.attributes.size(); ++a) {
      out << ',' << format_double(o.attrs1[a]) << ',' << format_double(o.attrs0[a]);
    }
    out << "\n";
  }
  return out.str();
}

std::vector<std::string> regressor_names(const Schema& schema) {
  std::vector<std::string> names{"intercept", "d_num"};
  for (const auto& a : schema.attributes) {
    names.push_back("d_" + a);
  }
  return names;
}

std::vector<DesignRow> build_design(const Dataset& ds) {
  const bool log_transform =
      ds.schema.numeraire_transform == NumeraireTransform::log;
  std::vector<DesignRow> rows;
  rows.reserve(ds.n_rows());
  for (const auto& o : ds.observations) {
    DesignRow row;
    row.regressors.reserve(2 + o.attrs1.size());
    row.regressors.push_back(1.0);
    row.regressors.push_back(log_transform
                                 ? std::log(o.numeraire1) - std::log(o.numeraire0)
                                 : o.numeraire1 - o.numeraire0);
    for (std::size_t a = 0; a < o.attrs1.size(); ++a) {
      row.regressors.push_back(o.attrs1[a] - o.attrs0[a]);
    }
    row.numeraire_coord = 1;
    rows.push_back(std::move(row));
  }
  return rows;
}

DesignRow shift_numeraire(const DesignRow& row, double s) {
  DesignRow shifted = row;
  shifted.regressors[shifted.numeraire_coord] -= s;
  return shifted;
}

Dataset block_resample(const Dataset& ds, Rng& rng) {
  if (ds.n_respondents() == 0) {
    throw InputError("block_resample: dataset has no respondents");
  }
  std::vector<Observation> obs;
  obs.reserve(ds.n_rows());
  const std::size_t n = ds.n_respondents();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& group = ds.respondents[rng.index(n)];
    const std::string new_id = group.id + "#" + std::to_string(k + 1);
    for (const std::size_t r : group.rows) {
      Observation o = ds.observations[r];
      o.respondent_id = new_id;
      obs.push_back(std::move(o));
    }
  }
  return make_dataset(ds.schema, std::move(obs));
}

}  // namespace iqrtest
