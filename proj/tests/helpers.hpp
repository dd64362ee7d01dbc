#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "iqrtest/dataset.hpp"

namespace testutil {

inline std::filesystem::path temp_dir() {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() /
             ("iqrtest-" + std::to_string(::getpid()));
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

inline std::filesystem::path write_file(const std::string& name,
                                        const std::string& content) {
  const auto path = temp_dir() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Minimal single-attribute schema used by most fixtures.
inline iqrtest::Schema basic_schema() {
  iqrtest::Schema schema;
  schema.attributes = {"hours"};
  return schema;
}

inline iqrtest::Observation obs(const std::string& resp, const std::string& scen,
                                double prob, double num1, double num0, double x1,
                                double x0) {
  iqrtest::Observation o;
  o.respondent_id = resp;
  o.scenario_id = scen;
  o.prob = prob;
  o.numeraire1 = num1;
  o.numeraire0 = num0;
  o.attrs1 = {x1};
  o.attrs0 = {x0};
  return o;
}

}  // namespace testutil
