#pragma once

#include "dfl/model.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string> kExperimentNames = {"simulate",         "filter",      "bsde-solve",
                                                          "duality-check",    "martingale-check",
                                                          "drift-check",      "optimal-cost", "value-function"};

struct ControlSpec {
  std::string kind = "zero";  // zero | constant | ramp | table | optimal
  double value = 0.0;         // constant
  double intercept = 0.0, slope = 0.0;  // ramp: intercept + slope * t
  double offset = 0.0;        // optimal
  std::vector<double> table;  // one value per grid point
};

struct TerminalSpec {
  std::string kind = "deterministic";  // deterministic | observation-linear
  Vec F, G;
};

struct ExperimentSpec {
  std::string name;
  std::string measure = "P-tilde";  // simulate and filter only
  int basis_degree = 2;
  int picard_iterations = 0;
  std::string v_estimator = "demeaned";
  int quadrature_nodes = 10;
  double allowance = 0.05;
  Vec zeta;
};

struct OutputSpec {
  std::string directory = "out";
  std::vector<std::string> formats{"csv"};
  int dump_paths = 10;
};

struct ExperimentConfig {
  Mat A;
  Vec h, prior;
  double T = 1.0;
  int d = 0;
  int n_steps = 0;
  int n_paths = 0;
  std::uint64_t seed = 0;
  ControlSpec control;
  TerminalSpec terminal;
  ExperimentSpec experiment;
  OutputSpec output;
  std::vector<std::string> notes;  // advisory, not errors

  Model model() const { return Model(A, h, prior, T); }
};

struct ParsedConfig {
  ExperimentConfig config;
  std::vector<std::string> diagnostics;  // every violation found; empty means valid
  bool ok() const { return diagnostics.empty(); }
};

ParsedConfig parse_config(const std::string& text);
// Throws ConfigError when the file cannot be read.
ParsedConfig load_config(const std::string& path);

}  // namespace dfl
