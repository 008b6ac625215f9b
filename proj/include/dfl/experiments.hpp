#pragma once

#include "dfl/bsde.hpp"
#include "dfl/config.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace dfl {

enum ExitCode : int { kExitPass = 0, kExitCheckFail = 1, kExitConfig = 2, kExitNumerical = 3 };

inline constexpr const char* kArtifactVersion = "1.0.0";

struct RunOptions {
  std::string out_dir;  // overrides output.directory when set
  int workers = 0;      // 0 keeps the OpenMP default
  std::optional<std::uint64_t> seed;
  std::string config_text;  // hashed into the manifest
};

struct RunResult {
  int exit_code = kExitPass;
  std::string verdict;  // pass | fail | error
  std::string message;
};

Control make_control(const ControlSpec& c, const TimeGrid& g);
TerminalCondition make_terminal(const TerminalSpec& t);

// FNV-1a 64-bit, hex encoded.
std::string config_hash(const std::string& text);

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

}  // namespace dfl
