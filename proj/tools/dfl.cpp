#include "dfl/config.hpp"
#include "dfl/experiments.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

int report_diagnostics(const dfl::ParsedConfig& pc, const std::string& path) {
  for (const auto& d : pc.diagnostics) std::cerr << path << ": error: " << d << "\n";
  for (const auto& n : pc.config.notes) std::cerr << path << ": note: " << n << "\n";
  return pc.ok() ? dfl::kExitPass : dfl::kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual filtering experiments"};
  app.require_subcommand(1);

  std::string run_cfg, out_dir;
  int workers = 0;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", run_cfg, "Config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output.directory)");
  run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed", seed, "Master seed (overrides mc.seed)");

  std::string val_cfg;
  auto* validate = app.add_subcommand("validate", "Check a config file without running it");
  validate->add_option("config", val_cfg, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dfl::kExitConfig;
  }

  const std::string& path = run->parsed() ? run_cfg : val_cfg;
  std::string text;
  if (!read_file(path, text)) {
    std::cerr << path << ": error: cannot read file\n";
    return dfl::kExitConfig;
  }
  const dfl::ParsedConfig pc = dfl::parse_config(text);
  const int vrc = report_diagnostics(pc, path);
  if (validate->parsed()) {
    if (vrc == dfl::kExitPass) std::cout << path << ": ok\n";
    return vrc;
  }
  if (vrc != dfl::kExitPass) return vrc;

  dfl::RunOptions opts;
  opts.out_dir = out_dir;
  opts.workers = workers;
  if (*seed_opt) opts.seed = seed;
  opts.config_text = text;
  const dfl::RunResult r = dfl::run_experiment(pc.config, opts);
  if (!r.message.empty()) std::cerr << "error: " << r.message << "\n";
  std::cout << pc.config.experiment.name << ": " << r.verdict << "\n";
  return r.exit_code;
}
