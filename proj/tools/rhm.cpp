#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"

#include "rhm/errors.hpp"
#include "rhm/experiments.hpp"
#include "rhm/format.hpp"

namespace {

std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("RHM_OUT"); env && *env) return env;
  if (!config_value.empty()) return config_value;
  return "out";
}

int cmd_run(const std::string& config_path, bool seed_set, std::uint64_t seed,
            const std::string& out_flag, bool parallel) {
  rhm::ExperimentConfig config = rhm::parse_config(config_path);
  if (seed_set) {
    config.seed = seed;
    for (rhm::SolverSpec& s : config.solvers) s.config.seed = seed;
  }
  config.out_dir = resolve_out_dir(out_flag, config.out_dir);

  rhm::RunSummary summary = rhm::run_experiment(config, parallel);
  for (const rhm::SolverSummary& s : summary.solvers) {
    std::printf("%-10s %-16s iters=%-6d grad_norm=%s", s.tag.c_str(),
                rhm::to_string(s.status).c_str(), s.iterations,
                rhm::format_double(s.final_grad_norm).c_str());
    if (!s.error_message.empty())
      std::printf("  (%s)", s.error_message.c_str());
    std::printf("\n");
  }
  std::printf("wrote %s\n", config.out_dir.c_str());
  return summary.all_ok() ? 0 : 1;
}

int cmd_verify(const std::string& config_path, const std::string& golden_dir) {
  rhm::ExperimentConfig config = rhm::parse_config(config_path);
  rhm::GoldenReport report = rhm::verify_golden(config, golden_dir);
  if (report.pass) {
    std::printf("golden verify: ok (%s)\n", report.message.c_str());
    return 0;
  }
  std::printf("golden verify: FAIL: %s\n", report.message.c_str());
  return 1;
}

int cmd_list() {
  std::printf("experiments:\n");
  for (const std::string& e : rhm::known_experiments())
    std::printf("  %s\n", e.c_str());
  std::printf("solvers:\n");
  for (const std::string& s : rhm::known_solver_tags())
    std::printf("  %s\n", s.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"min-max optimization on Riemannian manifolds"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_flag;
  std::string golden_dir;
  std::uint64_t seed = 0;
  bool parallel = false;

  CLI::App* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("--config", config_path, "config file")->required();
  CLI::Option* seed_opt =
      run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_flag, "output directory");
  run->add_flag("--parallel", parallel, "run solvers concurrently");

  CLI::App* verify =
      app.add_subcommand("verify", "compare traces against goldens");
  verify->add_option("--config", config_path, "config file")->required();
  verify->add_option("--golden", golden_dir, "golden trace directory")
      ->required();

  CLI::App* list = app.add_subcommand("list", "list experiments and solvers");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, seed_opt->count() > 0, seed, out_flag,
                     parallel);
    if (verify->parsed()) return cmd_verify(config_path, golden_dir);
    if (list->parsed()) return cmd_list();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
