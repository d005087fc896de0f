#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "benn/experiments.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitInvalidConfig = 2;
constexpr int kExitAborted = 3;

int report_issues(const std::string& file, const std::vector<benn::ConfigIssue>& issues) {
  for (const auto& i : issues) std::cerr << file << ": " << i.pointer << ": " << i.message << '\n';
  return issues.empty() ? 0 : kExitInvalidConfig;
}

int run_one(const std::string& path, const std::vector<std::string>& overrides) {
  try {
    nlohmann::json j = benn::load_json(path);
    for (const auto& o : overrides) benn::apply_override(j, o);
    if (const char* env = std::getenv("BENN_SEED")) {
      try {
        j["seed"] = std::stoull(env);
      } catch (const std::exception&) {
        std::cerr << path << ": BENN_SEED: not an unsigned integer: " << env << '\n';
        return kExitInvalidConfig;
      }
    }
    if (int rc = report_issues(path, benn::validate_config(j))) return rc;
    const benn::ExperimentConfig cfg = benn::parse_config(j);
    benn::run_experiment(cfg);
    std::cerr << path << ": wrote " << cfg.output_dir.string() << '\n';
    return 0;
  } catch (const benn::ConfigError& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const benn::RunAborted& e) {
    std::cerr << path << ": aborted at " << e.what() << '\n';
    return kExitAborted;
  } catch (const std::exception& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return kExitError;
  }
}

// Each config runs in its own process; the exit code is the first failure.
int run_batch(const std::vector<std::string>& configs, const std::vector<std::string>& overrides, std::size_t jobs) {
  if (configs.size() == 1) return run_one(configs.front(), overrides);
  std::cout.flush();
  std::cerr.flush();
  int result = 0;
  std::size_t running = 0;
  auto reap = [&] {
    int status = 0;
    if (::wait(&status) < 0) return;
    --running;
    const int rc = WIFEXITED(status) ? WEXITSTATUS(status) : kExitError;
    if (result == 0) result = rc;
  };
  for (const auto& config : configs) {
    while (running >= jobs) reap();
    const pid_t pid = ::fork();
    if (pid < 0) {
      std::cerr << "fork failed\n";
      return kExitError;
    }
    if (pid == 0) {
      const int rc = run_one(config, overrides);
      std::cout.flush();
      std::cerr.flush();
      ::_exit(rc);
    }
    ++running;
  }
  while (running > 0) reap();
  return result;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural networks trained under physical constraints"};
  app.require_subcommand(1);

  std::vector<std::string> configs, overrides;
  std::size_t jobs = 1;
  auto* run = app.add_subcommand("run", "train one or more experiments");
  run->add_option("configs", configs, "experiment config JSON files")->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "override a dotted config path, e.g. mdmm.damping_eq=10");
  run->add_option("--jobs,-j", jobs, "configs to run in parallel")->check(CLI::PositiveNumber);

  std::vector<std::string> dirs;
  std::string baseline, output;
  auto* compare = app.add_subcommand("compare", "compare run directories against a baseline run");
  compare->add_option("dirs", dirs, "run directories")->required();
  compare->add_option("--baseline", baseline, "baseline run directory")->required();
  compare->add_option("--output,-o", output, "write the CSV here instead of stdout");

  std::string config;
  auto* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", config, "experiment config JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  if (*run) return run_batch(configs, overrides, jobs);

  if (*compare) {
    try {
      std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
      const std::string csv = benn::comparison_csv(benn::compare_runs(paths, baseline));
      if (output.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(output, std::ios::binary);
        if (!out) throw benn::Error("cannot write " + output);
        out << csv;
      }
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "compare: " << e.what() << '\n';
      return kExitError;
    }
  }

  try {
    if (int rc = report_issues(config, benn::validate_config(benn::load_json(config)))) return rc;
    std::cout << config << ": ok\n";
    return 0;
  } catch (const benn::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitError;
  }
}
