#pragma once

// Experiment configuration, training drivers and result files for the
// regression, beam and microstructure experiments.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "benn/bayes_nn.hpp"
#include "benn/constraints.hpp"
#include "benn/datasets.hpp"
#include "benn/descriptors.hpp"
#include "benn/error.hpp"
#include "benn/mdmm.hpp"
#include "json.hpp"

namespace benn {

enum class ExperimentKind {
  RegressionValue,
  RegressionConflict,
  RegressionBound,
  RegressionDerivative,
  RegressionVariance,
  Beam,
  Microstructure,
};

std::string_view experiment_name(ExperimentKind k);
ExperimentKind parse_experiment(std::string_view name);
bool is_regression(ExperimentKind k);

struct ModelConfig {
  std::vector<std::size_t> hidden{100};
  Activation activation = Activation::Relu;
  std::size_t train_draws = 4;
  std::optional<double> kl_weight;  // default 1 / N_train
  double lr = 1e-3;
  /// Exponential decay from lr at step 1 to lr_final at the last step.
  std::optional<double> lr_final;
};

struct VaeConfig {
  std::size_t hidden = 256;
  std::size_t latent = 16;
  double lr = 1e-3;
  std::size_t constraint_samples = 16;
  std::size_t saved_samples = 16;
};

struct EvalGrid {
  double lo = -10.0;
  double hi = 10.0;
  std::size_t points = 301;

  std::vector<double> values() const;
};

/// A constraint whose target is filled from the training set at run time.
enum class TargetSource { Given, TrainingMean };

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::RegressionValue;
  std::uint64_t seed = 0;
  std::size_t steps = 1;
  std::size_t eval_draws = 250;
  std::size_t log_interval = 50;
  std::filesystem::path output_dir = "runs/out";
  bool constrained = true;

  RegressionConfig regression;
  BeamConfig beam;
  MicrostructureConfig microstructure;
  ModelConfig model;
  VaeConfig vae;
  MdmmConfig mdmm;
  EvalGrid eval_grid;
  std::vector<ConstraintSpec> constraints;
  std::vector<TargetSource> target_sources;  // aligned with constraints
};

struct ConfigIssue {
  std::string pointer;
  std::string message;
};

/// Every schema violation found, each located by JSON pointer.
std::vector<ConfigIssue> validate_config(const nlohmann::json& j);
/// Throws ConfigError for the first violation.
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& path);

/// `key` is a dotted path (`mdmm.damping_eq`, `constraints.0.target`). The value
/// is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Training diverged. `term` names the loss term or op that went non-finite.
class RunAborted : public Error {
 public:
  RunAborted(std::size_t step, std::string term, const std::string& what)
      : Error("step " + std::to_string(step) + ", term '" + term + "': " + what), step_(step), term_(std::move(term)) {}
  std::size_t step() const noexcept { return step_; }
  const std::string& term() const noexcept { return term_; }

 private:
  std::size_t step_;
  std::string term_;
};

struct ConstraintReport {
  std::string name;
  ConstraintKind kind;
  double residual = 0.0;
  std::vector<double> per_point;
};

struct RunResult {
  std::vector<double> grid;  // physical x
  PredictiveSummary predictions;
  std::vector<ConstraintReport> constraints;
  /// Microstructure only: mean over generated samples of sum_r |S2(r) - target(r)|.
  std::optional<double> tpcf_l1;
  std::optional<double> generated_porosity;
  std::optional<double> training_porosity;
};

/// Trains, evaluates and writes every output file into cfg.output_dir.
RunResult run_experiment(const ExperimentConfig& cfg);

struct ComparisonRow {
  std::string run;
  std::string metric;
  double value = 0.0;
  double baseline = 0.0;
  double ratio = 0.0;
};

/// Beam: full-domain MSE against the analytic deflection. Regression: final
/// infeasibility per constraint. Microstructure: TPCF L1 error.
std::vector<ComparisonRow> compare_runs(const std::vector<std::filesystem::path>& runs,
                                        const std::filesystem::path& baseline);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace benn
