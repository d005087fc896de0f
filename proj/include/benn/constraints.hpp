#pragma once

// Declarative constraints on a Bayesian network's predictive distribution and
// on generated images, with differentiable residuals.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "benn/autodiff.hpp"
#include "benn/bayes_nn.hpp"
#include "benn/descriptors.hpp"

namespace benn {

enum class ConstraintKind { Value, Derivative, Variance, Bound, Tpcf, Porosity };
enum class Relation { Equality, Inequality };

std::string_view kind_name(ConstraintKind k);
ConstraintKind parse_kind(std::string_view name);
std::string_view relation_name(Relation r);
Relation parse_relation(std::string_view name);

/// Closed interval discretized into `samples` evenly spaced points
/// (0 means 50 points per unit length).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t samples = 0;

  std::vector<double> points() const;
};

struct ConstraintSpec {
  static constexpr double kDefaultEpsilon = 0.01;
  static constexpr double kPointsPerUnit = 50.0;

  std::string name;
  ConstraintKind kind = ConstraintKind::Value;
  std::vector<double> locations;
  std::optional<Interval> interval;
  double target = 0.0;               // Value, Derivative, Variance (a variance), Porosity
  double lower = 0.0, upper = 0.0;   // Bound
  std::vector<double> target_curve;  // Tpcf, radii 0..R
  double epsilon = kDefaultEpsilon;  // Derivative half-width
  Relation relation = Relation::Equality;
  std::optional<double> damping;     // overrides the MDMM default
  BinarizeConfig binarize;           // Tpcf
  std::optional<std::size_t> weight_id;

  /// Explicit locations followed by the discretized interval, if any.
  std::vector<double> points() const;
  void validate() const;
  bool is_functional() const { return kind == ConstraintKind::Tpcf || kind == ConstraintKind::Porosity; }
};

/// `value_var` is the on-tape residual; it is left invalid by the evaluation
/// overloads that take a whole network, which build a private tape.
struct ConstraintResidual {
  Var value_var;
  double value = 0.0;
  std::vector<double> per_point;
};

/// E[y(x)] - target, the expectation taken over the given draws.
ConstraintResidual eval_value(std::span<const NetworkDraw> draws, const ConstraintSpec& spec);
/// (E[y(x+eps)] - E[y(x-eps)]) / (2 eps) - target, each draw used on both sides.
ConstraintResidual eval_derivative(std::span<const NetworkDraw> draws, const ConstraintSpec& spec);
/// E[exp(log_noise(x))] - target, with the target given as a variance.
ConstraintResidual eval_variance(std::span<const NetworkDraw> draws, const ConstraintSpec& spec);
/// Per point: lower - f if f < lower, upper - f if f > upper, else 0; value is the mean |.|.
ConstraintResidual eval_bound(std::span<const NetworkDraw> draws, const ConstraintSpec& spec);
/// Dispatches on spec.kind for the network-based kinds.
ConstraintResidual evaluate(std::span<const NetworkDraw> draws, const ConstraintSpec& spec);

/// Monte Carlo evaluation with `draws` fresh weight samples on a private tape.
ConstraintResidual evaluate(const BayesianMLP& net, const ConstraintSpec& spec, std::size_t draws,
                            std::uint64_t seed);

/// Tpcf: mean over images of the mean |S2(r) - target(r)| (on-tape path).
/// Porosity: mean over images of porosity(image) - target.
/// `images` is [n x H x W] or [n x H*W] with square images.
ConstraintResidual eval_functional(Var images, const ConstraintSpec& spec);
/// Off-tape evaluation through the FFT path.
ConstraintResidual eval_functional(std::span<const Tensor> images, const ConstraintSpec& spec);

}  // namespace benn
