#pragma once

// Modified differential method of multipliers.
//
// Objective per step:
//   L = data_loss + sum_eq   [ lambda h + c1/2 h^2 ]
//                 + sum_ineq [ mu (g + xi^2) + c2/2 g^2 ]
// followed by descent on the network parameters and slacks xi and ascent on
// lambda (by h) and mu (by g + xi^2). An inequality means g <= 0.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "benn/autodiff.hpp"
#include "benn/constraints.hpp"
#include "benn/optim.hpp"

namespace benn {

enum class InequalityDamping {
  Constraint,     // c2/2 g^2
  SlackResidual,  // c2/2 (g + xi^2)^2
};

std::string_view inequality_damping_name(InequalityDamping d);
InequalityDamping parse_inequality_damping(std::string_view name);

struct MdmmConfig {
  double lr_multiplier = 0.1;
  double damping_eq = 1.0;
  double damping_ineq = 1.0;
  double initial_slack = 0.1;
  InequalityDamping inequality_damping = InequalityDamping::Constraint;

  void validate() const;
};

class MultiplierState {
 public:
  struct Entry {
    std::string name;
    Relation relation;
    std::size_t slot;  // index into lambdas() or mus()/slacks()
    double damping;
  };

  explicit MultiplierState(MdmmConfig cfg = {});

  /// Allocates a multiplier (and slack, for inequalities) and stores the handle
  /// in spec.weight_id. Registering the same spec twice is an error.
  std::size_t register_constraint(ConstraintSpec& spec);
  std::size_t register_constraint(std::string name, Relation relation, std::optional<double> damping = {});

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t id) const { return entries_.at(id); }
  const MdmmConfig& config() const { return cfg_; }

  /// lambda for equalities, mu for inequalities.
  double multiplier(std::size_t id) const;
  double slack(std::size_t id) const;
  void set_multiplier(std::size_t id, double v);
  void set_slack(std::size_t id, double v);

  const std::vector<double>& lambdas() const { return lambdas_; }
  const std::vector<double>& mus() const { return mus_; }
  const std::vector<double>& slacks() const { return slacks_; }

 private:
  MdmmConfig cfg_;
  std::vector<Entry> entries_;
  std::vector<double> lambdas_;
  std::vector<double> mus_;
  std::vector<double> slacks_;
};

struct ConstraintTerm {
  std::size_t weight_id;
  Var residual;  // scalar h or g
};

struct MdmmObjective {
  Var loss;
  std::vector<ConstraintTerm> terms;
  std::vector<Var> slacks;         // aligned with terms, invalid for equalities
  std::vector<double> violations;  // h, or g + xi^2, aligned with terms
};

MdmmObjective total_loss(Var data_loss, std::span<const ConstraintTerm> terms, const MultiplierState& state);

/// Ascent on multipliers and descent on slacks. Must follow tape.backward(objective.loss).
void update_multipliers(MultiplierState& state, const MdmmObjective& objective, double slack_lr);

/// One full step: parameter update by `opt`, then multiplier/slack update.
template <class Optimizer>
void mdmm_step(Optimizer& opt, const ParameterBinding& params, MultiplierState& state,
               const MdmmObjective& objective) {
  opt.step(params);
  update_multipliers(state, objective, opt.lr());
}

}  // namespace benn
