#include "benn/mdmm.hpp"

#include <cmath>

namespace benn {

std::string_view inequality_damping_name(InequalityDamping d) {
  return d == InequalityDamping::Constraint ? "constraint" : "slack_residual";
}

InequalityDamping parse_inequality_damping(std::string_view name) {
  if (name == "constraint") return InequalityDamping::Constraint;
  if (name == "slack_residual") return InequalityDamping::SlackResidual;
  throw Error("unknown inequality damping '" + std::string(name) + "'");
}

void MdmmConfig::validate() const {
  if (damping_eq < 0.0 || damping_ineq < 0.0) throw Error("mdmm: damping must be >= 0");
  if (!(lr_multiplier >= 0.0)) throw Error("mdmm: lr_multiplier must be >= 0");
}

MultiplierState::MultiplierState(MdmmConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::size_t MultiplierState::register_constraint(ConstraintSpec& spec) {
  if (spec.weight_id) throw Error("constraint '" + spec.name + "' is already registered");
  const std::size_t id = register_constraint(spec.name, spec.relation, spec.damping);
  spec.weight_id = id;
  return id;
}

std::size_t MultiplierState::register_constraint(std::string name, Relation relation, std::optional<double> damping) {
  const double c = damping.value_or(relation == Relation::Equality ? cfg_.damping_eq : cfg_.damping_ineq);
  if (c < 0.0) throw Error("constraint '" + name + "': damping must be >= 0");
  std::size_t slot;
  if (relation == Relation::Equality) {
    slot = lambdas_.size();
    lambdas_.push_back(0.0);
  } else {
    slot = mus_.size();
    mus_.push_back(0.0);
    slacks_.push_back(cfg_.initial_slack);
  }
  entries_.push_back(Entry{std::move(name), relation, slot, c});
  return entries_.size() - 1;
}

double MultiplierState::multiplier(std::size_t id) const {
  const Entry& e = entry(id);
  return e.relation == Relation::Equality ? lambdas_[e.slot] : mus_[e.slot];
}

double MultiplierState::slack(std::size_t id) const {
  const Entry& e = entry(id);
  return e.relation == Relation::Inequality ? slacks_[e.slot] : 0.0;
}

void MultiplierState::set_multiplier(std::size_t id, double v) {
  const Entry& e = entry(id);
  (e.relation == Relation::Equality ? lambdas_ : mus_)[e.slot] = v;
}

void MultiplierState::set_slack(std::size_t id, double v) {
  const Entry& e = entry(id);
  if (e.relation != Relation::Inequality) throw Error("constraint '" + e.name + "' has no slack");
  slacks_[e.slot] = v;
}

MdmmObjective total_loss(Var data_loss, std::span<const ConstraintTerm> terms, const MultiplierState& state) {
  Tape& tape = data_loss.tape();
  MdmmObjective obj;
  obj.loss = data_loss;
  for (const ConstraintTerm& t : terms) {
    if (t.weight_id >= state.size())
      throw Error("total_loss: constraint handle " + std::to_string(t.weight_id) + " is not registered");
    if (t.residual.value().numel() != 1) throw ShapeError("total_loss: constraint residual must be scalar");
    const auto& e = state.entry(t.weight_id);
    const double m = state.multiplier(t.weight_id);
    Var penalty;
    if (e.relation == Relation::Equality) {
      penalty = scale(t.residual, m) + scale(square(t.residual), 0.5 * e.damping);
      obj.slacks.emplace_back();
      obj.violations.push_back(t.residual.item());
    } else {
      Var xi = tape.variable(Tensor::scalar(state.slack(t.weight_id)));
      Var slackened = t.residual + square(xi);
      Var damped = state.config().inequality_damping == InequalityDamping::Constraint ? t.residual : slackened;
      penalty = scale(slackened, m) + scale(square(damped), 0.5 * e.damping);
      obj.slacks.push_back(xi);
      obj.violations.push_back(slackened.item());
    }
    obj.loss = obj.loss + penalty;
    obj.terms.push_back(t);
  }
  return obj;
}

void update_multipliers(MultiplierState& state, const MdmmObjective& objective, double slack_lr) {
  const double eta = state.config().lr_multiplier;
  for (std::size_t k = 0; k < objective.terms.size(); ++k) {
    const std::size_t id = objective.terms[k].weight_id;
    const double v = objective.violations[k];
    if (!std::isfinite(v))
      throw NonFiniteError(state.entry(id).name, "non-finite residual for constraint '" + state.entry(id).name + "'");
    if (objective.slacks[k].valid()) {
      const double g = objective.slacks[k].tape().grad(objective.slacks[k]).item();
      if (!std::isfinite(g))
        throw NonFiniteError(state.entry(id).name, "non-finite slack gradient for constraint '" + state.entry(id).name + "'");
      state.set_slack(id, state.slack(id) - slack_lr * g);
    }
    state.set_multiplier(id, state.multiplier(id) + eta * v);
  }
}

}  // namespace benn
