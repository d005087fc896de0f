#include <gtest/gtest.h>

#include <cmath>

#include "benn/mdmm.hpp"

using namespace benn;

namespace {

struct ToyResult {
  double x, lambda;
};

// minimize (x - 1)^2 subject to x = 0; KKT point x* = 0, lambda* = 2.
ToyResult solve_toy(double damping, int steps) {
  MdmmConfig cfg;
  cfg.damping_eq = damping;
  MultiplierState state(cfg);
  const std::size_t id = state.register_constraint("x=0", Relation::Equality);
  Tensor x = Tensor::scalar(0.5);
  Sgd opt(0.05);
  for (int i = 0; i < steps; ++i) {
    Tape tape;
    ParameterBinding params(tape);
    Var xv = params.bind("x", x);
    Var f = square(xv - 1.0);
    std::vector<ConstraintTerm> terms{{id, xv}};
    MdmmObjective obj = total_loss(f, terms, state);
    tape.backward(obj.loss);
    mdmm_step(opt, params, state, obj);
  }
  return {x.item(), state.multiplier(id)};
}

}  // namespace

TEST(Register, GrowsStateWithDistinctHandles) {
  MultiplierState state;
  ConstraintSpec eq;
  eq.name = "eq";
  ConstraintSpec ineq;
  ineq.name = "ineq";
  ineq.relation = Relation::Inequality;
  const auto a = state.register_constraint(eq);
  EXPECT_EQ(state.lambdas().size(), 1u);
  EXPECT_EQ(state.multiplier(a), 0.0);
  const auto b = state.register_constraint(ineq);
  EXPECT_EQ(state.mus().size(), 1u);
  EXPECT_EQ(state.slacks().size(), 1u);
  EXPECT_NE(a, b);
  EXPECT_EQ(eq.weight_id, a);
  EXPECT_THROW(state.register_constraint(eq), Error);
  EXPECT_EQ(parse_inequality_damping(inequality_damping_name(InequalityDamping::SlackResidual)),
            InequalityDamping::SlackResidual);
}

TEST(TotalLoss, HandEvaluatedEquality) {
  MdmmConfig cfg;
  cfg.damping_eq = 10.0;
  MultiplierState state(cfg);
  const auto id = state.register_constraint("h", Relation::Equality);
  state.set_multiplier(id, 2.0);
  Tape tape;
  std::vector<ConstraintTerm> terms{{id, tape.constant(Tensor::scalar(0.5))}};
  EXPECT_DOUBLE_EQ(total_loss(tape.constant(Tensor::scalar(1.0)), terms, state).loss.item(), 3.25);
}

TEST(TotalLoss, AbsorbedSlackLeavesOnlyDamping) {
  MultiplierState state;
  const auto id = state.register_constraint("g", Relation::Inequality);
  state.set_multiplier(id, 0.7);
  state.set_slack(id, std::sqrt(0.3));
  Tape tape;
  std::vector<ConstraintTerm> terms{{id, tape.constant(Tensor::scalar(-0.3))}};
  MdmmObjective obj = total_loss(tape.constant(Tensor::scalar(0.0)), terms, state);
  EXPECT_NEAR(obj.loss.item(), 0.5 * 0.09, 1e-15);
}

TEST(TotalLoss, ZeroResidualsOrZeroWeightsLeaveDataLoss) {
  MultiplierState state;
  const auto a = state.register_constraint("a", Relation::Equality);
  const auto b = state.register_constraint("b", Relation::Inequality);
  state.set_slack(b, 0.0);
  Tape tape;
  Var zero = tape.constant(Tensor::scalar(0.0));
  std::vector<ConstraintTerm> terms{{a, zero}, {b, zero}};
  EXPECT_EQ(total_loss(tape.constant(Tensor::scalar(1.25)), terms, state).loss.item(), 1.25);

  MdmmConfig cfg;
  cfg.damping_eq = 0.0;
  MultiplierState off(cfg);
  const auto c = off.register_constraint("c", Relation::Equality);
  std::vector<ConstraintTerm> live{{c, tape.constant(Tensor::scalar(0.8))}};
  EXPECT_EQ(total_loss(tape.constant(Tensor::scalar(1.25)), live, off).loss.item(), 1.25);
}

TEST(Update, AscentEqualsResidual) {
  MultiplierState state;
  const auto id = state.register_constraint("h", Relation::Equality);
  Tape tape;
  Var h = tape.variable(Tensor::scalar(0.4));
  std::vector<ConstraintTerm> terms{{id, h}};
  MdmmObjective obj = total_loss(tape.constant(Tensor::scalar(0.0)), terms, state);
  tape.backward(obj.loss);
  update_multipliers(state, obj, 0.01);
  EXPECT_NEAR(state.multiplier(id), 0.04, 1e-15);
  EXPECT_NEAR(state.multiplier(id) / state.config().lr_multiplier, 0.4, 1e-12);
}

TEST(Update, StationaryWhenResidualsVanish) {
  MultiplierState state;
  const auto id = state.register_constraint("h", Relation::Equality);
  state.set_multiplier(id, 1.5);
  for (int i = 0; i < 20; ++i) {
    Tape tape;
    std::vector<ConstraintTerm> terms{{id, tape.variable(Tensor::scalar(0.0))}};
    MdmmObjective obj = total_loss(tape.constant(Tensor::scalar(0.0)), terms, state);
    tape.backward(obj.loss);
    update_multipliers(state, obj, 0.01);
    EXPECT_EQ(state.multiplier(id), 1.5);
  }
}

TEST(Update, InequalitySlackDescends) {
  MultiplierState state;
  const auto id = state.register_constraint("g", Relation::Inequality);
  state.set_multiplier(id, 1.0);
  const double xi0 = state.slack(id);
  Tape tape;
  std::vector<ConstraintTerm> terms{{id, tape.variable(Tensor::scalar(-0.5))}};
  MdmmObjective obj = total_loss(tape.constant(Tensor::scalar(0.0)), terms, state);
  tape.backward(obj.loss);
  update_multipliers(state, obj, 0.1);
  // dL/dxi = 2 mu xi (damping on g alone does not involve xi).
  EXPECT_NEAR(state.slack(id), xi0 - 0.1 * 2.0 * 1.0 * xi0, 1e-15);
  EXPECT_NEAR(state.multiplier(id), 1.0 + 0.1 * (-0.5 + xi0 * xi0), 1e-15);
}

TEST(Update, NanNamesConstraint) {
  MultiplierState state;
  const auto id = state.register_constraint("broken", Relation::Equality);
  MdmmObjective obj;
  Tape tape;
  obj.terms.push_back({id, tape.constant(Tensor::scalar(0.0))});
  obj.slacks.push_back(Var{});
  obj.violations.push_back(std::nan(""));
  try {
    update_multipliers(state, obj, 0.1);
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
  }
}

TEST(Toy, ConvergesToKktPoint) {
  for (double c : {0.0, 1.0, 10.0}) {
    ToyResult r = solve_toy(c, 5000);
    EXPECT_NEAR(r.x, 0.0, 1e-3) << "c=" << c;
    EXPECT_NEAR(r.lambda, 2.0, 1e-3) << "c=" << c;
  }
}

TEST(Toy, InequalityActiveAtOptimum) {
  // minimize (x - 1)^2 subject to x - 0.5 <= 0; optimum x = 0.5, mu = 1.
  MultiplierState state;
  const auto id = state.register_constraint("x<=0.5", Relation::Inequality);
  Tensor x = Tensor::scalar(0.0);
  Sgd opt(0.05);
  for (int i = 0; i < 20000; ++i) {
    Tape tape;
    ParameterBinding params(tape);
    Var xv = params.bind("x", x);
    std::vector<ConstraintTerm> terms{{id, xv - 0.5}};
    MdmmObjective obj = total_loss(square(xv - 1.0), terms, state);
    tape.backward(obj.loss);
    mdmm_step(opt, params, state, obj);
  }
  EXPECT_NEAR(x.item(), 0.5, 1e-2);
  EXPECT_NEAR(state.multiplier(id), 1.0, 2e-2);
}

double solve_inactive(InequalityDamping damping) {
  // minimize (x - 1)^2 subject to x - 2 <= 0.
  MdmmConfig cfg;
  cfg.inequality_damping = damping;
  MultiplierState state(cfg);
  const auto id = state.register_constraint("x<=2", Relation::Inequality);
  Tensor x = Tensor::scalar(0.0);
  Sgd opt(0.05);
  for (int i = 0; i < 20000; ++i) {
    Tape tape;
    ParameterBinding params(tape);
    Var xv = params.bind("x", x);
    std::vector<ConstraintTerm> terms{{id, xv - 2.0}};
    MdmmObjective obj = total_loss(square(xv - 1.0), terms, state);
    tape.backward(obj.loss);
    mdmm_step(opt, params, state, obj);
  }
  return x.item();
}

TEST(Toy, InactiveInequalityWithSlackResidualDamping) {
  EXPECT_NEAR(solve_inactive(InequalityDamping::SlackResidual), 1.0, 1e-3);
}

TEST(Toy, InactiveInequalityWithConstraintDampingIsPulledToBoundary) {
  // Damping on g alone: mu -> 0 and 2(x - 1) + c2 (x - 2) = 0, so x = 4/3 with c2 = 1.
  EXPECT_NEAR(solve_inactive(InequalityDamping::Constraint), 4.0 / 3.0, 1e-3);
}
