#include "benn/constraints.hpp"

#include <cmath>

namespace benn {

std::string_view kind_name(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::Value: return "value";
    case ConstraintKind::Derivative: return "derivative";
    case ConstraintKind::Variance: return "variance";
    case ConstraintKind::Bound: return "bound";
    case ConstraintKind::Tpcf: return "tpcf";
    case ConstraintKind::Porosity: return "porosity";
  }
  return "?";
}

ConstraintKind parse_kind(std::string_view name) {
  for (auto k : {ConstraintKind::Value, ConstraintKind::Derivative, ConstraintKind::Variance, ConstraintKind::Bound,
                 ConstraintKind::Tpcf, ConstraintKind::Porosity})
    if (kind_name(k) == name) return k;
  throw Error("unknown constraint kind '" + std::string(name) + "'");
}

std::string_view relation_name(Relation r) { return r == Relation::Equality ? "equality" : "inequality"; }

Relation parse_relation(std::string_view name) {
  if (name == "equality") return Relation::Equality;
  if (name == "inequality") return Relation::Inequality;
  throw Error("unknown relation '" + std::string(name) + "'");
}

std::vector<double> Interval::points() const {
  std::size_t n = samples;
  if (n == 0) n = static_cast<std::size_t>(std::max(2.0, std::round((hi - lo) * ConstraintSpec::kPointsPerUnit)));
  if (n == 1) return {0.5 * (lo + hi)};
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return p;
}

std::vector<double> ConstraintSpec::points() const {
  std::vector<double> p = locations;
  if (interval) {
    auto extra = interval->points();
    p.insert(p.end(), extra.begin(), extra.end());
  }
  return p;
}

void ConstraintSpec::validate() const {
  const std::string who = "constraint '" + name + "'";
  if (kind == ConstraintKind::Bound && lower > upper) throw Error(who + ": bound lower > upper");
  if (kind == ConstraintKind::Derivative && !(epsilon > 0.0)) throw Error(who + ": epsilon must be > 0");
  if (kind == ConstraintKind::Variance && target < 0.0) throw Error(who + ": target variance must be >= 0");
  if (interval && !(interval->lo < interval->hi)) throw Error(who + ": interval needs lo < hi");
  if (!is_functional() && points().empty()) throw Error(who + ": no locations");
  if (kind == ConstraintKind::Tpcf) {
    if (target_curve.empty()) throw Error(who + ": missing target curve");
    binarize.validate();
  }
  if (damping && *damping < 0.0) throw Error(who + ": damping must be >= 0");
}

namespace {

void require_kind(const ConstraintSpec& spec, ConstraintKind k) {
  if (spec.kind != k)
    throw Error("constraint '" + spec.name + "': expected kind " + std::string(kind_name(k)) + ", got " +
                std::string(kind_name(spec.kind)));
  spec.validate();
}

Tape& tape_of(std::span<const NetworkDraw> draws) {
  if (draws.empty()) throw Error("constraint evaluation needs at least one draw");
  return draws.front().tape();
}

// Mean over draws of one network head at the given inputs.
Var expected_head(std::span<const NetworkDraw> draws, const std::vector<double>& xs, bool log_noise_head) {
  Tape& tape = tape_of(draws);
  Var x = tape.constant(as_column(xs));
  Var acc;
  for (std::size_t d = 0; d < draws.size(); ++d) {
    NetworkOutput out = draws[d].forward(x);
    Var head = log_noise_head ? exp(out.log_noise) : out.mean;
    acc = d == 0 ? head : acc + head;
  }
  return draws.size() == 1 ? acc : scale(acc, 1.0 / static_cast<double>(draws.size()));
}

// Single point: the signed residual. Several points: mean absolute residual.
ConstraintResidual aggregate(Var per_point) {
  ConstraintResidual r;
  const Tensor& pv = per_point.value();
  r.per_point.assign(pv.data().begin(), pv.data().end());
  r.value_var = pv.numel() == 1 ? sum(per_point) : mean(abs(per_point));
  r.value = r.value_var.item();
  return r;
}

}  // namespace

ConstraintResidual eval_value(std::span<const NetworkDraw> draws, const ConstraintSpec& spec) {
  require_kind(spec, ConstraintKind::Value);
  return aggregate(shift(expected_head(draws, spec.points(), false), -spec.target));
}

ConstraintResidual eval_derivative(std::span<const NetworkDraw> draws, const ConstraintSpec& spec) {
  require_kind(spec, ConstraintKind::Derivative);
  const std::vector<double> pts = spec.points();
  std::vector<double> xs;
  xs.reserve(2 * pts.size());
  for (double p : pts) {
    xs.push_back(p - spec.epsilon);
    xs.push_back(p + spec.epsilon);
  }
  Var e = reshape(expected_head(draws, xs, false), Shape{pts.size(), 2});
  Var slope = scale(column(e, 1) - column(e, 0), 1.0 / (2.0 * spec.epsilon));
  return aggregate(shift(slope, -spec.target));
}

ConstraintResidual eval_variance(std::span<const NetworkDraw> draws, const ConstraintSpec& spec) {
  require_kind(spec, ConstraintKind::Variance);
  return aggregate(shift(expected_head(draws, spec.points(), true), -spec.target));
}

ConstraintResidual eval_bound(std::span<const NetworkDraw> draws, const ConstraintSpec& spec) {
  require_kind(spec, ConstraintKind::Bound);
  Var f = expected_head(draws, spec.points(), false);
  Var below = relu(shift(scale(f, -1.0), spec.lower));  // lower - f where f < lower
  Var above = relu(shift(f, -spec.upper));             // f - upper where f > upper
  Var dev = below - above;
  ConstraintResidual r;
  const Tensor& dv = dev.value();
  r.per_point.assign(dv.data().begin(), dv.data().end());
  r.value_var = mean(abs(dev));
  r.value = r.value_var.item();
  return r;
}

ConstraintResidual evaluate(std::span<const NetworkDraw> draws, const ConstraintSpec& spec) {
  switch (spec.kind) {
    case ConstraintKind::Value: return eval_value(draws, spec);
    case ConstraintKind::Derivative: return eval_derivative(draws, spec);
    case ConstraintKind::Variance: return eval_variance(draws, spec);
    case ConstraintKind::Bound: return eval_bound(draws, spec);
    default: break;
  }
  throw Error("constraint '" + spec.name + "': kind " + std::string(kind_name(spec.kind)) +
              " is evaluated on images, not on a network");
}

ConstraintResidual evaluate(const BayesianMLP& net, const ConstraintSpec& spec, std::size_t draws,
                            std::uint64_t seed) {
  if (draws == 0) throw Error("evaluate: draws must be >= 1");
  Tape tape;
  BoundNetwork bound = net.bind_constant(tape);
  Rng rng(seed);
  std::vector<NetworkDraw> ds;
  ds.reserve(draws);
  for (std::size_t d = 0; d < draws; ++d) ds.push_back(net.draw(bound, rng));
  ConstraintResidual r = evaluate(ds, spec);
  r.value_var = Var{};
  return r;
}

// --- functional constraints -------------------------------------------------

namespace {

std::size_t image_side(const Shape& s, std::size_t& count) {
  if (s.size() == 3 && s[1] == s[2]) {
    count = s[0];
    return s[1];
  }
  if (s.size() == 2) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(s[1]))));
    if (side * side == s[1]) {
      count = s[0];
      return side;
    }
  }
  throw ShapeError("eval_functional: expected [n x H x W] or [n x H*W] square images, got " + shape_string(s));
}

void require_functional(const ConstraintSpec& spec, std::size_t side) {
  if (!spec.is_functional())
    throw Error("constraint '" + spec.name + "': kind " + std::string(kind_name(spec.kind)) + " is not functional");
  spec.validate();
  if (spec.kind == ConstraintKind::Tpcf && spec.target_curve.size() != side / 2 + 1)
    throw ShapeError("constraint '" + spec.name + "': target curve has " + std::to_string(spec.target_curve.size()) +
                     " radii, images need " + std::to_string(side / 2 + 1));
}

}  // namespace

ConstraintResidual eval_functional(Var images, const ConstraintSpec& spec) {
  std::size_t n = 0;
  const std::size_t side = image_side(images.shape(), n);
  require_functional(spec, side);
  if (n == 0) throw ShapeError("eval_functional: empty batch");
  for (double v : images.value().data())
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("eval_functional: pixel outside [0,1]");
  Tape& tape = images.tape();
  Var flat = reshape(images, Shape{n, side * side});
  Var target = spec.kind == ConstraintKind::Tpcf ? tape.constant(Tensor::vector(spec.target_curve)) : Var{};
  ConstraintResidual r;
  Var acc;
  for (std::size_t i = 0; i < n; ++i) {
    Var img = reshape(rows(flat, i, i + 1), Shape{side, side});
    Var term = spec.kind == ConstraintKind::Tpcf ? mean(abs(tpcf(img, spec.binarize) - target))
                                                 : shift(porosity(img), -spec.target);
    r.per_point.push_back(term.item());
    acc = i == 0 ? term : acc + term;
  }
  r.value_var = n == 1 ? acc : scale(acc, 1.0 / static_cast<double>(n));
  r.value = r.value_var.item();
  return r;
}

ConstraintResidual eval_functional(std::span<const Tensor> images, const ConstraintSpec& spec) {
  if (images.empty()) throw ShapeError("eval_functional: empty batch");
  ConstraintResidual r;
  double total = 0.0;
  for (const Tensor& img : images) {
    if (img.rank() != 2 || img.dim(0) != img.dim(1)) throw ShapeError("eval_functional: images must be square");
    require_functional(spec, img.dim(0));
    double term;
    if (spec.kind == ConstraintKind::Tpcf) {
      const TpcfCurve c = tpcf(img, spec.binarize, !is_power_of_two(img.dim(0)));
      term = 0.0;
      for (std::size_t k = 0; k < c.values.size(); ++k) term += std::fabs(c.values[k] - spec.target_curve[k]);
      term /= static_cast<double>(c.values.size());
    } else {
      term = porosity(img) - spec.target;
    }
    r.per_point.push_back(term);
    total += term;
  }
  r.value = total / static_cast<double>(images.size());
  return r;
}

}  // namespace benn
