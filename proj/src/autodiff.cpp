#include "benn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace benn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// --- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
}

Tensor Tensor::vector(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor(Shape{rows, cols}, std::move(v));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

// --- Var / Tape -------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

void Tape::check(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw Error("variable does not belong to this tape");
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"const", std::move(value), {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (swept_) throw Error("cannot record on a tape that has already been swept");
  Node node{op, std::move(value), {}, nullptr, false};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check(in);
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id_].requires_grad;
}

std::string_view Tape::op(Var v) const {
  check(v);
  return nodes_[v.id_].op;
}

const Tensor& Tape::grad(Var v) const {
  check(v);
  if (grads_.size() < nodes_.size()) {
    grads_.resize(nodes_.size());
    live_.resize(nodes_.size(), false);
  }
  if (!live_[v.id_]) {
    grads_[v.id_] = Tensor(nodes_[v.id_].value.shape());
    live_[v.id_] = true;
  }
  return grads_[v.id_];
}

void Tape::backward(Var root) {
  check(root);
  if (swept_) throw Error("tape has already been swept");
  if (nodes_[root.id_].value.numel() != 1)
    throw ShapeError("backward() needs a scalar root, got " + shape_string(nodes_[root.id_].value.shape()));
  swept_ = true;

  for (std::size_t i = 0; i <= root.id_; ++i) {
    if (!nodes_[i].value.all_finite())
      throw NonFiniteError(std::string(nodes_[i].op), "non-finite value produced by op '" +
                                                          std::string(nodes_[i].op) + "' (node " +
                                                          std::to_string(i) + ")");
  }

  grads_.assign(nodes_.size(), Tensor(Shape{0}));
  live_.assign(nodes_.size(), false);
  auto& live = live_;
  grads_[root.id_] = Tensor(nodes_[root.id_].value.shape(), 1.0);
  live[root.id_] = true;

  std::vector<Tensor*> buffers;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!live[i] || !node.backward) continue;
    buffers.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!live[in]) {
        grads_[in] = Tensor(nodes_[in].value.shape());
        live[in] = true;
      }
      buffers[k] = &grads_[in];
    }
    node.backward(grads_[i], buffers);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (buffers[k] && !buffers[k]->all_finite())
        throw NonFiniteError(std::string(node.op), "non-finite gradient in reverse sweep through op '" +
                                                       std::string(node.op) + "' (node " + std::to_string(i) +
                                                       ")");
    }
  }
}

// --- elementwise ------------------------------------------------------------

namespace {

template <class F, class DF>
Var unary(std::string_view name, Var a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  return a.tape().record(name, std::move(y), {a}, [a, df](const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& xv = a.value();
    Tensor& ga = *gin[0];
    for (std::size_t i = 0; i < xv.numel(); ++i) ga[i] += g[i] * df(xv[i]);
  });
}

Shape broadcast_shape(std::string_view name, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.is_scalar()) return a.shape();
  if (a.is_scalar()) return b.shape();
  throw ShapeError(std::string(name) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

// F(x, y) -> value; DA/DB(x, y) -> partials.
template <class F, class DA, class DB>
Var binary(std::string_view name, Var a, Var b, F f, DA da, DB db) {
  if (&a.tape() != &b.tape()) throw Error(std::string(name) + ": operands live on different tapes");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(broadcast_shape(name, x, y));
  const std::size_t n = out.numel();
  const std::size_t sx = x.numel() == n ? 1 : 0;
  const std::size_t sy = y.numel() == n ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i * sx], y[i * sy]);
  return a.tape().record(name, std::move(out), {a, b},
                         [a, b, da, db, sx, sy](const Tensor& g, std::span<Tensor* const> gin) {
                           const Tensor& xv = a.value();
                           const Tensor& yv = b.value();
                           for (std::size_t i = 0; i < g.numel(); ++i) {
                             const double xi = xv[i * sx];
                             const double yi = yv[i * sy];
                             if (gin[0]) (*gin[0])[i * sx] += g[i] * da(xi, yi);
                             if (gin[1]) (*gin[1])[i * sy] += g[i] * db(xi, yi);
                           }
                         });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

Var add(Var a, Var b) {
  return binary("add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
                [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
                [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
                [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  for (double d : b.value().data())
    if (d == 0.0) throw DomainError("div: division by zero");
  return binary("div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
                [](double x, double y) { return -x / (y * y); });
}

Var neg(Var a) {
  return unary("neg", a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw DomainError("log: non-positive operand " + std::to_string(v));
  return unary("log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var sin(Var a) {
  return unary("sin", a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
  return unary(
      "gelu", a, [](double x) { return x * normal_cdf(x); },
      [](double x) { return normal_cdf(x) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x); });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, sigmoid_value, [](double x) {
    const double s = sigmoid_value(x);
    return s * (1.0 - s);
  });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

// Subgradient 0 at the kink.
Var abs(Var a) {
  return unary("abs", a, [](double x) { return std::fabs(x); },
               [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var softplus(Var a) { return unary("softplus", a, softplus_value, sigmoid_value); }

Var scale(Var a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Var shift(Var a, double offset) {
  return unary("shift", a, [offset](double x) { return x + offset; }, [](double) { return 1.0; });
}

// --- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0))
    throw ShapeError("matmul: cannot multiply " + shape_string(x.shape()) + " by " + shape_string(y.shape()));
  const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
  Tensor out(Shape{m, n});
  const double* xp = x.data().data();
  const double* yp = y.data().data();
  double* op = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = op + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = xp[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = yp + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yrow[j];
    }
  }
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g, std::span<Tensor* const> gin) {
    const double* gp = g.data().data();
    if (gin[0]) {  // dA = G * B^T
      const double* yv = b.value().data().data();
      double* ga = gin[0]->data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* yrow = yv + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * yrow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (gin[1]) {  // dB = A^T * G
      const double* xv = a.value().data().data();
      double* gb = gin[1]->data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double xi = xv[i * k + p];
          if (xi == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += xi * grow[j];
        }
      }
    }
  });
}

// --- reductions -------------------------------------------------------------

Var reduce(Reduce op, Var a) {
  const Tensor& x = a.value();
  if (x.numel() == 0) throw ShapeError("reduce: empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double factor = op == Reduce::Mean ? 1.0 / static_cast<double>(x.numel()) : 1.0;
  return a.tape().record(op == Reduce::Mean ? "mean" : "sum", Tensor::scalar(s * factor), {a},
                         [factor](const Tensor& g, std::span<Tensor* const> gin) {
                           const double gv = g[0] * factor;
                           for (double& v : gin[0]->data()) v += gv;
                         });
}

Var reduce(Reduce op, Var a, std::size_t axis) {
  const Tensor& x = a.value();
  if (x.numel() == 0) throw ShapeError("reduce: empty tensor");
  if (axis >= x.rank())
    throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for " + shape_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t len = x.dim(axis);
  Shape out_shape;
  for (std::size_t d = 0; d < x.rank(); ++d)
    if (d != axis) out_shape.push_back(x.dim(d));
  const double factor = op == Reduce::Mean ? 1.0 / static_cast<double>(len) : 1.0;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * len + l) * inner + i];
  for (double& v : out.data()) v *= factor;
  return a.tape().record(op == Reduce::Mean ? "mean" : "sum", std::move(out), {a},
                         [outer, len, inner, factor](const Tensor& g, std::span<Tensor* const> gin) {
                           Tensor& ga = *gin[0];
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t l = 0; l < len; ++l)
                               for (std::size_t i = 0; i < inner; ++i)
                                 ga[(o * len + l) * inner + i] += g[o * inner + i] * factor;
                         });
}

// --- views (copying) ----------------------------------------------------------

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a}, [](const Tensor& g, std::span<Tensor* const> gin) {
    Tensor& ga = *gin[0];
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

Var rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (x.rank() != 2 || begin > end || end > x.dim(0))
    throw ShapeError("rows: bad range for " + shape_string(x.shape()));
  const std::size_t n = x.dim(1);
  Tensor out(Shape{end - begin, n});
  std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
            x.data().begin() + static_cast<std::ptrdiff_t>(end * n), out.data().begin());
  return a.tape().record("rows", std::move(out), {a}, [begin, n](const Tensor& g, std::span<Tensor* const> gin) {
    Tensor& ga = *gin[0];
    for (std::size_t i = 0; i < g.numel(); ++i) ga[begin * n + i] += g[i];
  });
}

Var cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (x.rank() != 2 || begin > end || end > x.dim(1))
    throw ShapeError("cols: bad range for " + shape_string(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1), w = end - begin;
  Tensor out(Shape{m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = x.at(i, begin + j);
  return a.tape().record("cols", std::move(out), {a}, [m, n, w, begin](const Tensor& g, std::span<Tensor* const> gin) {
    Tensor& ga = *gin[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += g[i * w + j];
  });
}

Var column(Var a, std::size_t c) {
  const std::size_t m = a.value().rank() == 2 ? a.value().dim(0) : 0;
  return reshape(cols(a, c, c + 1), Shape{m});
}

}  // namespace benn
