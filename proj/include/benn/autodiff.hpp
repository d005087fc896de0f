#pragma once

// Reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tape records every operation applied to its Vars in execution order, so
// node inputs always precede the node itself and the reverse sweep is a plain
// backwards walk. Tapes are built fresh for every training step.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "benn/error.hpp"

namespace benn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major f64 array.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double item() const;
  Tensor reshaped(Shape shape) const;
  void fill(double v);
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called during the reverse sweep with the node's output gradient and one
  /// accumulation buffer per input (nullptr where the input needs no gradient).
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value);
  Var constant(Tensor value);

  /// Appends an op node. The backward function is dropped when no input
  /// requires a gradient.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar root. A tape can be swept once.
  void backward(Var root);

  const Tensor& value(Var v) const;
  /// Gradient accumulated by backward(); zeros if the node was unreachable.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  std::string_view op(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool swept() const noexcept { return swept_; }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check(Var v) const;

  // deque: appending keeps references returned by value()/grad() valid.
  std::deque<Node> nodes_;
  mutable std::deque<Tensor> grads_;
  mutable std::vector<bool> live_;
  bool swept_ = false;
};

// Elementwise ops. Binary ops accept equal shapes or a single-element operand
// on either side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var sin(Var a);
Var relu(Var a);
Var gelu(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var abs(Var a);
Var softplus(Var a);

Var scale(Var a, double factor);
Var shift(Var a, double offset);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double s) { return shift(a, s); }
inline Var operator-(Var a, double s) { return shift(a, -s); }

Var matmul(Var a, Var b);

enum class Reduce { Sum, Mean };
/// Full reduction to a scalar, or along one axis (that axis is removed).
Var reduce(Reduce op, Var a);
Var reduce(Reduce op, Var a, std::size_t axis);
inline Var sum(Var a) { return reduce(Reduce::Sum, a); }
inline Var mean(Var a) { return reduce(Reduce::Mean, a); }

Var reshape(Var a, Shape shape);
/// Rows [begin, end) of a rank-2 tensor.
Var rows(Var a, std::size_t begin, std::size_t end);
/// Columns [begin, end) of a rank-2 tensor.
Var cols(Var a, std::size_t begin, std::size_t end);
/// Column `c` of a rank-2 tensor as a rank-1 tensor.
Var column(Var a, std::size_t c);

/// Standard normal CDF, exact via erf.
double normal_cdf(double x);

}  // namespace benn
