#pragma once

#include <string>
#include <vector>

#include "benn/autodiff.hpp"

namespace benn {

/// Binds persistent parameter tensors to the leaves of one step's tape.
/// Binding order must be the same every step; optimizers key their state on it.
class ParameterBinding {
 public:
  struct Entry {
    std::string name;
    Tensor* value;
    Var var;
  };

  explicit ParameterBinding(Tape& tape) : tape_(&tape) {}

  Var bind(std::string name, Tensor& param);

  Tape& tape() const { return *tape_; }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Throws NonFiniteError naming the first parameter whose gradient is not finite.
  void check_gradients() const;

 private:
  Tape* tape_;
  std::vector<Entry> entries_;
};

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(const ParameterBinding& params);
  double lr() const { return lr_; }

 private:
  double lr_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(const ParameterBinding& params);
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace benn
