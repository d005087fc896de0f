#pragma once

// Central finite-difference oracle for reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "benn/autodiff.hpp"

namespace benn::testing {

using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor), maximised over
/// every coordinate of every input.
inline GradCheck check_gradients(const GraphFn& f, const std::vector<Tensor>& inputs, double h = 1e-5,
                                 double floor = 1e-3) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  Var root = f(tape, vars);
  tape.backward(root);

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t;
    std::vector<Var> vs;
    for (const Tensor& x : xs) vs.push_back(t.constant(x));
    return f(t, vs).item();
  };

  GradCheck out;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& g = tape.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + h;
      const double up = eval(probe);
      probe[k][i] = x0 - h;
      const double down = eval(probe);
      probe[k][i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(g[i] - numeric) / denom);
      out.max_abs_grad = std::max(out.max_abs_grad, std::abs(g[i]));
    }
  }
  return out;
}

}  // namespace benn::testing
