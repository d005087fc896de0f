#include "benn/optim.hpp"

#include <cmath>

namespace benn {

Var ParameterBinding::bind(std::string name, Tensor& param) {
  Var v = tape_->variable(param);
  entries_.push_back(Entry{std::move(name), &param, v});
  return v;
}

void ParameterBinding::check_gradients() const {
  for (const Entry& e : entries_) {
    if (!tape_->grad(e.var).all_finite())
      throw NonFiniteError(e.name, "non-finite gradient for parameter '" + e.name + "'");
  }
}

void Sgd::step(const ParameterBinding& params) {
  params.check_gradients();
  for (const auto& e : params.entries()) {
    const Tensor& g = params.tape().grad(e.var);
    for (std::size_t i = 0; i < g.numel(); ++i) (*e.value)[i] -= lr_ * g[i];
  }
}

void Adam::step(const ParameterBinding& params) {
  params.check_gradients();
  const auto& entries = params.entries();
  if (m_.empty()) {
    for (const auto& e : entries) {
      m_.emplace_back(e.value->numel(), 0.0);
      v_.emplace_back(e.value->numel(), 0.0);
    }
  }
  if (m_.size() != entries.size()) throw Error("Adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Tensor& g = params.tape().grad(entries[k].var);
    Tensor& p = *entries[k].value;
    if (m_[k].size() != p.numel()) throw Error("Adam: parameter '" + entries[k].name + "' changed size");
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

}  // namespace benn
