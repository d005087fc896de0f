#include "benn/bayes_nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace benn {

using nlohmann::json;

std::string_view activation_name(Activation a) { return a == Activation::Gelu ? "gelu" : "relu"; }

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "gelu") return Activation::Gelu;
  throw Error("unknown activation '" + std::string(name) + "'");
}

Var activate(Activation a, Var x) { return a == Activation::Gelu ? gelu(x) : relu(x); }

VariationalParameter::VariationalParameter(Tensor mu_, Tensor log_var_)
    : mu(std::move(mu_)), log_var(std::move(log_var_)) {
  if (mu.shape() != log_var.shape())
    throw ShapeError("variational parameter: mu " + shape_string(mu.shape()) + " vs log_var " +
                     shape_string(log_var.shape()));
}

void VariationalParameter::clamp_log_var() {
  for (double& v : log_var.data()) v = std::clamp(v, kLogVarMin, kLogVarMax);
}

Var sample_weights(Var mu, Var log_var, const Tensor& eps) {
  const Tensor& m = mu.value();
  const Tensor& lv = log_var.value();
  if (m.shape() != lv.shape() || eps.shape() != m.shape())
    throw ShapeError("sample_weights: shape mismatch " + shape_string(m.shape()) + ", " +
                     shape_string(lv.shape()) + ", " + shape_string(eps.shape()));
  Tensor w(m.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = m[i] + eps[i] * std::exp(0.5 * lv[i]);
  return mu.tape().record("reparameterize", std::move(w), {mu, log_var},
                          [log_var, eps](const Tensor& g, std::span<Tensor* const> gin) {
                            if (gin[0])
                              for (std::size_t i = 0; i < g.numel(); ++i) (*gin[0])[i] += g[i];
                            if (gin[1]) {
                              const Tensor& lvv = log_var.value();
                              for (std::size_t i = 0; i < g.numel(); ++i)
                                (*gin[1])[i] += g[i] * eps[i] * 0.5 * std::exp(0.5 * lvv[i]);
                            }
                          });
}

Tensor sample_weights(const VariationalParameter& p, Rng& rng) {
  Tensor eps = randn(p.mu.shape(), rng);
  Tensor w(p.mu.shape());
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = p.mu[i] + eps[i] * std::exp(0.5 * p.log_var[i]);
  return w;
}

Tensor as_column(const std::vector<double>& xs) { return Tensor(Shape{xs.size(), 1}, xs); }

// --- NetworkDraw --------------------------------------------------------------

NetworkDraw::NetworkDraw(std::vector<Var> weights, std::vector<Var> biases, Activation activation)
    : weights_(std::move(weights)), biases_(std::move(biases)), activation_(activation) {
  if (weights_.empty() || weights_.size() != biases_.size()) throw Error("network draw: malformed layer list");
}

NetworkOutput NetworkDraw::forward(Var x) const {
  const Tensor& xv = x.value();
  const std::size_t in = weights_.front().value().dim(0);
  if (xv.rank() != 2 || xv.dim(1) != in)
    throw ShapeError("forward: expected input [batch x " + std::to_string(in) + "], got " +
                     shape_string(xv.shape()));
  const std::size_t batch = xv.dim(0);
  Tape& tape = x.tape();
  Var ones = tape.constant(Tensor(Shape{batch, 1}, 1.0));
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = matmul(h, weights_[l]) + matmul(ones, biases_[l]);
    if (l + 1 < weights_.size()) h = activate(activation_, h);
  }
  return NetworkOutput{column(h, 0), column(h, 1)};
}

NetworkOutput NetworkDraw::forward(const Tensor& x) const { return forward(tape().constant(x)); }

// --- BayesianMLP -------------------------------------------------------------

BayesianMLP::BayesianMLP(std::vector<std::size_t> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 2) throw Error("BayesianMLP needs at least an input and an output layer");
  if (widths_.back() != 2) throw Error("BayesianMLP output layer must have 2 units (mean, log-noise)");
  for (std::size_t w : widths_)
    if (w == 0) throw Error("BayesianMLP layer widths must be positive");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t fi = widths_[l], fo = widths_[l + 1];
    layers_.push_back(VariationalLayer{
        VariationalParameter(Tensor(Shape{fi, fo}), Tensor(Shape{fi, fo}, kInitLogVar)),
        VariationalParameter(Tensor(Shape{1, fo}), Tensor(Shape{1, fo}, kInitLogVar))});
  }
}

BayesianMLP BayesianMLP::initialized(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                     Activation activation, std::uint64_t seed) {
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(2);
  BayesianMLP net(widths, activation);
  net.seed_ = seed;
  Rng rng(seed);
  for (auto& layer : net.layers_) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(layer.weight.mu.dim(0)));
    layer.weight.mu = randn(layer.weight.mu.shape(), rng, sd);
    layer.bias.mu = randn(layer.bias.mu.shape(), rng, sd);
  }
  return net;
}

std::size_t BayesianMLP::num_weights() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

BoundNetwork BayesianMLP::bind(ParameterBinding& params) {
  BoundNetwork b;
  b.activation = activation_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    const std::string p = "layer" + std::to_string(l);
    b.layers.push_back({params.bind(p + ".weight.mu", layer.weight.mu),
                        params.bind(p + ".weight.log_var", layer.weight.log_var),
                        params.bind(p + ".bias.mu", layer.bias.mu),
                        params.bind(p + ".bias.log_var", layer.bias.log_var)});
  }
  return b;
}

BoundNetwork BayesianMLP::bind_constant(Tape& tape) const {
  BoundNetwork b;
  b.activation = activation_;
  for (const auto& layer : layers_) {
    b.layers.push_back({tape.constant(layer.weight.mu), tape.constant(layer.weight.log_var),
                        tape.constant(layer.bias.mu), tape.constant(layer.bias.log_var)});
  }
  return b;
}

NetworkDraw BayesianMLP::draw(const BoundNetwork& bound, Rng& rng) const {
  std::vector<Var> w, b;
  for (const auto& l : bound.layers) {
    w.push_back(sample_weights(l.w_mu, l.w_log_var, randn(l.w_mu.shape(), rng)));
    b.push_back(sample_weights(l.b_mu, l.b_log_var, randn(l.b_mu.shape(), rng)));
  }
  return NetworkDraw(std::move(w), std::move(b), bound.activation);
}

NetworkDraw BayesianMLP::draw_frozen(const BoundNetwork& bound) const {
  std::vector<Var> w, b;
  for (const auto& l : bound.layers) {
    w.push_back(l.w_mu);
    b.push_back(l.b_mu);
  }
  return NetworkDraw(std::move(w), std::move(b), bound.activation);
}

void BayesianMLP::clamp_log_var() {
  for (auto& l : layers_) {
    l.weight.clamp_log_var();
    l.bias.clamp_log_var();
  }
}

// Checkpoint: {"layer_sizes", "activation", "seed", "layers": [{"weight_mu", ...}]}.
std::string BayesianMLP::to_json() const {
  json j;
  j["layer_sizes"] = widths_;
  j["activation"] = std::string(activation_name(activation_));
  j["seed"] = seed_;
  j["layers"] = json::array();
  for (const auto& l : layers_) {
    j["layers"].push_back({{"weight_mu", l.weight.mu.values()},
                           {"weight_log_var", l.weight.log_var.values()},
                           {"bias_mu", l.bias.mu.values()},
                           {"bias_log_var", l.bias.log_var.values()}});
  }
  return j.dump();
}

BayesianMLP BayesianMLP::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
  try {
    BayesianMLP net(j.at("layer_sizes").get<std::vector<std::size_t>>(),
                    parse_activation(j.at("activation").get<std::string>()));
    net.seed_ = j.value("seed", std::uint64_t{0});
    const auto& layers = j.at("layers");
    if (layers.size() != net.layers_.size()) throw Error("checkpoint: layer count does not match layer_sizes");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& layer = net.layers_[l];
      auto fill = [&](Tensor& t, const char* key) {
        auto v = layers[l].at(key).get<std::vector<double>>();
        t = Tensor(t.shape(), std::move(v));
      };
      fill(layer.weight.mu, "weight_mu");
      fill(layer.weight.log_var, "weight_log_var");
      fill(layer.bias.mu, "bias_mu");
      fill(layer.bias.log_var, "bias_log_var");
    }
    return net;
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
}

void BayesianMLP::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json() << '\n';
}

BayesianMLP BayesianMLP::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// --- losses -------------------------------------------------------------------

Var gaussian_nll(Var y, Var y_hat, Var sigma_log) {
  const std::size_t n = y.value().numel();
  if (n == 0) throw ShapeError("gaussian_nll: empty batch");
  if (y_hat.value().numel() != n || sigma_log.value().numel() != n)
    throw ShapeError("gaussian_nll: length mismatch");
  Var sq = square(y - y_hat);
  Var terms = scale(sq * exp(neg(sigma_log)), 0.5) + scale(sigma_log, 0.5);
  return mean(terms);
}

namespace {
const double kHalfLog2PiE = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
}

Var entropy_kl_term(const BoundNetwork& bound) {
  if (bound.layers.empty()) throw Error("entropy_kl_term: empty network");
  Tape& tape = bound.layers.front().w_log_var.tape();
  std::size_t count = 0;
  Var total = tape.constant(Tensor::scalar(0.0));
  for (const auto& l : bound.layers) {
    count += l.w_log_var.value().numel() + l.b_log_var.value().numel();
    total = total + sum(l.w_log_var) + sum(l.b_log_var);
  }
  // -(count * log(2 pi e)/2 + sum(log_var)/2)
  return shift(scale(total, -0.5), -kHalfLog2PiE * static_cast<double>(count));
}

double entropy_kl_term(const BayesianMLP& net) {
  double s = 0.0;
  std::size_t count = 0;
  for (const auto& l : net.layers()) {
    for (double v : l.weight.log_var.data()) s += v;
    for (double v : l.bias.log_var.data()) s += v;
    count += l.weight.size() + l.bias.size();
  }
  return -0.5 * s - kHalfLog2PiE * static_cast<double>(count);
}

ElboEstimate elbo_loss(const BayesianMLP& net, const BoundNetwork& bound, const Tensor& x, const Tensor& y,
                       std::size_t draws, double kl_weight, Rng& rng) {
  if (draws == 0) throw Error("elbo_loss: draws must be >= 1");
  if (y.numel() == 0) throw ShapeError("elbo_loss: empty dataset");
  if (x.rank() != 2 || x.dim(0) != y.numel()) throw ShapeError("elbo_loss: x and y disagree on batch size");
  Tape& tape = bound.layers.front().w_mu.tape();
  Var xv = tape.constant(x);
  Var yv = tape.constant(y.reshaped(Shape{y.numel()}));
  ElboEstimate est;
  Var nll_total;
  for (std::size_t d = 0; d < draws; ++d) {
    est.draws.push_back(net.draw(bound, rng));
    NetworkOutput out = est.draws.back().forward(xv);
    Var nll = gaussian_nll(yv, out.mean, out.log_noise);
    nll_total = d == 0 ? nll : nll_total + nll;
  }
  est.nll = draws == 1 ? nll_total : scale(nll_total, 1.0 / static_cast<double>(draws));
  est.kl = entropy_kl_term(bound);
  est.loss = est.nll + scale(est.kl, kl_weight);
  return est;
}

PredictiveSummary predict(const BayesianMLP& net, const Tensor& x, std::size_t draws, std::uint64_t seed) {
  if (draws < 2) throw Error("predict: draws must be >= 2");
  if (x.rank() != 2) throw ShapeError("predict: x must be [N x d_in]");
  const std::size_t n = x.dim(0);
  PredictiveSummary s;
  s.draws = draws;
  s.mean.assign(n, 0.0);
  s.epistemic_var.assign(n, 0.0);
  s.aleatoric_var.assign(n, 0.0);
  std::vector<double> m2(n, 0.0);
  Rng rng(seed);
  // Welford accumulation over draws.
  for (std::size_t d = 0; d < draws; ++d) {
    Tape tape;
    BoundNetwork bound = net.bind_constant(tape);
    NetworkOutput out = net.draw(bound, rng).forward(x);
    const Tensor& yh = out.mean.value();
    const Tensor& ln = out.log_noise.value();
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = yh[i] - s.mean[i];
      s.mean[i] += delta / static_cast<double>(d + 1);
      m2[i] += delta * (yh[i] - s.mean[i]);
      s.aleatoric_var[i] += std::exp(ln[i]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    s.epistemic_var[i] = m2[i] / static_cast<double>(draws - 1);
    s.aleatoric_var[i] /= static_cast<double>(draws);
  }
  return s;
}

}  // namespace benn
