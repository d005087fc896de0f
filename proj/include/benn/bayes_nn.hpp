#pragma once

// Mean-field Gaussian variational MLP with a two-channel head
// (predicted mean, log-noise) and the uniform-prior KL term.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "benn/autodiff.hpp"
#include "benn/optim.hpp"
#include "benn/random.hpp"

namespace benn {

enum class Activation { Relu, Gelu };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);
Var activate(Activation a, Var x);

/// Gaussian posterior over one weight tensor.
struct VariationalParameter {
  static constexpr double kLogVarMin = -20.0;
  static constexpr double kLogVarMax = 5.0;

  Tensor mu;
  Tensor log_var;

  VariationalParameter() = default;
  VariationalParameter(Tensor mu_, Tensor log_var_);

  std::size_t size() const { return mu.numel(); }
  void clamp_log_var();
};

/// mu + eps * exp(log_var / 2), recorded as a single node.
Var sample_weights(Var mu, Var log_var, const Tensor& eps);
/// Off-tape draw.
Tensor sample_weights(const VariationalParameter& p, Rng& rng);

struct VariationalLayer {
  VariationalParameter weight;  // [fan_in x fan_out]
  VariationalParameter bias;    // [1 x fan_out]
};

struct NetworkOutput {
  Var mean;       // [batch]
  Var log_noise;  // [batch]
};

/// Variational parameters of a network placed on a tape.
struct BoundNetwork {
  struct Layer {
    Var w_mu, w_log_var, b_mu, b_log_var;
  };
  std::vector<Layer> layers;
  Activation activation = Activation::Relu;
};

/// One posterior weight sample living on a tape.
class NetworkDraw {
 public:
  NetworkDraw(std::vector<Var> weights, std::vector<Var> biases, Activation activation);

  NetworkOutput forward(Var x) const;
  NetworkOutput forward(const Tensor& x) const;
  Tape& tape() const { return weights_.front().tape(); }

 private:
  std::vector<Var> weights_;
  std::vector<Var> biases_;
  Activation activation_;
};

class BayesianMLP {
 public:
  static constexpr double kInitLogVar = -10.0;

  /// `widths` runs from input dimension to the output layer, which must be 2.
  /// Parameters start at zero mean and kInitLogVar.
  BayesianMLP(std::vector<std::size_t> widths, Activation activation);

  /// mu ~ N(0, 1/fan_in) for weights and biases, log_var = kInitLogVar.
  static BayesianMLP initialized(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                 Activation activation, std::uint64_t seed);

  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t num_weights() const;
  std::uint64_t seed() const { return seed_; }

  std::vector<VariationalLayer>& layers() { return layers_; }
  const std::vector<VariationalLayer>& layers() const { return layers_; }

  /// Binds every mu/log_var as a trainable leaf.
  BoundNetwork bind(ParameterBinding& params);
  /// Places the parameters on a tape as constants (evaluation only).
  BoundNetwork bind_constant(Tape& tape) const;

  NetworkDraw draw(const BoundNetwork& bound, Rng& rng) const;
  /// The eps = 0 draw; returns the posterior means exactly.
  NetworkDraw draw_frozen(const BoundNetwork& bound) const;

  void clamp_log_var();

  std::string to_json() const;
  static BayesianMLP from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static BayesianMLP load(const std::filesystem::path& path);

 private:
  std::vector<std::size_t> widths_;
  Activation activation_;
  std::vector<VariationalLayer> layers_;
  std::uint64_t seed_ = 0;
};

/// Mean over i of (y_i - y_hat_i)^2 / (2 exp(s_i)) + s_i / 2, where s is the log-noise.
Var gaussian_nll(Var y, Var y_hat, Var sigma_log);

/// Negative entropy of the mean-field posterior, -sum 1/2 (log(2 pi e) + log_var).
/// This is the KL to a uniform prior with the constant log-volume dropped.
Var entropy_kl_term(const BoundNetwork& bound);
double entropy_kl_term(const BayesianMLP& net);

struct ElboEstimate {
  Var loss;  // kl_weight * entropy term + mean over draws of the NLL
  Var nll;
  Var kl;
  std::vector<NetworkDraw> draws;
};

/// `x` is [N x d_in], `y` is [N].
ElboEstimate elbo_loss(const BayesianMLP& net, const BoundNetwork& bound, const Tensor& x, const Tensor& y,
                       std::size_t draws, double kl_weight, Rng& rng);

struct PredictiveSummary {
  std::vector<double> mean;
  std::vector<double> epistemic_var;
  std::vector<double> aleatoric_var;
  std::size_t draws = 0;
};

/// Monte Carlo summary over `draws` independent weight samples. `x` is [N x d_in].
PredictiveSummary predict(const BayesianMLP& net, const Tensor& x, std::size_t draws, std::uint64_t seed);

/// Column tensor [n x 1] from scalar inputs.
Tensor as_column(const std::vector<double>& xs);

}  // namespace benn
