#pragma once

// Dense variational autoencoder for small square microstructure images.
// Point-estimate weights; only the latent code is variational.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "benn/autodiff.hpp"
#include "benn/constraints.hpp"
#include "benn/descriptors.hpp"
#include "benn/mdmm.hpp"
#include "benn/optim.hpp"

namespace benn {

struct DenseLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]
};

struct BoundDenseLayer {
  Var weight;
  Var bias;
};

/// The five layers of a DenseVAE placed on one tape.
struct BoundVAE {
  BoundDenseLayer enc_hidden, enc_mu, enc_log_var, dec_hidden, dec_out;
};

struct LatentCode {
  Var mu;       // [B x latent]
  Var log_var;  // [B x latent]
};

struct VaeLoss {
  Var loss;  // recon + kl
  double recon = 0.0;
  double kl = 0.0;
};

/// image^2 -> hidden (ReLU) -> {mu, log_var} (latent each) -> hidden (ReLU) -> image^2 (sigmoid).
class DenseVAE {
 public:
  static constexpr std::size_t kDefaultHidden = 256;
  static constexpr std::size_t kDefaultLatent = 16;

  /// All weights and biases zero.
  DenseVAE(std::size_t image_side, std::size_t hidden = kDefaultHidden, std::size_t latent = kDefaultLatent);
  /// He-normal weights, zero biases.
  static DenseVAE initialized(std::size_t image_side, std::uint64_t seed, std::size_t hidden = kDefaultHidden,
                              std::size_t latent = kDefaultLatent);

  std::size_t image_side() const { return side_; }
  std::size_t pixels() const { return side_ * side_; }
  std::size_t hidden_dim() const { return hidden_; }
  std::size_t latent_dim() const { return latent_; }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  BoundVAE bind(ParameterBinding& params);
  BoundVAE bind_constant(Tape& tape) const;

  std::string to_json() const;
  static DenseVAE from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static DenseVAE load(const std::filesystem::path& path);

 private:
  std::size_t side_, hidden_, latent_;
  std::uint64_t seed_ = 0;
  std::vector<DenseLayer> layers_;  // enc_hidden, enc_mu, enc_log_var, dec_hidden, dec_out
};

/// `images` is [B x side^2].
LatentCode encode(const BoundVAE& vae, Var images);
/// Pre-sigmoid logits, [B x side^2].
Var decode_logits(const BoundVAE& vae, Var z);
/// Pixel probabilities in (0,1), [B x side^2].
Var decode(const BoundVAE& vae, Var z);

/// z = mu + eps * exp(log_var / 2), eps ~ N(0, I) from `seed`.
Var reparam_latent(Var mu, Var log_var, std::uint64_t seed);
/// Same with explicit noise.
Var reparam_latent(Var mu, Var log_var, const Tensor& eps);

/// 1/2 sum (mu^2 + exp(lv) - 1 - lv), averaged over the batch rows.
Var latent_kl(Var mu, Var log_var);

/// Bernoulli cross-entropy (summed over pixels) plus latent KL, both averaged over the batch.
VaeLoss vae_loss(const BoundVAE& vae, const Tensor& images, const Tensor& eps);
VaeLoss vae_loss(const BoundVAE& vae, const Tensor& images, std::uint64_t seed);

/// Stacks images into a [B x side^2] batch. Every pixel must lie in [0, 1].
Tensor image_batch(std::span<const BinaryImage> images);

struct VaeStepMetrics {
  double loss = 0.0;  // full MDMM objective
  double recon = 0.0;
  double kl = 0.0;
  std::vector<double> residuals;    // aligned with specs
  std::vector<double> multipliers;  // after the update
};

/// Number of decoded samples z ~ N(0, I) on which constraint residuals are taken.
inline constexpr std::size_t kConstraintSamples = 16;

/// One MDMM step on vae_loss plus the constraint terms. The VAE noise is drawn
/// first from `seed`, then the latents of the generated samples, so an empty
/// spec list reproduces the unconstrained step exactly.
VaeStepMetrics constrained_train_step(DenseVAE& vae, Adam& opt, const Tensor& batch,
                                      std::span<const ConstraintSpec> specs, MultiplierState& state,
                                      std::uint64_t seed, std::size_t constraint_samples = kConstraintSamples);

/// Decodes n independent standard-normal latents.
std::vector<BinaryImage> generate(const DenseVAE& vae, std::size_t n, std::uint64_t seed);

}  // namespace benn
