#include "benn/generative.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "benn/random.hpp"
#include "json.hpp"

namespace benn {

using nlohmann::json;

namespace {

constexpr const char* kLayerNames[] = {"enc_hidden", "enc_mu", "enc_log_var", "dec_hidden", "dec_out"};

Var dense(Var x, const BoundDenseLayer& l) {
  Tape& t = x.tape();
  Var ones = t.constant(Tensor(Shape{x.shape()[0], 1}, 1.0));
  return matmul(x, l.weight) + matmul(ones, l.bias);
}

}  // namespace

DenseVAE::DenseVAE(std::size_t image_side, std::size_t hidden, std::size_t latent)
    : side_(image_side), hidden_(hidden), latent_(latent) {
  if (image_side == 0 || hidden == 0 || latent == 0) throw ShapeError("DenseVAE: dimensions must be positive");
  const std::size_t p = pixels();
  const std::size_t dims[][2] = {{p, hidden}, {hidden, latent}, {hidden, latent}, {latent, hidden}, {hidden, p}};
  for (auto [in, out] : dims) layers_.push_back({Tensor(Shape{in, out}), Tensor(Shape{1, out})});
}

DenseVAE DenseVAE::initialized(std::size_t image_side, std::uint64_t seed, std::size_t hidden, std::size_t latent) {
  DenseVAE vae(image_side, hidden, latent);
  vae.seed_ = seed;
  Rng rng(seed);
  for (auto& l : vae.layers_) {
    const double fan_in = static_cast<double>(l.weight.dim(0));
    l.weight = randn(l.weight.shape(), rng, std::sqrt(2.0 / fan_in));
  }
  return vae;
}

BoundVAE DenseVAE::bind(ParameterBinding& params) {
  std::vector<BoundDenseLayer> b;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string n = kLayerNames[i];
    Var w = params.bind(n + ".weight", layers_[i].weight);
    Var bias = params.bind(n + ".bias", layers_[i].bias);
    b.push_back({w, bias});
  }
  return {b[0], b[1], b[2], b[3], b[4]};
}

BoundVAE DenseVAE::bind_constant(Tape& tape) const {
  std::vector<BoundDenseLayer> b;
  for (const auto& l : layers_) b.push_back({tape.constant(l.weight), tape.constant(l.bias)});
  return {b[0], b[1], b[2], b[3], b[4]};
}

std::string DenseVAE::to_json() const {
  json j;
  j["kind"] = "dense_vae";
  j["image_side"] = side_;
  j["layer_sizes"] = {pixels(), hidden_, latent_, hidden_, pixels()};
  j["seed"] = seed_;
  j["layers"] = json::array();
  for (std::size_t i = 0; i < layers_.size(); ++i)
    j["layers"].push_back(
        {{"name", kLayerNames[i]}, {"weight", layers_[i].weight.values()}, {"bias", layers_[i].bias.values()}});
  return j.dump();
}

DenseVAE DenseVAE::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("kind").get<std::string>() != "dense_vae") throw Error("checkpoint: not a dense_vae checkpoint");
    const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    if (sizes.size() != 5) throw Error("checkpoint: dense_vae needs 5 layer sizes");
    DenseVAE vae(j.at("image_side").get<std::size_t>(), sizes[1], sizes[2]);
    if (sizes[0] != vae.pixels()) throw Error("checkpoint: layer_sizes do not match image_side");
    vae.seed_ = j.value("seed", std::uint64_t{0});
    const auto& layers = j.at("layers");
    if (layers.size() != vae.layers_.size()) throw Error("checkpoint: dense_vae needs 5 layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto& l = vae.layers_[i];
      auto w = layers[i].at("weight").get<std::vector<double>>();
      auto b = layers[i].at("bias").get<std::vector<double>>();
      if (w.size() != l.weight.numel() || b.size() != l.bias.numel())
        throw Error(std::string("checkpoint: wrong parameter count in ") + kLayerNames[i]);
      l.weight = Tensor(l.weight.shape(), std::move(w));
      l.bias = Tensor(l.bias.shape(), std::move(b));
    }
    return vae;
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
}

void DenseVAE::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json() << '\n';
}

DenseVAE DenseVAE::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// --- forward ------------------------------------------------------------------------

LatentCode encode(const BoundVAE& vae, Var images) {
  const Shape& s = images.shape();
  if (s.size() != 2 || s[1] != vae.enc_hidden.weight.shape()[0])
    throw ShapeError("encode: expected [B x " + std::to_string(vae.enc_hidden.weight.shape()[0]) + "], got " +
                     shape_string(s));
  Var h = relu(dense(images, vae.enc_hidden));
  return {dense(h, vae.enc_mu), dense(h, vae.enc_log_var)};
}

Var decode_logits(const BoundVAE& vae, Var z) {
  if (z.shape().size() != 2 || z.shape()[1] != vae.dec_hidden.weight.shape()[0])
    throw ShapeError("decode: latent width mismatch, got " + shape_string(z.shape()));
  return dense(relu(dense(z, vae.dec_hidden)), vae.dec_out);
}

Var decode(const BoundVAE& vae, Var z) { return sigmoid(decode_logits(vae, z)); }

Var reparam_latent(Var mu, Var log_var, const Tensor& eps) {
  if (mu.shape() != log_var.shape() || mu.shape() != eps.shape())
    throw ShapeError("reparam_latent: mu, log_var and eps must share a shape");
  return mu + mul(mu.tape().constant(eps), exp(scale(log_var, 0.5)));
}

Var reparam_latent(Var mu, Var log_var, std::uint64_t seed) {
  Rng rng(seed);
  return reparam_latent(mu, log_var, randn(mu.shape(), rng));
}

Var latent_kl(Var mu, Var log_var) {
  const double batch = static_cast<double>(mu.shape()[0]);
  Var terms = square(mu) + exp(log_var) - log_var - 1.0;
  return scale(sum(terms), 0.5 / batch);
}

Tensor image_batch(std::span<const BinaryImage> images) {
  if (images.empty()) throw ShapeError("image_batch: no images");
  const std::size_t p = images.front().pixels().numel();
  Tensor out(Shape{images.size(), p});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor& px = images[i].pixels();
    if (px.numel() != p) throw ShapeError("image_batch: images differ in size");
    std::copy(px.data().begin(), px.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * p));
  }
  return out;
}

VaeLoss vae_loss(const BoundVAE& vae, const Tensor& images, const Tensor& eps) {
  for (double v : images.data())
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("vae_loss: pixel outside [0, 1]");
  Tape& t = vae.enc_mu.weight.tape();
  Var x = t.constant(images);
  LatentCode code = encode(vae, x);
  Var z = reparam_latent(code.mu, code.log_var, eps);
  Var logits = decode_logits(vae, z);
  // -[x log s(l) + (1-x) log(1-s(l))] = softplus(l) - x l
  const double batch = static_cast<double>(images.dim(0));
  Var recon = scale(sum(softplus(logits) - mul(x, logits)), 1.0 / batch);
  Var kl = latent_kl(code.mu, code.log_var);
  return {recon + kl, recon.item(), kl.item()};
}

VaeLoss vae_loss(const BoundVAE& vae, const Tensor& images, std::uint64_t seed) {
  Rng rng(seed);
  return vae_loss(vae, images, randn(Shape{images.dim(0), vae.enc_mu.weight.shape()[1]}, rng));
}

VaeStepMetrics constrained_train_step(DenseVAE& vae, Adam& opt, const Tensor& batch,
                                      std::span<const ConstraintSpec> specs, MultiplierState& state,
                                      std::uint64_t seed, std::size_t constraint_samples) {
  Tape tape;
  ParameterBinding params(tape);
  BoundVAE bound = vae.bind(params);
  Rng rng(seed);
  const Tensor eps = randn(Shape{batch.dim(0), vae.latent_dim()}, rng);
  VaeLoss data = vae_loss(bound, batch, eps);

  VaeStepMetrics m;
  m.recon = data.recon;
  m.kl = data.kl;
  std::vector<ConstraintTerm> terms;
  if (!specs.empty()) {
    Var z = tape.constant(randn(Shape{constraint_samples, vae.latent_dim()}, rng));
    Var samples = decode(bound, z);
    for (const ConstraintSpec& spec : specs) {
      if (!spec.weight_id) throw Error("constrained_train_step: constraint '" + spec.name + "' is not registered");
      ConstraintResidual r = eval_functional(samples, spec);
      terms.push_back({*spec.weight_id, r.value_var});
      m.residuals.push_back(r.value);
    }
  }
  MdmmObjective obj = total_loss(data.loss, terms, state);
  tape.backward(obj.loss);
  params.check_gradients();
  mdmm_step(opt, params, state, obj);
  m.loss = obj.loss.item();
  for (const ConstraintSpec& spec : specs) m.multipliers.push_back(state.multiplier(*spec.weight_id));
  return m;
}

std::vector<BinaryImage> generate(const DenseVAE& vae, std::size_t n, std::uint64_t seed) {
  std::vector<BinaryImage> out;
  if (n == 0) return out;
  Tape tape;
  BoundVAE bound = vae.bind_constant(tape);
  Rng rng(seed);
  Var probs = decode(bound, tape.constant(randn(Shape{n, vae.latent_dim()}, rng)));
  const std::size_t side = vae.image_side(), p = vae.pixels();
  const auto& v = probs.value().values();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> px(v.begin() + static_cast<std::ptrdiff_t>(i * p),
                           v.begin() + static_cast<std::ptrdiff_t>((i + 1) * p));
    out.emplace_back(Tensor(Shape{side, side}, std::move(px)));
  }
  return out;
}

}  // namespace benn
