#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "benn/datasets.hpp"
#include "benn/generative.hpp"
#include "benn/random.hpp"
#include "gradcheck.hpp"

using namespace benn;

namespace {

Tensor small_batch(std::size_t side, std::size_t n, std::uint64_t seed) {
  MicrostructureConfig cfg;
  cfg.size = side;
  cfg.n_samples = n;
  cfg.correlation_length = 2.0;
  cfg.seed = seed;
  auto imgs = gen_microstructures(cfg);
  return image_batch(imgs);
}

}  // namespace

TEST(Encode, ZeroWeightsGiveZeroCode) {
  DenseVAE vae(16, 32, 4);
  Tape tape;
  BoundVAE b = vae.bind_constant(tape);
  LatentCode c = encode(b, tape.constant(small_batch(16, 3, 1)));
  EXPECT_EQ(c.mu.shape(), (Shape{3, 4}));
  EXPECT_EQ(c.log_var.shape(), (Shape{3, 4}));
  for (double v : c.mu.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : c.log_var.value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(encode(b, tape.constant(Tensor(Shape{1, 100}))), ShapeError);
}

TEST(Encode, RowIndependence) {
  DenseVAE vae = DenseVAE::initialized(16, 3, 32, 4);
  Tensor batch = small_batch(16, 4, 2);
  Tape tape;
  BoundVAE b = vae.bind_constant(tape);
  LatentCode all = encode(b, tape.constant(batch));
  Tensor row(Shape{1, 256});
  std::copy(batch.data().begin() + 2 * 256, batch.data().begin() + 3 * 256, row.data().begin());
  LatentCode one = encode(b, tape.constant(row));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(one.mu.value()[j], all.mu.value().at(2, j));
}

TEST(Decode, OutputInUnitInterval) {
  DenseVAE vae = DenseVAE::initialized(16, 4, 32, 4);
  for (const auto& img : generate(vae, 8, 1))
    for (double v : img.pixels().data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
}

TEST(ReparamLatent, Trivial) {
  Tape tape;
  Var mu = tape.constant(Tensor::matrix(1, 2, {0.5, -0.5}));
  Var lv = tape.constant(Tensor::matrix(1, 2, {0.0, 0.0}));
  EXPECT_EQ(reparam_latent(mu, lv, Tensor(Shape{1, 2})).value().values(), mu.value().values());
  Var z = reparam_latent(mu, lv, Tensor(Shape{1, 2}, 1.0));
  EXPECT_DOUBLE_EQ(z.value()[0], 1.5);
  EXPECT_DOUBLE_EQ(z.value()[1], 0.5);
}

TEST(ReparamLatent, MonteCarloMoments) {
  const std::size_t n = 100000;
  Tape tape;
  Var mu = tape.constant(Tensor(Shape{n, 1}, -0.4));
  Var lv = tape.constant(Tensor(Shape{n, 1}, 0.6));
  const Tensor z = reparam_latent(mu, lv, 42).value();
  double m = 0.0, m2 = 0.0;
  for (double v : z.data()) m += v;
  m /= static_cast<double>(n);
  for (double v : z.data()) m2 += (v - m) * (v - m);
  const double sd = std::exp(0.3), s = std::sqrt(m2 / static_cast<double>(n - 1));
  EXPECT_NEAR(m, -0.4, 3.0 * sd / std::sqrt(1e5));
  EXPECT_NEAR(s, sd, 3.0 * sd / std::sqrt(2e5));
}

TEST(LatentKl, ClosedForm) {
  Tape tape;
  EXPECT_DOUBLE_EQ(latent_kl(tape.constant(Tensor::matrix(1, 2, {1, 0})), tape.constant(Tensor(Shape{1, 2}))).item(),
                   0.5);
  // Zero iff mu = 0 and log_var = 0.
  for (double mu : {-1.0, -0.1, 0.0, 0.1, 1.0})
    for (double lv : {-1.0, -0.1, 0.0, 0.1, 1.0}) {
      const double kl =
          latent_kl(tape.constant(Tensor::matrix(1, 1, {mu})), tape.constant(Tensor::matrix(1, 1, {lv}))).item();
      if (mu == 0.0 && lv == 0.0)
        EXPECT_EQ(kl, 0.0);
      else
        EXPECT_GT(kl, 0.0);
    }
}

TEST(VaeLoss, PerfectReconstructionLimit) {
  // Zero weights except a huge decoder bias matching a hard image: KL = 0, recon -> 0.
  DenseVAE vae(16, 8, 2);
  Tensor img(Shape{1, 256});
  for (std::size_t i = 0; i < 256; ++i) img[i] = i % 3 == 0 ? 1.0 : 0.0;
  for (std::size_t i = 0; i < 256; ++i) vae.layers()[4].bias[i] = img[i] > 0.5 ? 40.0 : -40.0;
  Tape tape;
  BoundVAE b = vae.bind_constant(tape);
  VaeLoss l = vae_loss(b, img, std::uint64_t{1});
  EXPECT_EQ(l.kl, 0.0);
  EXPECT_LT(l.recon, 1e-14);
  EXPECT_GE(l.recon, 0.0);
}

TEST(VaeLoss, RejectsOutOfRangePixels) {
  DenseVAE vae(16, 8, 2);
  Tape tape;
  BoundVAE b = vae.bind_constant(tape);
  EXPECT_THROW(vae_loss(b, Tensor(Shape{1, 256}, 1.2), std::uint64_t{1}), DomainError);
}

TEST(VaeLoss, GradientMatchesFiniteDifferences) {
  DenseVAE vae = DenseVAE::initialized(4, 7, 6, 2);
  Tensor batch(Shape{3, 16});
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : batch.data()) v = u(rng);
  const Tensor eps = randn(Shape{3, 2}, rng);
  std::vector<Tensor> params;
  for (const auto& l : vae.layers()) {
    params.push_back(l.weight);
    params.push_back(l.bias);
  }
  auto f = [&](Tape&, const std::vector<Var>& v) {
    BoundVAE b{{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}, {v[6], v[7]}, {v[8], v[9]}};
    return vae_loss(b, batch, eps).loss;
  };
  EXPECT_LT(benn::testing::check_gradients(f, params).max_rel_error, 1e-4);
}

TEST(Training, LossDecreasesOver200Steps) {
  DenseVAE vae = DenseVAE::initialized(16, 5, 64, 8);
  Tensor batch = small_batch(16, 10, 3);
  Adam opt(AdamConfig{1e-3});
  MultiplierState state;
  double first = 0.0, last = 0.0;
  for (int s = 0; s < 200; ++s) {
    auto m = constrained_train_step(vae, opt, batch, {}, state, derive_seed(9, s));
    if (s < 10) first += m.loss / 10.0;
    if (s >= 190) last += m.loss / 10.0;
  }
  EXPECT_LT(last, first);
}

TEST(Training, EmptyConstraintListIsUnconstrainedStep) {
  Tensor batch = small_batch(16, 4, 4);
  DenseVAE a = DenseVAE::initialized(16, 6, 32, 4), b = a;
  Adam oa, ob;
  MultiplierState sa, sb;
  constrained_train_step(a, oa, batch, {}, sa, 77);

  // Same step written out by hand.
  Tape tape;
  ParameterBinding params(tape);
  BoundVAE bound = b.bind(params);
  Rng rng(77);
  VaeLoss l = vae_loss(bound, batch, randn(Shape{4, 4}, rng));
  tape.backward(l.loss);
  ob.step(params);
  for (std::size_t i = 0; i < a.layers().size(); ++i)
    EXPECT_EQ(a.layers()[i].weight.values(), b.layers()[i].weight.values());
}

TEST(Training, ZeroMultipliersAndDampingMatchUnconstrained) {
  Tensor batch = small_batch(16, 4, 5);
  DenseVAE a = DenseVAE::initialized(16, 7, 32, 4), b = a;
  Adam oa, ob;
  MdmmConfig cfg;
  cfg.damping_eq = 0.0;
  MultiplierState sa(cfg), sb(cfg);
  ConstraintSpec por;
  por.name = "porosity";
  por.kind = ConstraintKind::Porosity;
  por.target = 0.2;
  sa.register_constraint(por);
  std::vector<ConstraintSpec> specs{por};
  auto m = constrained_train_step(a, oa, batch, specs, sa, 5, 4);
  constrained_train_step(b, ob, batch, {}, sb, 5);
  EXPECT_EQ(m.residuals.size(), 1u);
  for (std::size_t i = 0; i < a.layers().size(); ++i)
    EXPECT_EQ(a.layers()[i].weight.values(), b.layers()[i].weight.values());
}

TEST(Training, UnregisteredConstraintRejected) {
  DenseVAE vae = DenseVAE::initialized(16, 1, 16, 2);
  Adam opt;
  MultiplierState state;
  ConstraintSpec por;
  por.kind = ConstraintKind::Porosity;
  std::vector<ConstraintSpec> specs{por};
  EXPECT_THROW(constrained_train_step(vae, opt, small_batch(16, 2, 1), specs, state, 1), Error);
}

TEST(Generate, SeededCountAndShape) {
  DenseVAE vae = DenseVAE::initialized(16, 8, 32, 4);
  auto a = generate(vae, 5, 3), b = generate(vae, 5, 3);
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a[0].side(), 16u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a[i].pixels().values(), b[i].pixels().values());
}

TEST(Checkpoint, RoundTrip) {
  DenseVAE vae = DenseVAE::initialized(16, 9, 32, 4);
  const auto path = std::filesystem::temp_directory_path() / "benn_vae.json";
  vae.save(path);
  DenseVAE back = DenseVAE::load(path);
  EXPECT_EQ(back.latent_dim(), 4u);
  for (std::size_t i = 0; i < vae.layers().size(); ++i) {
    EXPECT_EQ(back.layers()[i].weight.values(), vae.layers()[i].weight.values());
    EXPECT_EQ(back.layers()[i].bias.values(), vae.layers()[i].bias.values());
  }
  std::filesystem::remove(path);
  EXPECT_THROW(DenseVAE::from_json(R"({"kind":"bnn"})"), Error);
}
