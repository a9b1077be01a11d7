#include <doctest.h>

#include <cmath>

#include "slk/latent_spaces.hpp"
#include "slk/noise_regularizer.hpp"
#include "slk/optim.hpp"
#include "slk/projection.hpp"
#include "test_util.hpp"

using namespace slk;
using slk::test::randn;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.block = 2;
  e.widths = {8, 16, 16};
  return e;
}

double image_mse(const NdArray& a, const NdArray& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / a.size();
}

// An fnwp sample whose noise maps are already standardized.
LatentRep standardized_sample(const SpaceId& sp, const GeneratorWeights& w, const GeneratorConfig& cfg,
                              std::mt19937_64& rng) {
  LatentRep rep = convert_forward(sample_space(SpaceId::nwp(), 1, w, cfg, rng), sp, w, cfg);
  standardize_noise(rep.noises, rng);
  return rep;
}

}  // namespace

TEST_CASE("perceptual proxy closed forms") {
  std::mt19937_64 rng(1);
  const NdArray x = randn({2, 3, 16, 16}, rng);
  CHECK(perceptual_proxy(Var::constant(x), Var::constant(x)).value().item() == 0.0);
  NdArray y = x;
  for (double& v : y.data()) v += 0.5;
  CHECK(perceptual_proxy(Var::constant(x), Var::constant(y)).value().item() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(downscale(Var::constant(x), 4).shape() == Shape{2, 3, 4, 4});
}

TEST_CASE("warmup ramps the learning rate linearly") {
  Var p = Var::param(NdArray({1}, 0.0));
  const Adam opt({p}, AdamConfig{0.1, 0.9, 0.999, 1e-8, 50});
  CHECK(opt.lr_at(25) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(opt.lr_at(1) == doctest::Approx(0.002).epsilon(1e-15));
  CHECK(opt.lr_at(50) == 0.1);
  CHECK(opt.lr_at(400) == 0.1);
}

TEST_CASE("encoder: zero steps, training progress, held-out comparison") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 2);
  const EncoderConfig ecfg = small_encoder();

  EncoderTrainConfig none;
  none.steps = 0;
  const EncoderTrainResult r0 = train_encoder(w, cfg, ecfg, none, 3);
  CHECK(r0.losses.empty());
  const EncoderModel fresh = init_encoder(ecfg, cfg, 3);
  double diff = 0;
  std::vector<NdArray> a, b;
  EncoderModel m0 = r0.model, m1 = fresh;
  m0.w.visit([&](const std::string&, NdArray& t) { a.push_back(t); });
  m1.w.visit([&](const std::string&, NdArray& t) { b.push_back(t); });
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) diff = std::max(diff, max_abs_diff(a[k], b[k]));
  CHECK(diff == 0.0);

  EncoderTrainConfig tcfg;
  tcfg.steps = 200;
  const EncoderTrainResult tr = train_encoder(w, cfg, ecfg, tcfg, 3);
  REQUIRE(tr.losses.size() == 200);
  CHECK(tr.losses.back() < tr.losses.front());

  std::mt19937_64 rng(4);
  int wins = 0;
  for (int s = 0; s < 50; ++s) {
    const LatentRep truth = sample_space(SpaceId::fnwp(2), 1, w, cfg, rng);
    const NdArray img = synthesize(truth, w, cfg);
    LatentRep pred = encode(img, tr.model, cfg);
    CHECK(pred.space == SpaceId::fwp(2));
    pred.space = SpaceId::fnwp(2);
    pred.noises = truth.noises;
    const LatentRep random = sample_space(SpaceId::fnwp(2), 1, w, cfg, rng);
    if (image_mse(synthesize(pred, w, cfg), img) < image_mse(synthesize(random, w, cfg), img)) ++wins;
  }
  CHECK(wins >= 45);
}

TEST_CASE("projection from the true representation is a fixed point") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 5);
  std::mt19937_64 rng(6);
  const LatentRep init = standardized_sample(SpaceId::fnwp(2), w, cfg, rng);
  const NdArray img = synthesize(init, w, cfg);

  // gradient of the image losses at the representation that produced the image
  VarRep rep = to_vars(init, true);
  const Var x = synthesize(rep, as_params(w, false), cfg);
  backward(add(perceptual_proxy(x, Var::constant(img)), scale(mse(x, Var::constant(img)), 0.25)));
  double g2 = 0;
  auto acc = [&](const Var& v) {
    for (double g : v.grad().data()) g2 += g * g;
  };
  for (const auto& s : rep.styles) acc(s);
  for (const auto& n : rep.noises) acc(n);
  acc(*rep.feature);
  acc(*rep.rgb);
  CHECK(std::sqrt(g2) < 1e-8);

  // one step moves nothing beyond the rounding of noise standardization
  ProjectionConfig pc;
  pc.iters = 1;
  pc.lambda_noise = 0;
  const ProjectionResult res = optimize_latent(img, init, pc, w, cfg, nullptr, 7);
  REQUIRE(res.losses.size() == 1);
  CHECK(res.losses[0] == 0.0);
  CHECK(res.mse[0] == 0.0);
  CHECK(max_abs_diff(res.rep, init) < 1e-12);
  CHECK(res.final_mse < 1e-20);
}

TEST_CASE("projection keeps noise maps standardized and reduces the error") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 8);
  std::mt19937_64 rng(9);
  const LatentRep truth = sample_space(SpaceId::fnwp(2), 1, w, cfg, rng);
  const NdArray img = synthesize(truth, w, cfg);
  const LatentRep init = convert_forward(sample_space(SpaceId::wp(), 1, w, cfg, rng), SpaceId::fwp(2), w, cfg);
  ProjectionConfig pc;
  pc.iters = 60;
  const ProjectionResult res = optimize_latent(img, init, pc, w, cfg, nullptr, 10);
  CHECK(res.rep.space == SpaceId::fnwp(2));
  CHECK(diagnose(res.rep, cfg).empty());
  CHECK(res.final_mse < res.mse.front());
  for (const NdArray& n : res.rep.noises) {
    double s = 0, ss = 0;
    for (double v : n.data()) s += v;
    const double mu = s / n.size();
    for (double v : n.data()) ss += (v - mu) * (v - mu);
    CHECK(std::abs(mu) < 1e-10);
    CHECK(std::abs(std::sqrt(ss / n.size()) - 1) < 1e-10);
  }
}

TEST_CASE("projection accepts a wider canvas") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 11);
  std::mt19937_64 rng(12);
  const LatentRep wide_truth = translate_crop(sample_space(SpaceId::fnwp(2), 1, w, cfg, rng), 0, 0, 16, 32,
                                              BoundaryPolicy::pad_noise, rng, cfg);
  const NdArray img = synthesize(wide_truth, w, cfg);
  CHECK(img.shape() == Shape{1, 3, 16, 32});
  const LatentRep init = translate_crop(
      convert_forward(sample_space(SpaceId::wp(), 1, w, cfg, rng), SpaceId::fwp(2), w, cfg), 0, 0, 16, 32,
      BoundaryPolicy::pad_noise, rng, cfg);
  ProjectionConfig pc;
  pc.iters = 3;
  const ProjectionResult res = optimize_latent(img, init, pc, w, cfg, nullptr, 13);
  CHECK(res.rep.feature->shape() == Shape{1, cfg.feature_channels(2), 8, 16});
  CHECK(res.iterations == 3);
}

TEST_CASE("projection rejects bad inputs and aborts on non-finite loss") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 14);
  std::mt19937_64 rng(15);
  const LatentRep two = convert_forward(sample_space(SpaceId::nwp(), 2, w, cfg, rng), SpaceId::fnwp(2), w, cfg);
  const LatentRep one = select_sample(two, 0);
  const NdArray img = synthesize(one, w, cfg);
  ProjectionConfig pc;
  pc.iters = 2;
  CHECK_THROWS_AS(optimize_latent(synthesize(two, w, cfg), two, pc, w, cfg, nullptr, 1), ValidationError);
  CHECK_THROWS_AS(optimize_latent(img, sample_space(SpaceId::nwp(), 1, w, cfg, rng), pc, w, cfg, nullptr, 1),
                  ValidationError);
  CHECK_THROWS_AS(optimize_latent(NdArray({1, 3, 8, 8}), one, pc, w, cfg, nullptr, 1), ValidationError);
  ProjectionConfig dist = pc;
  dist.lambda_dist = 0.2;
  CHECK_THROWS_AS(optimize_latent(img, one, dist, w, cfg, nullptr, 1), ValidationError);

  NdArray bad = img;
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  const ProjectionResult res = optimize_latent(bad, one, pc, w, cfg, nullptr, 1);
  CHECK(res.aborted);
  CHECK(res.diagnostic.find("iteration 1") != std::string::npos);
  CHECK(identical(res.rep, one));
}

TEST_CASE("distribution regularization pulls components toward their targets") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 16);
  const ComponentTargets targets = build_component_targets(w, cfg, 2, 64, 17);
  CHECK(targets.rgb.has_value());
  CHECK(std::is_sorted(targets.feature.sorted_values.begin(), targets.feature.sorted_values.end()));
  std::mt19937_64 rng(18);
  const LatentRep truth = sample_space(SpaceId::fnwp(2), 1, w, cfg, rng);
  const NdArray img = synthesize(truth, w, cfg);
  LatentRep init = convert_forward(sample_space(SpaceId::wp(), 1, w, cfg, rng), SpaceId::fwp(2), w, cfg);
  for (double& v : init.feature->data()) v *= 3.0;
  ProjectionConfig pc;
  pc.iters = 40;
  const ProjectionResult plain = optimize_latent(img, init, pc, w, cfg, &targets, 19);
  pc.lambda_dist = 5.0;
  const ProjectionResult reg = optimize_latent(img, init, pc, w, cfg, &targets, 19);
  CHECK(wasserstein_1d(*reg.rep.feature, targets.feature) < wasserstein_1d(*plain.rep.feature, targets.feature));
}
