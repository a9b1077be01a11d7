#include <doctest.h>

#include <cmath>

#include "slk/latent_spaces.hpp"
#include "slk/serialize.hpp"
#include "test_util.hpp"

using namespace slk;
using slk::test::randn;

TEST_CASE("map_latent with zero weights gives zero") {
  GeneratorConfig cfg = test::small_config();
  GeneratorWeights w = init_generator(cfg, 3);
  for (auto& m : w.map_w) m.fill(0.0);
  for (auto& b : w.map_b) b.fill(0.0);
  std::mt19937_64 rng(4);
  const NdArray out = map_latent(randn({5, cfg.latent_dim}, rng), w);
  CHECK(out.shape() == Shape{5, cfg.latent_dim});
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("identity single mapping layer is lrelu") {
  GeneratorConfig cfg = test::small_config();
  cfg.mapping_layers = 1;
  GeneratorWeights w = init_generator(cfg, 3);
  REQUIRE(w.map_w.size() == 1);
  const int d = cfg.latent_dim;
  w.map_w[0] = NdArray({d, d}, 0.0);
  for (int i = 0; i < d; ++i) w.map_w[0].at({i, i}) = 1.0;
  w.map_b[0].fill(0.0);
  std::mt19937_64 rng(5);
  const NdArray z = randn({3, d}, rng);
  const NdArray out = map_latent(z, w);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(out[i] == (z[i] >= 0 ? z[i] : 0.2 * z[i]));
}

TEST_CASE("mapping output matches the stored golden hash") {
  // Captured once from this implementation; guards against silent changes in init or mapping.
  const GeneratorConfig cfg;
  const GeneratorWeights w = init_generator(cfg, 2024);
  std::mt19937_64 rng(11);
  const NdArray z = randn({2, cfg.latent_dim}, rng);
  const NdArray a = map_latent(z, w);
  const NdArray b = map_latent(z, init_generator(cfg, 2024));
  CHECK(max_abs_diff(a, b) == 0.0);
  CHECK(fnv1a_hex(encode_array(a)) == "ca077c0b81ae7d30");
}

TEST_CASE("non-spatial modulated conv closed forms") {
  std::mt19937_64 rng(6);
  const NdArray x = randn({2, 3, 5, 5}, rng);
  const NdArray k = randn({4, 3, 3, 3}, rng);
  const NdArray ones({2, 3}, 1.0);
  CHECK(max_abs_diff(modulated_conv_nonspatial(x, ones, k, false, Padding::zero), conv2d(x, k, Padding::zero)) <
        1e-14);

  const NdArray x1 = randn({1, 1, 4, 4}, rng);
  for (double wv : {0.5, -2.0, 3.0}) {
    for (double s : {0.25, 1.0, -1.5}) {
      const NdArray out = modulated_conv_nonspatial(x1, NdArray({1, 1}, s), NdArray({1, 1, 1, 1}, wv), true,
                                                    Padding::zero);
      for (std::size_t i = 0; i < x1.size(); ++i) {
        CHECK(out[i] == doctest::Approx(x1[i] * wv * s / std::sqrt(wv * wv * s * s + 1e-8)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("demodulated output has unit RMS per channel") {
  std::mt19937_64 rng(7);
  const NdArray x = randn({16, 8, 16, 16}, rng);
  const NdArray k = randn({6, 8, 3, 3}, rng);
  const NdArray style = test::uniform({16, 8}, rng, 0.2, 2.0);
  const NdArray y = modulated_conv_nonspatial(x, style, k, true, Padding::circular);
  for (int o = 0; o < 6; ++o) {
    double ss = 0;
    for (int b = 0; b < 16; ++b)
      for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) ss += y.at({b, o, i, j}) * y.at({b, o, i, j});
    CHECK(std::sqrt(ss / (16 * 256)) == doctest::Approx(1.0).epsilon(0.1));
  }
}

TEST_CASE("spatial demodulation closed forms") {
  const Var zero_w = Var::constant(NdArray({1, 2, 3, 3, 3}, 0.0));
  const Var style = Var::constant(NdArray({1, 3, 4, 4}, 1.7));
  const NdArray d0 = spatial_demod_coeffs(zero_w, style).value();
  CHECK(d0.shape() == Shape{1, 2, 4, 4});
  for (double v : d0.data()) CHECK(v == doctest::Approx(1e4).epsilon(1e-15));

  const Var one = Var::constant(NdArray({1, 1, 1, 1, 1}, 1.0));
  const Var two = Var::constant(NdArray({1, 1, 3, 2}, 2.0));
  const NdArray d1 = spatial_demod_coeffs(one, two).value();
  for (double v : d1.data()) {
    CHECK(v == doctest::Approx(1.0 / std::sqrt(4.0 + 1e-8)).epsilon(1e-15));
  }
}

TEST_CASE("constant style maps reproduce the non-spatial path") {
  std::mt19937_64 rng(8);
  const NdArray x = randn({2, 4, 6, 5}, rng);
  const NdArray k = randn({3, 4, 3, 3}, rng);
  const NdArray s = randn({2, 4}, rng);
  NdArray smap({2, 4, 6, 5});
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 30; ++i) smap[(b * 4 + c) * 30 + i] = s.at({b, c});
  for (bool demod : {false, true}) {
    const NdArray ref = modulated_conv_nonspatial(x, s, k, demod, Padding::zero);
    const NdArray vec = modulated_conv(Var::constant(x), Var::constant(s), Var::constant(k), demod, Padding::zero).value();
    const NdArray map =
        modulated_conv(Var::constant(x), Var::constant(smap), Var::constant(k), demod, Padding::zero).value();
    CHECK(max_abs_diff(vec, ref) < 1e-12);
    CHECK(max_abs_diff(map, ref) < 1e-12);
  }
}

TEST_CASE("chunked demodulation matches the unchunked path") {
  std::mt19937_64 rng(9);
  const NdArray w = randn({2, 3, 4, 3, 3}, rng);
  const NdArray s = randn({2, 4, 5, 6}, rng);
  const NdArray probe = randn({2, 3, 5, 6}, rng);
  auto run = [&](double chunk) {
    Var wv = Var::param(w), sv = Var::param(s);
    const Var d = chunk < 0 ? spatial_demod_coeffs(wv, sv) : spatial_demod_chunked(wv, sv, chunk);
    backward(sum_all(mul(d, Var::constant(probe))));
    return std::make_tuple(d.value(), wv.grad(), sv.grad());
  };
  const auto [d0, gw0, gs0] = run(-1);
  const auto [di, gwi, gsi] = run(std::numeric_limits<double>::infinity());
  CHECK(max_abs_diff(d0, di) == 0.0);
  CHECK(max_abs_diff(gw0, gwi) == 0.0);
  CHECK(max_abs_diff(gs0, gsi) == 0.0);
  for (double chunk : {1.0, 2.0, 100.0}) {
    const auto [d, gw, gs] = run(chunk);
    CHECK(max_abs_diff(d, d0) <= 1e-12);
    CHECK(max_abs_diff(gw, gw0) <= 1e-12);
    CHECK(max_abs_diff(gs, gs0) <= 1e-12);
  }
  CHECK(grad_check([&](const Var& v) { return sum_all(mul(spatial_demod_chunked(v, Var::constant(s), 1.0),
                                                          Var::constant(probe))); },
                   w) < 1e-4);
  CHECK(grad_check([&](const Var& v) { return sum_all(mul(spatial_demod_chunked(Var::constant(w), v, 1.0),
                                                          Var::constant(probe))); },
                   s) < 1e-4);
}

TEST_CASE("spatial demodulation with a shared weight") {
  std::mt19937_64 rng(10);
  const NdArray w = randn({3, 2, 3, 3}, rng);
  const NdArray s = randn({2, 2, 3, 4}, rng);
  CHECK(grad_check([&](const Var& v) { return sum_all(spatial_demod_coeffs(v, Var::constant(s))); }, w) < 1e-4);
  CHECK(grad_check([&](const Var& v) { return sum_all(spatial_demod_coeffs(Var::constant(w), v)); }, s) < 1e-4);
}

TEST_CASE("synthesize: shape law, batch independence, determinism") {
  const GeneratorConfig cfg;
  const GeneratorWeights w = init_generator(cfg, 12);
  std::mt19937_64 rng(13);
  const LatentRep wp = sample_space(SpaceId::nwp(), 3, w, cfg, rng);
  const NdArray img = synthesize(wp, w, cfg);
  CHECK(img.shape() == Shape{3, 3, 32, 32});
  CHECK(max_abs_diff(img, synthesize(wp, w, cfg)) == 0.0);

  const NdArray single = synthesize(select_sample(wp, 1), w, cfg);
  double diff = 0;
  for (std::size_t i = 0; i < single.size(); ++i) diff = std::max(diff, std::abs(single[i] - img[single.size() + i]));
  CHECK(diff < 1e-12);

  LatentRep f1 = convert_forward(sample_space(SpaceId::wp(), 1, w, cfg, rng), SpaceId::fwp(1), w, cfg);
  f1.feature = randn({1, cfg.feature_channels(1), 8, 8}, rng);
  CHECK(synthesize(f1, w, cfg).shape() == Shape{1, 3, 64, 64});
  f1.feature = randn({1, cfg.feature_channels(1), 3, 5}, rng);
  CHECK(synthesize(f1, w, cfg).shape() == Shape{1, 3, 24, 40});
}

TEST_CASE("synthesize rejects malformed representations") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 14);
  std::mt19937_64 rng(15);
  LatentRep rep = sample_space(SpaceId::wp(), 1, w, cfg, rng);
  rep.styles.pop_back();
  CHECK_THROWS_AS(synthesize(rep, w, cfg), ValidationError);
  CHECK_THROWS_AS(init_generator(GeneratorConfig{.latent_dim = 0}, 1), ValidationError);
}
