#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "slk/latent_spaces.hpp"
#include "slk/mixing.hpp"
#include "test_util.hpp"

using namespace slk;
using slk::test::randn;

namespace {

// Mask values on a 1/64 grid keep 1 - m exact.
NdArray dyadic_mask(int h, int w, std::mt19937_64& rng) {
  NdArray m(Shape{h, w});
  for (double& v : m.data()) v = test::rand_int(rng, 0, 64) / 64.0;
  return m;
}

bool identical_values(const NdArray& a, const NdArray& b) { return a.shape() == b.shape() && std::ranges::equal(a.data(), b.data()); }

}  // namespace

TEST_CASE("masked_mix examples") {
  std::mt19937_64 rng(1);
  const NdArray v1 = randn({3, 4, 5}, rng), v2 = randn({3, 4, 5}, rng);
  CHECK(identical_values(masked_mix(v1, v2, NdArray({4, 5}, 0.0)), v1));
  CHECK(identical_values(masked_mix(v1, v2, NdArray({4, 5}, 1.0)), v2));
  CHECK(masked_mix(NdArray({1, 1, 1}, 2.0), NdArray({1, 1, 1}, 4.0), NdArray({1, 1}, 0.5))[0] == 3.0);
  CHECK_THROWS_AS(masked_mix(v1, v2, NdArray({4, 4}, 0.0)), ValidationError);
  CHECK_THROWS_AS(masked_mix(v1, v2, NdArray({4, 5}, 1.5)), ValidationError);
  CHECK_THROWS_AS(masked_mix(v1, randn({2, 4, 5}, rng), NdArray({4, 5}, 0.0)), ValidationError);
}

TEST_CASE("masked_mix_noise examples") {
  std::mt19937_64 rng(2);
  const NdArray n1 = randn({6, 7}, rng), n2 = randn({6, 7}, rng);
  CHECK(identical_values(masked_mix_noise(n1, n2, NdArray({6, 7}, 0.0)), n1));
  CHECK(identical_values(masked_mix_noise(n1, n2, NdArray({6, 7}, 1.0)), n2));
  const NdArray half = masked_mix_noise(n1, n2, NdArray({6, 7}, 0.5));
  for (std::size_t i = 0; i < half.size(); ++i) {
    CHECK(half[i] == doctest::Approx((n1[i] + n2[i]) / std::sqrt(2.0)).epsilon(1e-14));
  }
}

TEST_CASE("masked_mix_noise keeps unit variance") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (double m : {0.2, 0.5, 0.7}) {
    const int n = 200000;
    NdArray a(Shape{1, n}), b(Shape{1, n});
    for (int i = 0; i < n; ++i) a[i] = normal(rng), b[i] = normal(rng);
    const NdArray out = masked_mix_noise(a, b, NdArray({1, n}, m));
    double s = 0, ss = 0;
    for (double v : out.data()) s += v, ss += v * v;
    const double mu = s / n;
    CHECK(std::sqrt(ss / n - mu * mu) == doctest::Approx(1.0).epsilon(0.01));
  }
}

// Property: swapping operands with m <-> 1-m gives the same output.
TEST_CASE("property: masked_mix swap symmetry") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = test::rand_int(rng, 1, 4), h = test::rand_int(rng, 1, 8), w = test::rand_int(rng, 1, 8);
    const NdArray v1 = randn({c, h, w}, rng), v2 = randn({c, h, w}, rng);
    const NdArray m = dyadic_mask(h, w, rng);
    NdArray inv(m.shape());
    for (std::size_t i = 0; i < m.size(); ++i) inv[i] = 1.0 - m[i];
    CHECK(identical_values(masked_mix(v1, v2, m), masked_mix(v2, v1, inv)));
    CHECK(identical_values(masked_mix_noise(v1, v2, m), masked_mix_noise(v2, v1, inv)));
    for (std::size_t i = 0; i < m.size(); ++i) CHECK((m[i] >= 0.0 && m[i] <= 1.0));
  }
}

TEST_CASE("mix_reps identities") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 5);
  std::mt19937_64 rng(6);
  for (const SpaceId sp : {SpaceId::nwp(), SpaceId::nswp(), SpaceId::fnwp(2), SpaceId::fnswp(1), SpaceId::z()}) {
    CAPTURE(sp.str());
    const LatentRep r1 = sample_space(sp, 1, w, cfg, rng), r2 = sample_space(sp, 1, w, cfg, rng);
    const NdArray m = dyadic_mask(16, 16, rng);
    CHECK(identical(mix_reps(r1, r1, m, {}, cfg), r1));
    CHECK(identical(mix_reps(r1, r2, NdArray({16, 16}, 0.0), {}, cfg), r1));
    CHECK(identical(mix_reps(r1, r2, NdArray({16, 16}, 1.0), {}, cfg), r2));
    const LatentRep mixed = mix_reps(r1, r2, m, MixOptions{true, {}}, cfg);
    CHECK(diagnose(mixed, cfg).empty());
  }
  const LatentRep a = sample_space(SpaceId::nwp(), 1, w, cfg, rng);
  const LatentRep b = sample_space(SpaceId::wp(), 1, w, cfg, rng);
  CHECK_THROWS_AS(mix_reps(a, b, NdArray({16, 16}, 0.5), {}, cfg), ValidationError);
}

TEST_CASE("half-plane mixing is local") {
  GeneratorConfig cfg;
  cfg.padding = Padding::circular;
  const GeneratorWeights w = init_generator(cfg, 7);
  std::mt19937_64 rng(8);
  const SpaceId sp = SpaceId::fnswp(3);
  auto sample = [&] {
    return translate_crop(sample_space(sp, 1, w, cfg, rng), 0, 0, 32, 64, BoundaryPolicy::pad_noise, rng, cfg);
  };
  const LatentRep r1 = sample(), r2 = sample();
  NdArray mask({32, 64}, 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 32; x < 64; ++x) mask.at({y, x}) = 1.0;
  const NdArray img = synthesize(mix_reps(r1, r2, mask, {}, cfg), w, cfg);
  const NdArray i1 = synthesize(r1, w, cfg), i2 = synthesize(r2, w, cfg);
  // seams at x = 0 (wrap) and x = 32; the block-3 receptive field spans well under 12 px
  const int margin = 12;
  double left = 0, right = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = margin; x < 32 - margin; ++x) {
        left = std::max(left, std::abs(img.at({0, c, y, x}) - i1.at({0, c, y, x})));
        right = std::max(right, std::abs(img.at({0, c, y, x + 32}) - i2.at({0, c, y, x + 32})));
      }
  CHECK(left == 0.0);
  CHECK(right == 0.0);
}

TEST_CASE("ramp masks") {
  const NdArray step = make_ramp_mask(3, 8, 4.0, 0.0);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 8; ++x) CHECK(step.at({y, x}) == (x < 4 ? 0.0 : 1.0));
  const NdArray soft = make_ramp_mask(2, 9, 3.5, 1.5);
  CHECK(soft.at({0, 3}) == 0.5);
  for (int x = 1; x < 9; ++x) CHECK(soft.at({1, x}) >= soft.at({1, x - 1}));
  check_mask(soft);
  CHECK_THROWS_AS(make_ramp_mask(2, 2, 1.0, -1.0), ValidationError);
}

TEST_CASE("mask resampling") {
  NdArray checker({4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker.at({y, x}) = (x + y) % 2;
  const NdArray down = resample_mask(checker, 2, 2);
  for (double v : down.data()) CHECK(v == 0.5);
  const NdArray up = resample_mask(checker, 8, 8);
  CHECK(up.shape() == Shape{8, 8});
  check_mask(up);
  const NdArray flat = resample_mask(NdArray({3, 5}, 0.25), 12, 2);
  for (double v : flat.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  const NdArray smooth = gaussian_smooth(make_ramp_mask(4, 16, 8, 0), 1.5);
  check_mask(smooth);
  CHECK(smooth.at({0, 7}) > 0.0);
  CHECK(smooth.at({0, 8}) < 1.0);
}
