#include <doctest.h>

#include <cmath>

#include "slk/noise_regularizer.hpp"
#include "test_util.hpp"

using namespace slk;
using slk::test::randn;

namespace {

std::pair<double, double> moments(const NdArray& a) {
  double s = 0, ss = 0;
  for (double v : a.data()) s += v;
  const double mu = s / a.size();
  for (double v : a.data()) ss += (v - mu) * (v - mu);
  return {mu, std::sqrt(ss / a.size())};
}

}  // namespace

TEST_CASE("noise regularization hand traces") {
  CHECK(noise_reg_loss(std::vector<NdArray>{NdArray({8, 8}, 1.0)}) == 2.0);
  CHECK(noise_reg_loss(std::vector<NdArray>{NdArray({16, 16}, 1.0)}) == 4.0);
  CHECK(noise_reg_loss(std::vector<NdArray>{NdArray({4, 4}, 1.0)}) == 0.0);
  CHECK(noise_reg_loss(std::vector<NdArray>{NdArray({8, 8}, 1.0), NdArray({16, 16}, 1.0)}) == 6.0);
  // 8x16: one scale, then 4x8 exits
  CHECK(noise_reg_loss(std::vector<NdArray>{NdArray({8, 16}, 1.0)}) == 2.0);
  // alternating columns: horizontal neighbours anti-correlate, vertical ones agree
  NdArray stripes({8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) stripes.at({y, x}) = x % 2 ? 1.0 : -1.0;
  CHECK(noise_reg_loss(std::vector<NdArray>{stripes}) == 2.0);
}

TEST_CASE("noise regularization of white noise is small") {
  std::mt19937_64 rng(1);
  double total = 0;
  for (int i = 0; i < 100; ++i) total += noise_reg_loss(std::vector<NdArray>{randn({64, 64}, rng)});
  CHECK(total / 100 < 0.01);
}

// Property: sign flips leave the loss unchanged and the gradient matches differences.
TEST_CASE("property: sign invariance and gradient") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 8 * test::rand_int(rng, 1, 3), w = 8 * test::rand_int(rng, 1, 3);
    const NdArray n = randn({h, w}, rng);
    NdArray neg = n;
    for (double& v : neg.data()) v = -v;
    CHECK(noise_reg_loss(std::vector<NdArray>{n}) == noise_reg_loss(std::vector<NdArray>{neg}));
    CHECK(grad_check([](const Var& v) { return noise_reg_loss(std::vector<Var>{v}); }, n) < 1e-6);
  }
  // batched maps sum their samples
  const NdArray a = randn({8, 8}, rng), b = randn({8, 8}, rng);
  NdArray ab({2, 8, 8});
  for (int i = 0; i < 64; ++i) ab[i] = a[i], ab[64 + i] = b[i];
  CHECK(noise_reg_loss(std::vector<NdArray>{ab}) ==
        doctest::Approx(noise_reg_loss(std::vector<NdArray>{a, b})).epsilon(1e-14));
}

TEST_CASE("standardize_noise") {
  std::mt19937_64 rng(3);
  CHECK(standardize_noise(NdArray({1, 2}, std::vector<double>{1, 3}), rng).vec() == std::vector<double>{-1, 1});

  const NdArray c = standardize_noise(NdArray({32, 32}, 5.0), rng);
  const auto [cm, cs] = moments(c);
  CHECK(std::abs(cm) < 1e-10);
  CHECK(std::abs(cs - 1) < 1e-10);

  const NdArray once = standardize_noise(randn({16, 16}, rng), rng);
  CHECK(max_abs_diff(standardize_noise(once, rng), once) < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const int h = test::rand_int(rng, 1, 20), w = test::rand_int(rng, 2, 20);
    NdArray m = randn({h, w}, rng, test::uniform({1}, rng, 0.01, 100.0)[0]);
    for (double& v : m.data()) v += 7.0;
    const auto [mu, sd] = moments(standardize_noise(m, rng));
    CHECK(std::abs(mu) < 1e-10);
    CHECK(std::abs(sd - 1) < 1e-10);
  }

  // batched maps are standardized per sample
  std::vector<NdArray> maps = {randn({3, 8, 8}, rng, 4.0)};
  standardize_noise(maps, rng);
  for (int b = 0; b < 3; ++b) {
    NdArray s({8, 8});
    for (int i = 0; i < 64; ++i) s[i] = maps[0][b * 64 + i];
    const auto [mu, sd] = moments(s);
    CHECK(std::abs(mu) < 1e-10);
    CHECK(std::abs(sd - 1) < 1e-10);
  }
}
