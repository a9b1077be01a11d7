#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "slk/ops.hpp"
#include "slk/resample.hpp"
#include "slk/serialize.hpp"
#include "test_util.hpp"

using namespace slk;
using slk::test::randn;

TEST_CASE("ndarray construction and indexing") {
  NdArray a({2, 3}, 1.5);
  CHECK(a.size() == 6);
  CHECK(a.dim(-1) == 3);
  a.at({1, 2}) = 7;
  CHECK(a[5] == 7);
  CHECK_THROWS_AS(NdArray({2, 0}), ValidationError);
  CHECK_THROWS_AS(NdArray({2, 2}, std::vector<double>{1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(a.reshaped({4, 2}), ValidationError);
  CHECK(a.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("conv2d hand examples") {
  NdArray x({1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  NdArray delta({1, 1, 3, 3}, 0.0);
  delta[4] = 1;
  CHECK(max_abs_diff(conv2d(x, delta, Padding::zero), x) == 0);
  CHECK(max_abs_diff(conv2d(x, delta, Padding::circular), x) == 0);

  CHECK(conv2d(NdArray({1, 1, 1, 1}, 3.0), NdArray({1, 1, 1, 1}, 2.0), Padding::zero)[0] == 6);

  const NdArray ones = conv2d(NdArray({1, 1, 3, 3}, 1.0), NdArray({1, 1, 3, 3}, 1.0), Padding::zero);
  CHECK(ones[4] == 9);
  CHECK(ones[0] == 4);
  CHECK(ones[1] == 6);
  // circular: every output sees all nine inputs
  const NdArray wrap = conv2d(NdArray({1, 1, 3, 3}, 1.0), NdArray({1, 1, 3, 3}, 1.0), Padding::circular);
  CHECK(wrap[0] == 9);
}

TEST_CASE("conv2d rejects mismatched shapes with both shapes named") {
  try {
    conv2d(NdArray({1, 2, 4, 4}), NdArray({3, 5, 3, 3}), Padding::zero);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,2,4,4]") != std::string::npos);
    CHECK(msg.find("[3,5,3,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(NdArray({1, 1, 4, 4}), NdArray({1, 1, 2, 3}), Padding::zero), ValidationError);
}

TEST_CASE("elementwise suite examples") {
  const Var r = roll(Var::constant(NdArray({3}, std::vector<double>{1, 2, 3})), 1, 0);
  CHECK(r.value().vec() == std::vector<double>{3, 1, 2});

  const Var p = avg_pool2(Var::constant(NdArray({2, 2}, std::vector<double>{1, 2, 3, 4})));
  CHECK(p.value().item() == 2.5);

  const SortResult s = sort_flat(Var::constant(NdArray({3}, std::vector<double>{2, 0, 1})));
  CHECK(s.values.value().vec() == std::vector<double>{0, 1, 2});
  CHECK(s.permutation == std::vector<std::size_t>{1, 2, 0});

  const Var u = upsample_nearest2(Var::constant(NdArray({1, 2}, std::vector<double>{1, 2})));
  CHECK(u.value().vec() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});

  CHECK(lrelu(Var::constant(NdArray({2}, std::vector<double>{-1, 2})), 0.2).value().vec() ==
        std::vector<double>{-0.2, 2});
  CHECK(rsqrt_eps(Var::constant(NdArray({1}, 0.0)), 1e-8).value().item() == doctest::Approx(1e4).epsilon(1e-15));
  CHECK_THROWS_AS(div(Var::constant(NdArray({2}, 1.0)), Var::constant(NdArray({2}, std::vector<double>{1, 0}))),
                  ValidationError);

  const Var m = matmul(Var::constant(NdArray({2, 2}, std::vector<double>{1, 2, 3, 4})),
                       Var::constant(NdArray({2, 1}, std::vector<double>{5, 6})));
  CHECK(m.value().vec() == std::vector<double>{17, 39});
  const Var so = sum_over(Var::constant(NdArray({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6})), {1});
  CHECK(so.value().vec() == std::vector<double>{6, 15});
  const Var mo = mean_over(Var::constant(NdArray({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6})), {0});
  CHECK(mo.value().vec() == std::vector<double>{2.5, 3.5, 4.5});
}

TEST_CASE("broadcasting follows numpy rules") {
  CHECK(broadcast_shape({2, 1, 3}, {4, 1}) == Shape{2, 4, 3});
  CHECK_THROWS_AS(broadcast_shape({2, 3}, {4, 3}), ValidationError);
  const Var a = add(Var::constant(NdArray({2, 1}, std::vector<double>{1, 2})),
                    Var::constant(NdArray({3}, std::vector<double>{10, 20, 30})));
  CHECK(a.value().vec() == std::vector<double>{11, 21, 31, 12, 22, 32});
}

TEST_CASE("grad_check examples") {
  std::mt19937_64 rng(1);
  const NdArray x = randn({3, 4}, rng);
  CHECK(grad_check([](const Var& v) { return sum_all(pow2(v)); }, x) < 1e-8);
  const NdArray k = randn({2, 2, 3, 3}, rng);
  CHECK(grad_check([&](const Var& v) { return sum_all(conv2d(v, Var::constant(k), Padding::zero)); },
                   randn({1, 2, 4, 5}, rng)) < 1e-6);
  CHECK_THROWS_AS(grad_check([](const Var& v) { return sum_all(rsqrt_eps(v, 0.0)); }, NdArray({2}, 0.0)),
                  NumericalError);
}

// Property: every differentiable op passes grad_check on random inputs (shapes <= 4x4x8x8).
TEST_CASE("property: differentiable ops match central differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 8; ++trial) {
    const int b = test::rand_int(rng, 1, 3), c = test::rand_int(rng, 2, 4);
    const int h = 2 * test::rand_int(rng, 1, 4), w = 2 * test::rand_int(rng, 1, 4);
    const Shape s{b, c, h, w};
    const NdArray x = randn(s, rng);
    const NdArray other = randn(s, rng);
    const NdArray pos = test::uniform(s, rng, 0.5, 2.0);
    const NdArray weights = randn(s, rng);
    auto probe = [&](const Var& v) { return sum_all(mul(v, Var::constant(weights))); };
    const NdArray kern = randn({3, c, 3, 3}, rng);
    const std::vector<std::pair<std::string, std::function<Var(const Var&)>>> ops = {
        {"add", [&](const Var& v) { return probe(add(v, Var::constant(other))); }},
        {"sub", [&](const Var& v) { return probe(sub(Var::constant(other), v)); }},
        {"mul", [&](const Var& v) { return probe(mul(v, v)); }},
        {"div", [&](const Var& v) { return sum_all(div(Var::constant(other), add_scalar(pow2(v), 1.0))); }},
        {"pow2", [&](const Var& v) { return probe(pow2(v)); }},
        {"rsqrt", [&](const Var& v) { return sum_all(rsqrt_eps(add_scalar(pow2(v), 0.5), 1e-8)); }},
        {"lrelu", [&](const Var& v) { return probe(lrelu(v)); }},
        {"softplus", [&](const Var& v) { return probe(softplus(v)); }},
        {"sum_over", [&](const Var& v) { return sum_all(pow2(sum_over(v, {1, 3}))); }},
        {"mean_over", [&](const Var& v) { return sum_all(pow2(mean_over(v, {0, 2}, true))); }},
        {"avg_pool2", [&](const Var& v) { return sum_all(pow2(avg_pool2(v))); }},
        {"upsample_nearest2", [&](const Var& v) { return sum_all(pow2(upsample_nearest2(v))); }},
        {"upsample_bilinear2", [&](const Var& v) { return sum_all(pow2(upsample_bilinear2(v))); }},
        {"roll", [&](const Var& v) { return probe(roll(v, 1, 3)); }},
        {"conv_zero", [&](const Var& v) { return sum_all(pow2(conv2d(v, Var::constant(kern), Padding::zero))); }},
        {"conv_circ", [&](const Var& v) { return sum_all(pow2(conv2d(v, Var::constant(kern), Padding::circular))); }},
        {"slice_concat", [&](const Var& v) { return probe(concat({slice(v, 1, 0, 1), slice(v, 1, 1, c)}, 1)); }},
        {"mse", [&](const Var& v) { return mse(v, Var::constant(other)); }},
        {"reshape", [&](const Var& v) { return sum_all(pow2(reshape(v, {b * c, h * w}))); }},
        {"broadcast", [&](const Var& v) { return sum_all(pow2(broadcast_to(mean_over(v, {0}, true), s))); }},
    };
    for (const auto& [name, f] : ops) {
      CAPTURE(name);
      CHECK(grad_check(f, x) < 1e-6);
    }
    CHECK(grad_check([&](const Var& v) { return sum_all(pow2(div(Var::constant(other), v))); }, pos) < 1e-6);
    // sort is only piecewise smooth: keep neighbours further apart than the difference step
    std::vector<double> spaced(x.size());
    for (std::size_t i = 0; i < spaced.size(); ++i) spaced[i] = 0.01 * static_cast<double>(i);
    std::shuffle(spaced.begin(), spaced.end(), rng);
    const NdArray flat_w = weights.reshaped({static_cast<int>(weights.size())});
    CHECK(grad_check([&](const Var& v) { return sum_all(mul(sort_flat(v).values, Var::constant(flat_w))); },
                     NdArray(s, spaced)) < 1e-6);
  }
  // matmul / linear / transpose on matrices
  const NdArray a = randn({3, 4}, rng), wt = randn({5, 4}, rng), bias = randn({5}, rng);
  CHECK(grad_check([&](const Var& v) { return sum_all(pow2(linear(v, Var::constant(wt), Var::constant(bias)))); }, a) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return sum_all(pow2(linear(Var::constant(a), v, Var::constant(bias)))); }, wt) < 1e-6);
  CHECK(grad_check([&](const Var& v) { return sum_all(pow2(matmul(transpose2d(v), Var::constant(a)))); }, randn({3, 2}, rng)) < 1e-6);
  // conv kernel gradient
  const NdArray x = randn({2, 3, 5, 4}, rng);
  CHECK(grad_check([&](const Var& k) { return sum_all(pow2(conv2d(Var::constant(x), k, Padding::circular))); }, randn({2, 3, 3, 3}, rng)) < 1e-6);
}

TEST_CASE("property: circular conv commutes with circular shifts") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = test::rand_int(rng, 3, 8), w = test::rand_int(rng, 3, 8);
    const Var x = Var::constant(randn({2, 3, h, w}, rng));
    const Var k = Var::constant(randn({4, 3, 3, 3}, rng));
    const int dy = test::rand_int(rng, -h, h), dx = test::rand_int(rng, -w, w);
    const NdArray a = roll(roll(conv2d(x, k, Padding::circular), dy, 2), dx, 3).value();
    const NdArray b = conv2d(roll(roll(x, dy, 2), dx, 3), k, Padding::circular).value();
    CHECK(max_abs_diff(a, b) == 0.0);
  }
}

TEST_CASE("property: sort_flat is a nondecreasing permutation") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = test::rand_int(rng, 1, 50);
    NdArray x({n});
    for (double& v : x.data()) v = test::rand_int(rng, -3, 3);  // plenty of ties
    const SortResult s = sort_flat(Var::constant(x));
    const auto& v = s.values.value().vec();
    CHECK(std::is_sorted(v.begin(), v.end()));
    std::vector<std::size_t> perm = s.permutation;
    for (int k = 0; k < n; ++k) CHECK(v[k] == x[perm[k]]);
    // stable: equal values keep input order
    for (int k = 1; k < n; ++k)
      if (v[k] == v[k - 1]) CHECK(perm[k] > perm[k - 1]);
    std::sort(perm.begin(), perm.end());
    for (int k = 0; k < n; ++k) CHECK(perm[k] == static_cast<std::size_t>(k));
  }
}

TEST_CASE("reverse sweep accumulates and visits shared nodes once") {
  const Var x = Var::param(NdArray({1}, 3.0));
  const Var y = mul(x, x);      // 2x
  const Var z = add(y, y);      // 4x
  backward(sum_all(z));
  CHECK(x.grad()[0] == 12.0);
  {
    NoGradGuard g;
    CHECK(!grad_enabled());
    const Var t = mul(x, x);
    CHECK(!t.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("resize helpers") {
  const NdArray a({1, 4}, std::vector<double>{1, 2, 3, 4});
  CHECK(resize_area(a, 1, 2).vec() == std::vector<double>{1.5, 3.5});
  const NdArray up = resize_bilinear(NdArray({1, 2}, std::vector<double>{0, 1}), 1, 4);
  CHECK(up.vec() == std::vector<double>{0, 0.25, 0.75, 1});
}

TEST_CASE("SLK1 container round trip and layout") {
  std::mt19937_64 rng(17);
  const NdArray a = randn({2, 3, 4}, rng);
  const auto bytes = encode_array(a);
  REQUIRE(bytes.size() == 4 + 1 + 1 + 3 * 4 + 24 * 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SLK1");
  CHECK(bytes[4] == 0);
  CHECK(bytes[5] == 3);
  CHECK(bytes[6] == 2);  // little-endian u32 extent
  CHECK(bytes[7] == 0);
  const NdArray b = decode_array(bytes);
  CHECK(b.shape() == a.shape());
  CHECK(max_abs_diff(a, b) == 0);
  const NdArray f = decode_array(encode_array(a, DType::f32));
  CHECK(max_abs_diff(a, f) < 1e-6);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_array(bad), ValidationError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_array(bad), ValidationError);
  CHECK(fnv1a_hex({}) == "cbf29ce484222325");
  CHECK(fnv1a_hex({'a'}) == "af63dc4c8601ec8c");
}
