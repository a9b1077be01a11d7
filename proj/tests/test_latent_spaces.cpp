#include <doctest.h>

#include <string>

#include "slk/latent_spaces.hpp"
#include "test_util.hpp"

using namespace slk;
using slk::test::randn;

namespace {

bool mentions(const std::vector<std::string>& issues, const std::string& text) {
  for (const auto& s : issues)
    if (s.find(text) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("space ids parse and print") {
  for (const char* s : {"z", "w", "wp", "swp", "nwp", "nswp", "fwp:2", "fswp:1", "fnwp:3", "fnswp:4", "fnz:2"}) {
    CAPTURE(std::string(s));
    CHECK(SpaceId::parse(s).str() == s);
  }
  CHECK(SpaceId::parse("fnwp:3") == SpaceId::fnwp(3));
  CHECK_THROWS_AS(SpaceId::parse("fwp"), ValidationError);
  CHECK_THROWS_AS(SpaceId::parse("wp:2"), ValidationError);
  CHECK_THROWS_AS(SpaceId::parse("fwp:0"), ValidationError);
  CHECK_THROWS_AS(SpaceId::parse("xyz"), ValidationError);
}

TEST_CASE("validate names the offending component") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 1);
  std::mt19937_64 rng(2);

  LatentRep swp = sample_space(SpaceId::swp(), 1, w, cfg, rng);
  CHECK(diagnose(swp, cfg).empty());
  swp.feature = NdArray({1, cfg.feature_channels(1), 4, 4});
  CHECK(mentions(diagnose(swp, cfg), "feature not in swp formula"));

  LatentRep fnwp = convert_forward(sample_space(SpaceId::nwp(), 1, w, cfg, rng), SpaceId::fnwp(2), w, cfg);
  CHECK(diagnose(fnwp, cfg).empty());
  fnwp.noises.pop_back();
  CHECK(mentions(diagnose(fnwp, cfg), "noise maps: expected"));
  try {
    validate(fnwp, cfg);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("fnwp:2") != std::string::npos);
  }

  LatentRep wp = sample_space(SpaceId::wp(), 1, w, cfg, rng);
  wp.styles[2] = NdArray({1, cfg.latent_dim + 1});
  const auto issues = diagnose(wp, cfg);
  CHECK(mentions(issues, "style[2]: expected [1,16], found [1,17]"));

  CHECK(diagnose(sample_space(SpaceId::nwp(), 2, w, cfg, rng), cfg).empty());
}

TEST_CASE("conversion examples") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 3);
  std::mt19937_64 rng(4);
  const LatentRep swp = sample_space(SpaceId::swp(), 2, w, cfg, rng);
  const LatentRep f1 = convert_forward(swp, SpaceId::fswp(1), w, cfg);
  CHECK(f1.space == SpaceId::fswp(1));
  CHECK_FALSE(f1.rgb.has_value());
  REQUIRE(f1.feature.has_value());
  for (int b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < w.f1.size(); ++k) CHECK((*f1.feature)[b * w.f1.size() + k] == w.f1[k]);
  CHECK(max_abs_diff(synthesize(f1, w, cfg), synthesize(swp, w, cfg)) == 0.0);

  const LatentRep f3 = convert_forward(f1, SpaceId::fswp(3), w, cfg);
  CHECK(max_abs_diff(synthesize(f3, w, cfg), synthesize(swp, w, cfg)) <= 1e-6);
  CHECK(static_cast<int>(f3.styles.size()) == cfg.num_styles() - cfg.first_style(3));
  CHECK_THROWS_AS(convert_forward(f3, SpaceId::fswp(2), w, cfg), ValidationError);
  CHECK_THROWS_AS(convert_forward(f3, SpaceId::fwp(3), w, cfg), ValidationError);
  CHECK_THROWS_AS(convert_forward(swp, SpaceId::wp(), w, cfg), ValidationError);
  CHECK_THROWS_AS(sample_space(SpaceId::fnz(2), 1, w, cfg, rng), ValidationError);
}

// Property: random conversion chains A -> B -> C agree with A -> C and validate.
TEST_CASE("property: conversion chains compose") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 5);
  std::mt19937_64 rng(6);
  const std::vector<SpaceId> roots = {SpaceId::z(), SpaceId::w(), SpaceId::wp(), SpaceId::nwp(), SpaceId::swp(),
                                      SpaceId::nswp()};
  for (int trial = 0; trial < 30; ++trial) {
    const SpaceId a = roots[test::rand_int(rng, 0, static_cast<int>(roots.size()) - 1)];
    // random walk of forward steps
    std::vector<SpaceId> path = {a};
    for (int s = 0; s < 4; ++s) {
      const auto next = forward_steps(path.back(), cfg);
      if (next.empty()) break;
      path.push_back(next[test::rand_int(rng, 0, static_cast<int>(next.size()) - 1)]);
    }
    if (path.size() < 3) continue;
    const int bi = test::rand_int(rng, 1, static_cast<int>(path.size()) - 2);
    const SpaceId b = path[bi], c = path.back();
    CAPTURE(a.str());
    CAPTURE(b.str());
    CAPTURE(c.str());
    const LatentRep src = sample_space(a, 1, w, cfg, rng);
    const LatentRep via = convert_forward(convert_forward(src, b, w, cfg), c, w, cfg);
    const LatentRep direct = convert_forward(src, c, w, cfg);
    CHECK(diagnose(via, cfg).empty());
    CHECK(max_abs_diff(via, direct) <= 1e-9);
    CHECK(max_abs_diff(synthesize(direct, w, cfg), synthesize(src, w, cfg)) <= 1e-6);
  }
}

TEST_CASE("style expansion and averaging") {
  const GeneratorConfig cfg = test::small_config();
  const GeneratorWeights w = init_generator(cfg, 7);
  std::mt19937_64 rng(8);
  for (const SpaceId sp : {SpaceId::wp(), SpaceId::nwp(), SpaceId::fwp(2), SpaceId::fnwp(3)}) {
    CAPTURE(sp.str());
    const LatentRep rep = sample_space(sp, 2, w, cfg, rng);
    const LatentRep ex = expand_styles_spatial(rep, cfg);
    CHECK(ex.space.spatial_styles());
    CHECK(diagnose(ex, cfg).empty());
    CHECK(max_abs_diff(synthesize(ex, w, cfg), synthesize(rep, w, cfg)) <= 1e-9);
    // averaging a constant map rounds only in the summation
    CHECK(max_abs_diff(average_styles_spatial(ex, cfg), rep) <= 1e-12);
    CHECK(max_abs_diff(expand_styles_spatial(average_styles_spatial(ex, cfg), cfg), ex) <= 1e-12);
  }

  LatentRep tiny = sample_space(SpaceId::wp(), 1, w, cfg, rng);
  const LatentRep ex = expand_styles_spatial(tiny, cfg);
  const NdArray& s0 = ex.styles[0];
  for (int c = 0; c < cfg.latent_dim; ++c)
    for (int y = 0; y < s0.dim(2); ++y)
      for (int x = 0; x < s0.dim(3); ++x) CHECK(s0.at({0, c, y, x}) == tiny.styles[0].at({0, c}));
}

TEST_CASE("translate_crop") {
  GeneratorConfig cfg = test::small_config();
  cfg.padding = Padding::circular;
  const GeneratorWeights w = init_generator(cfg, 9);
  std::mt19937_64 rng(10);
  const LatentRep rep = sample_space(SpaceId::fnswp(2), 1, w, cfg, rng);
  CHECK(identical(translate_crop(rep, 0, 0, 0, 0, BoundaryPolicy::circular, rng, cfg), rep));
  CHECK(identical(translate_crop(rep, 0, 0, 0, 0, BoundaryPolicy::pad_noise, rng, cfg), rep));

  // block 2 of 3: feature cells are 2 px, its rgb cells 4 px
  CHECK_THROWS_AS(translate_crop(rep, 2, 0, 0, 0, BoundaryPolicy::circular, rng, cfg), ValidationError);
  CHECK_THROWS_AS(translate_crop(rep, 0, 0, 14, 16, BoundaryPolicy::circular, rng, cfg), ValidationError);

  const NdArray base = synthesize(rep, w, cfg);
  const LatentRep moved = translate_crop(rep, 4, -8, 0, 0, BoundaryPolicy::circular, rng, cfg);
  const NdArray img = synthesize(moved, w, cfg);
  const int h = base.dim(2), wd = base.dim(3);
  double worst = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < wd; ++x) {
        const double ref = base.at({0, c, ((y - 4) % h + h) % h, ((x + 8) % wd + wd) % wd});
        worst = std::max(worst, std::abs(img.at({0, c, y, x}) - ref));
      }
  CHECK(worst == 0.0);

  // wider canvas: exposed noise is fresh, everything else edge-replicated
  const LatentRep wide = translate_crop(rep, 0, 0, 16, 32, BoundaryPolicy::pad_noise, rng, cfg);
  CHECK(diagnose(wide, cfg).empty());
  CHECK(image_extents(wide, cfg) == std::pair<int, int>{16, 32});
  CHECK(synthesize(wide, w, cfg).shape() == Shape{1, 3, 16, 32});
  const NdArray& f = *wide.feature;
  for (int c = 0; c < f.dim(1); ++c)
    for (int y = 0; y < f.dim(2); ++y) CHECK(f.at({0, c, y, f.dim(3) - 1}) == rep.feature->at({0, c, y, 7}));
  const NdArray& n = wide.noises.back();
  bool fresh = false;
  for (int y = 0; y < 16; ++y) fresh = fresh || n.at({0, y, 20}) != n.at({0, y, 15});
  CHECK(fresh);
}
