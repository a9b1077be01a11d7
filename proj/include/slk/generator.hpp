#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "slk/latent_rep.hpp"

namespace slk {

template <class T>
struct ConvLayerT {
  T weight;    // [Cout, Cin, k, k]
  T affine_w;  // [Cin, D]
  T affine_b;  // [Cin]
  T bias;      // [Cout]
  T noise_strength;  // [1]
};

template <class T>
struct RgbLayerT {
  T weight;    // [3, Cin, 1, 1]
  T affine_w;  // [Cin, D]
  T affine_b;  // [Cin]
  T bias;      // [3]
};

template <class T>
struct GeneratorTensors {
  std::vector<T> map_w;  // [D, D]
  std::vector<T> map_b;  // [D]
  T f1;                  // [1, C0, base, base]
  std::vector<ConvLayerT<T>> convs;  // indexed like noise maps
  std::vector<RgbLayerT<T>> rgbs;    // one per block

  // Visits every tensor with a stable name.
  template <class F>
  void visit(F&& f) {
    for (std::size_t l = 0; l < map_w.size(); ++l) {
      f("map" + std::to_string(l) + ".w", map_w[l]);
      f("map" + std::to_string(l) + ".b", map_b[l]);
    }
    f("f1", f1);
    for (std::size_t l = 0; l < convs.size(); ++l) {
      const std::string p = "conv" + std::to_string(l) + ".";
      f(p + "weight", convs[l].weight);
      f(p + "affine_w", convs[l].affine_w);
      f(p + "affine_b", convs[l].affine_b);
      f(p + "bias", convs[l].bias);
      f(p + "noise_strength", convs[l].noise_strength);
    }
    for (std::size_t l = 0; l < rgbs.size(); ++l) {
      const std::string p = "rgb" + std::to_string(l) + ".";
      f(p + "weight", rgbs[l].weight);
      f(p + "affine_w", rgbs[l].affine_w);
      f(p + "affine_b", rgbs[l].affine_b);
      f(p + "bias", rgbs[l].bias);
    }
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<GeneratorTensors*>(this)->visit([&](const std::string& name, T& t) { f(name, static_cast<const T&>(t)); });
  }
};

using GeneratorWeights = GeneratorTensors<NdArray>;
using GeneratorParams = GeneratorTensors<Var>;

GeneratorWeights init_generator(const GeneratorConfig& cfg, std::uint64_t seed);
GeneratorParams as_params(const GeneratorWeights& w, bool trainable);
GeneratorWeights values_of(const GeneratorParams& p);
void check_weights(const GeneratorWeights& w, const GeneratorConfig& cfg);

// Mapping MLP: each layer is lrelu(linear(.)).
Var map_latent(const Var& z, const GeneratorParams& p);
NdArray map_latent(const NdArray& z, const GeneratorWeights& w);

// Demodulation coefficients for a style map:
// demod[b,o,h,w] = rsqrt(sum_{c,i,j} (weight[b,o,c,i,j] * style[b,c,h,w])^2 + eps).
// weight is [B,Cout,Cin,kh,kw] or a shared [Cout,Cin,kh,kw].
Var spatial_demod_coeffs(const Var& weight, const Var& style_map, double eps = 1e-8);
// Same value; forward split along width, backward split along input channels.
Var spatial_demod_chunked(const Var& weight, const Var& style_map, double max_chunk_elems, double eps = 1e-8);

// Reference path: per-sample weight modulation (and demodulation) then a plain conv.
// style [B,Cin].
NdArray modulated_conv_nonspatial(const NdArray& x, const NdArray& style, const NdArray& weight, bool demodulate,
                                  Padding padding, double eps = 1e-8);

// Activation-space modulated conv. style is [B,Cin] or a map [B,Cin,H,W].
Var modulated_conv(const Var& x, const Var& style, const Var& weight, bool demodulate, Padding padding,
                   double eps = 1e-8, double max_chunk_elems = std::numeric_limits<double>::infinity());

// Feature and RGB maps entering a block.
struct BlockState {
  Var feature;
  std::optional<Var> rgb;
};

// Supplies the (pre-affine) style for a slot and the noise map for an index.
// A style may be a vector [B,D] or a map [B,D,H,W]; an undefined noise Var means zero.
struct LayerInputs {
  std::function<Var(int slot)> style;
  std::function<Var(int index)> noise;
};

// Runs blocks from..to-1 and returns the state entering block `to`
// (for to == num_blocks + 1 the rgb member holds the image).
BlockState run_blocks(BlockState state, int from, int to, const LayerInputs& in, const GeneratorParams& p,
                      const GeneratorConfig& cfg);

// Learned f1 broadcast to a batch.
Var initial_feature(const GeneratorParams& p, int batch);

Var synthesize(const VarRep& rep, const GeneratorParams& p, const GeneratorConfig& cfg);
NdArray synthesize(const LatentRep& rep, const GeneratorWeights& w, const GeneratorConfig& cfg);

}  // namespace slk
