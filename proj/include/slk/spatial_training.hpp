#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "slk/generator.hpp"

namespace slk {

// Normalized (2k+1)x(2k+1) Gaussian; sigma = 0 gives the delta kernel.
NdArray gaussian_kernel(int k, double sigma);

struct BlurredNoiseConfig {
  int c = 2;
  int h = 8;
  int w = 8;
  int k = 3;
  double sigma_max = 2.0;

  void validate() const;
  double sigma(int channel) const { return sigma_max * channel / (c - 1); }
};

// [C,H,W]. Channel i is white noise blurred with sigma_i = i/(C-1) * sigma_max,
// rescaled to unit variance and cropped from an oversized draw.
NdArray sample_blurred_noise(const BlurredNoiseConfig& cfg, std::mt19937_64& rng);

enum class InputDist { standard_normal, blurred };
InputDist parse_input_dist(const std::string& s);
std::string input_dist_name(InputDist d);

// FNZ(i) sample with a feature map of h x w (block i grid cells), zero RGB map,
// z ~ N(0, I) and N(0,1) noise maps at the matching extents.
LatentRep sample_training_input(const SpaceId& space, InputDist dist, int batch, int h, int w,
                                const GeneratorConfig& cfg, std::mt19937_64& rng, int blur_k = 3,
                                double sigma_max = 2.0);

struct EmbeddingStats {
  NdArray mean;  // [D]
  NdArray cov;   // [D,D]
};

// Rows of `emb` [N,D] are samples. Covariance uses N-1.
EmbeddingStats embedding_stats(const NdArray& emb);
double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b);

// Fixed random conv net: three conv3x3 + lrelu + pool stages, global average pool.
struct ProxyEmbedder {
  std::vector<NdArray> w;
  std::vector<NdArray> b;
};

ProxyEmbedder make_proxy_embedder(std::uint64_t seed, int in_channels = 3, int dim = 16);
NdArray embed_images(const NdArray& images, const ProxyEmbedder& e);  // [N,C,H,W] -> [N,dim]

struct Patch {
  std::size_t image = 0;
  int y = 0;
  int x = 0;
  NdArray data;  // [C,side,side]
};

// Every (image, top-left) position is equally likely. Images are [C,H,W].
Patch sample_patch(const std::vector<NdArray>& images, int side, std::mt19937_64& rng);

// Stationary textures: wrapped Gaussian blobs with random colors, values in [-1,1].
NdArray blob_texture(int h, int w, std::mt19937_64& rng, int channels = 3);
std::vector<NdArray> make_texture_dataset(int count, int min_side, int max_side, std::uint64_t seed,
                                          int channels = 3);

template <class T>
struct DiscriminatorTensors {
  std::vector<T> conv_w;  // 3x3, stride 2 via pooling
  std::vector<T> conv_b;
  T fc_w, fc_b;

  template <class F>
  void visit(F&& f) {
    for (std::size_t s = 0; s < conv_w.size(); ++s) {
      f("d" + std::to_string(s) + ".w", conv_w[s]);
      f("d" + std::to_string(s) + ".b", conv_b[s]);
    }
    f("fc.w", fc_w);
    f("fc.b", fc_b);
  }
};

DiscriminatorTensors<NdArray> init_discriminator(int in_channels, std::uint64_t seed);
Var discriminate(const Var& images, const DiscriminatorTensors<Var>& d);  // [B,1]

struct GanConfig {
  SpaceId space = SpaceId::fnz(2);
  InputDist dist = InputDist::blurred;
  int steps = 300;
  int batch = 8;
  double lr_g = 2e-3;
  double lr_d = 2e-3;
  int eval_interval = 50;
  int eval_samples = 128;
  int blur_k = 3;
  double sigma_max = 2.0;
  double divergence = 1e4;
};

struct GanReport {
  std::vector<double> d_loss;
  std::vector<double> g_loss;
  std::vector<int> eval_steps;
  std::vector<double> frechet;
  bool aborted = false;
  std::string diagnostic;
};

struct GanResult {
  GeneratorWeights weights;
  GanReport report;
};

// Non-saturating logistic GAN in an FNZ space against patches of `dataset`.
GanResult train_toy_gan(const std::vector<NdArray>& dataset, const GeneratorWeights& init,
                        const GeneratorConfig& cfg, const GanConfig& gcfg, std::uint64_t seed);

}  // namespace slk
