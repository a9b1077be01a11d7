#include "slk/spatial_training.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "slk/latent_spaces.hpp"
#include "slk/optim.hpp"

namespace slk {

NdArray gaussian_kernel(int k, double sigma) {
  if (k < 0) throw ValidationError("kernel radius must be >= 0");
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw ValidationError("sigma must be finite and >= 0");
  const int n = 2 * k + 1;
  NdArray out({n, n}, 0.0);
  if (sigma == 0) {
    out[static_cast<std::size_t>(k) * n + k] = 1.0;
    return out;
  }
  double total = 0;
  for (int y = -k; y <= k; ++y)
    for (int x = -k; x <= k; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
      out[static_cast<std::size_t>(y + k) * n + (x + k)] = v;
      total += v;
    }
  for (double& v : out.data()) v /= total;
  return out;
}

void BlurredNoiseConfig::validate() const {
  if (c < 2) throw ValidationError("blurred noise needs at least 2 channels, got " + std::to_string(c));
  if (h < 1 || w < 1) throw ValidationError("blurred noise extents must be positive");
  if (k < 0) throw ValidationError("blur padding k must be >= 0");
  if (!(sigma_max >= 0) || !std::isfinite(sigma_max)) throw ValidationError("sigma_max must be finite and >= 0");
}

NdArray sample_blurred_noise(const BlurredNoiseConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const int ph = cfg.h + 2 * cfg.k, pw = cfg.w + 2 * cfg.k, n = 2 * cfg.k + 1;
  const NdArray raw = NdArray::randn({cfg.c, ph, pw}, rng);
  NdArray out({cfg.c, cfg.h, cfg.w}, 0.0);
  for (int ch = 0; ch < cfg.c; ++ch) {
    const NdArray ker = gaussian_kernel(cfg.k, cfg.sigma(ch));
    double sq = 0;
    for (double v : ker.data()) sq += v * v;
    const double norm = 1.0 / std::sqrt(sq);
    const double* src = raw.data().data() + static_cast<std::size_t>(ch) * ph * pw;
    double* dst = out.data().data() + static_cast<std::size_t>(ch) * cfg.h * cfg.w;
    for (int y = 0; y < cfg.h; ++y)
      for (int x = 0; x < cfg.w; ++x) {
        double acc = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) acc += ker[static_cast<std::size_t>(i) * n + j] * src[(y + i) * pw + (x + j)];
        dst[y * cfg.w + x] = acc * norm;
      }
  }
  return out;
}

InputDist parse_input_dist(const std::string& s) {
  if (s == "standard" || s == "standard_normal" || s == "normal") return InputDist::standard_normal;
  if (s == "blurred") return InputDist::blurred;
  throw ValidationError("unknown input distribution '" + s + "' (standard, blurred)");
}

std::string input_dist_name(InputDist d) { return d == InputDist::blurred ? "blurred" : "standard"; }

LatentRep sample_training_input(const SpaceId& space, InputDist dist, int batch, int h, int w,
                                const GeneratorConfig& cfg, std::mt19937_64& rng, int blur_k, double sigma_max) {
  if (space.kind != SpaceKind::FNZ) throw ValidationError("training input lives in an fnz space, got " + space.str());
  if (space.block < 1 || space.block > cfg.num_blocks) throw ValidationError("block out of range in " + space.str());
  if (batch < 1 || h < 1 || w < 1) throw ValidationError("batch and extents must be positive");
  const int i = space.block;
  if (i >= 2 && (h % 2 || w % 2)) {
    throw ValidationError("fnz:" + std::to_string(i) + " feature extents must be even (the rgb map is half size)");
  }
  const int cf = cfg.feature_channels(i);
  LatentRep rep;
  rep.space = space;
  if (dist == InputDist::standard_normal) {
    rep.feature = NdArray::randn({batch, cf, h, w}, rng);
  } else {
    NdArray f({batch, cf, h, w});
    const BlurredNoiseConfig bc{cf, h, w, blur_k, sigma_max};
    const std::size_t per = static_cast<std::size_t>(cf) * h * w;
    for (int b = 0; b < batch; ++b) {
      const NdArray s = sample_blurred_noise(bc, rng);
      std::copy(s.data().begin(), s.data().end(), f.data().begin() + b * per);
    }
    rep.feature = std::move(f);
  }
  if (i >= 2) rep.rgb = NdArray({batch, cfg.img_channels, h / 2, w / 2}, 0.0);
  rep.z = NdArray::randn({batch, cfg.latent_dim}, rng);
  for (int idx = cfg.first_noise(i); idx < cfg.num_noises(); ++idx) {
    const int scale = 1 << (cfg.block_of_noise(idx) - i);
    rep.noises.push_back(NdArray::randn({batch, h * scale, w * scale}, rng));
  }
  validate(rep, cfg);
  return rep;
}

EmbeddingStats embedding_stats(const NdArray& emb) {
  if (emb.ndim() != 2 || emb.dim(0) < 2) throw ValidationError("embedding stats need [N>=2, D], got " + shape_str(emb.shape()));
  const int n = emb.dim(0), d = emb.dim(1);
  EmbeddingStats s{NdArray({d}, 0.0), NdArray({d, d}, 0.0)};
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < d; ++k) s.mean[k] += emb[static_cast<std::size_t>(r) * d + k];
  for (int k = 0; k < d; ++k) s.mean[k] /= n;
  for (int r = 0; r < n; ++r)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        s.cov[static_cast<std::size_t>(a) * d + b] +=
            (emb[static_cast<std::size_t>(r) * d + a] - s.mean[a]) * (emb[static_cast<std::size_t>(r) * d + b] - s.mean[b]);
  for (double& v : s.cov.data()) v /= (n - 1);
  return s;
}

namespace {

Eigen::MatrixXd to_matrix(const NdArray& a, const char* name) {
  const int d = a.dim(0);
  Eigen::MatrixXd m(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = a[static_cast<std::size_t>(r) * d + c];
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8) throw ValidationError(std::string(name) + " covariance is not symmetric (max |C - C^T| = " +
                                         std::to_string(asym) + ")");
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
  if (a.mean.ndim() != 1 || b.mean.ndim() != 1 || a.mean.size() != b.mean.size()) {
    throw ValidationError("frechet distance needs means of equal dimension");
  }
  const int d = a.mean.dim(0);
  const Shape cs{d, d};
  if (a.cov.shape() != cs || b.cov.shape() != cs) throw ValidationError("covariance must be [D,D]");
  const Eigen::MatrixXd c1 = to_matrix(a.cov, "first"), c2 = to_matrix(b.cov, "second");
  double md = 0;
  for (int k = 0; k < d; ++k) md += (a.mean[k] - b.mean[k]) * (a.mean[k] - b.mean[k]);
  // Tr((C1 C2)^1/2) = Tr((s C2 s)^1/2) with s = C1^1/2.
  const Eigen::MatrixXd s = psd_sqrt(c1);
  Eigen::MatrixXd prod = s * c2 * s;
  prod = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(prod, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double fd = md + c1.trace() + c2.trace() - 2 * tr_sqrt;
  return std::max(0.0, fd);
}

ProxyEmbedder make_proxy_embedder(std::uint64_t seed, int in_channels, int dim) {
  std::mt19937_64 rng(seed);
  ProxyEmbedder e;
  const int widths[3] = {8, 16, dim};
  int cin = in_channels;
  for (int cout : widths) {
    e.w.push_back(NdArray::randn({cout, cin, 3, 3}, rng, std::sqrt(2.0 / (9.0 * cin))));
    e.b.push_back(NdArray({cout}, 0.0));
    cin = cout;
  }
  return e;
}

NdArray embed_images(const NdArray& images, const ProxyEmbedder& e) {
  if (images.ndim() != 4) throw ValidationError("embed_images expects [N,C,H,W], got " + shape_str(images.shape()));
  NoGradGuard guard;
  Var x = Var::constant(images);
  for (std::size_t s = 0; s < e.w.size(); ++s) {
    const int cout = e.w[s].dim(0);
    x = lrelu(add(conv2d(x, Var::constant(e.w[s]), Padding::zero), Var::constant(e.b[s].reshaped({1, cout, 1, 1}))));
    if (s + 1 < e.w.size() && x.shape()[2] % 2 == 0 && x.shape()[3] % 2 == 0) x = avg_pool2(x);
  }
  return mean_over(x, {2, 3}).value();
}

Patch sample_patch(const std::vector<NdArray>& images, int side, std::mt19937_64& rng) {
  if (side < 1) throw ValidationError("patch side must be positive");
  std::vector<double> weights;
  for (const NdArray& im : images) {
    if (im.ndim() != 3) throw ValidationError("dataset images must be [C,H,W], got " + shape_str(im.shape()));
    const double cnt = std::max(0, im.dim(1) - side + 1) * static_cast<double>(std::max(0, im.dim(2) - side + 1));
    weights.push_back(cnt);
  }
  if (std::all_of(weights.begin(), weights.end(), [](double v) { return v == 0; })) {
    throw ValidationError("every image is smaller than the patch side " + std::to_string(side));
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  Patch p;
  p.image = pick(rng);
  const NdArray& im = images[p.image];
  const int c = im.dim(0), h = im.dim(1), w = im.dim(2);
  p.y = std::uniform_int_distribution<int>(0, h - side)(rng);
  p.x = std::uniform_int_distribution<int>(0, w - side)(rng);
  p.data = NdArray({c, side, side});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        p.data[(static_cast<std::size_t>(ch) * side + y) * side + x] =
            im[(static_cast<std::size_t>(ch) * h + p.y + y) * w + p.x + x];
  return p;
}

NdArray blob_texture(int h, int w, std::mt19937_64& rng, int channels) {
  if (h < 1 || w < 1 || channels < 1) throw ValidationError("texture extents must be positive");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int blobs = std::max(1, h * w / 24);
  NdArray field({channels, h, w}, 0.0);
  for (int k = 0; k < blobs; ++k) {
    const double cy = u01(rng) * h, cx = u01(rng) * w;
    const double sigma = 1.5 + 2.5 * u01(rng);
    std::vector<double> color(channels);
    for (double& v : color) v = 2 * u01(rng) - 1;
    const int r = static_cast<int>(std::ceil(3 * sigma));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const int y = static_cast<int>(std::floor(cy)) + dy, x = static_cast<int>(std::floor(cx)) + dx;
        const double ey = y + 0.5 - cy, ex = x + 0.5 - cx;
        const double g = std::exp(-(ey * ey + ex * ex) / (2 * sigma * sigma));
        const int yy = ((y % h) + h) % h, xx = ((x % w) + w) % w;
        for (int c = 0; c < channels; ++c) field[(static_cast<std::size_t>(c) * h + yy) * w + xx] += color[c] * g;
      }
  }
  for (double& v : field.data()) v = std::tanh(1.5 * v);
  return field;
}

std::vector<NdArray> make_texture_dataset(int count, int min_side, int max_side, std::uint64_t seed, int channels) {
  if (count < 1 || min_side < 1 || max_side < min_side) throw ValidationError("bad texture dataset parameters");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> side(min_side, max_side);
  std::vector<NdArray> out;
  for (int i = 0; i < count; ++i) {
    const int h = side(rng), w = side(rng);
    out.push_back(blob_texture(h, w, rng, channels));
  }
  return out;
}

DiscriminatorTensors<NdArray> init_discriminator(int in_channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DiscriminatorTensors<NdArray> d;
  int cin = in_channels;
  for (int cout : {16, 32, 32}) {
    d.conv_w.push_back(NdArray::randn({cout, cin, 3, 3}, rng, std::sqrt(2.0 / (9.0 * cin))));
    d.conv_b.push_back(NdArray({cout}, 0.0));
    cin = cout;
  }
  d.fc_w = NdArray::randn({1, cin}, rng, std::sqrt(1.0 / cin));
  d.fc_b = NdArray({1}, 0.0);
  return d;
}

Var discriminate(const Var& images, const DiscriminatorTensors<Var>& d) {
  Var x = images;
  for (std::size_t s = 0; s < d.conv_w.size(); ++s) {
    const int cout = d.conv_w[s].shape()[0];
    x = lrelu(add(conv2d(x, d.conv_w[s], Padding::zero), reshape(d.conv_b[s], {1, cout, 1, 1})));
    if (x.shape()[2] % 2 == 0 && x.shape()[3] % 2 == 0) x = avg_pool2(x);
  }
  return linear(mean_over(x, {2, 3}), d.fc_w, d.fc_b);
}

namespace {

template <class T>
std::vector<Var> leaves_of(T& tensors) {
  std::vector<Var> out;
  tensors.visit([&](const std::string&, Var& v) { out.push_back(v); });
  return out;
}

NdArray patch_batch(const std::vector<NdArray>& dataset, int side, int n, std::mt19937_64& rng) {
  const int c = dataset.front().dim(0);
  NdArray out({n, c, side, side});
  const std::size_t per = static_cast<std::size_t>(c) * side * side;
  for (int b = 0; b < n; ++b) {
    const Patch p = sample_patch(dataset, side, rng);
    std::copy(p.data.data().begin(), p.data.data().end(), out.data().begin() + b * per);
  }
  return out;
}

}  // namespace

GanResult train_toy_gan(const std::vector<NdArray>& dataset, const GeneratorWeights& init,
                        const GeneratorConfig& cfg, const GanConfig& gcfg, std::uint64_t seed) {
  check_weights(init, cfg);
  if (dataset.empty()) throw ValidationError("empty texture dataset");
  if (gcfg.space.kind != SpaceKind::FNZ) throw ValidationError("GAN training runs in an fnz space");
  if (gcfg.steps < 0 || gcfg.batch < 1 || gcfg.eval_interval < 1 || gcfg.eval_samples < 2) {
    throw ValidationError("GAN config needs steps >= 0, batch >= 1, eval_interval >= 1, eval_samples >= 2");
  }
  for (const NdArray& im : dataset) {
    if (im.ndim() != 3 || im.dim(0) != cfg.img_channels) {
      throw ValidationError("dataset images must be [" + std::to_string(cfg.img_channels) + ",H,W]");
    }
  }
  GanResult res;
  res.weights = init;
  if (gcfg.steps == 0) return res;

  const int side = cfg.output_side();
  const int fh = cfg.grid_side(gcfg.space.block);
  std::mt19937_64 rng(seed);
  GeneratorParams gp = as_params(init, true);
  DiscriminatorTensors<NdArray> dinit = init_discriminator(cfg.img_channels, seed ^ 0x9e3779b97f4a7c15ULL);
  DiscriminatorTensors<Var> dp;
  for (auto& w : dinit.conv_w) dp.conv_w.push_back(Var::param(w));
  for (auto& b : dinit.conv_b) dp.conv_b.push_back(Var::param(b));
  dp.fc_w = Var::param(dinit.fc_w);
  dp.fc_b = Var::param(dinit.fc_b);
  const std::vector<Var> gl = leaves_of(gp), dl = leaves_of(dp);
  Adam gopt(gl, AdamConfig{gcfg.lr_g, 0.0, 0.99, 1e-8, 0});
  Adam dopt(dl, AdamConfig{gcfg.lr_d, 0.0, 0.99, 1e-8, 0});

  // Fixed evaluation inputs and real patches.
  const ProxyEmbedder emb = make_proxy_embedder(seed + 1);
  std::mt19937_64 eval_rng(seed + 2);
  const EmbeddingStats real_stats = embedding_stats(embed_images(patch_batch(dataset, side, gcfg.eval_samples, eval_rng), emb));
  const LatentRep eval_in = sample_training_input(gcfg.space, gcfg.dist, gcfg.eval_samples, fh, fh, cfg, eval_rng,
                                                  gcfg.blur_k, gcfg.sigma_max);
  auto evaluate = [&](int step) {
    const NdArray fake = synthesize(eval_in, values_of(gp), cfg);
    res.report.eval_steps.push_back(step);
    res.report.frechet.push_back(frechet_distance(real_stats, embedding_stats(embed_images(fake, emb))));
  };
  evaluate(0);

  for (int step = 0; step < gcfg.steps; ++step) {
    // discriminator
    NdArray fake;
    {
      NoGradGuard guard;
      const LatentRep in = sample_training_input(gcfg.space, gcfg.dist, gcfg.batch, fh, fh, cfg, rng, gcfg.blur_k,
                                                 gcfg.sigma_max);
      fake = synthesize(to_vars(in, false), gp, cfg).value();
    }
    const NdArray real = patch_batch(dataset, side, gcfg.batch, rng);
    dopt.zero_grad();
    const Var d_loss = add(mean_all(softplus(discriminate(Var::constant(fake), dp))),
                           mean_all(softplus(neg(discriminate(Var::constant(real), dp)))));
    backward(d_loss);
    dopt.step();

    // generator
    const LatentRep in = sample_training_input(gcfg.space, gcfg.dist, gcfg.batch, fh, fh, cfg, rng, gcfg.blur_k,
                                               gcfg.sigma_max);
    gopt.zero_grad();
    dopt.zero_grad();
    const Var g_loss = mean_all(softplus(neg(discriminate(synthesize(to_vars(in, false), gp, cfg), dp))));
    backward(g_loss);
    gopt.step();
    dopt.zero_grad();

    const double dl_v = d_loss.value().item(), gl_v = g_loss.value().item();
    res.report.d_loss.push_back(dl_v);
    res.report.g_loss.push_back(gl_v);
    if (!std::isfinite(dl_v) || !std::isfinite(gl_v) || dl_v > gcfg.divergence || gl_v > gcfg.divergence) {
      res.report.aborted = true;
      res.report.diagnostic = "diverged at step " + std::to_string(step) + " (d_loss " + std::to_string(dl_v) +
                              ", g_loss " + std::to_string(gl_v) + ")";
      break;
    }
    if ((step + 1) % gcfg.eval_interval == 0 || step + 1 == gcfg.steps) evaluate(step + 1);
  }
  res.weights = values_of(gp);
  return res;
}

}  // namespace slk
