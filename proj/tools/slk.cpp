#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "slk/attribute.hpp"
#include "slk/distribution.hpp"
#include "slk/image_io.hpp"
#include "slk/latent_spaces.hpp"
#include "slk/mixing.hpp"
#include "slk/projection.hpp"
#include "slk/rep_io.hpp"
#include "slk/serialize.hpp"
#include "slk/spatial_training.hpp"

using namespace slk;

namespace {

std::string numbered(const std::string& prefix, int i, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return prefix + buf + ext;
}

void write_images(const fs::path& dir, const NdArray& images) {
  const int n = images.dim(0);
  const std::size_t per = images.size() / n;
  for (int b = 0; b < n; ++b) {
    NdArray one({1, images.dim(1), images.dim(2), images.dim(3)},
                std::vector<double>(images.data().begin() + b * per, images.data().begin() + (b + 1) * per));
    write_image(dir / numbered("image_", b, ".ppm"), one);
    save_array(dir / numbered("image_", b, ".slk1"), one);
  }
}

NdArray image_for(const fs::path& p) {
  return read_image(p);
}

std::vector<NdArray> load_dataset(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (ext == ".ppm" || ext == ".slk1") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NdArray> out;
  for (const auto& f : files) {
    NdArray im = read_image(f);
    out.push_back(im.reshaped({im.dim(1), im.dim(2), im.dim(3)}));
  }
  if (out.empty()) throw ValidationError("no .ppm or .slk1 images in " + dir.string());
  return out;
}

// Mean of mapped latents, broadcast to every slot and pushed to FWp(block).
LatentRep mean_latent_init(const GeneratorWeights& gw, const GeneratorConfig& cfg, int block) {
  std::mt19937_64 rng(0x5eed);
  const LatentRep w = sample_space(SpaceId::w(), 1000, gw, cfg, rng);
  LatentRep mean;
  mean.space = SpaceId::w();
  NdArray m({1, cfg.latent_dim}, 0.0);
  for (int b = 0; b < 1000; ++b)
    for (int k = 0; k < cfg.latent_dim; ++k) m[k] += w.styles[0][static_cast<std::size_t>(b) * cfg.latent_dim + k] / 1000;
  mean.styles = {m};
  return convert_forward(mean, SpaceId::fwp(block), gw, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial latent spaces for a small style-based generator"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  std::string gen_dir, out_dir;
  auto add_gen = [&](CLI::App* c) { c->add_option("--gen", gen_dir, "Generator directory")->required(); };
  auto add_out = [&](CLI::App* c) {
    c->add_option("--out", out_dir, "Output directory")->required();
    c->add_option("--seed", seed, "Random seed")->capture_default_str();
  };

  // init-gen
  auto* c_init = app.add_subcommand("init-gen", "Create random generator weights");
  std::string cfg_file;
  c_init->add_option("--config", cfg_file, "Generator config JSON (defaults when omitted)");
  add_out(c_init);

  // sample
  auto* c_sample = app.add_subcommand("sample", "Sample representations and their images");
  std::string space_str = "wp", dist_str = "standard";
  int n = 1, height = 0, width = 0;
  add_gen(c_sample);
  c_sample->add_option("--space", space_str, "Target space id (z, w, wp, swp, nwp, nswp, fwp:i, ..., fnz:i)")->capture_default_str();
  c_sample->add_option("--dist", dist_str, "Feature distribution for fnz spaces: standard or blurred")->capture_default_str();
  c_sample->add_option("--n", n, "Batch size")->capture_default_str();
  c_sample->add_option("--height", height, "fnz feature height in cells (default: training grid)");
  c_sample->add_option("--width", width, "fnz feature width in cells (default: training grid)");
  add_out(c_sample);

  // convert
  auto* c_convert = app.add_subcommand("convert", "Convert a representation to another space");
  std::string rep_dir, to_str;
  add_gen(c_convert);
  c_convert->add_option("--rep", rep_dir, "Representation directory")->required();
  c_convert->add_option("--to", to_str, "Target space id")->required();
  add_out(c_convert);

  // mix
  auto* c_mix = app.add_subcommand("mix", "Masked mixing of two representations");
  std::string rep1_dir, rep2_dir, mask_file;
  bool smooth = false;
  std::vector<double> sigmas;
  add_gen(c_mix);
  c_mix->add_option("--rep1", rep1_dir, "First representation directory (mask 0)")->required();
  c_mix->add_option("--rep2", rep2_dir, "Second representation directory (mask 1)")->required();
  c_mix->add_option("--mask", mask_file, "Mask image (PGM/PPM) or SLK1 array, values in [0,1]")->required();
  c_mix->add_flag("--smooth", smooth, "Gaussian-smooth the mask on each grid");
  c_mix->add_option("--sigma", sigmas, "Per-block smoothing sigma in cells");
  add_out(c_mix);

  // project
  auto* c_project = app.add_subcommand("project", "Project an image into fnwp:<i>");
  std::string image_file, encoder_dir, init_dir, targets_dir;
  ProjectionConfig pcfg;
  int target_samples = 200;
  std::string proj_space = "fnwp:3";
  add_gen(c_project);
  c_project->add_option("--image", image_file, "Target image (PPM or SLK1)")->required();
  c_project->add_option("--space", proj_space, "fnwp:<i>")->capture_default_str();
  c_project->add_option("--encoder", encoder_dir, "Encoder directory for the initial guess");
  c_project->add_option("--init", init_dir, "Representation to start from instead");
  c_project->add_option("--iters", pcfg.iters, "Optimization iterations")->capture_default_str();
  c_project->add_option("--lr", pcfg.lr, "Adam learning rate after warmup")->capture_default_str();
  c_project->add_option("--lambda-dist", pcfg.lambda_dist, "Weight of the distribution regularizer")->capture_default_str();
  c_project->add_option("--lambda-noise", pcfg.lambda_noise, "Noise regularization weight (rescaled to the initial losses)")->capture_default_str();
  c_project->add_option("--lambda-mse", pcfg.lambda_mse, "Weight of the pixel MSE")->capture_default_str();
  c_project->add_option("--lambda-perc", pcfg.lambda_perc, "Weight of the multi-scale pixel loss")->capture_default_str();
  c_project->add_flag("--until-convergence", pcfg.until_convergence, "Stop when the loss stalls (capped at 5000 iterations)");
  c_project->add_option("--targets", targets_dir, "Target distributions (built on the fly when omitted)");
  c_project->add_option("--target-samples", target_samples, "Samples for on-the-fly targets")->capture_default_str();
  add_out(c_project);

  // targets
  auto* c_targets = app.add_subcommand("targets", "Build component target distributions for fnwp:<i>");
  int block = 3;
  add_gen(c_targets);
  c_targets->add_option("--block", block, "Block index i of fnwp:<i>")->capture_default_str();
  c_targets->add_option("--samples", target_samples, "Generated samples pooled per target")->capture_default_str();
  add_out(c_targets);

  // train-encoder
  auto* c_tenc = app.add_subcommand("train-encoder", "Train the projection encoder");
  EncoderConfig ecfg;
  EncoderTrainConfig etcfg;
  add_gen(c_tenc);
  c_tenc->add_option("--block", ecfg.block, "Block index i of the fnwp:<i> targets")->capture_default_str();
  c_tenc->add_option("--steps", etcfg.steps, "Training steps")->capture_default_str();
  c_tenc->add_option("--batch", etcfg.batch, "Mini-batch size")->capture_default_str();
  c_tenc->add_option("--lr", etcfg.lr, "Adam learning rate")->capture_default_str();
  add_out(c_tenc);

  // train-attr
  auto* c_tattr = app.add_subcommand("train-attr", "Train an attribute model for a latent direction");
  std::string direction_file;
  AttributeTrainConfig atcfg;
  int attr_block = 3;
  add_gen(c_tattr);
  c_tattr->add_option("--direction", direction_file, "Direction SLK1 ([D] or [slots,D]); brightness when omitted");
  c_tattr->add_option("--block", attr_block, "Block whose feature and rgb maps the model edits")->capture_default_str();
  c_tattr->add_option("--steps", atcfg.steps, "Training steps")->capture_default_str();
  c_tattr->add_option("--batch", atcfg.batch, "Mini-batch size")->capture_default_str();
  c_tattr->add_option("--lr", atcfg.lr, "Adam learning rate")->capture_default_str();
  add_out(c_tattr);

  // train-gan
  auto* c_gan = app.add_subcommand("train-gan", "Train the generator in an fnz space on texture patches");
  GanConfig gancfg;
  std::string gan_space = "fnz:2", dataset_dir, gan_dist = "blurred";
  int textures = 8;
  add_gen(c_gan);
  c_gan->add_option("--space", gan_space, "Training space fnz:<i>")->capture_default_str();
  c_gan->add_option("--dist", gan_dist, "Feature distribution: standard or blurred")->capture_default_str();
  c_gan->add_option("--steps", gancfg.steps, "Training steps")->capture_default_str();
  c_gan->add_option("--batch", gancfg.batch, "Mini-batch size")->capture_default_str();
  c_gan->add_option("--eval-interval", gancfg.eval_interval, "Steps between Frechet evaluations")->capture_default_str();
  c_gan->add_option("--dataset", dataset_dir, "Directory of PPM/SLK1 images (synthetic textures when omitted)");
  c_gan->add_option("--textures", textures, "Synthetic texture count")->capture_default_str();
  add_out(c_gan);

  // edit
  auto* c_edit = app.add_subcommand("edit", "Apply a trained attribute model");
  std::string attr_dir;
  double strength = 0;
  add_gen(c_edit);
  c_edit->add_option("--rep", rep_dir, "Representation directory")->required();
  c_edit->add_option("--attr", attr_dir, "Attribute model directory")->required();
  c_edit->add_option("--strength", strength, "Edit strength c")->required();
  add_out(c_edit);

  // stats
  auto* c_stats = app.add_subcommand("stats", "Wasserstein, histogram and correlation diagnostics");
  std::string reps_dir;
  int bins = 20;
  c_stats->add_option("--reps", reps_dir, "Representation directory (fnwp/fwp)")->required();
  c_stats->add_option("--target", targets_dir, "Target distribution directory")->required();
  c_stats->add_option("--bins", bins, "Histogram bins")->capture_default_str();
  add_out(c_stats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const fs::path out(out_dir);
    Json args;
    for (const auto* opt : app.get_subcommands().front()->get_options()) {
      if (opt->get_name() == "--help" || opt->count() == 0) continue;
      args[opt->get_name()] = opt->as<std::string>();
    }
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();

    if (cmd == c_init) {
      const GeneratorConfig cfg = cfg_file.empty() ? GeneratorConfig{} : load_config(cfg_file);
      cfg.validate();
      save_generator(out, cfg, init_generator(cfg, seed));
    } else if (cmd == c_stats) {
      const LatentRep rep = load_rep(reps_dir);
      const ComponentTargets t = load_targets(targets_dir);
      if (!rep.feature || rep.space.has_z()) throw ValidationError("stats needs an F*Wp representation");
      const int b = batch_size(rep);
      Json j;
      Json w1 = Json::array();
      for (int s = 0; s < b; ++s) {
        const LatentRep one = select_sample(rep, s);
        Json e;
        e["styles"] = wasserstein_1d(flatten_styles(one), resample_target(t.styles, flatten_styles(one).size()));
        e["feature"] = wasserstein_1d(*one.feature, resample_target(t.feature, one.feature->size()));
        if (one.rgb && t.rgb) e["rgb"] = wasserstein_1d(*one.rgb, resample_target(*t.rgb, one.rgb->size()));
        w1.push_back(e);
      }
      j["wasserstein"] = w1;
      const auto& fv = rep.feature->vec();
      const auto [lo, hi] = std::minmax_element(fv.begin(), fv.end());
      const Histogram h = histogram(fv, bins, *lo, *hi == *lo ? *lo + 1 : *hi);
      j["feature_histogram"] = {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
      if (b >= 2) {
        const int c = rep.feature->dim(1);
        const std::size_t hw = rep.feature->size() / (static_cast<std::size_t>(b) * c);
        NdArray means({b, c}, 0.0);
        for (std::size_t i = 0; i < rep.feature->size(); ++i) means[i / hw] += fv[i] / hw;
        const CorrelationReport cr = feature_correlations(means, bins);
        j["channel_correlation"] = {{"coefficients", cr.coefficients}, {"degenerate", cr.degenerate},
                                    {"histogram", {{"lo", cr.hist.lo}, {"hi", cr.hist.hi}, {"counts", cr.hist.counts}}}};
      }
      write_json(out / "stats.json", j);
      std::ofstream csv(out / "feature_histogram.csv");
      csv << "bin_lo,bin_hi,count\n";
      const double step = (h.hi - h.lo) / bins;
      for (int k = 0; k < bins; ++k) csv << h.lo + k * step << "," << h.lo + (k + 1) * step << "," << h.counts[k] << "\n";
    } else {
      const LoadedGenerator g = load_generator(gen_dir);
      const GeneratorConfig& cfg = g.cfg;
      const GeneratorWeights& gw = g.w;
      std::mt19937_64 rng(seed);

      if (cmd == c_sample) {
        const SpaceId sp = SpaceId::parse(space_str);
        const InputDist dist = parse_input_dist(dist_str);
        if (n < 1) throw ValidationError("--n must be >= 1");
        LatentRep rep;
        if (sp.kind == SpaceKind::FNZ) {
          const int side = cfg.grid_side(sp.block);
          rep = sample_training_input(sp, dist, n, height ? height : side, width ? width : side, cfg, rng);
        } else {
          if (dist != InputDist::standard_normal) throw ValidationError("--dist blurred applies to fnz spaces only");
          if (height || width) throw ValidationError("--height/--width apply to fnz spaces only");
          rep = sample_space(sp, n, gw, cfg, rng);
        }
        save_rep(out / "rep", rep);
        write_images(out, synthesize(rep, gw, cfg));
      } else if (cmd == c_convert) {
        const LatentRep rep = convert_forward(load_rep(rep_dir), SpaceId::parse(to_str), gw, cfg);
        save_rep(out / "rep", rep);
        write_images(out, synthesize(rep, gw, cfg));
      } else if (cmd == c_mix) {
        const LatentRep r1 = load_rep(rep1_dir), r2 = load_rep(rep2_dir);
        MixOptions mo;
        mo.smooth = smooth;
        mo.sigmas = sigmas;
        const LatentRep rep = mix_reps(r1, r2, read_mask(mask_file), mo, cfg);
        save_rep(out / "rep", rep);
        write_images(out, synthesize(rep, gw, cfg));
      } else if (cmd == c_project) {
        const SpaceId sp = SpaceId::parse(proj_space);
        if (sp.kind != SpaceKind::FNWp) throw ValidationError("--space must be fnwp:<i>");
        const NdArray image = image_for(image_file);
        LatentRep init;
        if (!init_dir.empty() && !encoder_dir.empty()) throw ValidationError("--init and --encoder are exclusive");
        if (!init_dir.empty()) {
          init = load_rep(init_dir);
          if (!(init.space == sp)) init = convert_forward(init, init.space.has_noise() ? sp : SpaceId::fwp(sp.block), gw, cfg);
        } else if (!encoder_dir.empty()) {
          const EncoderModel em = load_encoder(encoder_dir, cfg);
          if (em.cfg.block != sp.block) throw ValidationError("encoder was trained for block " + std::to_string(em.cfg.block));
          init = encode(image, em, cfg);
        } else {
          init = mean_latent_init(gw, cfg, sp.block);
        }
        std::optional<ComponentTargets> targets;
        if (pcfg.lambda_dist > 0) {
          if (!targets_dir.empty()) {
            int tb = 0;
            targets = load_targets(targets_dir, &tb);
            if (tb != sp.block) throw ValidationError("targets were built for block " + std::to_string(tb));
          } else {
            targets = build_component_targets(gw, cfg, sp.block, target_samples, seed + 1);
          }
        }
        const ProjectionResult r = optimize_latent(image, init, pcfg, gw, cfg, targets ? &*targets : nullptr, seed);
        save_rep(out / "rep", r.rep);
        write_images(out, synthesize(r.rep, gw, cfg));
        Json rep_j;
        rep_j["iterations"] = r.iterations;
        rep_j["initial_loss"] = r.losses.empty() ? 0.0 : r.losses.front();
        rep_j["initial_mse"] = r.mse.empty() ? 0.0 : r.mse.front();
        rep_j["final_mse"] = r.final_mse;
        rep_j["lambda_noise_effective"] = r.lambda_noise_effective;
        rep_j["aborted"] = r.aborted;
        rep_j["diagnostic"] = r.diagnostic;
        rep_j["losses"] = r.losses;
        write_json(out / "report.json", rep_j);
        std::cout << "initial_mse " << rep_j["initial_mse"].get<double>() << "\nfinal_mse " << r.final_mse << "\n";
        if (r.aborted) throw NumericalError(r.diagnostic);
      } else if (cmd == c_targets) {
        save_targets(out, build_component_targets(gw, cfg, block, target_samples, seed), block);
      } else if (cmd == c_tenc) {
        const EncoderTrainResult r = train_encoder(gw, cfg, ecfg, etcfg, seed);
        save_encoder(out, r.model);
        write_json(out / "report.json", Json{{"losses", r.losses}});
      } else if (cmd == c_tattr) {
        const AttributeDirection dir = direction_file.empty()
                                           ? brightness_direction(gw, cfg, 256, seed)
                                           : make_direction(load_array(direction_file), cfg);
        const AttributeTrainResult r = train_attribute_model(gw, cfg, dir, attr_block, atcfg, seed);
        save_attribute(out, r.model);
        save_array(out / "direction.slk1", dir.v);
        write_json(out / "report.json", Json{{"losses", r.losses}});
      } else if (cmd == c_gan) {
        gancfg.space = SpaceId::parse(gan_space);
        gancfg.dist = parse_input_dist(gan_dist);
        const std::vector<NdArray> data = dataset_dir.empty()
                                              ? make_texture_dataset(textures, cfg.output_side(), 2 * cfg.output_side(),
                                                                     seed + 7, cfg.img_channels)
                                              : load_dataset(dataset_dir);
        const GanResult r = train_toy_gan(data, gw, cfg, gancfg, seed);
        save_generator(out, cfg, r.weights);
        Json rj;
        rj["dist"] = input_dist_name(gancfg.dist);
        rj["d_loss"] = r.report.d_loss;
        rj["g_loss"] = r.report.g_loss;
        rj["eval_steps"] = r.report.eval_steps;
        rj["frechet"] = r.report.frechet;
        rj["aborted"] = r.report.aborted;
        rj["diagnostic"] = r.report.diagnostic;
        write_json(out / "report.json", rj);
        if (r.report.aborted) throw NumericalError(r.report.diagnostic);
      } else if (cmd == c_edit) {
        const AttributeModel m = load_attribute(attr_dir);
        const AttributeDirection dir = make_direction(load_array(fs::path(attr_dir) / "direction.slk1"), cfg);
        if (fnv1a_hex(encode_array(dir.v)) != m.direction_hash) throw ValidationError("direction does not match the model");
        if (strength < m.c_min || strength > m.c_max) {
          throw ValidationError("strength outside the trained range [" + std::to_string(m.c_min) + ", " +
                                std::to_string(m.c_max) + "]");
        }
        const LatentRep rep = apply_attribute_model(load_rep(rep_dir), m, dir, strength, cfg);
        save_rep(out / "rep", rep);
        write_images(out, synthesize(rep, gw, cfg));
      }
    }
    write_manifest(out, name, seed, args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
