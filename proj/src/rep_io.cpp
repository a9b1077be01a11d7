#include "slk/rep_io.hpp"

#include <fstream>
#include <set>

#include "slk/serialize.hpp"

namespace slk {

Json config_to_json(const GeneratorConfig& cfg) {
  Json j;
  j["latent_dim"] = cfg.latent_dim;
  j["num_blocks"] = cfg.num_blocks;
  j["base"] = cfg.base;
  j["channels"] = cfg.channels;
  j["img_channels"] = cfg.img_channels;
  j["mapping_layers"] = cfg.mapping_layers;
  j["kernel"] = cfg.kernel;
  j["padding"] = padding_name(cfg.padding);
  j["eps"] = cfg.eps;
  j["max_chunk_elems"] = cfg.max_chunk_elems;
  return j;
}

GeneratorConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("generator config must be a JSON object");
  static const std::set<std::string> known = {"latent_dim", "num_blocks", "base", "channels", "img_channels",
                                              "mapping_layers", "kernel", "padding", "eps", "max_chunk_elems"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ValidationError("unknown generator config key '" + k + "'");
  }
  GeneratorConfig cfg;
  try {
    if (j.contains("latent_dim")) cfg.latent_dim = j["latent_dim"].get<int>();
    if (j.contains("num_blocks")) cfg.num_blocks = j["num_blocks"].get<int>();
    if (j.contains("base")) cfg.base = j["base"].get<int>();
    if (j.contains("channels")) cfg.channels = j["channels"].get<std::vector<int>>();
    if (j.contains("img_channels")) cfg.img_channels = j["img_channels"].get<int>();
    if (j.contains("mapping_layers")) cfg.mapping_layers = j["mapping_layers"].get<int>();
    if (j.contains("kernel")) cfg.kernel = j["kernel"].get<int>();
    if (j.contains("padding")) cfg.padding = parse_padding(j["padding"].get<std::string>());
    if (j.contains("eps")) cfg.eps = j["eps"].get<double>();
    if (j.contains("max_chunk_elems")) cfg.max_chunk_elems = j["max_chunk_elems"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("generator config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Json read_json(const fs::path& file) {
  const auto bytes = read_file(file);
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

void write_json(const fs::path& file, const Json& j) {
  const std::string s = j.dump(2) + "\n";
  write_file(file, std::vector<std::uint8_t>(s.begin(), s.end()));
}

GeneratorConfig load_config(const fs::path& file) { return config_from_json(read_json(file)); }

namespace {

template <class T>
void save_tensors(const fs::path& dir, T& tensors) {
  tensors.visit([&](const std::string& name, const NdArray& a) { save_array(dir / (name + ".slk1"), a); });
}

template <class T>
void load_tensors(const fs::path& dir, T& tensors) {
  tensors.visit([&](const std::string& name, NdArray& a) {
    NdArray v = load_array(dir / (name + ".slk1"));
    if (v.shape() != a.shape()) {
      throw ValidationError(name + ": expected " + shape_str(a.shape()) + ", found " + shape_str(v.shape()));
    }
    a = std::move(v);
  });
}

std::string idx_name(const std::string& prefix, std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", k);
  return prefix + buf + ".slk1";
}

}  // namespace

void save_generator(const fs::path& dir, const GeneratorConfig& cfg, const GeneratorWeights& w) {
  check_weights(w, cfg);
  write_json(dir / "config.json", config_to_json(cfg));
  GeneratorWeights copy = w;
  save_tensors(dir / "weights", copy);
}

LoadedGenerator load_generator(const fs::path& dir) {
  LoadedGenerator g;
  g.cfg = load_config(dir / "config.json");
  g.w = init_generator(g.cfg, 0);
  load_tensors(dir / "weights", g.w);
  return g;
}

void save_rep(const fs::path& dir, const LatentRep& rep) {
  Json j;
  j["space"] = rep.space.str();
  j["batch"] = batch_size(rep);
  Json styles = Json::array(), noises = Json::array();
  for (std::size_t k = 0; k < rep.styles.size(); ++k) {
    const std::string n = idx_name("style_", k);
    save_array(dir / n, rep.styles[k]);
    styles.push_back(n);
  }
  for (std::size_t k = 0; k < rep.noises.size(); ++k) {
    const std::string n = idx_name("noise_", k);
    save_array(dir / n, rep.noises[k]);
    noises.push_back(n);
  }
  j["styles"] = styles;
  j["noises"] = noises;
  if (rep.feature) {
    save_array(dir / "feature.slk1", *rep.feature);
    j["feature"] = "feature.slk1";
  }
  if (rep.rgb) {
    save_array(dir / "rgb.slk1", *rep.rgb);
    j["rgb"] = "rgb.slk1";
  }
  if (rep.z) {
    save_array(dir / "z.slk1", *rep.z);
    j["z"] = "z.slk1";
  }
  write_json(dir / "rep.json", j);
}

LatentRep load_rep(const fs::path& dir) {
  const Json j = read_json(dir / "rep.json");
  LatentRep rep;
  try {
    rep.space = SpaceId::parse(j.at("space").get<std::string>());
    for (const auto& n : j.at("styles")) rep.styles.push_back(load_array(dir / n.get<std::string>()));
    for (const auto& n : j.at("noises")) rep.noises.push_back(load_array(dir / n.get<std::string>()));
    if (j.contains("feature")) rep.feature = load_array(dir / j["feature"].get<std::string>());
    if (j.contains("rgb")) rep.rgb = load_array(dir / j["rgb"].get<std::string>());
    if (j.contains("z")) rep.z = load_array(dir / j["z"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError((dir / "rep.json").string() + ": " + e.what());
  }
  return rep;
}

void save_encoder(const fs::path& dir, const EncoderModel& m) {
  Json j;
  j["block"] = m.cfg.block;
  j["widths"] = m.cfg.widths;
  j["image_scale"] = m.cfg.image_scale;
  write_json(dir / "encoder.json", j);
  EncoderModel copy = m;
  save_tensors(dir / "weights", copy.w);
}

EncoderModel load_encoder(const fs::path& dir, const GeneratorConfig& gcfg) {
  const Json j = read_json(dir / "encoder.json");
  EncoderConfig ec;
  try {
    ec.block = j.at("block").get<int>();
    ec.widths = j.at("widths").get<std::vector<int>>();
    ec.image_scale = j.at("image_scale").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError((dir / "encoder.json").string() + ": " + e.what());
  }
  EncoderModel m = init_encoder(ec, gcfg, 0);
  load_tensors(dir / "weights", m.w);
  return m;
}

void save_attribute(const fs::path& dir, const AttributeModel& m) {
  Json j;
  j["block"] = m.block;
  j["c_min"] = m.c_min;
  j["c_max"] = m.c_max;
  j["direction_hash"] = m.direction_hash;
  write_json(dir / "attribute.json", j);
  save_array(dir / "m.slk1", m.m);
}

AttributeModel load_attribute(const fs::path& dir) {
  const Json j = read_json(dir / "attribute.json");
  AttributeModel m;
  try {
    m.block = j.at("block").get<int>();
    m.c_min = j.at("c_min").get<double>();
    m.c_max = j.at("c_max").get<double>();
    m.direction_hash = j.at("direction_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError((dir / "attribute.json").string() + ": " + e.what());
  }
  m.m = load_array(dir / "m.slk1");
  return m;
}

namespace {

void save_target(const fs::path& file, const TargetDistribution& t) {
  save_array(file, NdArray({static_cast<int>(t.sorted_values.size())}, t.sorted_values));
}

TargetDistribution load_target(const fs::path& file, const Json& meta, const std::string& name) {
  TargetDistribution t;
  t.sorted_values = load_array(file).vec();
  t.n_samples = meta.at("n_samples").get<std::size_t>();
  t.component = name;
  return t;
}

}  // namespace

void save_targets(const fs::path& dir, const ComponentTargets& t, int block) {
  Json j;
  j["block"] = block;
  Json comps = Json::object();
  auto put = [&](const std::string& name, const TargetDistribution& td) {
    save_target(dir / (name + ".slk1"), td);
    comps[name] = Json{{"n_samples", td.n_samples}, {"dim", td.sorted_values.size()}};
  };
  put("styles", t.styles);
  put("feature", t.feature);
  if (t.rgb) put("rgb", *t.rgb);
  j["components"] = comps;
  write_json(dir / "targets.json", j);
}

ComponentTargets load_targets(const fs::path& dir, int* block) {
  const Json j = read_json(dir / "targets.json");
  ComponentTargets t;
  try {
    const Json& c = j.at("components");
    t.styles = load_target(dir / "styles.slk1", c.at("styles"), "styles");
    t.feature = load_target(dir / "feature.slk1", c.at("feature"), "feature");
    if (c.contains("rgb")) t.rgb = load_target(dir / "rgb.slk1", c.at("rgb"), "rgb");
    if (block) *block = j.at("block").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError((dir / "targets.json").string() + ": " + e.what());
  }
  return t;
}

std::map<std::string, std::string> hash_artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".slk1") {
      out[fs::relative(e.path(), dir).generic_string()] = fnv1a_hex(read_file(e.path()));
    }
  }
  return out;
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed, const Json& args) {
  Json j;
  j["command"] = command;
  j["seed"] = seed;
  j["args"] = args;
  Json h = Json::object();
  for (const auto& [k, v] : hash_artifacts(dir)) h[k] = v;
  j["artifacts"] = h;
  write_json(dir / "manifest.json", j);
}

}  // namespace slk
