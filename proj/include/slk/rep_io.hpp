#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "slk/attribute.hpp"
#include "slk/projection.hpp"

namespace slk {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

Json config_to_json(const GeneratorConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
GeneratorConfig config_from_json(const Json& j);
GeneratorConfig load_config(const fs::path& file);

Json read_json(const fs::path& file);
void write_json(const fs::path& file, const Json& j);

// Directory layout: config.json plus one SLK1 file per tensor under weights/.
void save_generator(const fs::path& dir, const GeneratorConfig& cfg, const GeneratorWeights& w);
struct LoadedGenerator {
  GeneratorConfig cfg;
  GeneratorWeights w;
};
LoadedGenerator load_generator(const fs::path& dir);

// rep.json (space, batch, files) plus SLK1 components.
void save_rep(const fs::path& dir, const LatentRep& rep);
LatentRep load_rep(const fs::path& dir);

void save_encoder(const fs::path& dir, const EncoderModel& m);
EncoderModel load_encoder(const fs::path& dir, const GeneratorConfig& gcfg);

void save_attribute(const fs::path& dir, const AttributeModel& m);
AttributeModel load_attribute(const fs::path& dir);

void save_targets(const fs::path& dir, const ComponentTargets& t, int block);
ComponentTargets load_targets(const fs::path& dir, int* block = nullptr);

// FNV-1a of every .slk1 file under dir, keyed by relative path (sorted).
std::map<std::string, std::string> hash_artifacts(const fs::path& dir);

// manifest.json: command, seed, arguments, artifact hashes.
void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed, const Json& args);

}  // namespace slk
