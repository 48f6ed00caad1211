#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mclab/synth.hpp"

namespace mclab {

using Json = nlohmann::ordered_json;

Json profile_to_json(const CenterProfile& profile);

/// Strict parse: unknown keys, wrong types and invalid values raise
/// ProfileInvalid with the offending field named in the message.
CenterProfile profile_from_json(const Json& j);
CenterProfile load_profile(const std::filesystem::path& path);

struct ManifestCase {
  std::string id;
  Split split;
  std::string image;  // paths relative to the manifest directory
  std::string label;
  std::string brain_mask;
};

struct CenterManifest {
  std::string name;
  CenterProfile profile;
  std::vector<ManifestCase> cases;
};

/// Writes `<dir>/manifest.json` and one MCVL file per volume under
/// `<dir>/cases/`. Returns the manifest path.
std::filesystem::path save_center(const CenterDataset& ds, const std::filesystem::path& dir);

CenterManifest read_manifest(const std::filesystem::path& manifest_path);

/// Loads the requested splits only. Every file opened is appended to
/// `accessed` when given.
CenterDataset load_center(const std::filesystem::path& manifest_path, std::vector<Split> splits = {Split::train, Split::val, Split::test},
                          std::vector<std::string>* accessed = nullptr);

}  // namespace mclab
