#include "mclab/dataset_io.hpp"

#include <algorithm>
#include <set>

#include "mclab/binio.hpp"
#include "mclab/error.hpp"

namespace mclab {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ProfileInvalid, "field '" + field + "': " + why);
}

template <class T>
T field(const Json& j, const std::string& key) {
  const Json& v = j.at(key);
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad_field(key, "expected a string");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) bad_field(key, "expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) bad_field(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned()) bad_field(key, "expected a non-negative integer");
    }
    return v.get<T>();
  } catch (const Json::exception& e) {
    bad_field(key, e.what());
  }
}

Json dims_json(Dims d) { return Json::array({d.x, d.y, d.z}); }

}  // namespace

Json profile_to_json(const CenterProfile& p) {
  Json j;
  j["name"] = p.name;
  j["n_train"] = p.n_train;
  j["n_val"] = p.n_val;
  j["n_test"] = p.n_test;
  j["lesion_density"] = p.lesion_density;
  j["size_log_mean"] = p.size_log_mean;
  j["size_log_std"] = p.size_log_std;
  j["spatial_mode"] = to_string(p.spatial_mode);
  j["p_boundary"] = p.p_boundary;
  j["slice_thickness_mm"] = p.slice_thickness_mm;
  j["distractor_rate"] = p.distractor_rate;
  j["contrast_gain"] = p.contrast_gain;
  j["seed"] = p.seed;
  j["dims"] = dims_json(p.dims);
  j["spacing"] = Json::array({p.spacing[0], p.spacing[1], p.spacing[2]});
  j["noise_std"] = p.noise_std;
  j["meninges_gain"] = p.meninges_gain;
  j["meninges_thickness"] = p.meninges_thickness;
  j["meninges_in_brain"] = p.meninges_in_brain;
  j["max_lesion_radius_mm"] = p.max_lesion_radius_mm;
  return j;
}

CenterProfile profile_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ProfileInvalid, "profile must be a JSON object");
  static const std::set<std::string> known{"name",          "n_train",         "n_val",         "n_test",
                                           "lesion_density", "size_log_mean",  "size_log_std",  "spatial_mode",
                                           "p_boundary",     "slice_thickness_mm", "distractor_rate", "contrast_gain",
                                           "seed",           "dims",           "spacing",       "noise_std",
                                           "meninges_gain",  "meninges_thickness", "meninges_in_brain", "max_lesion_radius_mm"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) bad_field(k, "unknown field");
  if (!j.contains("name")) bad_field("name", "missing");

  CenterProfile p;
  p.name = field<std::string>(j, "name");
  if (j.contains("n_train")) p.n_train = field<int>(j, "n_train");
  if (j.contains("n_val")) p.n_val = field<int>(j, "n_val");
  if (j.contains("n_test")) p.n_test = field<int>(j, "n_test");
  if (j.contains("lesion_density")) p.lesion_density = field<double>(j, "lesion_density");
  if (j.contains("size_log_mean")) p.size_log_mean = field<double>(j, "size_log_mean");
  if (j.contains("size_log_std")) p.size_log_std = field<double>(j, "size_log_std");
  if (j.contains("spatial_mode")) {
    try {
      p.spatial_mode = spatial_mode_from_string(field<std::string>(j, "spatial_mode"));
    } catch (const Error&) {
      bad_field("spatial_mode", "expected parenchymal, boundary or mixed");
    }
  }
  if (j.contains("p_boundary")) p.p_boundary = field<double>(j, "p_boundary");
  if (j.contains("slice_thickness_mm")) p.slice_thickness_mm = field<double>(j, "slice_thickness_mm");
  if (j.contains("distractor_rate")) p.distractor_rate = field<double>(j, "distractor_rate");
  if (j.contains("contrast_gain")) p.contrast_gain = field<double>(j, "contrast_gain");
  if (j.contains("seed")) p.seed = field<std::uint64_t>(j, "seed");
  if (j.contains("dims")) {
    const Json& d = j.at("dims");
    if (!d.is_array() || d.size() != 3 || !std::all_of(d.begin(), d.end(), [](const Json& v) { return v.is_number_integer(); }))
      bad_field("dims", "expected three integers");
    p.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
  }
  if (j.contains("spacing")) {
    const Json& s = j.at("spacing");
    if (!s.is_array() || s.size() != 3 || !std::all_of(s.begin(), s.end(), [](const Json& v) { return v.is_number(); }))
      bad_field("spacing", "expected three numbers");
    p.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
  }
  if (j.contains("noise_std")) p.noise_std = field<double>(j, "noise_std");
  if (j.contains("meninges_gain")) p.meninges_gain = field<double>(j, "meninges_gain");
  if (j.contains("meninges_thickness")) p.meninges_thickness = field<int>(j, "meninges_thickness");
  if (j.contains("meninges_in_brain")) p.meninges_in_brain = field<int>(j, "meninges_in_brain");
  if (j.contains("max_lesion_radius_mm")) p.max_lesion_radius_mm = field<double>(j, "max_lesion_radius_mm");
  p.validate();
  return p;
}

CenterProfile load_profile(const fs::path& path) {
  const auto bytes = binio::read_file(path);
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ProfileInvalid, path.string() + ": malformed JSON: " + e.what());
  }
  return profile_from_json(j);
}

fs::path save_center(const CenterDataset& ds, const fs::path& dir) {
  Json cases = Json::array();
  auto emit = [&](const std::vector<CaseRecord>& records, Split split) {
    for (const auto& c : records) {
      const std::string stem = "cases/" + c.case_id;
      write_volume(c.image, dir / (stem + "_image.mcvl"));
      write_volume(c.label, dir / (stem + "_label.mcvl"));
      write_volume(c.brain_mask, dir / (stem + "_brain.mcvl"));
      Json e;
      e["id"] = c.case_id;
      e["split"] = to_string(split);
      e["image"] = stem + "_image.mcvl";
      e["label"] = stem + "_label.mcvl";
      e["brain_mask"] = stem + "_brain.mcvl";
      cases.push_back(std::move(e));
    }
  };
  emit(ds.train, Split::train);
  emit(ds.val, Split::val);
  emit(ds.test, Split::test);
  Json m;
  m["name"] = ds.profile.name;
  m["profile"] = profile_to_json(ds.profile);
  m["cases"] = std::move(cases);
  const fs::path manifest = dir / "manifest.json";
  binio::write_text_atomic(manifest, m.dump(2) + "\n");
  return manifest;
}

CenterManifest read_manifest(const fs::path& manifest_path) {
  const auto bytes = binio::read_file(manifest_path);
  CenterManifest out;
  try {
    const Json j = Json::parse(bytes.begin(), bytes.end());
    out.name = j.at("name").get<std::string>();
    out.profile = profile_from_json(j.at("profile"));
    std::set<std::string> seen;
    for (const auto& e : j.at("cases")) {
      ManifestCase c{e.at("id").get<std::string>(), split_from_string(e.at("split").get<std::string>()),
                     e.at("image").get<std::string>(), e.at("label").get<std::string>(),
                     e.at("brain_mask").get<std::string>()};
      if (!seen.insert(c.id).second) throw Error(ErrorCode::Config, "duplicate case id '" + c.id + "'");
      out.cases.push_back(std::move(c));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Config, manifest_path.string() + ": malformed manifest: " + e.what());
  }
  return out;
}

CenterDataset load_center(const fs::path& manifest_path, std::vector<Split> splits, std::vector<std::string>* accessed) {
  const CenterManifest m = read_manifest(manifest_path);
  if (accessed) accessed->push_back(manifest_path.string());
  const fs::path base = manifest_path.parent_path();
  CenterDataset ds;
  ds.profile = m.profile;
  for (const auto& c : m.cases) {
    if (std::find(splits.begin(), splits.end(), c.split) == splits.end()) continue;
    auto load = [&](const std::string& rel) {
      const fs::path p = base / rel;
      if (accessed) accessed->push_back(p.string());
      return read_volume(p);
    };
    CaseRecord r{c.id, load(c.image), load(c.label), load(c.brain_mask)};
    check_same_dims(r.image, r.label, "label");
    check_same_dims(r.image, r.brain_mask, "brain mask");
    switch (c.split) {
      case Split::train: ds.train.push_back(std::move(r)); break;
      case Split::val: ds.val.push_back(std::move(r)); break;
      case Split::test: ds.test.push_back(std::move(r)); break;
    }
  }
  return ds;
}

}  // namespace mclab
