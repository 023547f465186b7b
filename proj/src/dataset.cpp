#include "loupe/mri.hpp"
#include "loupe/parallel.hpp"
#include "loupe/tensor_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>

namespace loupe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char const *kManifestFormat = "kspace-loupe-manifest/1";

std::string sample_name(std::string const &split, std::size_t idx)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.ksd", split.c_str(), idx);
  return buf;
}

} // namespace

std::vector<fs::path> DatasetManifest::split(std::string const &name) const
{
  std::vector<fs::path> out;
  for (auto const &e : entries) {
    if (e.split == name) {
      out.push_back(root / e.path);
    }
  }
  return out;
}

std::vector<std::string> DatasetManifest::split_ids(std::string const &name) const
{
  std::vector<std::string> out;
  for (auto const &e : entries) {
    if (e.split == name) {
      out.push_back(fs::path(e.path).stem().string());
    }
  }
  return out;
}

DatasetManifest build_dataset(DatasetConfig const &cfg)
{
  if (cfg.height < 16 || cfg.width < 16 || cfg.coils < 1) {
    throw ConfigError("build_dataset: need height, width >= 16 and coils >= 1");
  }
  DatasetManifest m;
  m.root = cfg.out_dir;
  m.seed = cfg.seed;
  m.height = cfg.height;
  m.width = cfg.width;
  m.coils = cfg.coils;
  m.noise_std = cfg.noise_std;
  for (auto const &[split, count] : {std::pair<std::string, std::size_t>{"train", cfg.n_train},
                                     {"val", cfg.n_val},
                                     {"test", cfg.n_test}}) {
    for (std::size_t i = 0; i < count; ++i) {
      m.entries.push_back({sample_name(split, i), split});
    }
  }

  fs::create_directories(cfg.out_dir);
  parallel_for(m.entries.size(), [&](std::size_t i) {
    Rng rng = Rng::derive(cfg.seed, i);
    CTensor const img = simulate_phantom(rng, cfg.height, cfg.width);
    CTensor const sens = simulate_coils(rng, cfg.height, cfg.width, cfg.coils);
    write_sample(cfg.out_dir / m.entries[i].path, make_sample(img, sens, cfg.noise_std, rng));
  });
  save_manifest(cfg.out_dir / "manifest.json", m);
  return m;
}

void save_manifest(fs::path const &path, DatasetManifest const &m)
{
  json j;
  j["format"] = kManifestFormat;
  j["seed"] = m.seed;
  j["height"] = m.height;
  j["width"] = m.width;
  j["coils"] = m.coils;
  j["noise_std"] = m.noise_std;
  j["samples"] = json::array();
  for (auto const &e : m.entries) {
    j["samples"].push_back({{"path", e.path}, {"split", e.split}});
  }
  std::string const text = j.dump(2) + "\n";
  write_file(path, Bytes(text.begin(), text.end()));
}

DatasetManifest load_manifest(fs::path const &path, bool check_files)
{
  json j;
  try {
    std::ifstream in(path);
    if (!in) {
      throw IoError("cannot open manifest " + path.string());
    }
    j = json::parse(in);
  } catch (json::exception const &e) {
    throw FormatError(FormatErrorKind::Invalid, path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    if (j.at("format").get<std::string>() != kManifestFormat) {
      throw FormatError(FormatErrorKind::Invalid, path.string() + ": unknown manifest format");
    }
    m.root = path.parent_path();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.height = j.at("height").get<std::size_t>();
    m.width = j.at("width").get<std::size_t>();
    m.coils = j.at("coils").get<std::size_t>();
    m.noise_std = j.value("noise_std", 0.0);
    for (auto const &s : j.at("samples")) {
      m.entries.push_back({s.at("path").get<std::string>(), s.at("split").get<std::string>()});
    }
  } catch (json::exception const &e) {
    throw FormatError(FormatErrorKind::Invalid, path.string() + ": " + e.what());
  }

  std::set<std::string> seen;
  for (auto const &e : m.entries) {
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      throw FormatError(FormatErrorKind::Invalid, path.string() + ": unknown split '" + e.split + "'");
    }
    if (!seen.insert(e.path).second) {
      throw FormatError(FormatErrorKind::Invalid, path.string() + ": sample listed twice: " + e.path);
    }
    if (check_files) {
      KSpaceSample const s = read_sample(m.root / e.path);
      if (s.coils() != m.coils || s.height() != m.height || s.width() != m.width) {
        throw FormatError(FormatErrorKind::Invalid, e.path + ": dimensions differ from manifest");
      }
    }
  }
  return m;
}

} // namespace loupe
