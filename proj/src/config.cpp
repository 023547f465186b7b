#include "loupe/config.hpp"
#include "loupe/tensor_io.hpp"

#include <cstdio>
#include <set>
#include <sstream>

namespace loupe {

using nlohmann::json;

Seeds parse_seed_triplet(std::string const &text)
{
  std::array<std::uint64_t, 3> v{};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t const end = text.find(',', pos);
    std::string const part = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("seed triplet must look like 1,2,3; got '" + text + "'");
    }
    try {
      v[i] = std::stoull(part);
    } catch (std::exception const &) {
      throw ConfigError("seed out of range in '" + text + "'");
    }
    if ((end == std::string::npos) != (i == 2)) {
      throw ConfigError("seed triplet must have exactly three values; got '" + text + "'");
    }
    pos = end + 1;
  }
  return {v[0], v[1], v[2]};
}

char const *to_string(PatternMode m)
{
  switch (m) {
  case PatternMode::LearnedTopk:
    return "learned-topk";
  case PatternMode::LearnedDraw:
    return "learned-draw";
  case PatternMode::Vd:
    return "vd";
  case PatternMode::File:
    return "file";
  }
  return "?";
}

PatternMode pattern_mode_from_string(std::string const &s)
{
  for (auto m : {PatternMode::LearnedTopk, PatternMode::LearnedDraw, PatternMode::Vd, PatternMode::File}) {
    if (s == to_string(m)) {
      return m;
    }
  }
  throw ConfigError("unknown pattern mode '" + s + "' (learned-topk, learned-draw, vd, file)");
}

char const *to_string(ReconMethod m)
{
  switch (m) {
  case ReconMethod::Modl:
    return "modl";
  case ReconMethod::Tv:
    return "tv";
  case ReconMethod::ZeroFilled:
    return "zf";
  }
  return "?";
}

ReconMethod recon_method_from_string(std::string const &s)
{
  for (auto m : {ReconMethod::Modl, ReconMethod::Tv, ReconMethod::ZeroFilled}) {
    if (s == to_string(m)) {
      return m;
    }
  }
  throw ConfigError("unknown reconstruction method '" + s + "' (modl, tv, zf)");
}

namespace {

// Reads keys from one JSON object and rejects leftovers.
class Section
{
public:
  Section(json const &j, std::string name)
    : j_(j)
    , name_(std::move(name))
  {
    if (!j_.is_object()) {
      throw ConfigError("config section '" + name_ + "' must be an object");
    }
  }

  template <typename T>
  void get(char const *key, T &out)
  {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) {
      return;
    }
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) {
          throw ConfigError("expected a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) {
          throw ConfigError("expected a number");
        }
      }
      out = it->template get<T>();
    } catch (std::exception const &e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_enum(char const *key, T &out, Parse parse)
  {
    std::string s;
    bool const present = j_.contains(key);
    get(key, s);
    if (present) {
      out = parse(s);
    }
  }

  void finish() const
  {
    for (auto const &item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("unknown config key '" + name_ + "." + item.key() + "'");
      }
    }
  }

private:
  json const &j_;
  std::string name_;
  std::set<std::string> seen_;
};

} // namespace

void RunConfig::validate() const
{
  if (data.height < 16 || data.width < 16) {
    throw ConfigError("data.height and data.width must be at least 16");
  }
  if (data.coils < 1) {
    throw ConfigError("data.coils must be at least 1");
  }
  if (!(data.noise_std >= 0)) {
    throw ConfigError("data.noise_std must be non-negative");
  }
  if (!(train.gamma > 0 && train.gamma < 1)) {
    throw ConfigError("train.gamma must lie in (0, 1)");
  }
  if (!(train.slope_a > 0) || !(train.slope_b > 0)) {
    throw ConfigError("train.slope_a and train.slope_b must be positive");
  }
  if (train.blocks < 1 || train.cg_iters < 1 || eval.cg_iters < 1) {
    throw ConfigError("blocks and CG iteration counts must be at least 1");
  }
  if (train.channels < 1 || train.batch_size < 1) {
    throw ConfigError("train.channels and train.batch_size must be at least 1");
  }
  if (!(train.lr >= 0) || !(train.lr_pattern >= 0)) {
    throw ConfigError("learning rates must be non-negative");
  }
  double const calib = static_cast<double>(train.calib_size * train.calib_size);
  if (train.calib_size > data.height || train.calib_size > data.width ||
      calib >= train.gamma * static_cast<double>(data.height * data.width)) {
    throw ConfigError("calibration block does not fit inside the sampling budget");
  }
  if (eval.methods.empty()) {
    throw ConfigError("eval.methods must not be empty");
  }
  if (eval.pattern == PatternMode::File && eval.pattern_file.empty()) {
    throw ConfigError("eval.pattern 'file' needs eval.pattern_file");
  }
  if (!(eval.vd_exponent >= 0) || !(eval.tv_alpha >= 0)) {
    throw ConfigError("eval.vd_exponent and eval.tv_alpha must be non-negative");
  }
}

std::filesystem::path RunConfig::checkpoint_path() const
{
  if (!eval.checkpoint.empty()) {
    return eval.checkpoint;
  }
  return std::filesystem::path(train.checkpoint_dir) / "best.ckpt";
}

json to_json(RunConfig const &c)
{
  json methods = json::array();
  for (auto m : c.eval.methods) {
    methods.push_back(to_string(m));
  }
  return json{
    {"seeds", {{"data", c.seeds.data}, {"init", c.seeds.init}, {"sampling", c.seeds.sampling}}},
    {"data",
     {{"height", c.data.height},
      {"width", c.data.width},
      {"coils", c.data.coils},
      {"n_train", c.data.n_train},
      {"n_val", c.data.n_val},
      {"n_test", c.data.n_test},
      {"noise_std", c.data.noise_std},
      {"out_dir", c.data.out_dir.string()}}},
    {"train",
     {{"mode", to_string(c.train.mode)},
      {"gamma", c.train.gamma},
      {"slope_a", c.train.slope_a},
      {"slope_b", c.train.slope_b},
      {"blocks", c.train.blocks},
      {"cg_iters", c.train.cg_iters},
      {"channels", c.train.channels},
      {"lr", c.train.lr},
      {"lr_pattern", c.train.lr_pattern},
      {"epochs", c.train.epochs},
      {"batch_size", c.train.batch_size},
      {"calib_size", c.train.calib_size},
      {"manifest", c.train.manifest},
      {"checkpoint_dir", c.train.checkpoint_dir}}},
    {"eval",
     {{"checkpoint", c.eval.checkpoint},
      {"split", c.eval.split},
      {"pattern", to_string(c.eval.pattern)},
      {"pattern_file", c.eval.pattern_file},
      {"methods", methods},
      {"cg_iters", c.eval.cg_iters},
      {"vd_exponent", c.eval.vd_exponent},
      {"tv_alpha", c.eval.tv_alpha},
      {"tv_iters", c.eval.tv_iters},
      {"out_prefix", c.eval.out_prefix}}},
  };
}

RunConfig run_config_from_json(json const &j)
{
  RunConfig c;
  Section root(j, "config");
  json const empty = json::object();
  auto sub = [&](char const *name) -> json const & {
    auto it = j.find(name);
    return it == j.end() ? empty : *it;
  };
  for (char const *name : {"seeds", "data", "train", "eval"}) {
    json dummy;
    root.get(name, dummy);
  }
  root.finish();

  Section seeds(sub("seeds"), "seeds");
  seeds.get("data", c.seeds.data);
  seeds.get("init", c.seeds.init);
  seeds.get("sampling", c.seeds.sampling);
  seeds.finish();

  Section data(sub("data"), "data");
  data.get("height", c.data.height);
  data.get("width", c.data.width);
  data.get("coils", c.data.coils);
  data.get("n_train", c.data.n_train);
  data.get("n_val", c.data.n_val);
  data.get("n_test", c.data.n_test);
  data.get("noise_std", c.data.noise_std);
  std::string out_dir = c.data.out_dir.string();
  data.get("out_dir", out_dir);
  c.data.out_dir = out_dir;
  data.finish();
  c.data.seed = c.seeds.data;

  Section train(sub("train"), "train");
  train.get_enum("mode", c.train.mode, sampling_mode_from_string);
  train.get("gamma", c.train.gamma);
  train.get("slope_a", c.train.slope_a);
  train.get("slope_b", c.train.slope_b);
  train.get("blocks", c.train.blocks);
  train.get("cg_iters", c.train.cg_iters);
  train.get("channels", c.train.channels);
  train.get("lr", c.train.lr);
  train.get("lr_pattern", c.train.lr_pattern);
  train.get("epochs", c.train.epochs);
  train.get("batch_size", c.train.batch_size);
  train.get("calib_size", c.train.calib_size);
  train.get("manifest", c.train.manifest);
  train.get("checkpoint_dir", c.train.checkpoint_dir);
  train.finish();

  Section eval(sub("eval"), "eval");
  eval.get("checkpoint", c.eval.checkpoint);
  eval.get("split", c.eval.split);
  eval.get_enum("pattern", c.eval.pattern, pattern_mode_from_string);
  eval.get("pattern_file", c.eval.pattern_file);
  std::vector<std::string> methods;
  bool const has_methods = sub("eval").contains("methods");
  eval.get("methods", methods);
  if (has_methods) {
    c.eval.methods.clear();
    for (auto const &m : methods) {
      c.eval.methods.push_back(recon_method_from_string(m));
    }
  }
  eval.get("cg_iters", c.eval.cg_iters);
  eval.get("vd_exponent", c.eval.vd_exponent);
  eval.get("tv_alpha", c.eval.tv_alpha);
  eval.get("tv_iters", c.eval.tv_iters);
  eval.get("out_prefix", c.eval.out_prefix);
  eval.finish();

  c.validate();
  return c;
}

RunConfig load_run_config(std::filesystem::path const &path)
{
  Bytes const bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (json::parse_error const &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(std::filesystem::path const &path, RunConfig const &cfg)
{
  std::string const text = to_json(cfg).dump(2) + "\n";
  write_file(path, Bytes(text.begin(), text.end()));
}

std::string config_hash(RunConfig const &cfg)
{
  std::string const text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace loupe
