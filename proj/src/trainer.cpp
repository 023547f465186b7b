#include "loupe/trainer.hpp"
#include "loupe/metrics.hpp"
#include "loupe/parallel.hpp"
#include "loupe/tensor_io.hpp"
#include "loupe/unrolled.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

namespace loupe {

void adam_step(ad::ParamStore &params, std::vector<RTensor> const &grads, AdamState &state,
               std::vector<double> const &lrs)
{
  auto &entries = params.entries();
  if (grads.size() != entries.size() || lrs.size() != entries.size()) {
    throw ShapeError("adam_step: " + std::to_string(entries.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " + std::to_string(lrs.size()) + " rates");
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (grads[k].shape() != entries[k].second.shape()) {
      throw ShapeError("adam_step: gradient for '" + entries[k].first + "' has shape " + shape_str(grads[k].shape()) +
                       ", parameter has " + shape_str(entries[k].second.shape()));
    }
    if (!all_finite(grads[k])) {
      throw NumericError("adam_step: non-finite gradient for '" + entries[k].first + "'");
    }
  }
  if (state.m.empty()) {
    for (auto const &[name, value] : entries) {
      state.m.emplace_back(value.shape());
      state.v.emplace_back(value.shape());
    }
  }
  ++state.t;
  double const c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double const c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    RTensor &p = entries[k].second;
    RTensor &m = state.m[k];
    RTensor &v = state.v[k];
    RTensor const &g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1 - state.beta2) * g[i] * g[i];
      p[i] -= lrs[k] * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

void adam_step(ad::ParamStore &params, std::vector<RTensor> const &grads, AdamState &state, double lr)
{
  adam_step(params, grads, state, std::vector<double>(params.size(), lr));
}

ad::ParamStore init_params(TrainConfig const &cfg, std::size_t height, std::size_t width, std::uint64_t init_seed)
{
  ad::ParamStore store;
  Rng net = Rng::derive(init_seed, 0);
  init_denoiser(store, cfg.channels, net);
  store.add(param::kRho, RTensor(Shape{}, 0.0));
  Rng pat = Rng::derive(init_seed, 1);
  RTensor logits(Shape{height, width});
  for (auto &v : logits.values()) {
    v = pat.uniform(-1, 1);
  }
  store.add(param::kLogits, std::move(logits));
  return store;
}

PatternParams pattern_params(TrainConfig const &cfg, ad::ParamStore const &params)
{
  PatternParams p;
  p.logits = params.at(param::kLogits);
  p.slope = cfg.slope_a;
  p.ratio = cfg.gamma;
  p.calib = centered_calibration(p.logits.dim(0), p.logits.dim(1), cfg.calib_size);
  p.validate();
  return p;
}

UnrollConfig unroll_config(TrainConfig const &cfg, std::size_t cg_iters)
{
  UnrollConfig u;
  u.blocks = cfg.blocks;
  u.cg_iters = cg_iters;
  u.validate();
  return u;
}

RTensor learned_probability(TrainConfig const &cfg, ad::ParamStore const &params)
{
  auto const p = pattern_params(cfg, params);
  return renormalize(probability_map(p.logits, p.slope), p.ratio, p.calib);
}

StepResult train_step_gradients(TrainConfig const &cfg, ad::ParamStore const &params, KSpaceSample const &sample,
                                RTensor const &z)
{
  auto const pp = pattern_params(cfg, params);
  ad::Tape tape;
  ad::ParamVars vars(tape, params);
  ad::Var mask = ad::pattern_mask(vars[param::kLogits], pp, cfg.mode, z, cfg.slope_b);
  auto sens = std::make_shared<CTensor const>(sample.sens);
  auto out = ad::modl_forward(tape, sample.kspace, sens, mask, vars, unroll_config(cfg, cfg.cg_iters));
  ad::Var loss = ad::training_loss(out.blocks, sample.label);
  auto grads = tape.backward(loss);
  StepResult r;
  r.loss = loss.value()[0];
  r.mask = mask.value();
  for (ad::Var v : vars.all()) {
    r.grads.push_back(grads[v]);
  }
  return r;
}

std::vector<KSpaceSample> load_split(DatasetManifest const &m, std::string const &split)
{
  std::vector<KSpaceSample> out;
  for (auto const &path : m.split(split)) {
    out.push_back(read_sample(path));
  }
  return out;
}

double mean_modl_psnr(std::vector<KSpaceSample> const &samples, RTensor const &mask, ad::ParamStore const &params,
                      UnrollConfig const &ucfg)
{
  if (samples.empty()) {
    throw Error("mean_modl_psnr: no samples");
  }
  std::vector<double> values(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    auto const xs = modl_reconstruct(samples[i].kspace, samples[i].sens, mask, params, ucfg);
    values[i] = psnr(xs.back(), samples[i].label);
  });
  return aggregate(values).mean;
}

namespace {

void write_log(std::filesystem::path const &path, std::vector<EpochLog> const &log)
{
  std::string text = "epoch,train_loss,val_psnr_db\n";
  char buf[128];
  for (auto const &e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_psnr);
    text += buf;
  }
  write_file(path, Bytes(text.begin(), text.end()));
}

} // namespace

TrainResult train(RunConfig const &cfg, std::function<void(EpochLog const &)> const &on_epoch)
{
  cfg.validate();
  TrainConfig const &tc = cfg.train;
  auto const manifest = load_manifest(tc.manifest);
  auto const train_set = load_split(manifest, "train");
  auto const val_set = load_split(manifest, "val");
  if (train_set.empty() || val_set.empty()) {
    throw Error("train: manifest needs non-empty train and val splits");
  }
  std::size_t const h = manifest.height, w = manifest.width;

  ad::ParamStore params = init_params(tc, h, w, cfg.seeds.init);
  std::vector<double> lrs;
  for (auto const &[name, value] : params.entries()) {
    lrs.push_back(name == param::kLogits ? tc.lr_pattern : tc.lr);
  }
  UnrollConfig const val_cfg = unroll_config(tc, cfg.eval.cg_iters);
  auto const calib = centered_calibration(h, w, tc.calib_size);
  auto validate = [&] {
    return mean_modl_psnr(val_set, topk_pattern(learned_probability(tc, params), tc.gamma, calib), params, val_cfg);
  };

  TrainResult res;
  res.log.push_back({0, 0.0, validate()});
  res.best = {cfg, 0, res.log.back().val_psnr, params};
  if (on_epoch) {
    on_epoch(res.log.back());
  }

  AdamState adam;
  std::vector<std::size_t> order(train_set.size());
  std::uint64_t draw = 0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::derive(cfg.seeds.sampling, 2 * epoch + 1);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.integer(0, static_cast<int>(i - 1)))]);
    }
    double epoch_loss = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      std::size_t const stop = std::min(order.size(), start + tc.batch_size);
      std::vector<RTensor> grads;
      double batch_loss = 0;
      for (std::size_t b = start; b < stop; ++b) {
        Rng zr = Rng::derive(cfg.seeds.sampling, 2 * draw++);
        RTensor const z = uniform(zr, Shape{h, w});
        auto step = train_step_gradients(tc, params, train_set[order[b]], z);
        if (!std::isfinite(step.loss)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                             manifest.split_ids("train")[order[b]]);
        }
        batch_loss += step.loss;
        if (grads.empty()) {
          grads = std::move(step.grads);
        } else {
          for (std::size_t k = 0; k < grads.size(); ++k) {
            for (std::size_t i = 0; i < grads[k].size(); ++i) {
              grads[k][i] += step.grads[k][i];
            }
          }
        }
      }
      double const inv = 1.0 / static_cast<double>(stop - start);
      for (auto &g : grads) {
        for (auto &v : g.values()) {
          v *= inv;
        }
      }
      adam_step(params, grads, adam, lrs);
      epoch_loss += batch_loss * inv;
      ++steps;
    }
    res.log.push_back({epoch, epoch_loss / static_cast<double>(steps), validate()});
    if (res.log.back().val_psnr > res.best.val_psnr) {
      res.best = {cfg, epoch, res.log.back().val_psnr, params};
    }
    if (on_epoch) {
      on_epoch(res.log.back());
    }
  }
  res.last = {cfg, tc.epochs, res.log.back().val_psnr, params};

  std::filesystem::path const dir = tc.checkpoint_dir;
  save_checkpoint(dir / "best.ckpt", res.best);
  save_checkpoint(dir / "last.ckpt", res.last);
  write_log(dir / "log.csv", res.log);
  save_run_config(dir / "config.json", cfg);
  return res;
}

void save_checkpoint(std::filesystem::path const &path, Checkpoint const &ckpt)
{
  nlohmann::json tensors = nlohmann::json::array();
  for (auto const &[name, value] : ckpt.params.entries()) {
    tensors.push_back({{"name", name}, {"shape", value.shape()}});
  }
  nlohmann::json const header{
    {"format", "kspace-loupe-checkpoint/1"},
    {"config", to_json(ckpt.config)},
    {"epoch", ckpt.epoch},
    {"val_psnr", ckpt.val_psnr},
    {"tensors", tensors},
  };
  std::string const text = header.dump();
  Bytes out = {'K', 'S', 'C', '1'};
  append_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (auto const &[name, value] : ckpt.params.entries()) {
    encode_tensor(out, value);
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(std::filesystem::path const &path)
{
  Bytes const bytes = read_file(path);
  ByteReader in(bytes.data(), bytes.size());
  char magic[4];
  in.bytes(magic, 4);
  if (std::string(magic, 4) != "KSC1") {
    throw FormatError(FormatErrorKind::BadMagic, path.string() + ": not a checkpoint");
  }
  std::uint64_t const len = in.u64();
  if (len > in.remaining()) {
    throw FormatError(FormatErrorKind::Truncated, path.string() + ": header runs past end of file");
  }
  std::string text(len, '\0');
  in.bytes(text.data(), len);
  Checkpoint ckpt;
  try {
    auto const header = nlohmann::json::parse(text);
    if (header.at("format") != "kspace-loupe-checkpoint/1") {
      throw FormatError(FormatErrorKind::Invalid, path.string() + ": unsupported checkpoint format");
    }
    ckpt.config = run_config_from_json(header.at("config"));
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.val_psnr = header.at("val_psnr").get<double>();
    for (auto const &t : header.at("tensors")) {
      RTensor value = decode_tensor(in);
      if (value.shape() != t.at("shape").get<Shape>()) {
        throw FormatError(FormatErrorKind::Invalid, path.string() + ": tensor '" +
                                                        t.at("name").get<std::string>() + "' shape mismatch");
      }
      ckpt.params.add(t.at("name").get<std::string>(), std::move(value));
    }
  } catch (nlohmann::json::exception const &e) {
    throw FormatError(FormatErrorKind::Invalid, path.string() + ": bad checkpoint header: " + e.what());
  }
  if (in.remaining() != 0) {
    throw FormatError(FormatErrorKind::Invalid, path.string() + ": trailing bytes after checkpoint");
  }
  return ckpt;
}

} // namespace loupe
