#include "loupe/mri.hpp"
#include "loupe/unrolled.hpp"

#include <cmath>

namespace loupe {

void UnrollConfig::validate() const
{
  if (blocks < 1 || cg_iters < 1) {
    throw ConfigError("unrolled network needs at least one block and one CG iteration");
  }
}

namespace param {

std::string conv_weight(std::size_t layer)
{
  return "denoiser.conv" + std::to_string(layer) + ".weight";
}

std::string norm_scale(std::size_t layer)
{
  return "denoiser.norm" + std::to_string(layer) + ".scale";
}

std::string norm_shift(std::size_t layer)
{
  return "denoiser.norm" + std::to_string(layer) + ".shift";
}

} // namespace param

void init_denoiser(ad::ParamStore &store, std::size_t channels, Rng &rng)
{
  if (channels < 1) {
    throw ConfigError("denoiser needs at least one channel");
  }
  for (std::size_t l = 1; l <= kDenoiserLayers; ++l) {
    std::size_t const cin = l == 1 ? 2 : channels;
    std::size_t const cout = l == kDenoiserLayers ? 2 : channels;
    RTensor w(Shape{cout, cin, 3, 3});
    double const bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
    for (auto &v : w.values()) {
      v = rng.uniform(-bound, bound);
    }
    store.add(param::conv_weight(l), std::move(w));
    if (l < kDenoiserLayers) {
      store.add(param::norm_scale(l), RTensor(Shape{channels}, 1.0));
      store.add(param::norm_shift(l), RTensor(Shape{channels}, 0.0));
    }
  }
}

std::size_t denoiser_channels(ad::ParamStore const &store)
{
  return store.at(param::conv_weight(1)).dim(0);
}

ad::Var ad::denoise(Var x, ParamVars const &params)
{
  Var h = to_planar(x);
  for (std::size_t l = 1; l < kDenoiserLayers; ++l) {
    h = conv2d(h, params[param::conv_weight(l)]);
    h = relu(instance_norm(h, params[param::norm_scale(l)], params[param::norm_shift(l)]));
  }
  h = conv2d(h, params[param::conv_weight(kDenoiserLayers)]);
  return add(x, to_interleaved(h));
}

CTensor denoise(CTensor const &x, ad::ParamStore const &params)
{
  ad::Tape tape(false);
  ad::ParamVars vars(tape, params, false);
  return from_real_pairs(ad::denoise(tape.constant(to_real_pairs(x)), vars).value());
}

namespace ad {

ModlOutput modl_forward(Tape &tape, CTensor const &kspace, std::shared_ptr<CTensor const> sens, Var mask,
                        ParamVars const &params, UnrollConfig const &cfg)
{
  cfg.validate();
  if (kspace.shape() != sens->shape()) {
    throw ShapeError("modl_forward: k-space " + shape_str(kspace.shape()) + " vs sens " + shape_str(sens->shape()));
  }
  ModlOutput out;
  out.zero_filled = sense_adjoint(tape.constant(to_real_pairs(kspace)), tape.constant(to_real_pairs(*sens)), mask);
  Var lambda = exp(params[param::kRho]);
  Var x = out.zero_filled;
  for (std::size_t k = 0; k < cfg.blocks; ++k) {
    Var z = denoise(x, params);
    x = cg_solve(add(out.zero_filled, scale_by(lambda, z)), mask, lambda, sens, cfg.cg_iters);
    out.blocks.push_back(x);
  }
  return out;
}

Var training_loss(std::vector<Var> const &xs, CTensor const &label)
{
  if (xs.empty()) {
    throw ShapeError("training_loss: no reconstructions");
  }
  Tape &t = xs.front().tape();
  Var target = t.constant(to_real_pairs(label));
  Var loss = abs_sum(sub(xs.front(), target));
  for (std::size_t k = 1; k < xs.size(); ++k) {
    loss = add(loss, abs_sum(sub(xs[k], target)));
  }
  return loss;
}

} // namespace ad

std::vector<CTensor> modl_reconstruct(CTensor const &kspace, CTensor const &sens, RTensor const &mask,
                                      ad::ParamStore const &params, UnrollConfig const &cfg)
{
  ad::Tape tape(false);
  ad::ParamVars vars(tape, params, false);
  auto out = ad::modl_forward(tape, kspace, std::make_shared<CTensor const>(sens), tape.constant(mask), vars, cfg);
  std::vector<CTensor> xs;
  for (ad::Var v : out.blocks) {
    xs.push_back(from_real_pairs(v.value()));
  }
  return xs;
}

} // namespace loupe
