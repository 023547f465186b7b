#pragma once

// Joint training of the pattern logits, the denoiser and the data-consistency
// weight; Adam; checkpoints.
//
// Checkpoint layout: magic "KSC1", u64 header length, a JSON header
// {format, config, epoch, val_psnr, tensors: [{name, shape}]}, then one KSR1
// blob per tensor in header order.

#include "loupe/autodiff.hpp"
#include "loupe/config.hpp"
#include "loupe/unrolled.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace loupe {

struct AdamState
{
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<RTensor> m, v; // shaped like the store entries, created on first step
};

/// One bias-corrected Adam update. `grads` and `lrs` follow store order.
/// Throws NumericError naming the leaf on a non-finite gradient.
void adam_step(ad::ParamStore &params, std::vector<RTensor> const &grads, AdamState &state,
               std::vector<double> const &lrs);
void adam_step(ad::ParamStore &params, std::vector<RTensor> const &grads, AdamState &state, double lr);

// Denoiser (init stream 0), rho = 0, logits ~ U[-1,1] (init stream 1).
ad::ParamStore init_params(TrainConfig const &cfg, std::size_t height, std::size_t width, std::uint64_t init_seed);

PatternParams pattern_params(TrainConfig const &cfg, ad::ParamStore const &params);
UnrollConfig unroll_config(TrainConfig const &cfg, std::size_t cg_iters);

// Renormalized probability map P' of the stored logits.
RTensor learned_probability(TrainConfig const &cfg, ad::ParamStore const &params);

struct Checkpoint
{
  RunConfig config;
  std::size_t epoch = 0;
  double val_psnr = 0;
  ad::ParamStore params;
};

void save_checkpoint(std::filesystem::path const &path, Checkpoint const &ckpt);
Checkpoint load_checkpoint(std::filesystem::path const &path);

// Loss of one training sample under a given draw z: builds the tape, runs the
// backward pass and returns (loss, gradients in store order).
struct StepResult
{
  double loss = 0;
  std::vector<RTensor> grads;
  RTensor mask; // forward mask actually used
};
StepResult train_step_gradients(TrainConfig const &cfg, ad::ParamStore const &params, KSpaceSample const &sample,
                                RTensor const &z);

struct EpochLog
{
  std::size_t epoch = 0; // 0 is the initialization
  double train_loss = 0; // mean per step; 0 for epoch 0
  double val_psnr = 0;   // mean over the validation split, learned top-k pattern
};

struct TrainResult
{
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochLog> log;
};

/// Trains on the manifest's train split and selects the checkpoint with the
/// best validation PSNR. Writes best.ckpt, last.ckpt, log.csv and config.json
/// into train.checkpoint_dir. Deterministic given the config and seeds.
TrainResult train(RunConfig const &cfg, std::function<void(EpochLog const &)> const &on_epoch = {});

// Mean PSNR of the final block over the given samples under a fixed mask.
double mean_modl_psnr(std::vector<KSpaceSample> const &samples, RTensor const &mask, ad::ParamStore const &params,
                      UnrollConfig const &ucfg);

std::vector<KSpaceSample> load_split(DatasetManifest const &m, std::string const &split);

} // namespace loupe
