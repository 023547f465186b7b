#pragma once

// Multi-coil MRI model: SENSE forward/adjoint operators, synthetic phantoms
// and coil maps, the KSD1 sample format and dataset manifests.

#include "loupe/autodiff.hpp"
#include "loupe/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace loupe {

// One fully sampled multi-coil slice.
struct KSpaceSample
{
  CTensor kspace; // [Nc,H,W]
  CTensor sens;   // [Nc,H,W], sum_j |S_j|^2 = 1
  CTensor label;  // [H,W], sum_j conj(S_j) ifft2c(kspace_j)

  std::size_t coils() const { return kspace.dim(0); }
  std::size_t height() const { return kspace.dim(1); }
  std::size_t width() const { return kspace.dim(2); }
  bool operator==(KSpaceSample const &) const = default;
};

/// A x: per coil, mask ⊙ fft2c(S_j ⊙ x). x [H,W], sens [Nc,H,W], mask [H,W]
/// with entries in [0,1].
CTensor sense_forward(CTensor const &x, CTensor const &sens, RTensor const &mask);
/// A^H y: sum_j conj(S_j) ⊙ ifft2c(mask ⊙ y_j).
CTensor sense_adjoint(CTensor const &y, CTensor const &sens, RTensor const &mask);

namespace ad {
// Tape versions; complex operands are [..., 2] pair tensors.
Var sense_forward(Var x, Var sens, Var mask);
Var sense_adjoint(Var y, Var sens, Var mask);
} // namespace ad

struct PhantomParts
{
  RTensor magnitude; // [H,W], max exactly 1
  RTensor phase;     // [H,W], smooth polynomial phase (unwrapped)
};

// 5-12 random rotated ellipses with intensities in [0.2, 1] times a smooth
// quadratic phase with coefficients in [-pi/4, pi/4]. Requires H, W >= 16.
PhantomParts simulate_phantom_parts(Rng &rng, std::size_t h, std::size_t w);
CTensor simulate_phantom(Rng &rng, std::size_t h, std::size_t w);

// Gaussian bumps placed around the field of view with random phase ramps,
// normalized pixelwise so that sum_j |S_j|^2 = 1. Returns [Nc,H,W].
CTensor simulate_coils(Rng &rng, std::size_t h, std::size_t w, std::size_t coils);

// Fully samples `image` through `sens`, optionally adds complex Gaussian noise
// of standard deviation `noise_std` per component, and forms the coil-combined label.
KSpaceSample make_sample(CTensor const &image, CTensor const &sens, double noise_std, Rng &rng);

/// KSD1 file: magic "KSD1", u32 Nc, H, W (little-endian), then kspace, sens
/// and label as interleaved f64 (re, im) in row-major order.
void write_sample(std::filesystem::path const &path, KSpaceSample const &s);
KSpaceSample read_sample(std::filesystem::path const &path);

struct DatasetConfig
{
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t coils = 4;
  std::size_t n_train = 20;
  std::size_t n_val = 5;
  std::size_t n_test = 10;
  std::uint64_t seed = 1;
  double noise_std = 0.0;
  std::filesystem::path out_dir = "data";
};

struct ManifestEntry
{
  std::string path; // relative to the manifest directory
  std::string split;
  bool operator==(ManifestEntry const &) const = default;
};

struct DatasetManifest
{
  std::filesystem::path root; // directory holding manifest.json; not serialized
  std::uint64_t seed = 0;
  std::size_t height = 0, width = 0, coils = 0;
  double noise_std = 0;
  std::vector<ManifestEntry> entries;

  std::vector<std::filesystem::path> split(std::string const &name) const;
  std::vector<std::string> split_ids(std::string const &name) const;
};

// Generates every sample (sample i uses stream i of the seed), writes the
// KSD1 files and out_dir/manifest.json.
DatasetManifest build_dataset(DatasetConfig const &cfg);
void save_manifest(std::filesystem::path const &path, DatasetManifest const &m);
// Loads and validates: splits are known tags, paths unique, files parse with
// the declared dimensions.
DatasetManifest load_manifest(std::filesystem::path const &path, bool check_files = true);

} // namespace loupe
