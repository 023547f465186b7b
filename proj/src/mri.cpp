#include "loupe/mri.hpp"
#include "loupe/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

namespace loupe {

namespace {

void check_sense_shapes(char const *op, Shape const &img, CTensor const &sens, RTensor const &mask)
{
  if (sens.rank() != 3 || img.size() != 2 || sens.dim(1) != img[0] || sens.dim(2) != img[1] ||
      mask.shape() != img) {
    throw ShapeError(std::string(op) + ": image " + shape_str(img) + ", sens " + shape_str(sens.shape()) +
                     ", mask " + shape_str(mask.shape()) + " do not agree");
  }
}

constexpr double kPi = std::numbers::pi;

} // namespace

CTensor sense_forward(CTensor const &x, CTensor const &sens, RTensor const &mask)
{
  check_sense_shapes("sense_forward", x.shape(), sens, mask);
  std::size_t const nc = sens.dim(0), n = x.size();
  CTensor out(sens.shape());
  for (std::size_t j = 0; j < nc; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      out[j * n + i] = sens[j * n + i] * x[i];
    }
  }
  fft2c_planes(out.data(), nc, x.dim(0), x.dim(1));
  for (std::size_t j = 0; j < nc; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      out[j * n + i] *= mask[i];
    }
  }
  return out;
}

CTensor sense_adjoint(CTensor const &y, CTensor const &sens, RTensor const &mask)
{
  if (y.shape() != sens.shape()) {
    throw ShapeError("sense_adjoint: data " + shape_str(y.shape()) + " vs sens " + shape_str(sens.shape()));
  }
  check_sense_shapes("sense_adjoint", Shape(y.shape().begin() + 1, y.shape().end()), sens, mask);
  std::size_t const nc = sens.dim(0), h = sens.dim(1), w = sens.dim(2), n = h * w;
  CTensor tmp = y;
  for (std::size_t j = 0; j < nc; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      tmp[j * n + i] *= mask[i];
    }
  }
  ifft2c_planes(tmp.data(), nc, h, w);
  CTensor out(Shape{h, w});
  for (std::size_t j = 0; j < nc; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += std::conj(sens[j * n + i]) * tmp[j * n + i];
    }
  }
  return out;
}

namespace ad {

Var sense_forward(Var x, Var sens, Var mask)
{
  return mask_mul(mask, fft2c(cmul(sens, x)));
}

Var sense_adjoint(Var y, Var sens, Var mask)
{
  return sum_leading(cmul_conj(sens, ifft2c(mask_mul(mask, y))));
}

} // namespace ad

PhantomParts simulate_phantom_parts(Rng &rng, std::size_t h, std::size_t w)
{
  if (h < 16 || w < 16) {
    throw ShapeError("simulate_phantom: need H, W >= 16");
  }
  // Normalized coordinates in [-1, 1).
  auto ux = [&](std::size_t c) { return (static_cast<double>(c) - static_cast<double>(w / 2)) / (w / 2.0); };
  auto uy = [&](std::size_t r) { return (static_cast<double>(r) - static_cast<double>(h / 2)) / (h / 2.0); };

  PhantomParts p{RTensor(Shape{h, w}, 0.0), RTensor(Shape{h, w}, 0.0)};
  int const count = rng.integer(5, 12);
  for (int e = 0; e < count; ++e) {
    double const cx = rng.uniform(-0.5, 0.5), cy = rng.uniform(-0.5, 0.5);
    double const ax = rng.uniform(0.15, 0.6), ay = rng.uniform(0.15, 0.6);
    double const theta = rng.uniform(0.0, kPi);
    double const intensity = rng.uniform(0.2, 1.0);
    double const ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double const dx = ux(c) - cx, dy = uy(r) - cy;
        double const u = (ct * dx + st * dy) / ax, v = (-st * dx + ct * dy) / ay;
        if (u * u + v * v <= 1.0) {
          p.magnitude(r, c) += intensity;
        }
      }
    }
  }
  double const peak = *std::max_element(p.magnitude.values().begin(), p.magnitude.values().end());
  for (auto &v : p.magnitude.values()) {
    v /= peak;
  }

  double coef[6];
  for (double &k : coef) {
    k = rng.uniform(-kPi / 4, kPi / 4);
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double const x = ux(c), y = uy(r);
      p.phase(r, c) = coef[0] + coef[1] * x + coef[2] * y + coef[3] * x * x + coef[4] * x * y + coef[5] * y * y;
    }
  }
  return p;
}

CTensor simulate_phantom(Rng &rng, std::size_t h, std::size_t w)
{
  PhantomParts const p = simulate_phantom_parts(rng, h, w);
  CTensor img(Shape{h, w});
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = std::polar(p.magnitude[i], p.phase[i]);
  }
  return img;
}

CTensor simulate_coils(Rng &rng, std::size_t h, std::size_t w, std::size_t coils)
{
  if (coils < 1) {
    throw ShapeError("simulate_coils: need at least one coil");
  }
  std::size_t const n = h * w;
  CTensor maps(Shape{coils, h, w});
  for (std::size_t j = 0; j < coils; ++j) {
    double const angle = 2 * kPi * static_cast<double>(j) / static_cast<double>(coils) + rng.uniform(-0.2, 0.2);
    double const px = 1.2 * std::cos(angle), py = 1.2 * std::sin(angle);
    double const sigma = rng.uniform(0.6, 0.9);
    double const p0 = rng.uniform(-kPi, kPi), p1 = rng.uniform(-kPi / 2, kPi / 2), p2 = rng.uniform(-kPi / 2, kPi / 2);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double const x = (static_cast<double>(c) - static_cast<double>(w / 2)) / (w / 2.0);
        double const y = (static_cast<double>(r) - static_cast<double>(h / 2)) / (h / 2.0);
        double const d2 = (x - px) * (x - px) + (y - py) * (y - py);
        maps[j * n + r * w + c] = std::polar(std::exp(-d2 / (2 * sigma * sigma)), p0 + p1 * x + p2 * y);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < coils; ++j) {
      s += std::norm(maps[j * n + i]);
    }
    double const inv = 1.0 / std::sqrt(s);
    for (std::size_t j = 0; j < coils; ++j) {
      maps[j * n + i] *= inv;
    }
  }
  return maps;
}

KSpaceSample make_sample(CTensor const &image, CTensor const &sens, double noise_std, Rng &rng)
{
  RTensor const full(image.shape(), 1.0);
  KSpaceSample s;
  s.kspace = sense_forward(image, sens, full);
  if (noise_std > 0) {
    for (auto &v : s.kspace.values()) {
      double const re = rng.normal(), im = rng.normal();
      v += Cx{noise_std * re, noise_std * im};
    }
  }
  s.sens = sens;
  s.label = sense_adjoint(s.kspace, sens, full);
  return s;
}

// --- KSD1 ---------------------------------------------------------------------

namespace {

constexpr char kSampleMagic[4] = {'K', 'S', 'D', '1'};
constexpr std::uint64_t kMaxSampleElements = std::uint64_t{1} << 28;

void append_complex(Bytes &out, CTensor const &t)
{
  for (Cx const &v : t.values()) {
    append_f64(out, v.real());
    append_f64(out, v.imag());
  }
}

void read_complex(ByteReader &in, CTensor &t)
{
  in.f64s(reinterpret_cast<double *>(t.data()), 2 * t.size());
}

} // namespace

void write_sample(std::filesystem::path const &path, KSpaceSample const &s)
{
  if (s.kspace.rank() != 3 || s.sens.shape() != s.kspace.shape() ||
      s.label.shape() != Shape{s.kspace.dim(1), s.kspace.dim(2)}) {
    throw ShapeError("write_sample: inconsistent sample shapes");
  }
  Bytes b(kSampleMagic, kSampleMagic + 4);
  append_u32(b, static_cast<std::uint32_t>(s.coils()));
  append_u32(b, static_cast<std::uint32_t>(s.height()));
  append_u32(b, static_cast<std::uint32_t>(s.width()));
  b.reserve(b.size() + 16 * (2 * s.kspace.size() + s.label.size()));
  append_complex(b, s.kspace);
  append_complex(b, s.sens);
  append_complex(b, s.label);
  write_file(path, b);
}

KSpaceSample read_sample(std::filesystem::path const &path)
{
  Bytes const b = read_file(path);
  ByteReader in(b.data(), b.size());
  if (b.size() < 4 || std::memcmp(b.data(), kSampleMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::BadMagic, path.string() + ": bad magic, not a KSD1 sample");
  }
  char magic[4];
  in.bytes(magic, 4);
  std::uint64_t const nc = in.u32(), h = in.u32(), w = in.u32();
  if (nc == 0 || h == 0 || w == 0 || nc * h * w > kMaxSampleElements) {
    throw FormatError(FormatErrorKind::DimensionOverflow, path.string() + ": dimensions " + std::to_string(nc) + "x" +
                                                              std::to_string(h) + "x" + std::to_string(w) +
                                                              " out of range");
  }
  std::uint64_t const expected = 16 * (2 * nc * h * w + h * w);
  if (in.remaining() < expected) {
    throw FormatError(FormatErrorKind::Truncated, path.string() + ": payload truncated");
  }
  if (in.remaining() > expected) {
    throw FormatError(FormatErrorKind::Invalid, path.string() + ": trailing bytes after payload");
  }
  KSpaceSample s{CTensor(Shape{nc, h, w}), CTensor(Shape{nc, h, w}), CTensor(Shape{h, w})};
  read_complex(in, s.kspace);
  read_complex(in, s.sens);
  read_complex(in, s.label);
  return s;
}

} // namespace loupe
