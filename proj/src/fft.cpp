#include "loupe/numerics.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace loupe {

namespace {

// FFTW plans are created once per (H, W, direction) with FFTW_ESTIMATE, which
// is deterministic. Planning is serialized; execution through the new-array
// interface is thread-safe.
class PlanCache
{
public:
  static PlanCache &instance()
  {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t h, std::size_t w, int sign)
  {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(h, w, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) {
      return it->second;
    }
    auto *buf = fftw_alloc_complex(h * w);
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf, sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    plans_.emplace(key, p);
    return p;
  }

private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

// ifftshift moves index i to (i + h - h/2) % h; fftshift moves i to (i + h/2) % h.
void transform_plane(Cx *plane, Cx *scratch, std::size_t h, std::size_t w, int sign)
{
  std::size_t const pre_r = h - h / 2, pre_c = w - w / 2;
  std::size_t const post_r = h / 2, post_c = w / 2;
  // The inverse of fftshift∘FFT∘ifftshift is fftshift∘IFFT∘ifftshift, so both
  // directions share the same shifts.
  for (std::size_t r = 0; r < h; ++r) {
    std::size_t const rr = (r + pre_r) % h;
    for (std::size_t c = 0; c < w; ++c) {
      scratch[rr * w + (c + pre_c) % w] = plane[r * w + c];
    }
  }
  fftw_plan p = PlanCache::instance().get(h, w, sign);
  auto *buf = reinterpret_cast<fftw_complex *>(scratch);
  fftw_execute_dft(p, buf, buf);
  double const scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t r = 0; r < h; ++r) {
    std::size_t const rr = (r + post_r) % h;
    for (std::size_t c = 0; c < w; ++c) {
      plane[rr * w + (c + post_c) % w] = scratch[r * w + c] * scale;
    }
  }
}

void transform_planes(Cx *data, std::size_t count, std::size_t h, std::size_t w, int sign)
{
  std::vector<Cx> scratch(h * w);
  for (std::size_t i = 0; i < count; ++i) {
    transform_plane(data + i * h * w, scratch.data(), h, w, sign);
  }
}

CTensor transform(CTensor const &in, int sign, char const *name)
{
  if (in.rank() < 2 || in.shape()[in.rank() - 1] < 1 || in.shape()[in.rank() - 2] < 1) {
    throw ShapeError(std::string(name) + ": need at least two non-empty dimensions, got " + shape_str(in.shape()));
  }
  if (!all_finite(in)) {
    throw NumericError(std::string(name) + ": non-finite input");
  }
  std::size_t const h = in.shape()[in.rank() - 2], w = in.shape()[in.rank() - 1];
  CTensor out = in;
  transform_planes(out.data(), in.size() / (h * w), h, w, sign);
  return out;
}

} // namespace

void fft2c_planes(Cx *data, std::size_t count, std::size_t h, std::size_t w)
{
  transform_planes(data, count, h, w, FFTW_FORWARD);
}

void ifft2c_planes(Cx *data, std::size_t count, std::size_t h, std::size_t w)
{
  transform_planes(data, count, h, w, FFTW_BACKWARD);
}

CTensor fft2c(CTensor const &img)
{
  return transform(img, FFTW_FORWARD, "fft2c");
}

CTensor ifft2c(CTensor const &ksp)
{
  return transform(ksp, FFTW_BACKWARD, "ifft2c");
}

} // namespace loupe
