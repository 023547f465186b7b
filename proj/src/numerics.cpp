#include "loupe/numerics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace loupe {

std::size_t shape_size(Shape const &s)
{
  std::size_t n = 1;
  for (auto d : s) {
    n *= d;
  }
  return n;
}

std::string shape_str(Shape const &s)
{
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << (i ? "," : "") << s[i];
  }
  os << ']';
  return os.str();
}

bool all_finite(RTensor const &t)
{
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

bool all_finite(CTensor const &t)
{
  for (Cx const &v : t.values()) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      return false;
    }
  }
  return true;
}

double norm(CTensor const &t)
{
  double s = 0;
  for (Cx const &v : t.values()) {
    s += std::norm(v);
  }
  return std::sqrt(s);
}

double norm(RTensor const &t)
{
  double s = 0;
  for (double v : t.values()) {
    s += v * v;
  }
  return std::sqrt(s);
}

Cx inner(CTensor const &a, CTensor const &b)
{
  if (a.shape() != b.shape()) {
    throw ShapeError("inner: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Cx s{0, 0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::conj(a[i]) * b[i];
  }
  return s;
}

RTensor to_real_pairs(CTensor const &c)
{
  Shape s = c.shape();
  s.push_back(2);
  RTensor r(s);
  for (std::size_t i = 0; i < c.size(); ++i) {
    r[2 * i] = c[i].real();
    r[2 * i + 1] = c[i].imag();
  }
  return r;
}

CTensor from_real_pairs(RTensor const &r)
{
  if (r.rank() == 0 || r.shape().back() != 2) {
    throw ShapeError("from_real_pairs: trailing dimension must be 2, got " + shape_str(r.shape()));
  }
  Shape s(r.shape().begin(), r.shape().end() - 1);
  CTensor c(s);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = {r[2 * i], r[2 * i + 1]};
  }
  return c;
}

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream)
{
  return Rng(splitmix64(seed ^ splitmix64(stream + 1)));
}

double Rng::uniform()
{
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
  double u1 = uniform();
  double const u2 = uniform();
  if (u1 <= 0) {
    u1 = 0x1.0p-53;
  }
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::integer(int lo, int hi)
{
  auto const span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

RTensor uniform(Rng &rng, Shape const &shape)
{
  if (shape.empty()) {
    throw ShapeError("uniform: shape must be nonempty");
  }
  RTensor t(shape);
  for (auto &v : t.values()) {
    v = rng.uniform();
  }
  return t;
}

} // namespace loupe
