#include "loupe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace loupe::ad {

namespace {

[[noreturn]] void shape_fail(Op op, std::string const &what, Shape const &a, Shape const &b)
{
  throw ShapeError(std::string(op_name(op)) + ": " + what + " " + shape_str(a) + " vs " + shape_str(b));
}

void require_same(Op op, Var a, Var b)
{
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch", a.shape(), b.shape());
  }
}

void require_scalar(Op op, Var s)
{
  if (shape_size(s.shape()) != 1) {
    throw ShapeError(std::string(op_name(op)) + ": expected scalar, got " + shape_str(s.shape()));
  }
}

void require_pairs(Op op, Var a)
{
  if (a.shape().empty() || a.shape().back() != 2) {
    throw ShapeError(std::string(op_name(op)) + ": expected trailing complex-pair dimension, got " +
                     shape_str(a.shape()));
  }
}

bool is_suffix(Shape const &small, Shape const &big)
{
  return small.size() <= big.size() && std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Cx *as_cx(RTensor &t)
{
  return reinterpret_cast<Cx *>(t.data());
}

Cx const *as_cx(RTensor const &t)
{
  return reinterpret_cast<Cx const *>(t.data());
}

template <typename F>
Var unary(Op op, Var a, F &&f, BackwardFn bw)
{
  RTensor out(a.shape());
  auto const &x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = f(x[i]);
  }
  return a.tape().record(op, {a}, std::move(out), std::move(bw));
}

double stable_sigmoid(double x)
{
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double const e = std::exp(x);
  return e / (1.0 + e);
}

} // namespace

Var add(Var a, Var b)
{
  require_same(Op::Add, a, b);
  RTensor out = a.value();
  auto const &y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += y[i];
  }
  return a.tape().record(Op::Add, {a, b}, std::move(out), [](RTensor const &g, std::span<RTensor *> pg) {
    for (auto *p : pg) {
      if (p) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*p)[i] += g[i];
        }
      }
    }
  });
}

Var sub(Var a, Var b)
{
  require_same(Op::Sub, a, b);
  RTensor out = a.value();
  auto const &y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] -= y[i];
  }
  return a.tape().record(Op::Sub, {a, b}, std::move(out), [](RTensor const &g, std::span<RTensor *> pg) {
    if (pg[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*pg[0])[i] += g[i];
      }
    }
    if (pg[1]) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*pg[1])[i] -= g[i];
      }
    }
  });
}

Var mul(Var a, Var b)
{
  require_same(Op::Mul, a, b);
  RTensor out = a.value();
  auto const &y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= y[i];
  }
  Tape *t = &a.tape();
  int const ia = a.id(), ib = b.id();
  return t->record(Op::Mul, {a, b}, std::move(out), [t, ia, ib](RTensor const &g, std::span<RTensor *> pg) {
    auto const &av = t->value(ia), &bv = t->value(ib);
    if (pg[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*pg[0])[i] += g[i] * bv[i];
      }
    }
    if (pg[1]) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*pg[1])[i] += g[i] * av[i];
      }
    }
  });
}

Var scale(Var a, double s)
{
  return unary(Op::Scale, a, [s](double x) { return s * x; }, [s](RTensor const &g, std::span<RTensor *> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*pg[0])[i] += s * g[i];
    }
  });
}

Var scale_by(Var s, Var t)
{
  require_scalar(Op::ScaleBy, s);
  double const sv = s.value()[0];
  RTensor out = t.value();
  for (auto &v : out.values()) {
    v *= sv;
  }
  Tape *tp = &s.tape();
  int const is = s.id(), it = t.id();
  return tp->record(Op::ScaleBy, {s, t}, std::move(out), [tp, is, it](RTensor const &g, std::span<RTensor *> pg) {
    if (pg[0]) {
      auto const &tv = tp->value(it);
      double acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        acc += g[i] * tv[i];
      }
      (*pg[0])[0] += acc;
    }
    if (pg[1]) {
      double const sv = tp->value(is)[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*pg[1])[i] += sv * g[i];
      }
    }
  });
}

Var exp(Var a)
{
  Tape *t = &a.tape();
  int const self = static_cast<int>(t->size());
  return unary(Op::Exp, a, [](double x) { return std::exp(x); }, [t, self](RTensor const &g, std::span<RTensor *> pg) {
    auto const &y = t->value(self);
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*pg[0])[i] += g[i] * y[i];
    }
  });
}

Var relu(Var a)
{
  Tape *t = &a.tape();
  int const ia = a.id();
  return unary(Op::Relu, a, [](double x) { return x > 0 ? x : 0.0; }, [t, ia](RTensor const &g, std::span<RTensor *> pg) {
    auto const &x = t->value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0) {
        (*pg[0])[i] += g[i];
      }
    }
  });
}

Var sigmoid(Var a)
{
  Tape *t = &a.tape();
  int const self = static_cast<int>(t->size());
  return unary(Op::Sigmoid, a, stable_sigmoid, [t, self](RTensor const &g, std::span<RTensor *> pg) {
    auto const &y = t->value(self);
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*pg[0])[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

// Scalar reductions accumulate in extended precision so that loss values are
// accurate to about one ulp; finite-difference checks depend on it.
Var abs_sum(Var a)
{
  long double s = 0;
  for (double v : a.value().values()) {
    s += std::abs(v);
  }
  Tape *t = &a.tape();
  int const ia = a.id();
  return t->record(Op::AbsSum, {a}, RTensor(Shape{}, static_cast<double>(s)), [t, ia](RTensor const &g, std::span<RTensor *> pg) {
    auto const &x = t->value(ia);
    double const gv = g[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      (*pg[0])[i] += x[i] > 0 ? gv : (x[i] < 0 ? -gv : 0.0);
    }
  });
}

Var sum(Var a)
{
  long double s = 0;
  for (double v : a.value().values()) {
    s += v;
  }
  return a.tape().record(Op::Sum, {a}, RTensor(Shape{}, static_cast<double>(s)), [](RTensor const &g, std::span<RTensor *> pg) {
    for (auto &v : pg[0]->values()) {
      v += g[0];
    }
  });
}

Var sum_leading(Var a)
{
  if (a.shape().empty()) {
    throw ShapeError("sum_leading: need rank >= 1");
  }
  Shape rest(a.shape().begin() + 1, a.shape().end());
  RTensor out(rest, 0.0);
  std::size_t const m = out.size(), n = a.shape()[0];
  auto const &x = a.value();
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      out[i] += x[k * m + i];
    }
  }
  return a.tape().record(Op::SumLeading, {a}, std::move(out), [n, m](RTensor const &g, std::span<RTensor *> pg) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < m; ++i) {
        (*pg[0])[k * m + i] += g[i];
      }
    }
  });
}

Var dot(Var a, Var b)
{
  require_same(Op::Dot, a, b);
  long double s = 0;
  auto const &x = a.value(), &y = b.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += static_cast<long double>(x[i]) * y[i];
  }
  Tape *t = &a.tape();
  int const ia = a.id(), ib = b.id();
  return t->record(Op::Dot, {a, b}, RTensor(Shape{}, static_cast<double>(s)), [t, ia, ib](RTensor const &g, std::span<RTensor *> pg) {
    auto const &x = t->value(ia), &y = t->value(ib);
    if (pg[0]) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        (*pg[0])[i] += g[0] * y[i];
      }
    }
    if (pg[1]) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        (*pg[1])[i] += g[0] * x[i];
      }
    }
  });
}

Var div(Var a, Var b)
{
  require_scalar(Op::Div, a);
  require_scalar(Op::Div, b);
  double const av = a.value()[0], bv = b.value()[0];
  return a.tape().record(Op::Div, {a, b}, RTensor(Shape{}, av / bv), [av, bv](RTensor const &g, std::span<RTensor *> pg) {
    if (pg[0]) {
      (*pg[0])[0] += g[0] / bv;
    }
    if (pg[1]) {
      (*pg[1])[0] -= g[0] * av / (bv * bv);
    }
  });
}

// --- convolution -------------------------------------------------------------

namespace {

// Copies [C,H,W] into a zero-padded [C,H+2,W+2] buffer.
std::vector<double> pad1(RTensor const &x, std::size_t c, std::size_t h, std::size_t w)
{
  std::size_t const hp = h + 2, wp = w + 2;
  std::vector<double> out(c * hp * wp, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(x.data() + (ci * h + y) * w, w, out.data() + (ci * hp + y + 1) * wp + 1);
    }
  }
  return out;
}

} // namespace

Var conv2d(Var x, Var wt)
{
  auto const &xs = x.shape(), &ws = wt.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[2] != 3 || ws[3] != 3 || ws[1] != xs[0]) {
    shape_fail(Op::Conv2d, "expected x [Cin,H,W] and w [Cout,Cin,3,3], got", xs, ws);
  }
  std::size_t const cin = xs[0], h = xs[1], w = xs[2], cout = ws[0];
  std::size_t const wp = w + 2, plane_p = (h + 2) * wp, plane = h * w;

  auto xp = std::make_shared<std::vector<double>>(pad1(x.value(), cin, h, w));
  auto const &kw = wt.value();
  RTensor out(Shape{cout, h, w}, 0.0);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      double const *k = kw.data() + (co * cin + ci) * 9;
      double const *src = xp->data() + ci * plane_p;
      for (std::size_t y = 0; y < h; ++y) {
        double *dst = out.data() + co * plane + y * w;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          double const *row = src + (y + ky) * wp;
          double const k0 = k[ky * 3], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
          for (std::size_t c = 0; c < w; ++c) {
            dst[c] += k0 * row[c] + k1 * row[c + 1] + k2 * row[c + 2];
          }
        }
      }
    }
  }

  Tape *t = &x.tape();
  int const iw = wt.id();
  return t->record(Op::Conv2d, {x, wt}, std::move(out), [=](RTensor const &g, std::span<RTensor *> pg) {
    auto const &kw = t->value(iw);
    if (pg[0]) {
      // Scatter into a padded gradient, then crop.
      std::vector<double> gp(cin * plane_p, 0.0);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double *dst = gp.data() + ci * plane_p;
        for (std::size_t co = 0; co < cout; ++co) {
          double const *k = kw.data() + (co * cin + ci) * 9;
          for (std::size_t y = 0; y < h; ++y) {
            double const *gr = g.data() + co * plane + y * w;
            for (std::size_t ky = 0; ky < 3; ++ky) {
              double *row = dst + (y + ky) * wp;
              double const k0 = k[ky * 3], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
              for (std::size_t c = 0; c < w; ++c) {
                row[c] += k0 * gr[c];
              }
              for (std::size_t c = 0; c < w; ++c) {
                row[c + 1] += k1 * gr[c];
              }
              for (std::size_t c = 0; c < w; ++c) {
                row[c + 2] += k2 * gr[c];
              }
            }
          }
        }
      }
      RTensor &gx = *pg[0];
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t y = 0; y < h; ++y) {
          double const *src = gp.data() + (ci * (h + 2) + y + 1) * wp + 1;
          double *dst = gx.data() + (ci * h + y) * w;
          for (std::size_t c = 0; c < w; ++c) {
            dst[c] += src[c];
          }
        }
      }
    }
    if (pg[1]) {
      RTensor &gw = *pg[1];
      for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
          double *k = gw.data() + (co * cin + ci) * 9;
          double const *src = xp->data() + ci * plane_p;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            double a0 = 0, a1 = 0, a2 = 0;
            for (std::size_t y = 0; y < h; ++y) {
              double const *gr = g.data() + co * plane + y * w;
              double const *row = src + (y + ky) * wp;
              for (std::size_t c = 0; c < w; ++c) {
                a0 += gr[c] * row[c];
                a1 += gr[c] * row[c + 1];
                a2 += gr[c] * row[c + 2];
              }
            }
            k[ky * 3] += a0;
            k[ky * 3 + 1] += a1;
            k[ky * 3 + 2] += a2;
          }
        }
      }
    }
  });
}

Var instance_norm(Var x, Var scale, Var shift, double eps)
{
  auto const &xs = x.shape();
  if (xs.size() != 3 || scale.shape() != Shape{xs[0]} || shift.shape() != Shape{xs[0]}) {
    shape_fail(Op::InstanceNorm, "expected x [C,H,W] with scale/shift [C], got", xs, scale.shape());
  }
  std::size_t const c = xs[0], n = xs[1] * xs[2];
  auto normed = std::make_shared<std::vector<double>>(c * n);
  auto inv_std = std::make_shared<std::vector<double>>(c);
  RTensor out(xs);
  auto const &xv = x.value(), &gam = scale.value(), &bet = shift.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double const *src = xv.data() + ch * n;
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += src[i];
    }
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double const d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double const inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[ch] = inv;
    double *xh = normed->data() + ch * n;
    double *dst = out.data() + ch * n;
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = (src[i] - mean) * inv;
      dst[i] = gam[ch] * xh[i] + bet[ch];
    }
  }

  Tape *t = &x.tape();
  int const ig = scale.id();
  return t->record(Op::InstanceNorm, {x, scale, shift}, std::move(out), [=](RTensor const &g, std::span<RTensor *> pg) {
    auto const &gam = t->value(ig);
    double const nn = static_cast<double>(n);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double const *gr = g.data() + ch * n;
      double const *xh = normed->data() + ch * n;
      double sg = 0, sgx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        sg += gr[i];
        sgx += gr[i] * xh[i];
      }
      if (pg[1]) {
        (*pg[1])[ch] += sgx;
      }
      if (pg[2]) {
        (*pg[2])[ch] += sg;
      }
      if (pg[0]) {
        // d/dx of gamma * xhat: (gamma * inv / n) * (n g - sum g - xhat * sum(g xhat))
        double const k = gam[ch] * (*inv_std)[ch] / nn;
        double *dst = pg[0]->data() + ch * n;
        for (std::size_t i = 0; i < n; ++i) {
          dst[i] += k * (nn * gr[i] - sg - xh[i] * sgx);
        }
      }
    }
  });
}

// --- complex pair ops ----------------------------------------------------------

namespace {

struct Broadcast
{
  bool a_big;
  std::size_t outer; // repetitions of the small operand
  std::size_t inner; // complex entries in the small operand
};

Broadcast broadcast_pairs(Op op, Var a, Var b)
{
  require_pairs(op, a);
  require_pairs(op, b);
  if (is_suffix(b.shape(), a.shape())) {
    return {true, a.value().size() / b.value().size(), b.value().size() / 2};
  }
  if (is_suffix(a.shape(), b.shape())) {
    return {false, b.value().size() / a.value().size(), a.value().size() / 2};
  }
  shape_fail(op, "operands do not broadcast", a.shape(), b.shape());
}

template <bool ConjA>
Var cmul_impl(Op op, Var a, Var b)
{
  Broadcast const bc = broadcast_pairs(op, a, b);
  RTensor out(bc.a_big ? a.shape() : b.shape());
  Cx const *av = as_cx(a.value()), *bv = as_cx(b.value());
  Cx *ov = as_cx(out);
  for (std::size_t o = 0; o < bc.outer; ++o) {
    for (std::size_t i = 0; i < bc.inner; ++i) {
      std::size_t const big = o * bc.inner + i;
      Cx const x = av[bc.a_big ? big : i], y = bv[bc.a_big ? i : big];
      ov[big] = (ConjA ? std::conj(x) : x) * y;
    }
  }
  Tape *t = &a.tape();
  int const ia = a.id(), ib = b.id();
  return t->record(op, {a, b}, std::move(out), [t, ia, ib, bc](RTensor const &g, std::span<RTensor *> pg) {
    Cx const *av = as_cx(t->value(ia)), *bv = as_cx(t->value(ib));
    Cx const *gv = as_cx(g);
    Cx *ga = pg[0] ? as_cx(*pg[0]) : nullptr;
    Cx *gb = pg[1] ? as_cx(*pg[1]) : nullptr;
    for (std::size_t o = 0; o < bc.outer; ++o) {
      for (std::size_t i = 0; i < bc.inner; ++i) {
        std::size_t const big = o * bc.inner + i;
        std::size_t const ja = bc.a_big ? big : i, jb = bc.a_big ? i : big;
        Cx const gg = gv[big];
        if constexpr (ConjA) {
          // out = conj(a) b: da = conj(g) b, db = a g
          if (ga) {
            ga[ja] += std::conj(gg) * bv[jb];
          }
          if (gb) {
            gb[jb] += av[ja] * gg;
          }
        } else {
          if (ga) {
            ga[ja] += gg * std::conj(bv[jb]);
          }
          if (gb) {
            gb[jb] += gg * std::conj(av[ja]);
          }
        }
      }
    }
  });
}

void require_image_pairs(Op op, Var a)
{
  require_pairs(op, a);
  if (a.shape().size() < 3) {
    throw ShapeError(std::string(op_name(op)) + ": expected [..., H, W, 2], got " + shape_str(a.shape()));
  }
}

template <bool Forward>
Var fft_impl(Op op, Var a)
{
  require_image_pairs(op, a);
  auto const &s = a.shape();
  std::size_t const h = s[s.size() - 3], w = s[s.size() - 2];
  std::size_t const count = a.value().size() / (2 * h * w);
  RTensor out = a.value();
  if (!all_finite(out)) {
    throw NumericError(std::string(op_name(op)) + ": non-finite input");
  }
  if constexpr (Forward) {
    fft2c_planes(as_cx(out), count, h, w);
  } else {
    ifft2c_planes(as_cx(out), count, h, w);
  }
  return a.tape().record(op, {a}, std::move(out), [h, w, count](RTensor const &g, std::span<RTensor *> pg) {
    // The real Jacobian of a unitary complex-linear map transposes to its inverse.
    RTensor tmp = g;
    if constexpr (Forward) {
      ifft2c_planes(as_cx(tmp), count, h, w);
    } else {
      fft2c_planes(as_cx(tmp), count, h, w);
    }
    for (std::size_t i = 0; i < tmp.size(); ++i) {
      (*pg[0])[i] += tmp[i];
    }
  });
}

} // namespace

Var cmul(Var a, Var b)
{
  return cmul_impl<false>(Op::CMul, a, b);
}

Var cmul_conj(Var a, Var b)
{
  return cmul_impl<true>(Op::CMulConj, a, b);
}

Var fft2c(Var a)
{
  return fft_impl<true>(Op::Fft2c, a);
}

Var ifft2c(Var a)
{
  return fft_impl<false>(Op::Ifft2c, a);
}

Var mask_mul(Var mask, Var a)
{
  require_image_pairs(Op::MaskMul, a);
  auto const &s = a.shape();
  if (mask.shape() != Shape{s[s.size() - 3], s[s.size() - 2]}) {
    shape_fail(Op::MaskMul, "mask must be [H,W] of", mask.shape(), s);
  }
  std::size_t const m = mask.value().size();
  std::size_t const outer = a.value().size() / (2 * m);
  RTensor out = a.value();
  auto const &mv = mask.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < m; ++i) {
      out[2 * (o * m + i)] *= mv[i];
      out[2 * (o * m + i) + 1] *= mv[i];
    }
  }
  Tape *t = &a.tape();
  int const im = mask.id(), ia = a.id();
  return t->record(Op::MaskMul, {mask, a}, std::move(out), [t, im, ia, m, outer](RTensor const &g, std::span<RTensor *> pg) {
    auto const &mv = t->value(im);
    auto const &av = t->value(ia);
    if (pg[0]) {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < m; ++i) {
          std::size_t const k = 2 * (o * m + i);
          (*pg[0])[i] += av[k] * g[k] + av[k + 1] * g[k + 1];
        }
      }
    }
    if (pg[1]) {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < m; ++i) {
          std::size_t const k = 2 * (o * m + i);
          (*pg[1])[k] += mv[i] * g[k];
          (*pg[1])[k + 1] += mv[i] * g[k + 1];
        }
      }
    }
  });
}

// --- layout ops ----------------------------------------------------------------

Var concat(std::vector<Var> const &parts)
{
  if (parts.empty()) {
    throw ShapeError("concat: no operands");
  }
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  std::vector<std::size_t> sizes;
  for (Var const &p : parts) {
    if (p.shape().empty() || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      shape_fail(Op::Concat, "trailing shapes differ", parts[0].shape(), p.shape());
    }
    lead += p.shape()[0];
    sizes.push_back(p.value().size());
  }
  Shape s = tail;
  s.insert(s.begin(), lead);
  RTensor out(s);
  std::size_t off = 0;
  for (Var const &p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + off);
    off += p.value().size();
  }
  return parts[0].tape().record(Op::Concat, parts, std::move(out), [sizes](RTensor const &g, std::span<RTensor *> pg) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (pg[k]) {
        for (std::size_t i = 0; i < sizes[k]; ++i) {
          (*pg[k])[i] += g[off + i];
        }
      }
      off += sizes[k];
    }
  });
}

Var split(Var a, std::size_t start, std::size_t count)
{
  if (a.shape().empty() || start + count > a.shape()[0] || count == 0) {
    throw ShapeError("split: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_str(a.shape()));
  }
  Shape s = a.shape();
  std::size_t const stride = a.value().size() / s[0];
  s[0] = count;
  RTensor out(s);
  std::copy_n(a.value().data() + start * stride, count * stride, out.data());
  std::size_t const off = start * stride;
  return a.tape().record(Op::Split, {a}, std::move(out), [off](RTensor const &g, std::span<RTensor *> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*pg[0])[off + i] += g[i];
    }
  });
}

Var to_planar(Var a)
{
  auto const &s = a.shape();
  if (s.size() != 3 || s[2] != 2) {
    throw ShapeError("to_planar: expected [H,W,2], got " + shape_str(s));
  }
  std::size_t const n = s[0] * s[1];
  RTensor out(Shape{2, s[0], s[1]});
  auto const &x = a.value();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[2 * i];
    out[n + i] = x[2 * i + 1];
  }
  return a.tape().record(Op::ToPlanar, {a}, std::move(out), [n](RTensor const &g, std::span<RTensor *> pg) {
    for (std::size_t i = 0; i < n; ++i) {
      (*pg[0])[2 * i] += g[i];
      (*pg[0])[2 * i + 1] += g[n + i];
    }
  });
}

Var to_interleaved(Var a)
{
  auto const &s = a.shape();
  if (s.size() != 3 || s[0] != 2) {
    throw ShapeError("to_interleaved: expected [2,H,W], got " + shape_str(s));
  }
  std::size_t const n = s[1] * s[2];
  RTensor out(Shape{s[1], s[2], 2});
  auto const &x = a.value();
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = x[i];
    out[2 * i + 1] = x[n + i];
  }
  return a.tape().record(Op::ToInterleaved, {a}, std::move(out), [n](RTensor const &g, std::span<RTensor *> pg) {
    for (std::size_t i = 0; i < n; ++i) {
      (*pg[0])[i] += g[2 * i];
      (*pg[0])[n + i] += g[2 * i + 1];
    }
  });
}

Var straight_through(Var p, RTensor hard)
{
  if (hard.shape() != p.shape()) {
    shape_fail(Op::StraightThrough, "hard value shape differs from", hard.shape(), p.shape());
  }
  return p.tape().record(Op::StraightThrough, {p}, std::move(hard), [](RTensor const &g, std::span<RTensor *> pg) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*pg[0])[i] += g[i];
    }
  });
}

} // namespace loupe::ad
