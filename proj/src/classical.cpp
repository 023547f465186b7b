#include "loupe/classical.hpp"
#include "loupe/mri.hpp"

#include <algorithm>
#include <cmath>

namespace loupe {

CTensor zero_filled(CTensor const &kspace, CTensor const &sens, RTensor const &mask)
{
  return sense_adjoint(kspace, sens, mask);
}

std::pair<CTensor, CTensor> grad2d(CTensor const &x)
{
  if (x.rank() != 2) {
    throw ShapeError("grad2d: expected [H,W], got " + shape_str(x.shape()));
  }
  std::size_t const h = x.dim(0), w = x.dim(1);
  CTensor dx(x.shape()), dy(x.shape());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (c + 1 < w) {
        dx(r, c) = x(r, c + 1) - x(r, c);
      }
      if (r + 1 < h) {
        dy(r, c) = x(r + 1, c) - x(r, c);
      }
    }
  }
  return {std::move(dx), std::move(dy)};
}

CTensor div2d(CTensor const &dx, CTensor const &dy)
{
  if (dx.rank() != 2 || dx.shape() != dy.shape()) {
    throw ShapeError("div2d: expected two [H,W] fields, got " + shape_str(dx.shape()) + " and " +
                     shape_str(dy.shape()));
  }
  std::size_t const h = dx.dim(0), w = dx.dim(1);
  CTensor out(dx.shape());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      Cx v{};
      if (c + 1 < w) {
        v += dx(r, c);
      }
      if (c > 0) {
        v -= dx(r, c - 1);
      }
      if (r + 1 < h) {
        v += dy(r, c);
      }
      if (r > 0) {
        v -= dy(r - 1, c);
      }
      out(r, c) = v;
    }
  }
  return out;
}

double tv_iso(CTensor const &x)
{
  auto const [dx, dy] = grad2d(x);
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += std::sqrt(std::norm(dx[i]) + std::norm(dy[i]));
  }
  return s;
}

double power_method_opnorm(LinearOp const &op, LinearOp const &adjoint, Shape const &shape, std::size_t iters)
{
  Rng rng(0x5eed);
  CTensor x(shape);
  for (auto &v : x.values()) {
    v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  }
  double nx = norm(x);
  for (auto &v : x.values()) {
    v /= nx;
  }
  double estimate = 0;
  for (std::size_t it = 0; it < iters; ++it) {
    CTensor y = adjoint(op(x));
    double const ny = norm(y);
    if (ny == 0) {
      return 0;
    }
    double const next = std::sqrt(ny);
    for (auto &v : y.values()) {
      v /= ny;
    }
    x = std::move(y);
    bool const converged = estimate > 0 && std::abs(next - estimate) < 1e-6 * next;
    estimate = next;
    if (converged) {
      break;
    }
  }
  return estimate;
}

double tv_objective(CTensor const &x, CTensor const &kspace, CTensor const &sens, RTensor const &mask, double alpha)
{
  CTensor const ax = sense_forward(x, sens, mask);
  double data = 0;
  std::size_t const n = mask.size();
  for (std::size_t i = 0; i < ax.size(); ++i) {
    data += std::norm(ax[i] - mask[i % n] * kspace[i]);
  }
  return data + alpha * tv_iso(x);
}

namespace {

// Stacked operator K x = (A x, dx, dy) laid out as [Nc+2, H, W].
struct StackedOp
{
  CTensor const &sens;
  RTensor const &mask;

  CTensor apply(CTensor const &x) const
  {
    std::size_t const nc = sens.dim(0), n = x.size();
    CTensor out(Shape{nc + 2, x.dim(0), x.dim(1)});
    CTensor const ax = sense_forward(x, sens, mask);
    auto const [dx, dy] = grad2d(x);
    std::copy(ax.values().begin(), ax.values().end(), out.data());
    std::copy(dx.values().begin(), dx.values().end(), out.data() + nc * n);
    std::copy(dy.values().begin(), dy.values().end(), out.data() + (nc + 1) * n);
    return out;
  }

  CTensor adjoint(CTensor const &y) const
  {
    std::size_t const nc = sens.dim(0), h = y.dim(1), w = y.dim(2), n = h * w;
    CTensor ys(Shape{nc, h, w}), dx(Shape{h, w}), dy(Shape{h, w});
    std::copy_n(y.data(), nc * n, ys.data());
    std::copy_n(y.data() + nc * n, n, dx.data());
    std::copy_n(y.data() + (nc + 1) * n, n, dy.data());
    CTensor out = sense_adjoint(ys, sens, mask);
    CTensor const d = div2d(dx, dy);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] -= d[i];
    }
    return out;
  }
};

} // namespace

TVResult tv_recon(CTensor const &kspace, CTensor const &sens, RTensor const &mask, TVConfig const &cfg)
{
  if (!(cfg.alpha >= 0)) {
    throw ConfigError("tv_recon: alpha must be non-negative");
  }
  std::size_t const nc = sens.dim(0), h = sens.dim(1), w = sens.dim(2), n = h * w;
  StackedOp const k{sens, mask};

  TVResult res;
  res.step_norm = power_method_opnorm([&](CTensor const &x) { return k.apply(x); },
                                      [&](CTensor const &y) { return k.adjoint(y); }, Shape{h, w}, 200);
  double const tau = cfg.tau > 0 ? cfg.tau : 0.99 / res.step_norm;
  double const sigma = cfg.sigma > 0 ? cfg.sigma : 0.99 / res.step_norm;
  if (tau * sigma * res.step_norm * res.step_norm > 1.0) {
    throw NumericError("tv_recon: step sizes violate tau * sigma * L^2 <= 1");
  }

  CTensor target = kspace;
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] *= mask[i % n];
  }

  CTensor x = zero_filled(kspace, sens, mask);
  CTensor xbar = x;
  CTensor p1(Shape{nc, h, w}), px(Shape{h, w}), py(Shape{h, w});
  double previous = tv_objective(x, kspace, sens, mask, cfg.alpha);
  int rising = 0;
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    // Dual step: data term prox (conjugate of ||y - c||^2), then TV ball projection.
    CTensor const ax = sense_forward(xbar, sens, mask);
    for (std::size_t i = 0; i < p1.size(); ++i) {
      p1[i] = (p1[i] + sigma * ax[i] - sigma * target[i]) / (1.0 + sigma / 2.0);
    }
    auto const [gx, gy] = grad2d(xbar);
    for (std::size_t i = 0; i < n; ++i) {
      px[i] += sigma * gx[i];
      py[i] += sigma * gy[i];
      double const mag = std::sqrt(std::norm(px[i]) + std::norm(py[i]));
      double const shrink = cfg.alpha > 0 ? std::max(1.0, mag / cfg.alpha) : 0.0;
      if (shrink == 0.0) {
        px[i] = py[i] = Cx{};
      } else {
        px[i] /= shrink;
        py[i] /= shrink;
      }
    }
    // Primal step.
    CTensor const ahp = sense_adjoint(p1, sens, mask);
    CTensor const d = div2d(px, py);
    CTensor const x_old = x;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] -= tau * (ahp[i] - d[i]);
      xbar[i] = 2.0 * x[i] - x_old[i];
    }
    double const obj = tv_objective(x, kspace, sens, mask, cfg.alpha);
    if (!std::isfinite(obj)) {
      throw NumericError("tv_recon: objective became non-finite");
    }
    res.objective.push_back(obj);
    rising = obj > previous ? rising + 1 : 0;
    if (rising >= 10) {
      throw NumericError("tv_recon: objective increased for 10 consecutive iterations");
    }
    previous = obj;
  }
  res.image = std::move(x);
  return res;
}

} // namespace loupe
