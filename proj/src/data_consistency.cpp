#include "loupe/mri.hpp"
#include "loupe/unrolled.hpp"

#include <cmath>

namespace loupe {

namespace {

// Real inner product of two complex vectors: Re sum conj(a) b.
double rdot(Cx const *a, Cx const *b, std::size_t n)
{
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  }
  return s;
}

void check_operator_shapes(char const *op, CTensor const &sens, RTensor const &mask, Shape const &img)
{
  if (sens.rank() != 3 || mask.shape() != Shape{sens.dim(1), sens.dim(2)} || img != mask.shape()) {
    throw ShapeError(std::string(op) + ": sens " + shape_str(sens.shape()) + ", mask " + shape_str(mask.shape()) +
                     ", image " + shape_str(img) + " do not agree");
  }
}

// Saved state of one forward CG run, for the reverse sweep.
struct CgTrace
{
  std::vector<std::vector<Cx>> p, q, r_next, fs_p;
  std::vector<double> rs, pq, alpha, beta, rs_next;
  std::vector<Cx> r0;
};

std::vector<Cx> run_cg(NormalOperator const &op, Cx const *rhs, std::size_t n_cg, CgTrace *trace,
                       std::vector<double> *residuals)
{
  std::size_t const n = op.image_size();
  std::vector<Cx> x(n, Cx{}), r(rhs, rhs + n), p = r, q(n);
  double rs = rdot(r.data(), r.data(), n);
  double const rhs_norm = std::sqrt(rs);
  if (trace) {
    trace->r0 = r;
  }
  if (residuals) {
    residuals->assign(1, rhs_norm > 0 ? 1.0 : 0.0);
  }
  std::vector<Cx> fs(trace ? op.coils() * n : 0);
  std::vector<Cx> check(residuals ? n : 0);
  for (std::size_t k = 0; k < n_cg && rs > 0; ++k) {
    op.apply(p.data(), q.data(), trace ? fs.data() : nullptr);
    double const pq = rdot(p.data(), q.data(), n);
    if (!(pq > 0)) {
      throw NumericError("cg_solve: operator is not positive definite (p'Mp = " + std::to_string(pq) + ")");
    }
    double const alpha = rs / pq;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    double const rs_new = rdot(r.data(), r.data(), n);
    double const beta = rs_new / rs;
    if (trace) {
      trace->p.push_back(p);
      trace->q.push_back(q);
      trace->r_next.push_back(r);
      trace->fs_p.push_back(fs);
      trace->rs.push_back(rs);
      trace->pq.push_back(pq);
      trace->alpha.push_back(alpha);
      trace->beta.push_back(beta);
      trace->rs_next.push_back(rs_new);
    }
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = r[i] + beta * p[i];
    }
    rs = rs_new;
    if (residuals) {
      // True residual, recomputed rather than taken from the recursion.
      op.apply(x.data(), check.data());
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        s += std::norm(check[i] - rhs[i]);
      }
      residuals->push_back(rhs_norm > 0 ? std::sqrt(s) / rhs_norm : 0.0);
    }
  }
  return x;
}

} // namespace

NormalOperator::NormalOperator(CTensor const &sens, RTensor const &mask, double lambda)
  : sens_(sens)
  , mask_(mask)
  , lambda_(lambda)
  , nc_(sens.rank() == 3 ? sens.dim(0) : 0)
  , h_(mask.rank() == 2 ? mask.dim(0) : 0)
  , w_(mask.rank() == 2 ? mask.dim(1) : 0)
  , scratch_(nc_ * h_ * w_)
{
  check_operator_shapes("NormalOperator", sens, mask, mask.shape());
  if (!(lambda > 0) || !std::isfinite(lambda)) {
    throw NumericError("data consistency weight lambda must be positive and finite");
  }
}

void NormalOperator::apply(Cx const *in, Cx *out, Cx *fs_in) const
{
  std::size_t const n = h_ * w_;
  Cx const *s = sens_.data();
  Cx *t = scratch_.data();
  for (std::size_t j = 0; j < nc_; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      t[j * n + i] = s[j * n + i] * in[i];
    }
  }
  fft2c_planes(t, nc_, h_, w_);
  if (fs_in) {
    std::copy_n(t, nc_ * n, fs_in);
  }
  for (std::size_t j = 0; j < nc_; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      t[j * n + i] *= mask_[i];
    }
  }
  ifft2c_planes(t, nc_, h_, w_);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lambda_ * in[i];
  }
  for (std::size_t j = 0; j < nc_; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += std::conj(s[j * n + i]) * t[j * n + i];
    }
  }
}

CTensor cg_solve(CTensor const &rhs, CTensor const &sens, RTensor const &mask, double lambda, std::size_t n_cg,
                 std::vector<double> *residuals)
{
  check_operator_shapes("cg_solve", sens, mask, rhs.shape());
  NormalOperator const op(sens, mask, lambda);
  auto x = run_cg(op, rhs.data(), n_cg, nullptr, residuals);
  return CTensor(rhs.shape(), std::move(x));
}

CTensor data_consistency(CTensor const &z, CTensor const &b, CTensor const &sens, RTensor const &mask, double lambda,
                         std::size_t n_cg)
{
  if (!(lambda > 0)) {
    throw NumericError("data_consistency: lambda must be positive");
  }
  CTensor rhs = sense_adjoint(b, sens, mask);
  if (rhs.shape() != z.shape()) {
    throw ShapeError("data_consistency: z " + shape_str(z.shape()) + " vs image " + shape_str(rhs.shape()));
  }
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    rhs[i] += lambda * z[i];
  }
  return cg_solve(rhs, sens, mask, lambda, n_cg);
}

namespace ad {

Var cg_solve(Var rhs, Var mask, Var lambda, std::shared_ptr<CTensor const> sens, std::size_t n_cg)
{
  auto const &rs = rhs.shape();
  if (rs.size() != 3 || rs[2] != 2 || shape_size(lambda.shape()) != 1) {
    throw ShapeError("cg_solve: expected rhs [H,W,2] and scalar lambda, got " + shape_str(rs) + " and " +
                     shape_str(lambda.shape()));
  }
  check_operator_shapes("cg_solve", *sens, mask.value(), Shape{rs[0], rs[1]});
  Tape &tape = rhs.tape();
  bool const need_grad =
    tape.grad_enabled() && (rhs.requires_grad() || mask.requires_grad() || lambda.requires_grad());

  NormalOperator const op(*sens, mask.value(), lambda.value()[0]);
  auto trace = need_grad ? std::make_shared<CgTrace>() : nullptr;
  auto const *rhs_cx = reinterpret_cast<Cx const *>(rhs.value().data());
  std::vector<Cx> x = run_cg(op, rhs_cx, n_cg, trace.get(), nullptr);
  RTensor out(rs);
  std::copy_n(reinterpret_cast<double const *>(x.data()), out.size(), out.data());

  Tape *t = &tape;
  int const im = mask.id(), il = lambda.id();
  return tape.record(Op::CgSolve, {rhs, mask, lambda}, std::move(out),
                     [t, im, il, sens, trace](RTensor const &g, std::span<RTensor *> pg) {
    auto const &mask_v = t->value(im);
    NormalOperator const op(*sens, mask_v, t->value(il)[0]);
    std::size_t const n = op.image_size(), nc = op.coils();
    auto const *xbar = reinterpret_cast<Cx const *>(g.data());

    std::vector<Cx> rbar(n, Cx{}), pbar(n, Cx{}), rbar_k(n), pbar_k(n), qbar(n), mq(n), fs_q(nc * n);
    double rsbar = 0, lambda_bar = 0;
    std::vector<double> mask_bar(pg[1] ? n : 0, 0.0);

    for (std::size_t k = trace->p.size(); k-- > 0;) {
      auto const &p = trace->p[k], &q = trace->q[k], &r1 = trace->r_next[k];
      double const rs = trace->rs[k], pq = trace->pq[k], alpha = trace->alpha[k], beta = trace->beta[k];
      double const rs1 = trace->rs_next[k];

      // p_{k+1} = r_{k+1} + beta p_k
      for (std::size_t i = 0; i < n; ++i) {
        rbar[i] += pbar[i];
      }
      double const beta_bar = rdot(pbar.data(), p.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        pbar_k[i] = beta * pbar[i];
      }
      // beta = rs_{k+1} / rs_k
      rsbar += beta_bar / rs;
      double rsbar_k = -beta_bar * rs1 / (rs * rs);
      // rs_{k+1} = <r_{k+1}, r_{k+1}>
      for (std::size_t i = 0; i < n; ++i) {
        rbar[i] += 2 * rsbar * r1[i];
      }
      // r_{k+1} = r_k - alpha q_k
      double alpha_bar = -rdot(rbar.data(), q.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        rbar_k[i] = rbar[i];
        qbar[i] = -alpha * rbar[i];
      }
      // x_{k+1} = x_k + alpha p_k
      alpha_bar += rdot(xbar, p.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        pbar_k[i] += alpha * xbar[i];
      }
      // alpha = rs_k / pq_k
      rsbar_k += alpha_bar / pq;
      double const pq_bar = -alpha_bar * rs / (pq * pq);
      // pq_k = <p_k, q_k>
      for (std::size_t i = 0; i < n; ++i) {
        pbar_k[i] += pq_bar * q[i];
        qbar[i] += pq_bar * p[i];
      }
      // q_k = M p_k, M self-adjoint
      op.apply(qbar.data(), mq.data(), fs_q.data());
      for (std::size_t i = 0; i < n; ++i) {
        pbar_k[i] += mq[i];
      }
      lambda_bar += rdot(qbar.data(), p.data(), n);
      if (pg[1]) {
        auto const &fs_p = trace->fs_p[k];
        for (std::size_t j = 0; j < nc; ++j) {
          for (std::size_t i = 0; i < n; ++i) {
            Cx const a = fs_q[j * n + i], b = fs_p[j * n + i];
            mask_bar[i] += a.real() * b.real() + a.imag() * b.imag();
          }
        }
      }
      std::swap(rbar, rbar_k);
      std::swap(pbar, pbar_k);
      rsbar = rsbar_k;
    }
    // rs_0 = <r_0, r_0>, p_0 = r_0, r_0 = rhs
    if (pg[0]) {
      Cx *rhs_bar = reinterpret_cast<Cx *>(pg[0]->data());
      for (std::size_t i = 0; i < n; ++i) {
        rhs_bar[i] += rbar[i] + pbar[i] + 2 * rsbar * trace->r0[i];
      }
    }
    if (pg[1]) {
      for (std::size_t i = 0; i < n; ++i) {
        (*pg[1])[i] += mask_bar[i];
      }
    }
    if (pg[2]) {
      (*pg[2])[0] += lambda_bar;
    }
  });
}

Var data_consistency(Var z, CTensor const &b, std::shared_ptr<CTensor const> sens, Var mask, Var lambda,
                     std::size_t n_cg)
{
  Tape &t = z.tape();
  Var atb = sense_adjoint(t.constant(to_real_pairs(b)), t.constant(to_real_pairs(*sens)), mask);
  return cg_solve(add(atb, scale_by(lambda, z)), mask, lambda, std::move(sens), n_cg);
}

} // namespace ad

} // namespace loupe
