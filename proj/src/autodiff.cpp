#include "loupe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace loupe::ad {

char const *op_name(Op op)
{
  switch (op) {
  case Op::Leaf: return "leaf";
  case Op::Constant: return "constant";
  case Op::Add: return "add";
  case Op::Sub: return "sub";
  case Op::Mul: return "mul";
  case Op::Scale: return "scale";
  case Op::ScaleBy: return "scale_by";
  case Op::Exp: return "exp";
  case Op::Conv2d: return "conv2d";
  case Op::InstanceNorm: return "instance_norm";
  case Op::Relu: return "relu";
  case Op::Sigmoid: return "sigmoid";
  case Op::AbsSum: return "abs_sum";
  case Op::CMul: return "cmul";
  case Op::CMulConj: return "cmul_conj";
  case Op::Fft2c: return "fft2c";
  case Op::Ifft2c: return "ifft2c";
  case Op::MaskMul: return "mask_mul";
  case Op::Concat: return "concat";
  case Op::Split: return "split";
  case Op::Sum: return "sum";
  case Op::SumLeading: return "sum_leading";
  case Op::Dot: return "dot";
  case Op::Div: return "div";
  case Op::ToPlanar: return "to_planar";
  case Op::ToInterleaved: return "to_interleaved";
  case Op::StraightThrough: return "straight_through";
  case Op::Renormalize: return "renormalize";
  case Op::CgSolve: return "cg_solve";
  }
  return "?";
}

RTensor const &Var::value() const
{
  return tape_->value(id_);
}

bool Var::requires_grad() const
{
  return tape_->requires_grad(id_);
}

RTensor const &Gradients::operator[](Var leaf) const
{
  return grads_.at(static_cast<std::size_t>(leaf.id()));
}

Var Tape::leaf(RTensor value, bool requires_grad)
{
  nodes_.push_back(Node{Op::Leaf, std::move(value), {}, {}, requires_grad && grad_enabled_});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(RTensor value)
{
  nodes_.push_back(Node{Op::Constant, std::move(value), {}, {}, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Op op, std::vector<Var> const &parents, RTensor value, BackwardFn backward)
{
  Node n{op, std::move(value), {}, {}, false};
  if (grad_enabled_) {
    for (Var const &p : parents) {
      if (&p.tape() != this) {
        throw Error(std::string(op_name(op)) + ": operand belongs to a different tape");
      }
      n.requires_grad = n.requires_grad || p.requires_grad();
    }
  }
  if (n.requires_grad) {
    n.parents.reserve(parents.size());
    for (Var const &p : parents) {
      n.parents.push_back(p.id());
    }
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Gradients Tape::backward(Var loss)
{
  if (shape_size(loss.shape()) != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  auto const n = static_cast<std::size_t>(loss.id()) + 1;
  std::vector<RTensor> grads(n);
  grads[n - 1] = RTensor(loss.shape(), 1.0);

  std::vector<RTensor *> ptrs;
  for (std::size_t i = n; i-- > 0;) {
    Node &node = nodes_[i];
    if (!node.requires_grad || grads[i].empty() || node.op == Op::Leaf) {
      continue;
    }
    ptrs.assign(node.parents.size(), nullptr);
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      auto const p = static_cast<std::size_t>(node.parents[k]);
      if (!nodes_[p].requires_grad) {
        continue;
      }
      if (grads[p].empty()) {
        grads[p] = RTensor(nodes_[p].value.shape(), 0.0);
      }
      ptrs[k] = &grads[p];
    }
    node.backward(grads[i], ptrs);
    grads[i] = RTensor();
  }

  Gradients out;
  out.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::Leaf) {
      continue;
    }
    if (i < n && !grads[i].empty()) {
      if (!all_finite(grads[i])) {
        throw NumericError("backward: non-finite gradient at leaf " + std::to_string(i));
      }
      out.grads_[i] = std::move(grads[i]);
    } else {
      out.grads_[i] = RTensor(nodes_[i].value.shape(), 0.0);
    }
  }
  return out;
}

void ParamStore::add(std::string name, RTensor value)
{
  if (contains(name)) {
    throw Error("ParamStore: duplicate parameter " + name);
  }
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamStore::contains(std::string_view name) const
{
  return std::any_of(entries_.begin(), entries_.end(), [&](auto const &e) { return e.first == name; });
}

RTensor &ParamStore::at(std::string_view name)
{
  for (auto &e : entries_) {
    if (e.first == name) {
      return e.second;
    }
  }
  throw Error("ParamStore: no parameter named " + std::string(name));
}

RTensor const &ParamStore::at(std::string_view name) const
{
  return const_cast<ParamStore *>(this)->at(name);
}

std::size_t ParamStore::total_size() const
{
  std::size_t n = 0;
  for (auto const &e : entries_) {
    n += e.second.size();
  }
  return n;
}

ParamVars::ParamVars(Tape &tape, ParamStore const &store, bool requires_grad)
{
  for (auto const &[name, value] : store.entries()) {
    names_.push_back(name);
    vars_.push_back(tape.leaf(value, requires_grad));
  }
}

Var ParamVars::operator[](std::string_view name) const
{
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) {
      return vars_[i];
    }
  }
  throw Error("ParamVars: no parameter named " + std::string(name));
}

namespace {

double evaluate(Program const &f, ParamStore const &params)
{
  Tape tape(false);
  ParamVars vars(tape, params, false);
  Var loss = f(tape, vars);
  if (shape_size(loss.shape()) != 1) {
    throw ShapeError("gradcheck: program must return a scalar, got " + shape_str(loss.shape()));
  }
  return loss.value()[0];
}

} // namespace

GradcheckReport gradcheck(Program const &f, ParamStore const &params, GradcheckOptions const &opts)
{
  std::vector<RTensor> analytic;
  {
    Tape tape;
    ParamVars vars(tape, params);
    Var loss = f(tape, vars);
    Gradients g = tape.backward(loss);
    for (Var v : vars.all()) {
      analytic.push_back(g[v]);
    }
  }

  GradcheckReport report;
  ParamStore probe = params;
  Rng rng(opts.seed);
  for (std::size_t li = 0; li < probe.size(); ++li) {
    auto &[name, value] = probe.entries()[li];
    RTensor const &ga = analytic[li];

    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > opts.max_coords_per_leaf) {
      // Partial Fisher-Yates for a seeded subset.
      for (std::size_t i = 0; i < opts.max_coords_per_leaf; ++i) {
        auto const j = i + static_cast<std::size_t>(rng.next_u64() % (coords.size() - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(opts.max_coords_per_leaf);
      std::sort(coords.begin(), coords.end());
    }

    auto const step = opts.leaf_eps.find(name);
    double const eps = step == opts.leaf_eps.end() ? opts.eps : step->second;
    std::vector<double> numeric(coords.size());
    for (std::size_t k = 0; k < coords.size(); ++k) {
      double &x = value[coords[k]];
      double const x0 = x;
      x = x0 + eps;
      double const fp = evaluate(f, probe);
      x = x0 - eps;
      double const fm = evaluate(f, probe);
      x = x0;
      numeric[k] = (fp - fm) / (2 * eps);
      if (!std::isfinite(numeric[k]) || !std::isfinite(ga[coords[k]])) {
        throw NumericError("gradcheck: non-finite gradient for " + name);
      }
    }

    double scale = 0;
    for (double v : numeric) {
      scale = std::max(scale, std::abs(v));
    }
    double const floor = opts.floor_ratio * scale;
    for (std::size_t k = 0; k < coords.size(); ++k) {
      double const a = ga[coords[k]], num = numeric[k];
      double const denom = std::max({std::abs(a), std::abs(num), floor});
      double const err = denom > 0 ? std::abs(a - num) / denom : 0.0;
      if (report.worst_leaf.empty() || err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_leaf = name;
        report.worst_index = coords[k];
        report.analytic = a;
        report.numeric = num;
      }
    }
    report.coords_checked += coords.size();
  }
  return report;
}

} // namespace loupe::ad
