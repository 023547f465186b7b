#pragma once

// Define-by-run reverse-mode differentiation over real tensors.
//
// Complex quantities travel through the tape as real tensors whose trailing
// dimension is 2 (interleaved real, imag), and every complex op carries an
// explicit real Jacobian. Scalars have shape {}.

#include "loupe/numerics.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace loupe::ad {

enum class Op
{
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  ScaleBy,
  Exp,
  Conv2d,
  InstanceNorm,
  Relu,
  Sigmoid,
  AbsSum,
  CMul,
  CMulConj,
  Fft2c,
  Ifft2c,
  MaskMul,
  Concat,
  Split,
  Sum,
  SumLeading,
  Dot,
  Div,
  ToPlanar,
  ToInterleaved,
  StraightThrough,
  Renormalize,
  CgSolve,
};

char const *op_name(Op op);

class Tape;

// Handle to a tape node. Cheap to copy; valid while its tape lives.
class Var
{
public:
  Var() = default;

  Tape &tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  RTensor const &value() const;
  Shape const &shape() const { return value().shape(); }
  bool requires_grad() const;

private:
  friend class Tape;
  Var(Tape *t, int id)
    : tape_(t)
    , id_(id)
  {
  }
  Tape *tape_ = nullptr;
  int id_ = -1;
};

// Accumulates d(loss)/d(parent) given d(loss)/d(output). Entries of `parent_grads`
// are nullptr for parents that do not require gradients; the others are
// zero-initialized (or already partially accumulated) buffers to add into.
using BackwardFn = std::function<void(RTensor const &grad_out, std::span<RTensor *> parent_grads)>;

class Gradients
{
public:
  // Gradient for a leaf; zeros when the loss does not depend on it.
  RTensor const &operator[](Var leaf) const;

private:
  friend class Tape;
  std::vector<RTensor> grads_;
};

class Tape
{
public:
  explicit Tape(bool grad_enabled = true)
    : grad_enabled_(grad_enabled)
  {
  }
  Tape(Tape const &) = delete;
  Tape &operator=(Tape const &) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var leaf(RTensor value, bool requires_grad = true);
  Var constant(RTensor value);
  Var scalar(double v) { return constant(RTensor(Shape{}, v)); }

  // Appends a node whose value was computed eagerly by the caller. The
  // backward function is dropped when no parent requires gradients.
  Var record(Op op, std::vector<Var> const &parents, RTensor value, BackwardFn backward);

  RTensor const &value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  Op op(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Throws ShapeError when the loss is not scalar.
  Gradients backward(Var loss);

private:
  struct Node
  {
    Op op;
    RTensor value;
    std::vector<int> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// Named trainable tensors. Iteration order is insertion order.
class ParamStore
{
public:
  void add(std::string name, RTensor value);
  bool contains(std::string_view name) const;
  RTensor &at(std::string_view name);
  RTensor const &at(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  std::vector<std::pair<std::string, RTensor>> &entries() { return entries_; }
  std::vector<std::pair<std::string, RTensor>> const &entries() const { return entries_; }
  std::size_t total_size() const;

  bool operator==(ParamStore const &) const = default;

private:
  std::vector<std::pair<std::string, RTensor>> entries_;
};

// Leaves bound to a ParamStore on one tape, in store order.
class ParamVars
{
public:
  ParamVars(Tape &tape, ParamStore const &store, bool requires_grad = true);
  Var operator[](std::string_view name) const;
  std::vector<Var> const &all() const { return vars_; }
  std::vector<std::string> const &names() const { return names_; }

private:
  std::vector<std::string> names_;
  std::vector<Var> vars_;
};

// --- ops -------------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Scalar node times tensor.
Var scale_by(Var s, Var t);
Var exp(Var a);
Var relu(Var a);
Var sigmoid(Var a);
// Sum of absolute values; the subgradient at exactly 0 is 0.
Var abs_sum(Var a);
Var sum(Var a);
// Reduces the leading axis: [N, ...] -> [...].
Var sum_leading(Var a);
Var dot(Var a, Var b);
// Scalar / scalar.
Var div(Var a, Var b);

// 3x3 convolution, stride 1, zero padding 1. x: [Cin,H,W], w: [Cout,Cin,3,3].
Var conv2d(Var x, Var w);
// Per-channel normalization over H*W with affine scale/shift: x [C,H,W], scale/shift [C].
Var instance_norm(Var x, Var scale, Var shift, double eps = 1e-5);

// Complex products on [..., 2] pair tensors. One operand may have a shape equal
// to a trailing suffix of the other's; it is broadcast over the leading axes.
Var cmul(Var a, Var b);
// conj(a) * b, with the same broadcasting rule.
Var cmul_conj(Var a, Var b);
// Centered orthonormal FFT pair over [..., H, W, 2].
Var fft2c(Var a);
Var ifft2c(Var a);
// Real mask [H,W] times complex [..., H, W, 2].
Var mask_mul(Var mask, Var a);

// Axis-0 concatenation and slicing.
Var concat(std::vector<Var> const &parts);
Var split(Var a, std::size_t start, std::size_t count);
// [H,W,2] <-> [2,H,W]
Var to_planar(Var a);
Var to_interleaved(Var a);

// Forward value is `hard`; backward is the identity onto p.
Var straight_through(Var p, RTensor hard);

// --- gradient checking ------------------------------------------------------

// A tape program: builds a scalar loss from bound parameters. Must be
// deterministic given the parameter values.
using Program = std::function<Var(Tape &, ParamVars const &)>;

struct GradcheckOptions
{
  double eps = 1e-6;
  // Per-leaf step overrides, by parameter name.
  std::map<std::string, double> leaf_eps;
  // Leaves larger than this are checked on a seeded random subset of this many coordinates.
  std::size_t max_coords_per_leaf = 256;
  std::uint64_t seed = 0;
  // Per-coordinate error is |a - n| / max(|a|, |n|, floor_ratio * max_leaf|n|).
  double floor_ratio = 1e-3;
};

struct GradcheckReport
{
  double max_rel_err = 0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t coords_checked = 0;
};

// Compares the tape gradient against central differences. Throws NumericError
// on non-finite gradients.
GradcheckReport gradcheck(Program const &f, ParamStore const &params, GradcheckOptions const &opts = {});

} // namespace loupe::ad
