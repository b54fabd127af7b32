#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every operation applied to Vars created on it. Calling
// backward() on a scalar Var walks the record once, in reverse creation
// order, and returns the accumulated gradient of every node. Tapes are meant
// to be short-lived: build one per training step and drop it afterwards.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "amix/tensor.hpp"

namespace amix {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its Tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of a scalar loss with respect to every node of a Tape.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  /// Gradient for `v`; a zero tensor of v's shape when v is unreachable.
  Tensor operator[](Var v) const;
  bool reached(Var v) const { return v.id() < grads_.size() && grads_[v.id()].size() != 0; }

 private:
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

/// Backward rule of one recorded operation: given the gradient flowing into
/// the node's output, fill one gradient per parent (same order as parents).
/// Leaving an entry empty means "no contribution".
using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor>& parent_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (a parameter or an input we want gradients for).
  Var leaf(Tensor value);
  /// Input that never receives gradient.
  Var constant(Tensor value);

  /// Appends an operation node. Parents must already be on this tape.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  Gradients backward(Var loss) const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;  // stable addresses: value() references survive later records
};

// Elementwise. Shapes must match exactly.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

/// a[m x n] + b broadcast over rows; b has n elements (shape [n] or [1 x n]).
Var add_row(Var a, Var b);
/// Row r of a[m x n] multiplied by the constant factors[r].
Var scale_rows(Var a, std::span<const double> factors);

Var matmul(Var a, Var b);
Var transpose(Var a);
/// x[m x in] * W[out x in]^T + b[out]. `b` may be invalid for a bias-free map.
Var affine(Var x, Var w, std::optional<Var> b);

Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
/// Natural log; every element must be positive.
Var log(Var a);
/// Clamps into [lo, hi]; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);
/// Subgradient at 0 is 0.
Var abs(Var a);

enum class Reduction { Sum, Mean, L1Norm, L2NormSq };

/// Reduces all elements (no axis) to shape [1], or one axis away.
Var reduce(Reduction op, Var a, std::optional<std::size_t> axis = std::nullopt);
inline Var sum(Var a, std::optional<std::size_t> axis = std::nullopt) { return reduce(Reduction::Sum, a, axis); }
inline Var mean(Var a, std::optional<std::size_t> axis = std::nullopt) { return reduce(Reduction::Mean, a, axis); }
inline Var l1_norm(Var a, std::optional<std::size_t> axis = std::nullopt) { return reduce(Reduction::L1Norm, a, axis); }
inline Var l2_norm_sq(Var a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(Reduction::L2NormSq, a, axis);
}

/// Rows of a[m x n] scaled to unit Euclidean norm. Every row must be nonzero.
Var normalize_rows(Var a);
/// Numerically stable row softmax.
Var softmax_rows(Var a);
/// out[r] = a[r, index[r]].
Var pick(Var a, std::span<const std::size_t> index);

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
/// for the scalar function f at x.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps);

}  // namespace amix
