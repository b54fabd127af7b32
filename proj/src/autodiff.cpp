#include "amix/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "amix/error.hpp"

namespace amix {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid()) throw InvalidArgument(std::string(op) + ": detached operand");
  if (a.tape() != b.tape()) throw InvalidArgument(std::string(op) + ": operands live on different tapes");
}

void require_same_shape(Var a, Var b, const char* op) {
  require_same_tape(a, b, op);
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void require_matrix(Var a, const char* op) {
  if (!a.valid()) throw InvalidArgument(std::string(op) + ": detached operand");
  if (a.shape().size() != 2) throw ShapeError(op, a.shape(), Shape{0, 0});
}

template <class Fn>
Tensor map(const Tensor& a, Fn fn) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
  return out;
}

Var unary(Var a, Tensor value, std::function<Tensor(const Tensor&)> dfn) {
  return a.tape()->record(std::move(value), {a.id()},
                          [dfn = std::move(dfn)](const Tensor& g, std::vector<Tensor>& out) { out[0] = dfn(g); });
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

std::vector<double> transposed(const double* a, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  return out;
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape_) throw InvalidArgument("Var::value: detached variable");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Tensor Gradients::operator[](Var v) const {
  if (v.id() >= shapes_.size()) throw InvalidArgument("Gradients: variable not on the differentiated tape");
  if (grads_[v.id()].size() == 0) return Tensor(shapes_[v.id()]);
  return grads_[v.id()];
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  for (auto p : parents) {
    if (p >= nodes_.size()) throw InvalidArgument("Tape::record: parent does not precede node");
    needs = needs || nodes_[p].requires_grad;
  }
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{std::move(value), std::move(parents), std::move(backward), needs});
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) const {
  if (loss.tape() != this) throw InvalidArgument("backward: loss is not attached to this tape");
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar", loss.shape(), Shape{1});

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(loss.shape(), 1.0);
  std::vector<Tensor> parent_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.backward || grads[id].size() == 0) continue;
    parent_grads.assign(node.parents.size(), Tensor());
    node.backward(grads[id], parent_grads);
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const std::size_t p = node.parents[k];
      Tensor& contribution = parent_grads[k];
      if (contribution.size() == 0 || !nodes_[p].requires_grad) continue;
      if (grads[p].size() == 0) {
        grads[p] = std::move(contribution);
      } else {
        auto dst = grads[p].data();
        auto src = contribution.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }

  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const auto& n : nodes_) shapes.push_back(n.value.shape());
  return Gradients(std::move(grads), std::move(shapes));
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return a.tape()->record(std::move(out), {a.id(), b.id()}, [](const Tensor& g, std::vector<Tensor>& pg) {
    pg[0] = g;
    pg[1] = g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return a.tape()->record(std::move(out), {a.id(), b.id()}, [](const Tensor& g, std::vector<Tensor>& pg) {
    pg[0] = g;
    pg[1] = map(g, [](double v) { return -v; });
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return a.tape()->record(std::move(out), {a.id(), b.id()}, [x, y](const Tensor& g, std::vector<Tensor>& pg) {
    pg[0] = Tensor(g.shape());
    pg[1] = Tensor(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      pg[0][i] = g[i] * y[i];
      pg[1][i] = g[i] * x[i];
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  if (!a.valid()) throw InvalidArgument("scale: detached operand");
  return unary(a, map(a.value(), [c](double v) { return c * v; }),
               [c](const Tensor& g) { return map(g, [c](double v) { return c * v; }); });
}

Var add_scalar(Var a, double c) {
  if (!a.valid()) throw InvalidArgument("add_scalar: detached operand");
  return unary(a, map(a.value(), [c](double v) { return v + c; }), [](const Tensor& g) { return g; });
}

Var add_row(Var a, Var b) {
  require_matrix(a, "add_row");
  require_same_tape(a, b, "add_row");
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  if (b.size() != n) throw ShapeError("add_row", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[r * n + c] + y[c];
  Shape b_shape = b.shape();
  return a.tape()->record(std::move(out), {a.id(), b.id()},
                          [m, n, b_shape](const Tensor& g, std::vector<Tensor>& pg) {
                            pg[0] = g;
                            pg[1] = Tensor(b_shape);
                            for (std::size_t r = 0; r < m; ++r)
                              for (std::size_t c = 0; c < n; ++c) pg[1][c] += g[r * n + c];
                          });
}

Var scale_rows(Var a, std::span<const double> factors) {
  require_matrix(a, "scale_rows");
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  if (factors.size() != m) throw ShapeError("scale_rows", a.shape(), Shape{factors.size()});
  std::vector<double> f(factors.begin(), factors.end());
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = f[r] * x[r * n + c];
  return unary(a, std::move(out), [f = std::move(f), m, n](const Tensor& g) {
    Tensor d(g.shape());
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) d[r * n + c] = f[r] * g[r * n + c];
    return d;
  });
}

Var matmul(Var a, Var b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  require_same_tape(a, b, "matmul");
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) throw ShapeError("matmul", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(Shape{m, n});
  gemm_nn(x.data().data(), y.data().data(), out.data().data(), m, k, n);
  return a.tape()->record(std::move(out), {a.id(), b.id()},
                          [x, y, m, k, n](const Tensor& g, std::vector<Tensor>& pg) {
                            pg[0] = Tensor(Shape{m, k});
                            const auto yt = transposed(y.data().data(), k, n);
                            gemm_nn(g.data().data(), yt.data(), pg[0].data().data(), m, n, k);
                            pg[1] = Tensor(Shape{k, n});
                            gemm_tn(x.data().data(), g.data().data(), pg[1].data().data(), k, m, n);
                          });
}

Var transpose(Var a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  auto flip = [](const Tensor& t, std::size_t rows, std::size_t cols) {
    Tensor out(Shape{cols, rows});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = t[r * cols + c];
    return out;
  };
  return unary(a, flip(a.value(), m, n), [flip, m, n](const Tensor& g) { return flip(g, n, m); });
}

Var affine(Var x, Var w, std::optional<Var> b) {
  require_matrix(x, "affine");
  require_matrix(w, "affine");
  require_same_tape(x, w, "affine");
  const std::size_t m = x.shape()[0];
  const std::size_t in = x.shape()[1];
  const std::size_t out_dim = w.shape()[0];
  if (w.shape()[1] != in) throw ShapeError("affine", x.shape(), w.shape());
  std::vector<std::size_t> parents{x.id(), w.id()};
  Tensor out(Shape{m, out_dim});
  if (b) {
    require_same_tape(x, *b, "affine");
    if (b->size() != out_dim) throw ShapeError("affine bias", w.shape(), b->shape());
    const Tensor& bias = b->value();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < out_dim; ++c) out[r * out_dim + c] = bias[c];
    parents.push_back(b->id());
  }
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const auto wt = transposed(wv.data().data(), out_dim, in);
  gemm_nn(xv.data().data(), wt.data(), out.data().data(), m, in, out_dim);
  const bool x_grad = x.requires_grad();
  const bool w_grad = w.requires_grad();
  const bool b_grad = b && b->requires_grad();
  Shape b_shape = b ? b->shape() : Shape{};
  // Only the operands that need gradients are captured.
  Tensor x_saved = w_grad ? xv : Tensor();
  Tensor w_saved = x_grad ? wv : Tensor();
  return x.tape()->record(
      std::move(out), std::move(parents),
      [xv = std::move(x_saved), wv = std::move(w_saved), m, in, out_dim, x_grad, w_grad, b_grad, b_shape](
          const Tensor& g, std::vector<Tensor>& pg) {
        if (x_grad) {
          pg[0] = Tensor(Shape{m, in});
          gemm_nn(g.data().data(), wv.data().data(), pg[0].data().data(), m, out_dim, in);
        }
        if (w_grad) {
          pg[1] = Tensor(Shape{out_dim, in});
          gemm_tn(g.data().data(), xv.data().data(), pg[1].data().data(), out_dim, m, in);
        }
        if (b_grad) {
          pg[2] = Tensor(b_shape);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < out_dim; ++c) pg[2][c] += g[r * out_dim + c];
        }
      });
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var leaky_relu(Var a, double slope) {
  if (!a.valid()) throw InvalidArgument("leaky_relu: detached operand");
  const Tensor& x = a.value();
  return unary(a, map(x, [slope](double v) { return v > 0.0 ? v : slope * v; }), [x, slope](const Tensor& g) {
    Tensor d(g.shape());
    // The kink at exactly 0 takes the left-hand slope, so relu'(0) = 0.
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : slope * g[i];
    return d;
  });
}

Var tanh(Var a) {
  if (!a.valid()) throw InvalidArgument("tanh: detached operand");
  Tensor y = map(a.value(), [](double v) { return std::tanh(v); });
  return unary(a, y, [y](const Tensor& g) {
    Tensor d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (1.0 - y[i] * y[i]);
    return d;
  });
}

Var sigmoid(Var a) {
  if (!a.valid()) throw InvalidArgument("sigmoid: detached operand");
  Tensor y = map(a.value(), [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return unary(a, y, [y](const Tensor& g) {
    Tensor d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * y[i] * (1.0 - y[i]);
    return d;
  });
}

Var exp(Var a) {
  if (!a.valid()) throw InvalidArgument("exp: detached operand");
  Tensor y = map(a.value(), [](double v) { return std::exp(v); });
  return unary(a, y, [y](const Tensor& g) {
    Tensor d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * y[i];
    return d;
  });
}

Var log(Var a) {
  if (!a.valid()) throw InvalidArgument("log: detached operand");
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw NumericError("log: non-positive argument at index " + std::to_string(i));
  }
  return unary(a, map(x, [](double v) { return std::log(v); }), [x](const Tensor& g) {
    Tensor d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / x[i];
    return d;
  });
}

Var clamp(Var a, double lo, double hi) {
  if (!a.valid()) throw InvalidArgument("clamp: detached operand");
  if (lo > hi) throw InvalidArgument("clamp: lo > hi");
  const Tensor& x = a.value();
  return unary(a, map(x, [lo, hi](double v) { return std::clamp(v, lo, hi); }), [x, lo, hi](const Tensor& g) {
    Tensor d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = (x[i] >= lo && x[i] <= hi) ? g[i] : 0.0;
    return d;
  });
}

Var abs(Var a) {
  if (!a.valid()) throw InvalidArgument("abs: detached operand");
  const Tensor& x = a.value();
  return unary(a, map(x, [](double v) { return std::abs(v); }), [x](const Tensor& g) {
    Tensor d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
    return d;
  });
}

Var reduce(Reduction op, Var a, std::optional<std::size_t> axis) {
  if (!a.valid()) throw InvalidArgument("reduce: detached operand");
  const Shape& shape = a.shape();
  std::size_t outer = 1, n = a.size(), inner = 1;
  Shape out_shape{1};
  if (axis) {
    if (*axis >= shape.size()) {
      throw InvalidArgument("reduce: axis " + std::to_string(*axis) + " invalid for shape " + shape_to_string(shape));
    }
    out_shape.clear();
    outer = 1;
    inner = 1;
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (d < *axis) outer *= shape[d];
      if (d > *axis) inner *= shape[d];
      if (d != *axis) out_shape.push_back(shape[d]);
    }
    n = shape[*axis];
    if (out_shape.empty()) out_shape.push_back(1);
  }

  const Tensor& x = a.value();
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double v = x[(o * n + k) * inner + i];
        switch (op) {
          case Reduction::Sum:
          case Reduction::Mean: acc += v; break;
          case Reduction::L1Norm: acc += std::abs(v); break;
          case Reduction::L2NormSq: acc += v * v; break;
        }
      }
      out[o * inner + i] = op == Reduction::Mean ? acc / static_cast<double>(n) : acc;
    }
  }

  return unary(a, std::move(out), [op, x, outer, n, inner](const Tensor& g) {
    Tensor d(x.shape());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const double go = g[o * inner + i];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t idx = (o * n + k) * inner + i;
          switch (op) {
            case Reduction::Sum: d[idx] = go; break;
            case Reduction::Mean: d[idx] = go / static_cast<double>(n); break;
            case Reduction::L1Norm: d[idx] = x[idx] > 0.0 ? go : (x[idx] < 0.0 ? -go : 0.0); break;
            case Reduction::L2NormSq: d[idx] = 2.0 * x[idx] * go; break;
          }
        }
      }
    }
    return d;
  });
}

Var normalize_rows(Var a) {
  require_matrix(a, "normalize_rows");
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  const Tensor& x = a.value();
  Tensor y(x.shape());
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += x[r * n + c] * x[r * n + c];
    norms[r] = std::sqrt(s);
    if (!(norms[r] > 0.0)) throw NumericError("normalize_rows: row " + std::to_string(r) + " has zero norm");
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] = x[r * n + c] / norms[r];
  }
  return unary(a, y, [y, norms, m, n](const Tensor& g) {
    // d(x/|x|) = (g - y (y.g)) / |x|
    Tensor d(g.shape());
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += y[r * n + c] * g[r * n + c];
      for (std::size_t c = 0; c < n; ++c) d[r * n + c] = (g[r * n + c] - y[r * n + c] * dot) / norms[r];
    }
    return d;
  });
}

Var softmax_rows(Var a) {
  require_matrix(a, "softmax_rows");
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, x[r * n + c]);
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      y[r * n + c] = std::exp(x[r * n + c] - mx);
      s += y[r * n + c];
    }
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] /= s;
  }
  return unary(a, y, [y, m, n](const Tensor& g) {
    Tensor d(g.shape());
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += y[r * n + c] * g[r * n + c];
      for (std::size_t c = 0; c < n; ++c) d[r * n + c] = y[r * n + c] * (g[r * n + c] - dot);
    }
    return d;
  });
}

Var pick(Var a, std::span<const std::size_t> index) {
  require_matrix(a, "pick");
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  if (index.size() != m) throw ShapeError("pick", a.shape(), Shape{index.size()});
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    if (idx[r] >= n) throw InvalidArgument("pick: index " + std::to_string(idx[r]) + " out of range at row " +
                                           std::to_string(r));
    out[r] = a.value()[r * n + idx[r]];
  }
  return unary(a, std::move(out), [idx = std::move(idx), m, n](const Tensor& g) {
    Tensor d(Shape{m, n});
    for (std::size_t r = 0; r < m; ++r) d[r * n + idx[r]] = g[r];
    return d;
  });
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("grad_check: eps must be positive");

  Tape tape;
  Var input = tape.leaf(x);
  Var loss = f(tape, input);
  if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: f is non-finite at x");
  const Tensor analytic = tape.backward(loss)[input];

  auto eval = [&](const Tensor& probe) {
    Tape t;
    const double v = f(t, t.constant(probe)).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: f is non-finite at a probe point");
    return v;
  };

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = eval(probe);
    probe[i] = x[i] - eps;
    const double down = eval(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace amix
