#pragma once

// Reverse-mode gradient tape over Matrix values.
//
// A Tape records every operation applied to its Vars; Tape::backward walks
// the record in reverse, accumulating d(loss)/d(node) into each node. The
// free functions in namespace ad mirror the Matrix kernels in matrix.hpp one
// for one, so model code templated on the value type runs unchanged on
// either. Values computed outside the engine can be recorded with
// Tape::opaque(); they evaluate normally but raise UnsupportedOp if a
// gradient ever has to flow through them.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emoforge/matrix.hpp"

namespace emoforge::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is wanted.
  Var variable(Matrix value) { return push(std::move(value), true, nullptr, {}); }
  /// Leaf that never receives a gradient.
  Var constant(Matrix value) { return push(std::move(value), false, nullptr, {}); }

  /// Records a value the engine has no derivative rule for.
  Var opaque(Matrix value, std::initializer_list<Var> parents, std::string name) {
    bool req = false;
    for (const Var& p : parents) req = req || requires_grad(p);
    return push(std::move(value), req,
                [name](Tape&, const Matrix&) {
                  fail(ErrorKind::UnsupportedOp, "no gradient registered for '" + name + "'");
                },
                name);
  }

  Var push(Matrix value, bool requires_grad, Backward backward, std::string name) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward),
                          std::move(name)});
    return Var{this, nodes_.size() - 1};
  }

  const Matrix& value(Var v) const { return nodes_.at(v.index).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v.index).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.index];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf.
  void backward(Var loss) {
    require(value(loss).rows() == 1 && value(loss).cols() == 1, ErrorKind::Shape,
            "backward: loss must be 1x1, got " + shape_str(value(loss)));
    for (auto& n : nodes_) n.grad = Matrix();
    accumulate(loss, Matrix::scalar(1.0));
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad;
    Backward backward;
    std::string name;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }
inline const Matrix& Var::grad() const { return tape->grad(*this); }

namespace detail {

inline Tape& tape_of(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, ErrorKind::InvalidInput,
          "operands belong to different tapes");
  return *a.tape;
}

inline bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (t.requires_grad(v)) return true;
  return false;
}

// Unary element-wise op with derivative expressed through (x, y).
template <class F, class D>
Var unary(Var a, F&& f, D&& dfdx, const char* name) {
  Tape& t = *a.tape;
  Matrix y = map(a.value(), f);
  return t.push(std::move(y), t.requires_grad(a),
                [a, dfdx](Tape& tp, const Matrix& g) {
                  const Matrix& x = tp.value(a);
                  Matrix dx(x.rows(), x.cols());
                  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[i] * dfdx(x[i]);
                  tp.accumulate(a, dx);
                },
                name);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  return t.push(emoforge::matmul(a.value(), b.value()), detail::any_grad(t, {a, b}),
                [a, b](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(a)) tp.accumulate(a, emoforge::matmul(g, transpose(tp.value(b))));
                  if (tp.requires_grad(b)) tp.accumulate(b, emoforge::matmul(transpose(tp.value(a)), g));
                },
                "matmul");
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.push(emoforge::transpose(a.value()), t.requires_grad(a),
                [a](Tape& tp, const Matrix& g) { tp.accumulate(a, emoforge::transpose(g)); },
                "transpose");
}

inline Var add(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  return t.push(emoforge::add(a.value(), b.value()), detail::any_grad(t, {a, b}),
                [a, b](Tape& tp, const Matrix& g) {
                  tp.accumulate(a, g);
                  tp.accumulate(b, g);
                },
                "add");
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  return t.push(emoforge::sub(a.value(), b.value()), detail::any_grad(t, {a, b}),
                [a, b](Tape& tp, const Matrix& g) {
                  tp.accumulate(a, g);
                  if (tp.requires_grad(b)) tp.accumulate(b, emoforge::scale(g, -1.0));
                },
                "sub");
}

inline Var hadamard(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  return t.push(emoforge::hadamard(a.value(), b.value()), detail::any_grad(t, {a, b}),
                [a, b](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(a)) tp.accumulate(a, emoforge::hadamard(g, tp.value(b)));
                  if (tp.requires_grad(b)) tp.accumulate(b, emoforge::hadamard(g, tp.value(a)));
                },
                "hadamard");
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(emoforge::scale(a.value(), s), t.requires_grad(a),
                [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, emoforge::scale(g, s)); },
                "scale");
}

inline Var scale_by(Var a, Var s) {
  Tape& t = detail::tape_of(a, s);
  return t.push(emoforge::scale_by(a.value(), s.value()), detail::any_grad(t, {a, s}),
                [a, s](Tape& tp, const Matrix& g) {
                  const double sv = tp.value(s).item();
                  if (tp.requires_grad(a)) tp.accumulate(a, emoforge::scale(g, sv));
                  if (tp.requires_grad(s)) {
                    const Matrix& av = tp.value(a);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < av.size(); ++i) acc += g[i] * av[i];
                    tp.accumulate(s, Matrix::scalar(acc));
                  }
                },
                "scale_by");
}

inline Var add_row(Var a, Var row) {
  Tape& t = detail::tape_of(a, row);
  return t.push(emoforge::add_row(a.value(), row.value()), detail::any_grad(t, {a, row}),
                [a, row](Tape& tp, const Matrix& g) {
                  tp.accumulate(a, g);
                  if (tp.requires_grad(row)) {
                    Matrix gr(1, g.cols());
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
                    tp.accumulate(row, gr);
                  }
                },
                "add_row");
}

inline Var tanh(Var a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      },
      "tanh");
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a, [](double x) { return emoforge::sigmoid(x); },
      [](double x) {
        const double y = emoforge::sigmoid(x);
        return y * (1.0 - y);
      },
      "sigmoid");
}

inline Var softplus(Var a) {
  return detail::unary(
      a, [](double x) { return emoforge::softplus(x); },
      [](double x) { return emoforge::sigmoid(x); }, "softplus");
}

inline Var exp(Var a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); }, "exp");
}

inline Var log(Var a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; }, "log");
}

inline Var square(Var a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; }, "square");
}

/// Gradient passes where lo < x < hi and is zero on the clamped set.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; }, "clamp");
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  return t.push(emoforge::sum(a.value()), t.requires_grad(a),
                [a](Tape& tp, const Matrix& g) {
                  const Matrix& x = tp.value(a);
                  tp.accumulate(a, Matrix(x.rows(), x.cols(), g.item()));
                },
                "sum");
}

inline Var mean(Var a) {
  Tape& t = *a.tape;
  return t.push(emoforge::mean(a.value()), t.requires_grad(a),
                [a](Tape& tp, const Matrix& g) {
                  const Matrix& x = tp.value(a);
                  tp.accumulate(a, Matrix(x.rows(), x.cols(), g.item() / static_cast<double>(x.size())));
                },
                "mean");
}

inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Matrix y = emoforge::softmax_rows(a.value());
  const std::size_t self = t.size();
  return t.push(std::move(y), t.requires_grad(a),
                [a, self](Tape& tp, const Matrix& g) {
                  const Matrix& s = tp.value(Var{&tp, self});
                  Matrix dx(s.rows(), s.cols());
                  for (std::size_t i = 0; i < s.rows(); ++i) {
                    double inner = 0.0;
                    for (std::size_t j = 0; j < s.cols(); ++j) inner += g(i, j) * s(i, j);
                    for (std::size_t j = 0; j < s.cols(); ++j) dx(i, j) = s(i, j) * (g(i, j) - inner);
                  }
                  tp.accumulate(a, dx);
                },
                "softmax_rows");
}

inline Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  return t.push(emoforge::log_softmax_rows(a.value()), t.requires_grad(a),
                [a](Tape& tp, const Matrix& g) {
                  const Matrix s = emoforge::softmax_rows(tp.value(a));
                  Matrix dx(s.rows(), s.cols());
                  for (std::size_t i = 0; i < s.rows(); ++i) {
                    double gs = 0.0;
                    for (std::size_t j = 0; j < s.cols(); ++j) gs += g(i, j);
                    for (std::size_t j = 0; j < s.cols(); ++j) dx(i, j) = g(i, j) - s(i, j) * gs;
                  }
                  tp.accumulate(a, dx);
                },
                "log_softmax_rows");
}

inline Var l2_normalize_rows(Var a) {
  Tape& t = *a.tape;
  Matrix y = emoforge::l2_normalize_rows(a.value());
  const std::size_t self = t.size();
  return t.push(std::move(y), t.requires_grad(a),
                [a, self](Tape& tp, const Matrix& g) {
                  const Matrix& x = tp.value(a);
                  const Matrix& y = tp.value(Var{&tp, self});
                  Matrix dx(x.rows(), x.cols());
                  for (std::size_t i = 0; i < x.rows(); ++i) {
                    const double n = norm(x.row(i));
                    double yg = 0.0;
                    for (std::size_t j = 0; j < x.cols(); ++j) yg += y(i, j) * g(i, j);
                    for (std::size_t j = 0; j < x.cols(); ++j) dx(i, j) = (g(i, j) - y(i, j) * yg) / n;
                  }
                  tp.accumulate(a, dx);
                },
                "l2_normalize_rows");
}

inline Var gather_rows(Var a, std::vector<std::size_t> idx) {
  Tape& t = *a.tape;
  Matrix y = emoforge::gather_rows(a.value(), idx);
  return t.push(std::move(y), t.requires_grad(a),
                [a, idx = std::move(idx)](Tape& tp, const Matrix& g) {
                  const Matrix& x = tp.value(a);
                  Matrix dx(x.rows(), x.cols());
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j) dx(idx[i], j) += g(i, j);
                  tp.accumulate(a, dx);
                },
                "gather_rows");
}

inline Var pick(Var a, std::vector<std::size_t> idx) {
  Tape& t = *a.tape;
  Matrix y = emoforge::pick(a.value(), idx);
  return t.push(std::move(y), t.requires_grad(a),
                [a, idx = std::move(idx)](Tape& tp, const Matrix& g) {
                  const Matrix& x = tp.value(a);
                  Matrix dx(x.rows(), x.cols());
                  for (std::size_t i = 0; i < idx.size(); ++i) dx(i, idx[i]) = g(i, 0);
                  tp.accumulate(a, dx);
                },
                "pick");
}

inline Var concat_cols(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  return t.push(emoforge::concat_cols(a.value(), b.value()), detail::any_grad(t, {a, b}),
                [a, b](Tape& tp, const Matrix& g) {
                  const std::size_t ca = tp.value(a).cols();
                  if (tp.requires_grad(a)) tp.accumulate(a, emoforge::slice_cols(g, 0, ca));
                  if (tp.requires_grad(b)) tp.accumulate(b, emoforge::slice_cols(g, ca, g.cols()));
                },
                "concat_cols");
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  return t.push(emoforge::slice_cols(a.value(), begin, end), t.requires_grad(a),
                [a, begin](Tape& tp, const Matrix& g) {
                  const Matrix& x = tp.value(a);
                  Matrix dx(x.rows(), x.cols());
                  for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) dx(i, begin + j) = g(i, j);
                  tp.accumulate(a, dx);
                },
                "slice_cols");
}

inline Var repeat_row(Var row, std::size_t n) {
  Tape& t = *row.tape;
  return t.push(emoforge::repeat_row(row.value(), n), t.requires_grad(row),
                [row](Tape& tp, const Matrix& g) {
                  Matrix gr(1, g.cols());
                  for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
                  tp.accumulate(row, gr);
                },
                "repeat_row");
}

/// Element-wise rounding. Piecewise constant, so it is recorded opaque.
inline Var round(Var a) {
  return a.tape->opaque(map(a.value(), [](double x) { return std::round(x); }), {a}, "round");
}

// ---------------------------------------------------------------------------
// Whole-function gradients and the finite-difference checker.

/// Builds a scalar loss on `tape` from leaf Vars holding the parameters.
using LossFn = std::function<Var(Tape&, std::span<const Var>)>;

inline std::size_t flat_size(std::span<const Matrix> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

inline Vector flatten(std::span<const Matrix> params) {
  Vector out;
  out.reserve(flat_size(params));
  for (const auto& p : params) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

/// Writes `flat` back into matrices shaped like `like`.
inline std::vector<Matrix> unflatten(std::span<const double> flat, std::span<const Matrix> like) {
  require(flat.size() == flat_size(like), ErrorKind::Shape, "unflatten: size mismatch");
  std::vector<Matrix> out;
  std::size_t off = 0;
  for (const auto& p : like) {
    out.emplace_back(p.rows(), p.cols(),
                     std::vector<double>(flat.begin() + off, flat.begin() + off + p.size()));
    off += p.size();
  }
  return out;
}

inline double evaluate(const LossFn& loss_fn, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.constant(p));
  return loss_fn(tape, vars).value().item();
}

/// d(loss)/d(param) for every parameter matrix, same shapes as `params`.
inline std::vector<Matrix> gradient(const LossFn& loss_fn, std::span<const Matrix> params,
                                    double* loss_out = nullptr) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.variable(p));
  Var loss = loss_fn(tape, vars);
  tape.backward(loss);
  if (loss_out) *loss_out = loss.value().item();
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = vars[i].grad();
    grads.push_back(g.empty() ? Matrix(params[i].rows(), params[i].cols()) : g);
  }
  return grads;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param_index = 0;  // flat index across all params
};

/// Central differences on every parameter entry; the relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline GradCheckReport finite_diff_check(const LossFn& loss_fn, std::vector<Matrix> params,
                                         double epsilon) {
  require(epsilon > 0.0, ErrorKind::InvalidInput, "finite_diff_check: epsilon must be > 0");
  const auto analytic = flatten(gradient(loss_fn, params));
  GradCheckReport report;
  std::size_t flat = 0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.size(); ++i, ++flat) {
      const double saved = p[i];
      p[i] = saved + epsilon;
      const double up = evaluate(loss_fn, params);
      p[i] = saved - epsilon;
      const double down = evaluate(loss_fn, params);
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double denom = std::max({std::abs(analytic[flat]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[flat] - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param_index = flat;
      }
    }
  }
  return report;
}

}  // namespace emoforge::ad
