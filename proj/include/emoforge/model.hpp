#pragma once

// Plumbing shared by the trainable modules. A weights struct is a class
// template W<T> over the value type (Matrix for inference, ad::Var for
// training) exposing const and non-const visit(f), which call f(name, member)
// for every parameter in a fixed order.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emoforge/adam.hpp"
#include "emoforge/autodiff.hpp"

namespace emoforge {

template <class Weights>
std::vector<Matrix*> param_pointers(Weights& w) {
  std::vector<Matrix*> out;
  w.visit([&](const char*, Matrix& m) { out.push_back(&m); });
  return out;
}

template <class Weights>
std::vector<Matrix> param_list(const Weights& w) {
  std::vector<Matrix> out;
  w.visit([&](const char*, const Matrix& m) { out.push_back(m); });
  return out;
}

template <class Weights>
void assign_params(Weights& w, std::span<const Matrix> values) {
  std::size_t i = 0;
  w.visit([&](const char* name, Matrix& m) {
    require(i < values.size(), ErrorKind::Shape, "assign_params: too few values");
    require_same_shape(m, values[i], name);
    m = values[i++];
  });
  require(i == values.size(), ErrorKind::Shape, "assign_params: too many values");
}

/// W<Var> whose members are taken, in visit order, from `vars`.
template <template <class> class W>
W<ad::Var> bind_vars(std::span<const ad::Var> vars) {
  W<ad::Var> out;
  std::size_t i = 0;
  out.visit([&](const char*, ad::Var& v) {
    require(i < vars.size(), ErrorKind::Shape, "bind_vars: too few vars");
    v = vars[i++];
  });
  require(i == vars.size(), ErrorKind::Shape, "bind_vars: too many vars");
  return out;
}

/// Evaluates `build_loss` on a fresh tape with every weight as a leaf,
/// applies one Adam step and returns the loss value before the update.
template <template <class> class W>
double optimize_step(W<Matrix>& weights,
                     const std::function<ad::Var(ad::Tape&, const W<ad::Var>&)>& build_loss,
                     AdamState& state, const AdamConfig& cfg) {
  ad::Tape tape;
  const auto ptrs = param_pointers(weights);
  std::vector<ad::Var> leaves;
  leaves.reserve(ptrs.size());
  for (Matrix* m : ptrs) leaves.push_back(tape.variable(*m));
  const W<ad::Var> vars = bind_vars<W>(leaves);
  const ad::Var loss = build_loss(tape, vars);
  tape.backward(loss);
  std::vector<Matrix> grads;
  grads.reserve(ptrs.size());
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const Matrix& g = leaves[i].grad();
    grads.push_back(g.empty() ? Matrix(ptrs[i]->rows(), ptrs[i]->cols()) : g);
  }
  adam_step(ptrs, grads, state, cfg);
  return loss.value().item();
}

}  // namespace emoforge
