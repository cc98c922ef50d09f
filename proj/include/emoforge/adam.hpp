#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "emoforge/matrix.hpp"

namespace emoforge {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update, in place. The state is sized lazily on
/// first use and must afterwards match `params` in count and shape.
inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
                      AdamState& state, const AdamConfig& cfg) {
  require(params.size() == grads.size(), ErrorKind::Shape, "adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  require(state.m.size() == params.size(), ErrorKind::Shape, "adam_step: state/params count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*params[k], grads[k], "adam_step");
    require_same_shape(*params[k], state.m[k], "adam_step state");
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    const Matrix& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

inline void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state,
                      const AdamConfig& cfg) {
  std::vector<Matrix*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  adam_step(ptrs, grads, state, cfg);
}

}  // namespace emoforge
