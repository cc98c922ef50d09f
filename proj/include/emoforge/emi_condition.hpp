#pragma once

// Emotion conditioning mechanisms for the acoustic model.
//
//   coupling   affine coupling flow step whose conditioner (a gated tanh/sigmoid
//              unit, "EWN") sees the first channel half plus the projected
//              condition; invertible, with a tractable log-determinant.
//   attention  single-head cross-attention from frames to condition tokens,
//              added back residually.
//   concat     frame-wise concatenation of the emotion and speaker vectors.
//
// Each one is written once, templated on Matrix / ad::Var.

#include <cmath>
#include <span>
#include <string>

#include "emoforge/autodiff.hpp"
#include "emoforge/model.hpp"
#include "emoforge/rng.hpp"

namespace emoforge {

inline constexpr double kLogScaleBound = 5.0;

// ---------------------------------------------------------------------------
// Affine coupling.

/// Conditioner weights for one coupling step over D channels (D even) with a
/// G-dim condition vector.
template <class T>
struct CouplingWeights {
  T cond_proj;          // G x D/2
  T w_filter, b_filter;  // D/2 x D/2, 1 x D/2
  T w_gate, b_gate;      // D/2 x D/2, 1 x D/2
  T w_out, b_out;        // D/2 x D, 1 x D ; columns [0, D/2) -> log_s, [D/2, D) -> shift

  template <class F> void visit(F&& f) { visit_members(*this, f); }
  template <class F> void visit(F&& f) const { visit_members(*this, f); }

 private:
  template <class S, class F>
  static void visit_members(S& s, F& f) {
    f("cond_proj", s.cond_proj);
    f("w_filter", s.w_filter);
    f("b_filter", s.b_filter);
    f("w_gate", s.w_gate);
    f("b_gate", s.b_gate);
    f("w_out", s.w_out);
    f("b_out", s.b_out);
  }
};

using CouplingParams = CouplingWeights<Matrix>;

inline CouplingParams coupling_zeros(std::size_t dim, std::size_t cond_dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorKind::Shape,
          "coupling dim must be even, got " + std::to_string(dim));
  const std::size_t h = dim / 2;
  return {Matrix(cond_dim, h), Matrix(h, h), Matrix(1, h), Matrix(h, h), Matrix(1, h), Matrix(h, dim),
          Matrix(1, dim)};
}

inline CouplingParams coupling_random(std::size_t dim, std::size_t cond_dim, Rng& rng, double stddev) {
  CouplingParams p = coupling_zeros(dim, cond_dim);
  p.visit([&](const char*, Matrix& m) { m = rng.normal_matrix(m.rows(), m.cols(), stddev); });
  return p;
}

template <class T>
struct EwnOutputT {
  T log_scale;
  T shift;
};
using EwnOutput = EwnOutputT<Matrix>;

namespace cond_detail {

template <class T>
EwnOutputT<T> ewn(const T& x, const CouplingWeights<T>& w) {
  const T z = hadamard(tanh(add_row(matmul(x, w.w_filter), w.b_filter)),
                       sigmoid(add_row(matmul(x, w.w_gate), w.b_gate)));
  const T out = add_row(matmul(z, w.w_out), w.b_out);
  const std::size_t half = out.cols() / 2;
  return {clamp(slice_cols(out, 0, half), -kLogScaleBound, kLogScaleBound),
          slice_cols(out, half, out.cols())};
}

template <class T>
EwnOutputT<T> conditioner(const T& h0, const T& cond_row, const CouplingWeights<T>& w) {
  return ewn(add_row(h0, matmul(cond_row, w.cond_proj)), w);
}

/// Returns (h', sum of log_s).
template <class T>
std::pair<T, T> coupling_forward(const T& h, const T& cond_row, const CouplingWeights<T>& w) {
  const std::size_t half = h.cols() / 2;
  const T h0 = slice_cols(h, 0, half);
  const T h1 = slice_cols(h, half, h.cols());
  const auto [log_s, b] = conditioner(h0, cond_row, w);
  const T h1_out = add(hadamard(exp(log_s), h1), b);
  return {concat_cols(h0, h1_out), sum(log_s)};
}

}  // namespace cond_detail

inline void check_coupling_shapes(const Matrix& h, std::span<const double> cond, const CouplingParams& p) {
  require(h.cols() >= 2 && h.cols() % 2 == 0, ErrorKind::Shape,
          "coupling: channel count must be even, got " + std::to_string(h.cols()));
  require(h.rows() >= 1, ErrorKind::Shape, "coupling: need at least one frame");
  require(p.w_out.cols() == h.cols() && p.w_filter.rows() == h.cols() / 2, ErrorKind::Shape,
          "coupling: params built for " + std::to_string(p.w_out.cols()) + " channels, input has " +
              std::to_string(h.cols()));
  require(cond.size() == p.cond_proj.rows(), ErrorKind::Shape,
          "coupling: condition dim " + std::to_string(cond.size()) + " != " +
              std::to_string(p.cond_proj.rows()));
}

/// The conditioner: gated unit, then a linear head split into (log_s, shift).
inline EwnOutput ewn(const Matrix& x, const CouplingParams& p) {
  require(x.cols() == p.w_filter.rows(), ErrorKind::Shape,
          "ewn: input has " + std::to_string(x.cols()) + " channels, expected " +
              std::to_string(p.w_filter.rows()));
  return cond_detail::ewn(x, p);
}

struct CouplingResult {
  Matrix h;
  double log_det = 0.0;
};

inline CouplingResult coupling_forward(const Matrix& h, std::span<const double> cond, const CouplingParams& p) {
  check_coupling_shapes(h, cond, p);
  auto [out, log_det] = cond_detail::coupling_forward(h, Matrix::row_vector(cond), p);
  return {std::move(out), log_det.item()};
}

inline Matrix coupling_inverse(const Matrix& h_out, std::span<const double> cond, const CouplingParams& p) {
  check_coupling_shapes(h_out, cond, p);
  const std::size_t half = h_out.cols() / 2;
  const Matrix h0 = slice_cols(h_out, 0, half);
  const Matrix h1_out = slice_cols(h_out, half, h_out.cols());
  const auto [log_s, b] = cond_detail::conditioner(h0, Matrix::row_vector(cond), p);
  Matrix h1(h1_out.rows(), half);
  for (std::size_t i = 0; i < h1.size(); ++i) h1[i] = (h1_out[i] - b[i]) * std::exp(-log_s[i]);
  return concat_cols(h0, h1);
}

// ---------------------------------------------------------------------------
// Conditional cross-attention.

template <class T>
struct AttentionWeights {
  T cond_proj;  // (E + S) x d
  T w_q, w_k, w_v;  // d x d

  template <class F> void visit(F&& f) { visit_members(*this, f); }
  template <class F> void visit(F&& f) const { visit_members(*this, f); }

 private:
  template <class S, class F>
  static void visit_members(S& s, F& f) {
    f("cond_proj", s.cond_proj);
    f("w_q", s.w_q);
    f("w_k", s.w_k);
    f("w_v", s.w_v);
  }
};

using AttentionParams = AttentionWeights<Matrix>;

inline AttentionParams attention_zeros(std::size_t model_dim, std::size_t cond_in_dim) {
  return {Matrix(cond_in_dim, model_dim), Matrix(model_dim, model_dim), Matrix(model_dim, model_dim),
          Matrix(model_dim, model_dim)};
}

inline AttentionParams attention_random(std::size_t model_dim, std::size_t cond_in_dim, Rng& rng,
                                        double stddev) {
  AttentionParams p = attention_zeros(model_dim, cond_in_dim);
  p.visit([&](const char*, Matrix& m) { m = rng.normal_matrix(m.rows(), m.cols(), stddev); });
  return p;
}

namespace cond_detail {

template <class T>
T build_condition(const T& cond_in_row, const AttentionWeights<T>& w) {
  return matmul(cond_in_row, w.cond_proj);
}

/// softmax(Q K^T / sqrt(d)) V + h with Q = h W_q^T, K = C W_k^T, V = C W_v^T,
/// one condition token per row of `tokens`.
template <class T>
T cross_attention(const T& h, const T& tokens, const AttentionWeights<T>& w) {
  const double d = static_cast<double>(h.cols());
  const T q = matmul(h, transpose(w.w_q));
  const T k = matmul(tokens, transpose(w.w_k));
  const T v = matmul(tokens, transpose(w.w_v));
  const T attn = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(d)));
  return add(matmul(attn, v), h);
}

}  // namespace cond_detail

/// c = concat(u_emo, u_spk) . proj
inline Vector build_condition(std::span<const double> u_emo, std::span<const double> u_spk,
                              const AttentionParams& p) {
  require(u_emo.size() + u_spk.size() == p.cond_proj.rows(), ErrorKind::Shape,
          "build_condition: expected " + std::to_string(p.cond_proj.rows()) + " condition dims, got " +
              std::to_string(u_emo.size() + u_spk.size()));
  Vector in(u_emo.begin(), u_emo.end());
  in.insert(in.end(), u_spk.begin(), u_spk.end());
  return cond_detail::build_condition(Matrix::row_vector(in), p).storage();
}

/// Cross-attention against several condition tokens (rows of `tokens`).
inline Matrix cond_cross_attention(const Matrix& h, const Matrix& tokens, const AttentionParams& p) {
  require(h.rows() >= 1, ErrorKind::Shape, "cond_cross_attention: empty input");
  require(h.cols() == p.w_q.rows() && tokens.cols() == h.cols() && tokens.rows() >= 1, ErrorKind::Shape,
          "cond_cross_attention: h " + shape_str(h) + ", tokens " + shape_str(tokens) + ", model dim " +
              std::to_string(p.w_q.rows()));
  return cond_detail::cross_attention(h, tokens, p);
}

inline Matrix cond_cross_attention(const Matrix& h, std::span<const double> c, const AttentionParams& p) {
  return cond_cross_attention(h, Matrix::row_vector(c), p);
}

// ---------------------------------------------------------------------------
// Concat conditioning.

namespace cond_detail {

template <class T>
T concat_condition(const T& h_lg, const T& cond_row) {
  return concat_cols(h_lg, repeat_row(cond_row, h_lg.rows()));
}

}  // namespace cond_detail

/// Every frame becomes [h_lg[t] | u_emo | u_spk].
inline Matrix concat_condition(const Matrix& h_lg, std::span<const double> u_emo,
                               std::span<const double> u_spk) {
  Vector cond(u_emo.begin(), u_emo.end());
  cond.insert(cond.end(), u_spk.begin(), u_spk.end());
  return cond_detail::concat_condition(h_lg, Matrix::row_vector(cond));
}

// ---------------------------------------------------------------------------
// Scalar probes for gradient checks. Inputs are ordered (h, condition row,
// weights in visit order).

/// log_det of one coupling step.
inline ad::LossFn coupling_log_det_fn() {
  return [](ad::Tape&, std::span<const ad::Var> v) {
    require(v.size() >= 2, ErrorKind::Shape, "coupling_log_det_fn: expected h, cond and weights");
    const auto w = bind_vars<CouplingWeights>(v.subspan(2));
    return cond_detail::coupling_forward(v[0], v[1], w).second;
  };
}

/// sum(probe * cross_attention(h, build_condition(cond))), probe shaped like h.
inline ad::LossFn cross_attention_probe_fn(Matrix probe) {
  return [probe = std::move(probe)](ad::Tape& tape, std::span<const ad::Var> v) {
    require(v.size() >= 2, ErrorKind::Shape, "cross_attention_probe_fn: expected h, cond and weights");
    const auto w = bind_vars<AttentionWeights>(v.subspan(2));
    const ad::Var out = cond_detail::cross_attention(v[0], cond_detail::build_condition(v[1], w), w);
    return sum(hadamard(out, tape.constant(probe)));
  };
}

}  // namespace emoforge
