#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace emoforge;
using Catch::Approx;
using testing::error_kind;

namespace {

CouplingParams hand_coupling() {
  CouplingParams p = coupling_zeros(2, 1);
  p.b_out = Matrix{{std::numbers::ln2, 1.0}};
  return p;
}

/// Softmax-weighted sum over condition tokens, written with plain loops.
Matrix attention_oracle(const Matrix& h, const Matrix& tokens, const AttentionParams& p) {
  const std::size_t t = h.rows(), d = h.cols(), n = tokens.rows();
  auto mv = [d](const Matrix& w, std::span<const double> x) {
    Vector y(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) y[i] += w(i, j) * x[j];
    return y;
  };
  Matrix out(t, d);
  for (std::size_t r = 0; r < t; ++r) {
    const Vector q = mv(p.w_q, h.row(r));
    std::vector<double> score(n);
    std::vector<Vector> vals;
    double mx = -INFINITY;
    for (std::size_t k = 0; k < n; ++k) {
      const Vector key = mv(p.w_k, tokens.row(k));
      vals.push_back(mv(p.w_v, tokens.row(k)));
      score[k] = 0.0;
      for (std::size_t j = 0; j < d; ++j) score[k] += q[j] * key[j];
      score[k] /= std::sqrt(static_cast<double>(d));
      mx = std::max(mx, score[k]);
    }
    double z = 0.0;
    for (double& s : score) z += (s = std::exp(s - mx));
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += score[k] / z * vals[k][j];
      out(r, j) = acc + h(r, j);
    }
  }
  return out;
}

std::vector<Matrix> with_inputs(const Matrix& h, const Matrix& cond, const auto& weights) {
  std::vector<Matrix> ps{h, cond};
  weights.visit([&](const char*, const Matrix& m) { ps.push_back(m); });
  return ps;
}

}  // namespace

TEST_CASE("zero coupling is the identity flow") {
  Rng rng(1);
  const Matrix h = testing::random_matrix(5, 6, rng);
  const Vector u = testing::random_vector(4, rng);
  const CouplingParams p = coupling_zeros(6, 4);
  const auto r = coupling_forward(h, u, p);
  CHECK(r.h == h);
  CHECK(r.log_det == 0.0);
  CHECK(coupling_inverse(h, u, p) == h);
}

TEST_CASE("coupling hand case: log_s = ln 2, b = 1") {
  const CouplingParams p = hand_coupling();
  const Vector u{0.25};
  const auto r = coupling_forward(Matrix{{3, 5}}, u, p);
  CHECK(r.h(0, 0) == 3.0);
  CHECK(r.h(0, 1) == Approx(11.0).epsilon(1e-15));
  CHECK(r.log_det == Approx(std::numbers::ln2).epsilon(1e-15));
  const Matrix back = coupling_inverse(Matrix{{3, 11}}, u, p);
  CHECK(back(0, 0) == 3.0);
  CHECK(back(0, 1) == Approx(5.0).epsilon(1e-15));
}

TEST_CASE("coupling shape errors") {
  CHECK(error_kind([] { coupling_zeros(3, 2); }) == ErrorKind::Shape);
  const CouplingParams p = coupling_zeros(4, 2);
  CHECK(error_kind([&] { coupling_forward(Matrix(2, 3), Vector{0, 0}, p); }) == ErrorKind::Shape);
  CHECK(error_kind([&] { coupling_forward(Matrix(2, 6), Vector{0, 0}, p); }) == ErrorKind::Shape);
  CHECK(error_kind([&] { coupling_forward(Matrix(2, 4), Vector{0, 0, 0}, p); }) == ErrorKind::Shape);
  CHECK(error_kind([&] { coupling_inverse(Matrix(2, 4), Vector{0}, p); }) == ErrorKind::Shape);
  CHECK(error_kind([&] { ewn(Matrix(2, 3), p); }) == ErrorKind::Shape);
}

TEST_CASE("coupling invertibility and conditioning-half invariance") {
  Rng rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 2 * (1 + rng.index(6)), t = 1 + rng.index(6), g = 1 + rng.index(5);
    const CouplingParams p = coupling_random(d, g, rng, 0.8);
    const Matrix h = testing::random_matrix(t, d, rng, -3, 3);
    const Vector u = testing::random_vector(g, rng);
    const auto fwd = coupling_forward(h, u, p);
    worst = std::max(worst, max_abs_diff(coupling_inverse(fwd.h, u, p), h));
    worst = std::max(worst, max_abs_diff(coupling_forward(coupling_inverse(h, u, p), u, p).h, h));
    CHECK(slice_cols(fwd.h, 0, d / 2) == slice_cols(h, 0, d / 2));
    CHECK(slice_cols(coupling_inverse(h, u, p), 0, d / 2) == slice_cols(h, 0, d / 2));

    // log_det is the sum of the emitted log_s
    const Matrix x = add_row(slice_cols(h, 0, d / 2), matmul(Matrix::row_vector(u), p.cond_proj));
    const EwnOutput e = ewn(x, p);
    double s = 0.0;
    for (double v : e.log_scale.data()) s += v;
    CHECK(std::abs(fwd.log_det - s) <= 1e-12);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("changing u_emo changes h1' but never h0") {
  Rng rng(4);
  const CouplingParams p = coupling_random(8, 6, rng, 0.5);
  const Matrix h = testing::random_matrix(4, 8, rng);
  const auto a = coupling_forward(h, testing::random_vector(6, rng), p);
  const auto b = coupling_forward(h, testing::random_vector(6, rng), p);
  CHECK(slice_cols(a.h, 0, 4) == slice_cols(b.h, 0, 4));
  CHECK(max_abs_diff(slice_cols(a.h, 4, 8), slice_cols(b.h, 4, 8)) > 1e-6);
}

TEST_CASE("ewn examples") {
  const CouplingParams zero = coupling_zeros(4, 3);
  const EwnOutput e = ewn(Matrix{{1, -2}, {0.5, 3}}, zero);
  CHECK(e.log_scale == Matrix(2, 2));
  CHECK(e.shift == Matrix(2, 2));

  CouplingParams big = coupling_zeros(4, 3);
  big.b_out = Matrix{{40, -40, 7, 7}};
  const EwnOutput c = ewn(Matrix{{1, 1}}, big);
  CHECK(c.log_scale == Matrix{{5, -5}});
  CHECK(c.shift == Matrix{{7, 7}});
}

TEST_CASE("gradients through the coupling log_det pass finite_diff_check") {
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const CouplingParams p = coupling_random(6, 4, rng, 0.4);
    const Matrix h = testing::random_matrix(3, 6, rng);
    const Matrix u = testing::random_matrix(1, 4, rng);
    const auto r = ad::finite_diff_check(coupling_log_det_fn(), with_inputs(h, u, p), 1e-5);
    INFO("trial " << trial << " worst " << r.worst_param_index);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(ad::evaluate(coupling_log_det_fn(), with_inputs(h, u, p)) ==
          Approx(coupling_forward(h, u.storage(), p).log_det).epsilon(1e-14));
  }
}

TEST_CASE("build_condition examples") {
  const Vector e{0.6, 0.8}, s{2.0};
  CHECK(build_condition(e, s, attention_zeros(3, 3)) == Vector{0, 0, 0});
  AttentionParams id = attention_zeros(3, 3);
  id.cond_proj = Matrix::identity(3);
  CHECK(build_condition(e, s, id) == Vector{0.6, 0.8, 2.0});

  AttentionParams hand = attention_zeros(2, 2);
  hand.cond_proj = Matrix{{1, 2}, {3, 4}};
  // [1, -1] . [[1,2],[3,4]] = [-2, -2]
  CHECK(build_condition(Vector{1}, Vector{-1}, hand) == Vector{-2, -2});
  CHECK(error_kind([&] { build_condition(e, Vector{}, id); }) == ErrorKind::Shape);
}

TEST_CASE("cross-attention examples") {
  Rng rng(8);
  const Matrix h = testing::random_matrix(5, 4, rng);
  AttentionParams p = attention_random(4, 6, rng, 0.7);
  const Vector c = testing::random_vector(4, rng);

  AttentionParams no_v = p;
  no_v.w_v = Matrix(4, 4);
  CHECK(cond_cross_attention(h, c, no_v) == h);

  // one token: softmax weight is exactly 1, so h_emo = h + W_v c broadcast
  const Matrix out = cond_cross_attention(h, c, p);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < 4; ++k) v += c[k] * p.w_v(j, k);
      CHECK(out(i, j) == v + h(i, j));
    }

  CHECK(error_kind([&] { cond_cross_attention(h, Vector{1, 2}, p); }) == ErrorKind::Shape);
  CHECK(error_kind([&] { cond_cross_attention(Matrix(0, 4), c, p); }) == ErrorKind::Shape);
}

TEST_CASE("multi-token cross-attention matches a brute-force oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.index(5);
    const AttentionParams p = attention_random(d, d, rng, 1.0);
    const Matrix h = testing::random_matrix(1 + rng.index(5), d, rng);
    const Matrix tokens = testing::random_matrix(2, d, rng);
    CHECK(max_abs_diff(cond_cross_attention(h, tokens, p), attention_oracle(h, tokens, p)) <= 1e-12);
  }
}

TEST_CASE("gradients through cross-attention pass finite_diff_check") {
  Rng rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    const AttentionParams p = attention_random(4, 5, rng, 0.8);
    const Matrix h = testing::random_matrix(3, 4, rng);
    const Matrix cond = testing::random_matrix(1, 5, rng);
    const auto r = ad::finite_diff_check(cross_attention_probe_fn(testing::random_matrix(3, 4, rng)),
                                         with_inputs(h, cond, p), 1e-5);
    INFO("trial " << trial << " worst " << r.worst_param_index);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("multi-token attention gradients pass finite_diff_check") {
  Rng rng(78);
  const AttentionParams p = attention_random(3, 3, rng, 1.0);
  const Matrix probe = testing::random_matrix(2, 3, rng);
  const ad::LossFn f = [&](ad::Tape& t, std::span<const ad::Var> v) {
    const auto w = bind_vars<AttentionWeights>(v.subspan(2));
    return ad::sum(ad::hadamard(cond_detail::cross_attention(v[0], v[1], w), t.constant(probe)));
  };
  const auto r = ad::finite_diff_check(f, with_inputs(testing::random_matrix(2, 3, rng), testing::random_matrix(2, 3, rng), p), 1e-5);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("concat_condition examples") {
  CHECK(concat_condition(Matrix{{2}}, Vector{3}, Vector{4}) == Matrix{{2, 3, 4}});
  const Matrix h{{1, 2}, {3, 4}, {5, 6}};
  const Matrix out = concat_condition(h, Vector{7, 8, 9}, Vector{});
  CHECK(out.cols() == 5);
  CHECK(slice_cols(out, 0, 2) == h);
  for (std::size_t i = 0; i < 3; ++i) CHECK(slice_cols(out, 2, 5).row(i)[0] == 7);
}

TEST_CASE("conditioning mechanisms are deterministic") {
  Rng rng(6);
  const Matrix h = testing::random_matrix(4, 6, rng);
  const Vector u = testing::random_vector(5, rng), s = testing::random_vector(1, rng);
  const CouplingParams cp = coupling_random(6, 6, rng, 0.5);
  const AttentionParams ap = attention_random(6, 6, rng, 0.5);
  Vector cond = u;
  cond.push_back(s[0]);
  CHECK(coupling_forward(h, cond, cp).h == coupling_forward(h, cond, cp).h);
  CHECK(cond_cross_attention(h, build_condition(u, s, ap), ap) == cond_cross_attention(h, build_condition(u, s, ap), ap));
  CHECK(concat_condition(h, u, s) == concat_condition(h, u, s));
}
