#pragma once

#include <cstdint>
#include <memory>
#include <type_traits>
#include <vector>

#include "cadseq/numcore/tape.hpp"

namespace cadseq::nc {

// Linear algebra and elementwise
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
// a [r x n] plus a row [n] broadcast over rows.
template <typename T> Var<T> add_row(Var<T> a, Var<T> row);
template <typename T> Var<T> mul_row(Var<T> a, Var<T> row);
// c * a + d
template <typename T> Var<T> affine(Var<T> a, T c, T d);
template <typename T> Var<T> scale(Var<T> a, T c) { return affine(a, c, T(0)); }
// a times a one-element variable.
template <typename T> Var<T> mul_scalar(Var<T> a, Var<T> s);
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b) { return add_row(matmul(x, w), b); }

template <typename T> Var<T> silu(Var<T> a);
template <typename T> Var<T> sigmoid(Var<T> a);
template <typename T> Var<T> softplus(Var<T> a);
template <typename T> Var<T> exp(Var<T> a);
template <typename T> Var<T> layer_norm(Var<T> a, T eps = T(1e-5));
template <typename T> Var<T> softmax_rows(Var<T> a);
template <typename T> Var<T> dropout(Var<T> a, double rate);

// Shape plumbing
template <typename T> Var<T> reshape(Var<T> a, Shape shape);
template <typename T> Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
// out[i] = table[idx[i]]
template <typename T> Var<T> gather_rows(Var<T> table, const std::vector<std::int32_t>& idx);

// Multi-head scaled dot-product attention. q [T x d], k and v [S x d].
// mask, when given, is an additive [T x S] array of 0 or -inf.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads,
                 std::type_identity_t<std::shared_ptr<const Array<T>>> mask = nullptr);

// Depthwise causal convolution; x [T x C], w [K x C], b [C].
template <typename T> Var<T> causal_conv1d(Var<T> x, Var<T> w, Var<T> b);

// Diagonal selective state-space scan.
// x, delta [T x E]; A [E x N]; B, C [T x N]. Returns y [T x E].
template <typename T> Var<T> selective_scan(Var<T> x, Var<T> delta, Var<T> A, Var<T> B, Var<T> C);

// Grouped linear read-out. For pair i, out[i] = x[rows[i]] * W_g + b_g with g = groups[i],
// where W [d x G*V] holds the blocks side by side and b is [G*V].
template <typename T>
Var<T> select_linear(Var<T> x, Var<T> w, Var<T> b, const std::vector<std::int32_t>& rows,
                     const std::vector<std::int32_t>& groups, std::size_t width);

// Reductions and losses (all return one-element arrays)
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
// Sum over rows with target >= 0 of weight * (-log softmax(logits)[target]).
template <typename T> Var<T> cross_entropy(Var<T> logits, const std::vector<std::int32_t>& targets, T weight = T(1));
template <typename T> Var<T> mse(Var<T> a, Var<T> b);

// Plain array helpers
template <typename T> Array<T> softmax_rows(const Array<T>& a);

}  // namespace cadseq::nc

namespace cadseq::nc {

// Single-head attention with an additive mask.
template <typename T>
Var<T> masked_attention(Var<T> q, Var<T> k, Var<T> v, std::type_identity_t<std::shared_ptr<const Array<T>>> mask) {
  return attention(q, k, v, 1, std::move(mask));
}

// LayerNorm(x) * (1 + xi) + psi with xi and psi of width d.
template <typename T>
Var<T> layer_norm_modulated(Var<T> x, Var<T> xi, Var<T> psi) {
  return add_row(mul_row(layer_norm(x), affine(xi, T(1), T(1))), psi);
}

}  // namespace cadseq::nc
