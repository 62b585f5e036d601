#pragma once

#include "cadseq/numcore/array.hpp"

namespace cadseq::ae {

template <typename T>
struct DiscreteSsm {
  nc::Array<T> a_bar;  // [T x E x N]
  nc::Array<T> b_bar;  // [T x E x N]
};

// A_bar = exp(delta * A), B_bar = delta * B per step, channel and state.
// delta [T x E] (positive), A [E x N], B [T x N].
template <typename T>
DiscreteSsm<T> discretize_ssm(const nc::Array<T>& delta, const nc::Array<T>& A, const nc::Array<T>& B);

// h_t = A_bar_t * h_{t-1} + B_bar_t * x_t, y_t = C_t . h_t, with h_0 = 0. x [T x E], C [T x N].
template <typename T>
nc::Array<T> ssm_scan(const nc::Array<T>& x, const DiscreteSsm<T>& d, const nc::Array<T>& C);

}  // namespace cadseq::ae
