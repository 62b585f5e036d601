#include "cadseq/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cadseq::nc {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

template <typename T>
using StridedMap = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.cols() == B.rows(), "matmul " + shape_string(A.shape()) + " by " + shape_string(B.shape()));
  Array<T> out({A.rows(), B.cols()});
  out.mat().noalias() = A.mat() * B.mat();
  return a.tape->push(std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    if (t.needs_grad(a.id)) t.grad(a.id).mat().noalias() += G * b.value().mat().transpose();
    if (t.needs_grad(b.id)) t.grad(b.id).mat().noalias() += a.value().mat().transpose() * G;
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.size() == B.size() && A.cols() == B.cols(), "add " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
  Array<T> out(A.shape());
  out.mat() = A.mat() + B.mat();
  return a.tape->push(std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    if (t.needs_grad(a.id)) t.grad(a.id).mat() += G;
    if (t.needs_grad(b.id)) t.grad(b.id).mat() += G;
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.size() == B.size() && A.cols() == B.cols(), "sub " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
  Array<T> out(A.shape());
  out.mat() = A.mat() - B.mat();
  return a.tape->push(std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    if (t.needs_grad(a.id)) t.grad(a.id).mat() += G;
    if (t.needs_grad(b.id)) t.grad(b.id).mat() -= G;
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.size() == B.size() && A.cols() == B.cols(), "mul " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
  Array<T> out(A.shape());
  out.mat() = A.mat().cwiseProduct(B.mat());
  return a.tape->push(std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    if (t.needs_grad(a.id)) t.grad(a.id).mat() += G.cwiseProduct(b.value().mat());
    if (t.needs_grad(b.id)) t.grad(b.id).mat() += G.cwiseProduct(a.value().mat());
  });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  const auto& A = a.value();
  const auto& R = row.value();
  require(R.size() == A.cols(), "add_row " + shape_string(A.shape()) + " and " + shape_string(R.shape()));
  Array<T> out(A.shape());
  const Eigen::Index n = static_cast<Eigen::Index>(A.cols());
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> r(R.data(), n);
  out.mat() = A.mat().rowwise() + r;
  return a.tape->push(std::move(out), {a.id, row.id}, [a, row](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    if (t.needs_grad(a.id)) t.grad(a.id).mat() += G;
    if (t.needs_grad(row.id)) {
      auto& gr = t.grad(row.id);
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gr.data(), static_cast<Eigen::Index>(gr.size())) +=
          G.colwise().sum();
    }
  });
}

template <typename T>
Var<T> mul_row(Var<T> a, Var<T> row) {
  const auto& A = a.value();
  const auto& R = row.value();
  require(R.size() == A.cols(), "mul_row " + shape_string(A.shape()) + " and " + shape_string(R.shape()));
  Array<T> out(A.shape());
  const Eigen::Index n = static_cast<Eigen::Index>(A.cols());
  const Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> r(R.data(), n);
  out.mat().array() = A.mat().array().rowwise() * r;
  return a.tape->push(std::move(out), {a.id, row.id}, [a, row, n](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    const Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> r(row.value().data(), n);
    if (t.needs_grad(a.id)) t.grad(a.id).mat().array() += G.array().rowwise() * r;
    if (t.needs_grad(row.id)) {
      auto& gr = t.grad(row.id);
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gr.data(), n) +=
          G.cwiseProduct(a.value().mat()).colwise().sum();
    }
  });
}

template <typename T>
Var<T> affine(Var<T> a, T c, T d) {
  const auto& A = a.value();
  Array<T> out(A.shape());
  out.mat().array() = A.mat().array() * c + d;
  return a.tape->push(std::move(out), {a.id}, [a, c](Tape<T>& t, std::uint32_t self) {
    t.grad(a.id).mat() += c * t.grad(self).mat();
  });
}

template <typename T>
Var<T> mul_scalar(Var<T> a, Var<T> s) {
  require(s.size() == 1, "mul_scalar needs a one-element factor");
  const auto& A = a.value();
  const T k = s.value()[0];
  Array<T> out(A.shape());
  out.mat() = A.mat() * k;
  return a.tape->push(std::move(out), {a.id, s.id}, [a, s](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    if (t.needs_grad(a.id)) t.grad(a.id).mat() += G * s.value()[0];
    if (t.needs_grad(s.id)) t.grad(s.id)[0] += G.cwiseProduct(a.value().mat()).sum();
  });
}

template <typename T>
Var<T> silu(Var<T> a) {
  const auto& A = a.value();
  auto sig = std::make_shared<Array<T>>(A.shape());
  sig->mat().array() = (T(1) + (-A.mat().array()).exp()).inverse();
  Array<T> out(A.shape());
  out.mat() = A.mat().cwiseProduct(sig->mat());
  return a.tape->push(std::move(out), {a.id}, [a, sig](Tape<T>& t, std::uint32_t self) {
    const auto s = sig->mat().array();
    t.grad(a.id).mat().array() += t.grad(self).mat().array() * s * (T(1) + a.value().mat().array() * (T(1) - s));
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  const auto& A = a.value();
  Array<T> out(A.shape());
  out.mat().array() = (T(1) + (-A.mat().array()).exp()).inverse();
  return a.tape->push(std::move(out), {a.id}, [a](Tape<T>& t, std::uint32_t self) {
    const auto y = t.value(self).mat().array();
    t.grad(a.id).mat().array() += t.grad(self).mat().array() * y * (T(1) - y);
  });
}

template <typename T>
Var<T> softplus(Var<T> a) {
  const auto& A = a.value();
  Array<T> out(A.shape());
  const auto x = A.mat().array();
  out.mat().array() = x.cwiseMax(T(0)) + (-x.abs()).exp().log1p();
  return a.tape->push(std::move(out), {a.id}, [a](Tape<T>& t, std::uint32_t self) {
    const auto x = a.value().mat().array();
    t.grad(a.id).mat().array() += t.grad(self).mat().array() * (T(1) + (-x).exp()).inverse();
  });
}

template <typename T>
Var<T> exp(Var<T> a) {
  const auto& A = a.value();
  Array<T> out(A.shape());
  out.mat() = A.mat().array().exp().matrix();
  return a.tape->push(std::move(out), {a.id}, [a](Tape<T>& t, std::uint32_t self) {
    t.grad(a.id).mat() += t.grad(self).mat().cwiseProduct(t.value(self).mat());
  });
}

template <typename T>
Var<T> layer_norm(Var<T> a, T eps) {
  const auto& A = a.value();
  const std::size_t rows = A.rows();
  const std::size_t n = A.cols();
  Array<T> out(A.shape());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = A.data() + r * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<T>(n);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    T* y = out.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) y[j] = (x[j] - mu) * rs;
  }
  return a.tape->push(std::move(out), {a.id}, [a, rstd, rows, n](Tape<T>& t, std::uint32_t self) {
    const auto& G = t.grad(self);
    const auto& Y = t.value(self);
    auto& ga = t.grad(a.id);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = G.data() + r * n;
      const T* y = Y.data() + r * n;
      T mg = 0, mgy = 0;
      for (std::size_t j = 0; j < n; ++j) {
        mg += g[j];
        mgy += g[j] * y[j];
      }
      mg /= static_cast<T>(n);
      mgy /= static_cast<T>(n);
      T* dx = ga.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) dx[j] += (*rstd)[r] * (g[j] - mg - y[j] * mgy);
    }
  });
}

template <typename T>
Array<T> softmax_rows(const Array<T>& a) {
  Array<T> out(a.shape());
  constexpr T kNegInf = -std::numeric_limits<T>::infinity();
  const std::size_t n = a.cols();
  const auto en = static_cast<Eigen::Index>(n);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> xr(a.data() + r * n, en);
    Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> yr(out.data() + r * n, en);
    const T mx = xr.maxCoeff();
    if (mx == kNegInf) {
      throw Error(ErrorCode::FullyMaskedRow, "softmax row " + std::to_string(r) + " has no finite entry");
    }
    // exp(-inf) is not exactly zero for double in Eigen, so masked entries are selected out.
    yr = (xr == kNegInf).select(T(0), (xr - mx).exp());
    yr /= yr.sum();
  }
  return out;
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  Array<T> out = softmax_rows(a.value());
  const std::size_t n = out.cols();
  return a.tape->push(std::move(out), {a.id}, [a, n](Tape<T>& t, std::uint32_t self) {
    const auto& G = t.grad(self);
    const auto& Y = t.value(self);
    auto& ga = t.grad(a.id);
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      const T* g = G.data() + r * n;
      const T* y = Y.data() + r * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      T* dx = ga.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> a, double rate) {
  Tape<T>& tape = *a.tape;
  if (!tape.training() || rate <= 0.0) return a;
  if (rate >= 1.0) throw Error(ErrorCode::ConfigError, "dropout rate must be below 1");
  const auto& A = a.value();
  auto keep = std::make_shared<Array<T>>(A.shape());
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& k : keep->values()) k = tape.rng().bernoulli(rate) ? T(0) : s;
  Array<T> out(A.shape());
  out.mat() = A.mat().cwiseProduct(keep->mat());
  return tape.push(std::move(out), {a.id}, [a, keep](Tape<T>& t, std::uint32_t self) {
    t.grad(a.id).mat() += t.grad(self).mat().cwiseProduct(keep->mat());
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Array<T> out = a.value().reshaped(std::move(shape));
  return a.tape->push(std::move(out), {a.id}, [a](Tape<T>& t, std::uint32_t self) {
    const auto& G = t.grad(self);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len) {
  const auto& A = a.value();
  require(start + len <= A.cols(), "slice_cols out of bounds");
  Array<T> out({A.rows(), len});
  out.mat() = A.mat().middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len));
  return a.tape->push(std::move(out), {a.id}, [a, start, len](Tape<T>& t, std::uint32_t self) {
    t.grad(a.id).mat().middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) +=
        t.grad(self).mat();
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::uint32_t> ids;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols with mismatched rows");
    total += p.cols();
    ids.push_back(p.id);
  }
  Array<T> out({rows, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    out.mat().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(p.cols())) = p.value().mat();
    off += p.cols();
  }
  return parts[0].tape->push_many(std::move(out), ids, [parts](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    std::size_t off = 0;
    for (const auto& p : parts) {
      const auto c = static_cast<Eigen::Index>(p.cols());
      if (t.needs_grad(p.id)) t.grad(p.id).mat() += G.middleCols(static_cast<Eigen::Index>(off), c);
      off += p.cols();
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t total = 0;
  std::vector<std::uint32_t> ids;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows with mismatched columns");
    total += p.rows();
    ids.push_back(p.id);
  }
  Array<T> out({total, cols});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.size(), out.data() + off * cols);
    off += p.rows();
  }
  return parts[0].tape->push_many(std::move(out), ids, [parts, cols](Tape<T>& t, std::uint32_t self) {
    const auto& G = t.grad(self);
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (t.needs_grad(p.id)) {
        auto& gp = t.grad(p.id);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += G[off * cols + i];
      }
      off += p.rows();
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<std::int32_t>& idx) {
  const auto& W = table.value();
  const std::size_t n = W.cols();
  Array<T> out({idx.size(), n});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= W.rows()) {
      throw Error(ErrorCode::OutOfRange, "row index " + std::to_string(idx[i]) + " outside table");
    }
    std::copy_n(W.data() + static_cast<std::size_t>(idx[i]) * n, n, out.data() + i * n);
  }
  auto ix = std::make_shared<std::vector<std::int32_t>>(idx);
  return table.tape->push(std::move(out), {table.id}, [table, ix, n](Tape<T>& t, std::uint32_t self) {
    const auto& G = t.grad(self);
    auto& gw = t.grad(table.id);
    for (std::size_t i = 0; i < ix->size(); ++i) {
      T* dst = gw.data() + static_cast<std::size_t>((*ix)[i]) * n;
      const T* src = G.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads,
                 std::type_identity_t<std::shared_ptr<const Array<T>>> mask) {
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  const std::size_t tq = Q.rows(), s = K.rows(), d = Q.cols();
  require(K.cols() == d && V.cols() == d && V.rows() == s, "attention operand shapes differ");
  require(heads > 0 && d % heads == 0, "attention width not divisible by heads");
  if (mask) require(mask->rows() == tq && mask->cols() == s, "attention mask shape " + shape_string(mask->shape()));
  const std::size_t dh = d / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  const auto eh = static_cast<Eigen::Index>(dh);
  auto probs = std::make_shared<std::vector<Array<T>>>();
  probs->reserve(heads);
  Array<T> out({tq, d});
  for (std::size_t h = 0; h < heads; ++h) {
    const auto off = static_cast<Eigen::Index>(h * dh);
    Array<T> S({tq, s});
    S.mat().noalias() = sc * (Q.mat().middleCols(off, eh) * K.mat().middleCols(off, eh).transpose());
    if (mask) S.mat() += mask->mat();
    Array<T> P = softmax_rows(S);
    out.mat().middleCols(off, eh).noalias() = P.mat() * V.mat().middleCols(off, eh);
    probs->push_back(std::move(P));
  }
  return q.tape->push(std::move(out), {q.id, k.id, v.id}, [q, k, v, probs, heads, dh, sc](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    const auto eh = static_cast<Eigen::Index>(dh);
    const auto Qm = q.value().mat();
    const auto Km = k.value().mat();
    const auto Vm = v.value().mat();
    for (std::size_t h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h * dh);
      const auto P = (*probs)[h].mat();
      const auto Gh = G.middleCols(off, eh);
      if (t.needs_grad(v.id)) t.grad(v.id).mat().middleCols(off, eh).noalias() += P.transpose() * Gh;
      if (!t.needs_grad(q.id) && !t.needs_grad(k.id)) continue;
      Mat<T> dP = Gh * Vm.middleCols(off, eh).transpose();
      const Eigen::Matrix<T, Eigen::Dynamic, 1> dot = dP.cwiseProduct(P).rowwise().sum();
      Mat<T> dS = P.cwiseProduct(dP.colwise() - dot);
      if (t.needs_grad(q.id)) t.grad(q.id).mat().middleCols(off, eh).noalias() += sc * (dS * Km.middleCols(off, eh));
      if (t.needs_grad(k.id)) t.grad(k.id).mat().middleCols(off, eh).noalias() += sc * (dS.transpose() * Qm.middleCols(off, eh));
    }
  });
}

template <typename T>
Var<T> causal_conv1d(Var<T> x, Var<T> w, Var<T> b) {
  const auto& X = x.value();
  const auto& W = w.value();
  const auto& Bv = b.value();
  const std::size_t len = X.rows(), c = X.cols(), kw = W.rows();
  require(W.cols() == c && Bv.size() == c, "causal_conv1d shapes");
  Array<T> out({len, c});
  for (std::size_t t = 0; t < len; ++t) {
    T* y = out.data() + t * c;
    for (std::size_t j = 0; j < c; ++j) y[j] = Bv[j];
    for (std::size_t i = 0; i < kw; ++i) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + i) - static_cast<std::ptrdiff_t>(kw - 1);
      if (src < 0) continue;
      const T* xs = X.data() + static_cast<std::size_t>(src) * c;
      const T* wr = W.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) y[j] += wr[j] * xs[j];
    }
  }
  return x.tape->push(std::move(out), {x.id, w.id, b.id}, [x, w, b, len, c, kw](Tape<T>& tp, std::uint32_t self) {
    const auto& G = tp.grad(self);
    const auto& X = x.value();
    const auto& W = w.value();
    Array<T>* gx = tp.needs_grad(x.id) ? &tp.grad(x.id) : nullptr;
    Array<T>* gw = tp.needs_grad(w.id) ? &tp.grad(w.id) : nullptr;
    Array<T>* gb = tp.needs_grad(b.id) ? &tp.grad(b.id) : nullptr;
    for (std::size_t t = 0; t < len; ++t) {
      const T* g = G.data() + t * c;
      if (gb) {
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g[j];
      }
      for (std::size_t i = 0; i < kw; ++i) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + i) - static_cast<std::ptrdiff_t>(kw - 1);
        if (src < 0) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        if (gx) {
          T* dx = gx->data() + s * c;
          const T* wr = W.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) dx[j] += wr[j] * g[j];
        }
        if (gw) {
          T* dw = gw->data() + i * c;
          const T* xs = X.data() + s * c;
          for (std::size_t j = 0; j < c; ++j) dw[j] += xs[j] * g[j];
        }
      }
    }
  });
}

template <typename T, std::size_t NN>
void scan_forward_kernel(std::size_t len, std::size_t e, std::size_t n_dyn, const T* __restrict xp,
                         const T* __restrict dp, const T* __restrict bm, const T* __restrict cm,
                         const T* __restrict ab, T* __restrict hsv, T* __restrict yp) {
  const std::size_t n = NN ? NN : n_dyn;
  std::vector<T> h(e * n, T(0));
  T* __restrict hp = h.data();
  for (std::size_t t = 0; t < len; ++t) {
    const T* __restrict bt = bm + t * n;
    const T* __restrict ct = cm + t * n;
    for (std::size_t i = 0; i < e; ++i) {
      const std::size_t k = t * e + i;
      const T u = dp[k] * xp[k];
      T* __restrict hi = hp + i * n;
      const T* __restrict a = ab + k * n;
      T* __restrict hsave = hsv + k * n;
      T y = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T v = a[j] * hi[j] + u * bt[j];
        hi[j] = v;
        hsave[j] = v;
        y += ct[j] * v;
      }
      yp[k] = y;
    }
  }
}

template <typename T, std::size_t NN>
void scan_backward_kernel(std::size_t len, std::size_t e, std::size_t n_dyn, const T* __restrict G,
                          const T* __restrict X, const T* __restrict D, const T* __restrict Am,
                          const T* __restrict Bm, const T* __restrict Cm, const T* __restrict ab,
                          const T* __restrict hsv, T* __restrict gxp, T* __restrict gdp, T* __restrict gap,
                          T* __restrict gbp, T* __restrict gcp) {
  const std::size_t n = NN ? NN : n_dyn;
  std::vector<T> carry(e * n, T(0));
  T* __restrict cp = carry.data();
  for (std::size_t tt = len; tt-- > 0;) {
    const T* __restrict bt = Bm + tt * n;
    const T* __restrict ct = Cm + tt * n;
    T* __restrict dbt = gbp + tt * n;
    T* __restrict dct = gcp + tt * n;
    for (std::size_t i = 0; i < e; ++i) {
      const std::size_t k = tt * e + i;
      const T dy = G[k];
      const T dt = D[k];
      const T xv = X[k];
      const T* __restrict ar = Am + i * n;
      const T* __restrict a = ab + k * n;
      const T* __restrict hcur = hsv + k * n;
      const T* __restrict hprev = tt > 0 ? hsv + (k - e) * n : nullptr;
      T* __restrict cr = cp + i * n;
      T* __restrict dar = gap + i * n;
      T ddt = 0, dxv = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T g = dy * ct[j] + cr[j];
        const T hp = hprev ? hprev[j] : T(0);
        const T dab = g * hp * a[j];
        dct[j] += dy * hcur[j];
        ddt += dab * ar[j] + g * xv * bt[j];
        dar[j] += dab * dt;
        dbt[j] += g * xv * dt;
        dxv += g * bt[j];
        cr[j] = a[j] * g;
      }
      gdp[k] = ddt;
      gxp[k] = dxv * dt;
    }
  }
}

template <typename T>
Var<T> selective_scan(Var<T> x, Var<T> delta, Var<T> A, Var<T> B, Var<T> C) {
  const auto& X = x.value();
  const auto& D = delta.value();
  const auto& Am = A.value();
  const auto& Bm = B.value();
  const auto& Cm = C.value();
  const std::size_t len = X.rows(), e = X.cols(), n = Am.cols();
  require(D.rows() == len && D.cols() == e, "scan delta shape");
  require(Am.rows() == e, "scan A shape");
  require(Bm.rows() == len && Bm.cols() == n && Cm.rows() == len && Cm.cols() == n, "scan B or C shape");
  const std::size_t total = len * e * n;
  // Aligned so the vectorized exp below never falls back to scalar code for a misaligned head.
  auto hs = std::make_shared<typename Array<T>::Storage>(total);
  auto abar = std::make_shared<typename Array<T>::Storage>(total);
  {
    const T* __restrict dp = D.data();
    const T* __restrict ap = Am.data();
    T* __restrict ab = abar->data();
    for (std::size_t k = 0; k < len * e; ++k) {
      const T dt = dp[k];
      const T* __restrict ar = ap + (k % e) * n;
      for (std::size_t j = 0; j < n; ++j) ab[k * n + j] = dt * ar[j];
    }
    Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> m(ab, static_cast<Eigen::Index>(total));
    m = m.exp();
  }
  Array<T> out({len, e});
  if (n == 16) {
    scan_forward_kernel<T, 16>(len, e, n, X.data(), D.data(), Bm.data(), Cm.data(), abar->data(), hs->data(), out.data());
  } else {
    scan_forward_kernel<T, 0>(len, e, n, X.data(), D.data(), Bm.data(), Cm.data(), abar->data(), hs->data(), out.data());
  }
  return x.tape->push(std::move(out), {x.id, delta.id, A.id, B.id, C.id},
                      [x, delta, A, B, C, hs, abar, len, e, n](Tape<T>& tp, std::uint32_t self) {
    Array<T> gx({len, e}), gd({len, e}), ga({e, n}), gb({len, n}), gc({len, n});
    auto kernel = n == 16 ? &scan_backward_kernel<T, 16> : &scan_backward_kernel<T, 0>;
    kernel(len, e, n, tp.grad(self).data(), x.value().data(), delta.value().data(), A.value().data(), B.value().data(),
           C.value().data(), abar->data(), hs->data(), gx.data(), gd.data(), ga.data(), gb.data(), gc.data());
    if (tp.needs_grad(x.id)) tp.grad(x.id).mat() += gx.mat();
    if (tp.needs_grad(delta.id)) tp.grad(delta.id).mat() += gd.mat();
    if (tp.needs_grad(A.id)) tp.grad(A.id).mat() += ga.mat();
    if (tp.needs_grad(B.id)) tp.grad(B.id).mat() += gb.mat();
    if (tp.needs_grad(C.id)) tp.grad(C.id).mat() += gc.mat();
  });
}

template <typename T>
Var<T> select_linear(Var<T> x, Var<T> w, Var<T> b, const std::vector<std::int32_t>& rows,
                     const std::vector<std::int32_t>& groups, std::size_t width) {
  const auto& X = x.value();
  const auto& W = w.value();
  require(rows.size() == groups.size(), "select_linear index lists differ in length");
  require(W.rows() == X.cols() && width > 0 && W.cols() % width == 0, "select_linear weight shape");
  const std::size_t ng = W.cols() / width;
  require(b.value().size() == W.cols(), "select_linear bias shape");
  auto members = std::make_shared<std::vector<std::vector<std::size_t>>>(ng);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (groups[i] < 0 || static_cast<std::size_t>(groups[i]) >= ng || rows[i] < 0 ||
        static_cast<std::size_t>(rows[i]) >= X.rows()) {
      throw Error(ErrorCode::OutOfRange, "select_linear index out of range");
    }
    (*members)[static_cast<std::size_t>(groups[i])].push_back(i);
  }
  auto rix = std::make_shared<std::vector<std::int32_t>>(rows);
  const auto ew = static_cast<Eigen::Index>(width);
  const std::size_t d = X.cols();
  Array<T> out({rows.size(), width});
  for (std::size_t g = 0; g < ng; ++g) {
    const auto& mem = (*members)[g];
    if (mem.empty()) continue;
    Mat<T> xg(static_cast<Eigen::Index>(mem.size()), static_cast<Eigen::Index>(d));
    for (std::size_t m = 0; m < mem.size(); ++m) xg.row(static_cast<Eigen::Index>(m)) = X.mat().row((*rix)[mem[m]]);
    const auto goff = static_cast<Eigen::Index>(g * width);
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bg(b.value().data() + g * width, ew);
    Mat<T> og = xg * W.mat().middleCols(goff, ew);
    og.rowwise() += bg;
    for (std::size_t m = 0; m < mem.size(); ++m) out.mat().row(static_cast<Eigen::Index>(mem[m])) = og.row(static_cast<Eigen::Index>(m));
  }
  return x.tape->push(std::move(out), {x.id, w.id, b.id}, [x, w, b, members, rix, width, d](Tape<T>& t, std::uint32_t self) {
    const auto G = t.grad(self).mat();
    const auto ew = static_cast<Eigen::Index>(width);
    const auto Xm = x.value().mat();
    const auto Wm = w.value().mat();
    for (std::size_t g = 0; g < members->size(); ++g) {
      const auto& mem = (*members)[g];
      if (mem.empty()) continue;
      const auto m = static_cast<Eigen::Index>(mem.size());
      const auto goff = static_cast<Eigen::Index>(g * width);
      Mat<T> dg(m, ew);
      for (Eigen::Index i = 0; i < m; ++i) dg.row(i) = G.row(static_cast<Eigen::Index>(mem[static_cast<std::size_t>(i)]));
      if (t.needs_grad(b.id)) {
        auto& gb = t.grad(b.id);
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb.data() + g * width, ew) += dg.colwise().sum();
      }
      if (t.needs_grad(w.id) || t.needs_grad(x.id)) {
        Mat<T> xg(m, static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < m; ++i) xg.row(i) = Xm.row((*rix)[mem[static_cast<std::size_t>(i)]]);
        if (t.needs_grad(w.id)) t.grad(w.id).mat().middleCols(goff, ew).noalias() += xg.transpose() * dg;
        if (t.needs_grad(x.id)) {
          Mat<T> dx = dg * Wm.middleCols(goff, ew).transpose();
          auto gxm = t.grad(x.id).mat();
          for (Eigen::Index i = 0; i < m; ++i) gxm.row((*rix)[mem[static_cast<std::size_t>(i)]]) += dx.row(i);
        }
      }
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  Array<T> out = Array<T>::scalar(a.value().mat().sum());
  return a.tape->push(std::move(out), {a.id}, [a](Tape<T>& t, std::uint32_t self) {
    t.grad(a.id).mat().array() += t.grad(self)[0];
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const T n = static_cast<T>(a.size());
  Array<T> out = Array<T>::scalar(a.value().mat().sum() / n);
  return a.tape->push(std::move(out), {a.id}, [a, n](Tape<T>& t, std::uint32_t self) {
    t.grad(a.id).mat().array() += t.grad(self)[0] / n;
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<std::int32_t>& targets, T weight) {
  const auto& L = logits.value();
  const std::size_t c = L.cols();
  require(targets.size() == L.rows(), "cross_entropy target count differs from rows");
  auto probs = std::make_shared<Array<T>>(L.shape());
  T total = 0;
  for (std::size_t r = 0; r < L.rows(); ++r) {
    const std::int32_t y = targets[r];
    if (y < 0) continue;
    if (static_cast<std::size_t>(y) >= c) throw Error(ErrorCode::OutOfRange, "target class outside logits");
    const T* l = L.data() + r * c;
    T* p = probs->data() + r * c;
    T mx = *std::max_element(l, l + c);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(l[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= z;
    total += weight * (std::log(z) + mx - l[y]);
  }
  auto tg = std::make_shared<std::vector<std::int32_t>>(targets);
  return logits.tape->push(Array<T>::scalar(total), {logits.id}, [logits, probs, tg, weight, c](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad(self)[0] * weight;
    auto& gl = t.grad(logits.id);
    for (std::size_t r = 0; r < tg->size(); ++r) {
      const std::int32_t y = (*tg)[r];
      if (y < 0) continue;
      const T* p = probs->data() + r * c;
      T* d = gl.data() + r * c;
      for (std::size_t j = 0; j < c; ++j) d[j] += g * p[j];
      d[y] -= g;
    }
  });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require(A.size() == B.size(), "mse operands differ in size");
  const T n = static_cast<T>(A.size());
  T s = 0;
  for (std::size_t i = 0; i < A.size(); ++i) s += (A[i] - B[i]) * (A[i] - B[i]);
  return a.tape->push(Array<T>::scalar(s / n), {a.id, b.id}, [a, b, n](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad(self)[0] * T(2) / n;
    const auto& A = a.value();
    const auto& B = b.value();
    if (t.needs_grad(a.id)) {
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < A.size(); ++i) ga[i] += g * (A[i] - B[i]);
    }
    if (t.needs_grad(b.id)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < A.size(); ++i) gb[i] -= g * (A[i] - B[i]);
    }
  });
}

#define CADSEQ_INSTANTIATE(T)                                                                                  \
  template Var<T> matmul(Var<T>, Var<T>);                                                                      \
  template Var<T> add(Var<T>, Var<T>);                                                                         \
  template Var<T> sub(Var<T>, Var<T>);                                                                         \
  template Var<T> mul(Var<T>, Var<T>);                                                                         \
  template Var<T> add_row(Var<T>, Var<T>);                                                                     \
  template Var<T> mul_row(Var<T>, Var<T>);                                                                     \
  template Var<T> affine(Var<T>, T, T);                                                                        \
  template Var<T> mul_scalar(Var<T>, Var<T>);                                                                  \
  template Var<T> silu(Var<T>);                                                                                \
  template Var<T> sigmoid(Var<T>);                                                                             \
  template Var<T> softplus(Var<T>);                                                                            \
  template Var<T> exp(Var<T>);                                                                                 \
  template Var<T> layer_norm(Var<T>, T);                                                                       \
  template Var<T> softmax_rows(Var<T>);                                                                        \
  template Array<T> softmax_rows(const Array<T>&);                                                             \
  template Var<T> dropout(Var<T>, double);                                                                     \
  template Var<T> reshape(Var<T>, Shape);                                                                      \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                                \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                                                     \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                                                     \
  template Var<T> gather_rows(Var<T>, const std::vector<std::int32_t>&);                                       \
  template Var<T> attention(Var<T>, Var<T>, Var<T>, std::size_t, std::shared_ptr<const Array<T>>);             \
  template Var<T> causal_conv1d(Var<T>, Var<T>, Var<T>);                                                       \
  template Var<T> selective_scan(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>);                                      \
  template Var<T> select_linear(Var<T>, Var<T>, Var<T>, const std::vector<std::int32_t>&,                      \
                                const std::vector<std::int32_t>&, std::size_t);                                \
  template Var<T> sum(Var<T>);                                                                                 \
  template Var<T> mean(Var<T>);                                                                                \
  template Var<T> cross_entropy(Var<T>, const std::vector<std::int32_t>&, T);                                  \
  template Var<T> mse(Var<T>, Var<T>);

CADSEQ_INSTANTIATE(float)
CADSEQ_INSTANTIATE(double)

}  // namespace cadseq::nc
