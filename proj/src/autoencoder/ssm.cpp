#include "cadseq/autoencoder/ssm.hpp"

#include <cmath>

namespace cadseq::ae {

template <typename T>
DiscreteSsm<T> discretize_ssm(const nc::Array<T>& delta, const nc::Array<T>& A, const nc::Array<T>& B) {
  const std::size_t len = delta.rows(), e = delta.cols(), n = A.cols();
  if (A.rows() != e || B.rows() != len || B.cols() != n) {
    throw Error(ErrorCode::ShapeMismatch, "discretize_ssm operand shapes");
  }
  DiscreteSsm<T> out{nc::Array<T>({len, e, n}), nc::Array<T>({len, e, n})};
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < e; ++i) {
      const T dt = delta.at(t, i);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = (t * e + i) * n + j;
        out.a_bar[k] = std::exp(dt * A.at(i, j));
        out.b_bar[k] = dt * B.at(t, j);
      }
    }
  }
  return out;
}

template <typename T>
nc::Array<T> ssm_scan(const nc::Array<T>& x, const DiscreteSsm<T>& d, const nc::Array<T>& C) {
  const std::size_t len = x.rows(), e = x.cols();
  if (d.a_bar.rank() != 3 || d.a_bar.shape()[0] != len || d.a_bar.shape()[1] != e || d.b_bar.shape() != d.a_bar.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "ssm_scan discretization shape");
  }
  const std::size_t n = d.a_bar.shape()[2];
  if (C.rows() != len || C.cols() != n) throw Error(ErrorCode::ShapeMismatch, "ssm_scan C shape");
  nc::Array<T> y({len, e});
  std::vector<T> h(e * n, T(0));
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < e; ++i) {
      T acc = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = (t * e + i) * n + j;
        T& hv = h[i * n + j];
        hv = d.a_bar[k] * hv + d.b_bar[k] * x.at(t, i);
        acc += C.at(t, j) * hv;
      }
      y.at(t, i) = acc;
    }
  }
  return y;
}

template DiscreteSsm<float> discretize_ssm(const nc::Array<float>&, const nc::Array<float>&, const nc::Array<float>&);
template DiscreteSsm<double> discretize_ssm(const nc::Array<double>&, const nc::Array<double>&, const nc::Array<double>&);
template nc::Array<float> ssm_scan(const nc::Array<float>&, const DiscreteSsm<float>&, const nc::Array<float>&);
template nc::Array<double> ssm_scan(const nc::Array<double>&, const DiscreteSsm<double>&, const nc::Array<double>&);

}  // namespace cadseq::ae
