#include "cadseq/numcore/optim.hpp"

#include <algorithm>
#include <cmath>

namespace cadseq::nc {
namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

template <typename T>
OptimState<T>::OptimState(const ParamStore<T>& store, AdamConfig cfg) : config(cfg) {
  for (const auto& p : store) {
    m.emplace_back(p.value.shape());
    v.emplace_back(p.value.shape());
  }
}

template <typename T>
void optimizer_step(ParamStore<T>& params, const GradientSet<T>& grads, OptimState<T>& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  }
  const AdamConfig& c = state.config;
  const double rate = lr > 0 ? lr : c.lr;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Array<T>& p = params[i].value;
    const Array<T>& g = grads[i];
    if (g.size() != p.size() || state.m[i].size() != p.size()) {
      throw Error(ErrorCode::ShapeMismatch, "gradient shape differs for " + params[i].name);
    }
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    T* w = p.data();
    const T decay = static_cast<T>(1.0 - rate * c.weight_decay);
    for (std::size_t j = 0; j < p.size(); ++j) {
      T gj = g[j];
      if (!c.decoupled && c.weight_decay > 0) gj += static_cast<T>(c.weight_decay) * w[j];
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      const double mh = static_cast<double>(m[j]) / bc1;
      const double vh = static_cast<double>(v[j]) / bc2;
      if (c.decoupled) w[j] *= decay;
      w[j] -= static_cast<T>(rate * mh / (std::sqrt(vh) + c.eps));
    }
  }
}

double lr_schedule(std::uint64_t step, double base_lr, std::uint64_t warmup_steps, std::uint64_t decay_at,
                   double decay_factor) {
  double lr = base_lr;
  if (warmup_steps > 0 && step < warmup_steps) {
    lr = base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (decay_at > 0 && step >= decay_at) lr *= decay_factor;
  return lr;
}

template <typename T>
double global_norm(const GradientSet<T>& grads) {
  double s = 0;
  for (const auto& g : grads) {
    for (T v : g.values()) s += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(s);
}

template <typename T>
double clip_gradients(GradientSet<T>& grads, double max_norm) {
  const double n = global_norm(grads);
  if (n > max_norm && n > 0) {
    const T f = static_cast<T>(max_norm / n);
    for (auto& g : grads) g.mat() *= f;
  }
  return n;
}

GradcheckResult gradcheck(const std::function<Var<double>(Tape<double>&, Var<double>)>& f, const Array<double>& theta,
                          double eps) {
  Array<double> analytic;
  {
    Tape<double> tape(true, false);
    Var<double> x = tape.variable(theta);
    Var<double> y = f(tape, x);
    if (!y.value().all_finite()) throw Error(ErrorCode::NonFinite, "gradcheck objective is not finite");
    tape.backward(y);
    analytic = tape.has_grad(x.id) ? tape.grad(x.id) : Array<double>(theta.shape());
  }
  auto eval = [&](const Array<double>& at) {
    Tape<double> tape(false, false);
    const double v = f(tape, tape.constant(at)).value()[0];
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "gradcheck objective is not finite");
    return v;
  };
  GradcheckResult r;
  Array<double> probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + eps;
    const double fp = eval(probe);
    probe[i] = theta[i] - eps;
    const double fm = eval(probe);
    probe[i] = theta[i];
    const double e = rel_err(analytic[i], (fp - fm) / (2 * eps));
    if (e >= r.max_rel_err) {
      r.max_rel_err = e;
      r.worst_coordinate = i;
    }
    ++r.coordinates;
  }
  return r;
}

GradcheckResult gradcheck_params(ParamStore<double>& store, const std::function<Var<double>(Tape<double>&)>& f,
                                 double eps, std::size_t max_per_param, std::uint64_t seed) {
  GradientSet<double> grads = store.zero_gradients();
  {
    Tape<double> tape(true, false);
    Var<double> y = f(tape);
    if (!y.value().all_finite()) throw Error(ErrorCode::NonFinite, "gradcheck objective is not finite");
    tape.backward(y, &grads);
  }
  auto eval = [&]() {
    Tape<double> tape(false, false);
    const double v = f(tape).value()[0];
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "gradcheck objective is not finite");
    return v;
  };
  Rng rng(seed);
  GradcheckResult r;
  std::size_t flat = 0;
  for (std::size_t pi = 0; pi < store.size(); ++pi) {
    Array<double>& w = store[pi].value;
    std::vector<std::size_t> coords;
    if (max_per_param == 0 || max_per_param >= w.size()) {
      for (std::size_t j = 0; j < w.size(); ++j) coords.push_back(j);
    } else {
      for (std::size_t j = 0; j < max_per_param; ++j) {
        coords.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w.size()) - 1)));
      }
    }
    for (std::size_t j : coords) {
      const double orig = w[j];
      w[j] = orig + eps;
      const double fp = eval();
      w[j] = orig - eps;
      const double fm = eval();
      w[j] = orig;
      const double e = rel_err(grads[pi][j], (fp - fm) / (2 * eps));
      if (e >= r.max_rel_err) {
        r.max_rel_err = e;
        r.worst_coordinate = flat + j;
      }
      ++r.coordinates;
    }
    flat += w.size();
  }
  return r;
}

template struct OptimState<float>;
template struct OptimState<double>;
template void optimizer_step(ParamStore<float>&, const GradientSet<float>&, OptimState<float>&, double);
template void optimizer_step(ParamStore<double>&, const GradientSet<double>&, OptimState<double>&, double);
template double clip_gradients(GradientSet<float>&, double);
template double clip_gradients(GradientSet<double>&, double);
template double global_norm(const GradientSet<float>&);
template double global_norm(const GradientSet<double>&);

}  // namespace cadseq::nc
