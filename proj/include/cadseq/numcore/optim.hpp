#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cadseq/numcore/params.hpp"
#include "cadseq/numcore/tape.hpp"

namespace cadseq::nc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = true;
};

template <typename T>
struct OptimState {
  AdamConfig config;
  std::vector<Array<T>> m;
  std::vector<Array<T>> v;
  std::uint64_t step = 0;

  OptimState() = default;
  OptimState(const ParamStore<T>& store, AdamConfig cfg);
};

// One Adam/AdamW update. lr overrides config.lr when positive.
template <typename T>
void optimizer_step(ParamStore<T>& params, const GradientSet<T>& grads, OptimState<T>& state, double lr = -1.0);

// Linear warmup to base_lr, then constant, times decay_factor once step >= decay_at.
double lr_schedule(std::uint64_t step, double base_lr, std::uint64_t warmup_steps, std::uint64_t decay_at,
                   double decay_factor);

// Rescales all gradients together so the global L2 norm is at most max_norm. Returns the norm before clipping.
template <typename T>
double clip_gradients(GradientSet<T>& grads, double max_norm = 1.0);

template <typename T>
double global_norm(const GradientSet<T>& grads);

struct GradcheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t coordinates = 0;
};

// Central differences against the tape gradient of f at theta.
GradcheckResult gradcheck(const std::function<Var<double>(Tape<double>&, Var<double>)>& f, const Array<double>& theta,
                          double eps = 1e-5);

// Same comparison over every parameter of a store. max_per_param > 0 samples that many coordinates per tensor.
GradcheckResult gradcheck_params(ParamStore<double>& store, const std::function<Var<double>(Tape<double>&)>& f,
                                 double eps = 1e-5, std::size_t max_per_param = 0, std::uint64_t seed = 0);

}  // namespace cadseq::nc
