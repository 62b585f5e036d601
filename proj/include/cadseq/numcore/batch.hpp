#pragma once

#include <cstddef>
#include <functional>

#include "cadseq/numcore/tape.hpp"

namespace cadseq::nc {

template <typename T>
struct BatchResult {
  double loss = 0.0;  // mean over elements
  GradientSet<T> grads;  // mean over elements
};

// Runs loss_fn on a fresh tape per element and averages losses and gradients.
// Per-element gradients are reduced in index order, so the thread count never changes the result.
// loss_fn receives the element index and a per-element seed derived from base_seed.
template <typename T>
BatchResult<T> run_batch(const ParamStore<T>& params, std::size_t batch,
                         const std::function<Var<T>(Tape<T>&, std::size_t)>& loss_fn, std::uint64_t base_seed,
                         unsigned threads = 1, bool training = true);

// Calls fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace cadseq::nc
