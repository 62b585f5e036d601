#include "cadseq/numcore/batch.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cadseq::nc {

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  for (unsigned k = 0; k < count; ++k) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

template <typename T>
BatchResult<T> run_batch(const ParamStore<T>& params, std::size_t batch,
                         const std::function<Var<T>(Tape<T>&, std::size_t)>& loss_fn, std::uint64_t base_seed,
                         unsigned threads, bool training) {
  BatchResult<T> out;
  out.grads = params.zero_gradients();
  if (batch == 0) return out;
  std::vector<double> losses(batch, 0.0);
  auto one = [&](std::size_t i, GradientSet<T>& g) {
    Tape<T> tape(true, training, base_seed + 0x9e3779b97f4a7c15ull * (i + 1));
    Var<T> l = loss_fn(tape, i);
    losses[i] = static_cast<double>(l.value()[0]);
    tape.backward(l, &g);
  };
  if (threads <= 1) {
    GradientSet<T> g = params.zero_gradients();
    for (std::size_t i = 0; i < batch; ++i) {
      if (i > 0) {
        for (auto& a : g) a.fill(T(0));
      }
      one(i, g);
      add_into(out.grads, g);
    }
  } else {
    std::vector<GradientSet<T>> per(batch);
    parallel_for(batch, threads, [&](std::size_t i) {
      per[i] = params.zero_gradients();
      one(i, per[i]);
    });
    for (std::size_t i = 0; i < batch; ++i) add_into(out.grads, per[i]);
  }
  double total = 0.0;
  for (double l : losses) total += l;
  out.loss = total / static_cast<double>(batch);
  scale_into(out.grads, static_cast<T>(1.0 / static_cast<double>(batch)));
  return out;
}

template BatchResult<float> run_batch(const ParamStore<float>&, std::size_t,
                                      const std::function<Var<float>(Tape<float>&, std::size_t)>&, std::uint64_t,
                                      unsigned, bool);
template BatchResult<double> run_batch(const ParamStore<double>&, std::size_t,
                                       const std::function<Var<double>(Tape<double>&, std::size_t)>&, std::uint64_t,
                                       unsigned, bool);

}  // namespace cadseq::nc
