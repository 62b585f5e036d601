#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cadseq/diffusion/schedule.hpp"
#include "cadseq/rng.hpp"

namespace cadseq::diff {

template <typename T>
using NoisePredictor = std::function<nc::Array<T>(const nc::Array<T>& z_t, std::size_t step)>;

// One reverse update from z_t to z_{t-1}. Throws NonFinite if the result is not finite.
template <typename T>
nc::Array<T> reverse_step(const nc::Array<T>& z_t, const nc::Array<T>& eps_hat, std::size_t step,
                          const NoiseSchedule& sched, DiffusionMode mode, Rng& rng);

// Full trajectory from z_T ~ N(0, I) drawn from rng.
template <typename T>
nc::Array<T> sample_one(const nc::Shape& shape, const NoiseSchedule& sched, const NoisePredictor<T>& eps,
                        DiffusionMode mode, Rng& rng);

// n trajectories; trajectory i owns the generator seeded with base_seed + i.
template <typename T>
std::vector<nc::Array<T>> sample_latents(std::size_t n, const nc::Shape& shape, const NoiseSchedule& sched,
                                         const NoisePredictor<T>& eps, DiffusionMode mode, std::uint64_t base_seed,
                                         unsigned threads = 1);

}  // namespace cadseq::diff
