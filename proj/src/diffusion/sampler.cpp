#include "cadseq/diffusion/sampler.hpp"

#include <cmath>

#include "cadseq/error.hpp"
#include "cadseq/numcore/batch.hpp"

namespace cadseq::diff {

template <typename T>
nc::Array<T> reverse_step(const nc::Array<T>& z_t, const nc::Array<T>& eps_hat, std::size_t step,
                          const NoiseSchedule& sched, DiffusionMode mode, Rng& rng) {
  sched.check_step(step);
  if (z_t.shape() != eps_hat.shape()) throw Error(ErrorCode::ShapeMismatch, "predicted noise shape");
  const double beta = sched.beta_at(step);
  const double ab = sched.alpha_bar_at(step);
  double c0, c1, sigma;
  if (mode == DiffusionMode::Standard) {
    c0 = 1.0 / std::sqrt(1.0 - beta);
    c1 = beta / std::sqrt(1.0 - ab);
    sigma = step > 1 ? std::sqrt((1.0 - sched.alpha_bar_at(step - 1)) / (1.0 - ab) * beta) : 0.0;
  } else {
    c0 = 1.0 / ab;
    c1 = beta / std::sqrt(1.0 - ab);
    sigma = beta;
  }
  nc::Array<T> out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = c0 * (static_cast<double>(z_t[i]) - c1 * static_cast<double>(eps_hat[i]));
    if (sigma > 0) v += sigma * rng.normal();
    out[i] = static_cast<T>(v);
  }
  if (!out.all_finite()) {
    throw Error(ErrorCode::NonFinite, "sampling diverged at step " + std::to_string(step) + " (" +
                                          std::string(mode_name(mode)) + " mode)");
  }
  return out;
}

template <typename T>
nc::Array<T> sample_one(const nc::Shape& shape, const NoiseSchedule& sched, const NoisePredictor<T>& eps,
                        DiffusionMode mode, Rng& rng) {
  nc::Array<T> z(shape);
  for (auto& v : z.values()) v = static_cast<T>(rng.normal());
  for (std::size_t t = sched.steps; t >= 1; --t) z = reverse_step(z, eps(z, t), t, sched, mode, rng);
  return z;
}

template <typename T>
std::vector<nc::Array<T>> sample_latents(std::size_t n, const nc::Shape& shape, const NoiseSchedule& sched,
                                         const NoisePredictor<T>& eps, DiffusionMode mode, std::uint64_t base_seed,
                                         unsigned threads) {
  std::vector<nc::Array<T>> out(n);
  nc::parallel_for(n, threads, [&](std::size_t i) {
    Rng rng(base_seed + i);
    out[i] = sample_one(shape, sched, eps, mode, rng);
  });
  return out;
}

template nc::Array<float> reverse_step(const nc::Array<float>&, const nc::Array<float>&, std::size_t,
                                       const NoiseSchedule&, DiffusionMode, Rng&);
template nc::Array<double> reverse_step(const nc::Array<double>&, const nc::Array<double>&, std::size_t,
                                        const NoiseSchedule&, DiffusionMode, Rng&);
template nc::Array<float> sample_one(const nc::Shape&, const NoiseSchedule&, const NoisePredictor<float>&,
                                     DiffusionMode, Rng&);
template nc::Array<double> sample_one(const nc::Shape&, const NoiseSchedule&, const NoisePredictor<double>&,
                                      DiffusionMode, Rng&);
template std::vector<nc::Array<float>> sample_latents(std::size_t, const nc::Shape&, const NoiseSchedule&,
                                                      const NoisePredictor<float>&, DiffusionMode, std::uint64_t,
                                                      unsigned);
template std::vector<nc::Array<double>> sample_latents(std::size_t, const nc::Shape&, const NoiseSchedule&,
                                                       const NoisePredictor<double>&, DiffusionMode, std::uint64_t,
                                                       unsigned);

}  // namespace cadseq::diff
