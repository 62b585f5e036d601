#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cadseq/numcore/array.hpp"

namespace cadseq::diff {

// Standard uses sqrt(alpha_bar) in the forward process and the DDPM posterior in sampling;
// PaperLiteral uses alpha_bar without the root and the 1/alpha_bar, beta*z sampler update.
enum class DiffusionMode { Standard, PaperLiteral };

std::string_view mode_name(DiffusionMode m) noexcept;
// Throws ConfigError.
DiffusionMode mode_from_name(std::string_view s);

struct NoiseSchedule {
  std::size_t steps = 0;
  DiffusionMode mode = DiffusionMode::Standard;
  std::vector<double> beta;       // index t - 1
  std::vector<double> alpha_bar;  // index t - 1

  double beta_at(std::size_t t) const { return beta[t - 1]; }
  double alpha_bar_at(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
  // Throws BadStep unless 1 <= t <= steps.
  void check_step(std::size_t t) const;
};

// beta_t = 0.0001 + 0.0199 t / T for t = 1..T. Throws ConfigError for T = 0.
NoiseSchedule build_schedule(std::size_t steps, DiffusionMode mode = DiffusionMode::Standard);

template <typename T>
nc::Array<T> forward_diffuse(const nc::Array<T>& z0, std::size_t t, const nc::Array<T>& eps, const NoiseSchedule& sched);

inline constexpr std::size_t kGlobalWindow = 0;

inline bool window_allows(std::size_t i, std::size_t j, std::size_t window) {
  if (window == kGlobalWindow) return true;
  return (i > j ? i - j : j - i) <= window;
}

// Additive [len x len] mask: 0 where |i - j| <= window, -inf elsewhere; window 0 is global.
template <typename T>
nc::Array<T> window_mask(std::size_t len, std::size_t window);

// Sinusoidal table [rows x dim]: even columns sin(pos / 10000^(j/dim)), odd columns cos of the same angle.
template <typename T>
nc::Array<T> sinusoid_table(std::size_t rows, std::size_t dim, std::size_t first_pos = 0);

}  // namespace cadseq::diff
