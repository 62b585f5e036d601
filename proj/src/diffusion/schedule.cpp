#include "cadseq/diffusion/schedule.hpp"

#include <cmath>
#include <limits>

#include "cadseq/error.hpp"

namespace cadseq::diff {

std::string_view mode_name(DiffusionMode m) noexcept {
  return m == DiffusionMode::Standard ? "standard" : "paper-literal";
}

DiffusionMode mode_from_name(std::string_view s) {
  if (s == "standard") return DiffusionMode::Standard;
  if (s == "paper-literal") return DiffusionMode::PaperLiteral;
  throw Error(ErrorCode::ConfigError, "unknown diffusion mode '" + std::string(s) + "'");
}

void NoiseSchedule::check_step(std::size_t t) const {
  if (t < 1 || t > steps) {
    throw Error(ErrorCode::BadStep, "step " + std::to_string(t) + " outside 1.." + std::to_string(steps));
  }
}

NoiseSchedule build_schedule(std::size_t steps, DiffusionMode mode) {
  if (steps == 0) throw Error(ErrorCode::ConfigError, "diffusion needs at least one step");
  NoiseSchedule s;
  s.steps = steps;
  s.mode = mode;
  s.beta.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const double b = 0.0001 + 0.0199 * static_cast<double>(t) / static_cast<double>(steps);
    prod *= 1.0 - b;
    s.beta[t - 1] = b;
    s.alpha_bar[t - 1] = prod;
  }
  return s;
}

template <typename T>
nc::Array<T> forward_diffuse(const nc::Array<T>& z0, std::size_t t, const nc::Array<T>& eps, const NoiseSchedule& sched) {
  sched.check_step(t);
  if (z0.shape() != eps.shape()) throw Error(ErrorCode::ShapeMismatch, "noise shape differs from the latent");
  const double ab = sched.alpha_bar_at(t);
  const T a = static_cast<T>(sched.mode == DiffusionMode::Standard ? std::sqrt(ab) : ab);
  const T b = static_cast<T>(std::sqrt(1.0 - ab));
  nc::Array<T> out(z0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

template <typename T>
nc::Array<T> window_mask(std::size_t len, std::size_t window) {
  nc::Array<T> m({len, len});
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      m.at(i, j) = window_allows(i, j, window) ? T(0) : -std::numeric_limits<T>::infinity();
    }
  }
  return m;
}

template <typename T>
nc::Array<T> sinusoid_table(std::size_t rows, std::size_t dim, std::size_t first_pos) {
  nc::Array<T> pe({rows, dim});
  for (std::size_t r = 0; r < rows; ++r) {
    const double pos = static_cast<double>(first_pos + r);
    for (std::size_t j = 0; j < dim; ++j) {
      const double e = static_cast<double>(j - j % 2) / static_cast<double>(dim);
      const double angle = pos / std::pow(10000.0, e);
      pe.at(r, j) = static_cast<T>(j % 2 ? std::cos(angle) : std::sin(angle));
    }
  }
  return pe;
}

template nc::Array<float> forward_diffuse(const nc::Array<float>&, std::size_t, const nc::Array<float>&,
                                          const NoiseSchedule&);
template nc::Array<double> forward_diffuse(const nc::Array<double>&, std::size_t, const nc::Array<double>&,
                                           const NoiseSchedule&);
template nc::Array<float> window_mask(std::size_t, std::size_t);
template nc::Array<double> window_mask(std::size_t, std::size_t);
template nc::Array<float> sinusoid_table(std::size_t, std::size_t, std::size_t);
template nc::Array<double> sinusoid_table(std::size_t, std::size_t, std::size_t);

}  // namespace cadseq::diff
