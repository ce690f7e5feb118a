#include "cfp2ffa/diffusion_schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cfp2ffa {

NoiseSchedule NoiseSchedule::build(std::int64_t num_steps, double beta_min, double beta_max) {
  if (num_steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
  if (!(beta_min >= 0.0)) throw std::invalid_argument("beta_min must be non-negative");
  if (!(beta_max < 1.0)) throw std::invalid_argument("beta_max must be < 1");
  if (beta_min > beta_max) throw std::invalid_argument("beta_min must not exceed beta_max");
  if (num_steps == 1 && beta_min != beta_max) {
    throw std::invalid_argument("a single-step schedule needs beta_min == beta_max");
  }

  NoiseSchedule schedule;
  schedule.beta_min_ = beta_min;
  schedule.beta_max_ = beta_max;
  const auto n = static_cast<std::size_t>(num_steps);
  schedule.betas_.resize(n);
  schedule.alpha_bars_.resize(n);

  double product = 1.0;
  for (std::size_t s = 0; s < n; ++s) {
    double beta = beta_min;
    if (n > 1) {
      const double frac = static_cast<double>(s) / static_cast<double>(n - 1);
      beta = beta_min + (beta_max - beta_min) * frac;
    }
    if (s + 1 == n) beta = beta_max;
    schedule.betas_[s] = beta;
    product *= (1.0 - beta);
    schedule.alpha_bars_[s] = product;
  }
  return schedule;
}

double NoiseSchedule::alpha_bar(std::int64_t t) const {
  if (t < 0 || t >= num_steps()) {
    throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [0, " +
                            std::to_string(num_steps()) + ")");
  }
  return alpha_bars_[static_cast<std::size_t>(t)];
}

torch::Tensor forward_diffuse(const NoiseSchedule& schedule, const torch::Tensor& z0,
                              std::int64_t t, const torch::Tensor& noise) {
  if (!z0.sizes().equals(noise.sizes())) {
    throw std::invalid_argument("forward_diffuse: image and noise shapes differ");
  }
  const double ab = schedule.alpha_bar(t);
  return z0 * std::sqrt(ab) + noise * std::sqrt(1.0 - ab);
}

torch::Tensor forward_diffuse(const NoiseSchedule& schedule, const torch::Tensor& z0,
                              std::span<const std::int64_t> steps,
                              const torch::Tensor& noise) {
  if (!z0.sizes().equals(noise.sizes())) {
    throw std::invalid_argument("forward_diffuse: image and noise shapes differ");
  }
  if (z0.dim() < 1 || z0.size(0) != static_cast<std::int64_t>(steps.size())) {
    throw std::invalid_argument("forward_diffuse: one step per batch element required");
  }
  std::vector<double> signal(steps.size());
  std::vector<double> spread(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double ab = schedule.alpha_bar(steps[i]);
    signal[i] = std::sqrt(ab);
    spread[i] = std::sqrt(1.0 - ab);
  }
  std::vector<std::int64_t> shape(static_cast<std::size_t>(z0.dim()), 1);
  shape[0] = z0.size(0);
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto a = torch::tensor(signal, opts).view(shape).to(z0.dtype());
  auto b = torch::tensor(spread, opts).view(shape).to(z0.dtype());
  return z0 * a + noise * b;
}

}  // namespace cfp2ffa
