#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace cfp2ffa {

/// Linear beta schedule and its cumulative products for the diffusion
/// forward process. Immutable after construction.
class NoiseSchedule {
 public:
  /// Betas linearly spaced in [beta_min, beta_max] over `num_steps` steps.
  /// Throws std::invalid_argument on num_steps < 1, beta_min < 0,
  /// beta_min > beta_max or beta_max >= 1.
  static NoiseSchedule build(std::int64_t num_steps, double beta_min, double beta_max);

  std::int64_t num_steps() const { return static_cast<std::int64_t>(betas_.size()); }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }
  std::span<const double> betas() const { return betas_; }
  std::span<const double> alpha_bars() const { return alpha_bars_; }
  double alpha_bar(std::int64_t t) const;

 private:
  NoiseSchedule() = default;

  double beta_min_ = 0.0;
  double beta_max_ = 0.0;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * noise.
torch::Tensor forward_diffuse(const NoiseSchedule& schedule, const torch::Tensor& z0,
                              std::int64_t t, const torch::Tensor& noise);

/// Batched variant: `z0` and `noise` are [B, ...], `steps` holds one step per
/// leading index.
torch::Tensor forward_diffuse(const NoiseSchedule& schedule, const torch::Tensor& z0,
                              std::span<const std::int64_t> steps,
                              const torch::Tensor& noise);

}  // namespace cfp2ffa
