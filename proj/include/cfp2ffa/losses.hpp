#pragma once

#include <torch/torch.h>

namespace cfp2ffa {

/// Bilinear resampling of `img` at p + field(p), in pixel units, with sample
/// positions clamped to the image border.
///
/// img: [B, C, H, W] or [C, H, W]; field: [B, 2, H, W] or [2, H, W] with
/// channel 0 = dx (along W) and channel 1 = dy (along H). Differentiable with
/// respect to both arguments.
torch::Tensor warp(const torch::Tensor& img, const torch::Tensor& field);

// Adversarial terms on discriminator probabilities in [0, 1]. Logs are taken
// of scores clamped at 1e-12. Throw std::invalid_argument on non-finite input.
torch::Tensor adversarial_loss_d(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);
torch::Tensor adversarial_loss_g(const torch::Tensor& fake_scores);

// Same quantities computed from logits; used by the trainer for stability.
torch::Tensor adversarial_loss_d_logits(const torch::Tensor& real_logits,
                                        const torch::Tensor& fake_logits);
torch::Tensor adversarial_loss_g_logits(const torch::Tensor& fake_logits);

/// Mean absolute difference between `y` and `warp(y_g, field)`.
torch::Tensor correction_loss(const torch::Tensor& y, const torch::Tensor& y_g,
                              const torch::Tensor& field);

/// mean((dF/dy)^2) + mean((dF/dx)^2) over forward differences of the field.
torch::Tensor smoothness_loss(const torch::Tensor& field);

}  // namespace cfp2ffa
