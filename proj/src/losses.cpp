#include "cfp2ffa/losses.hpp"

#include <stdexcept>

namespace cfp2ffa {

namespace F = torch::nn::functional;

torch::Tensor warp(const torch::Tensor& img, const torch::Tensor& field) {
  if (img.dim() == 3 && field.dim() == 3) return warp(img.unsqueeze(0), field.unsqueeze(0)).squeeze(0);
  if (img.dim() != 4 || field.dim() != 4 || field.size(1) != 2 || img.size(0) != field.size(0) ||
      img.size(2) != field.size(2) || img.size(3) != field.size(3)) {
    throw std::invalid_argument("warp: expected img [B,C,H,W] and field [B,2,H,W]");
  }
  const auto B = img.size(0);
  const auto C = img.size(1);
  const auto H = img.size(2);
  const auto W = img.size(3);
  auto opts = field.options().requires_grad(false);

  auto gx = torch::arange(W, opts).view({1, 1, W});
  auto gy = torch::arange(H, opts).view({1, H, 1});
  auto sx = (field.select(1, 0) + gx).clamp(0.0, static_cast<double>(W - 1));
  auto sy = (field.select(1, 1) + gy).clamp(0.0, static_cast<double>(H - 1));

  auto x0 = sx.detach().floor();
  auto y0 = sy.detach().floor();
  auto wx = (sx - x0).unsqueeze(1);
  auto wy = (sy - y0).unsqueeze(1);
  auto x0i = x0.to(torch::kInt64);
  auto y0i = y0.to(torch::kInt64);
  auto x1i = (x0i + 1).clamp_max(W - 1);
  auto y1i = (y0i + 1).clamp_max(H - 1);

  auto flat = img.reshape({B, C, H * W});
  auto sample = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    auto index = (yi * W + xi).view({B, 1, H * W}).expand({B, C, H * W});
    return flat.gather(2, index).view({B, C, H, W});
  };
  auto top = sample(y0i, x0i) * (1 - wx) + sample(y0i, x1i) * wx;
  auto bottom = sample(y1i, x0i) * (1 - wx) + sample(y1i, x1i) * wx;
  return top * (1 - wy) + bottom * wy;
}

namespace {

void require_finite(const torch::Tensor& t, const char* who) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw std::invalid_argument(std::string(who) + ": non-finite discriminator scores");
  }
}

constexpr double kLogFloor = 1e-12;

}  // namespace

torch::Tensor adversarial_loss_d(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  require_finite(real_scores, "adversarial_loss_d");
  require_finite(fake_scores, "adversarial_loss_d");
  return -torch::log(real_scores.clamp_min(kLogFloor)).mean() -
         torch::log((1 - fake_scores).clamp_min(kLogFloor)).mean();
}

torch::Tensor adversarial_loss_g(const torch::Tensor& fake_scores) {
  require_finite(fake_scores, "adversarial_loss_g");
  return -torch::log(fake_scores.clamp_min(kLogFloor)).mean();
}

torch::Tensor adversarial_loss_d_logits(const torch::Tensor& real_logits,
                                        const torch::Tensor& fake_logits) {
  return F::binary_cross_entropy_with_logits(real_logits, torch::ones_like(real_logits)) +
         F::binary_cross_entropy_with_logits(fake_logits, torch::zeros_like(fake_logits));
}

torch::Tensor adversarial_loss_g_logits(const torch::Tensor& fake_logits) {
  return F::binary_cross_entropy_with_logits(fake_logits, torch::ones_like(fake_logits));
}

torch::Tensor correction_loss(const torch::Tensor& y, const torch::Tensor& y_g,
                              const torch::Tensor& field) {
  if (!y.sizes().equals(y_g.sizes())) {
    throw std::invalid_argument("correction_loss: real and generated images differ in shape");
  }
  return (y - warp(y_g, field)).abs().mean();
}

torch::Tensor smoothness_loss(const torch::Tensor& field) {
  const auto h = field.size(-2);
  const auto w = field.size(-1);
  auto loss = torch::zeros({}, field.options());
  if (h > 1) {
    auto dy = field.narrow(-2, 1, h - 1) - field.narrow(-2, 0, h - 1);
    loss = loss + dy.pow(2).mean();
  }
  if (w > 1) {
    auto dx = field.narrow(-1, 1, w - 1) - field.narrow(-1, 0, w - 1);
    loss = loss + dx.pow(2).mean();
  }
  return loss;
}

}  // namespace cfp2ffa
