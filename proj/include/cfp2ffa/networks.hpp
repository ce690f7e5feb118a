#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "cfp2ffa/category.hpp"

namespace cfp2ffa {

inline constexpr std::int64_t kLatentChannels = 64;

/// CycleGAN-style init: conv weights ~ N(0, 0.02), biases zero.
void init_gan_weights(torch::nn::Module& module);

std::int64_t count_parameters(const torch::nn::Module& module);

// ---------------------------------------------------------------------------
// Category-aware representation enhancer pieces
// ---------------------------------------------------------------------------

/// 7x7 reflect-padded convolution lifting a 3-channel CFP image to the
/// 64-channel latent map x0.
class InputProjectionImpl : public torch::nn::Module {
 public:
  explicit InputProjectionImpl(std::int64_t in_channels = 3,
                               std::int64_t latent_channels = kLatentChannels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};

 private:
  std::int64_t in_channels_;
};
TORCH_MODULE(InputProjection);

/// One learned 64-vector per disease category. `None` maps to a fixed zero
/// vector that is not a parameter.
class CategoryEmbeddingImpl : public torch::nn::Module {
 public:
  explicit CategoryEmbeddingImpl(std::int64_t dim = kLatentChannels);

  /// [dim] vector for one label.
  torch::Tensor embed(CategoryLabel label);
  /// [B, dim] rows for a batch of labels.
  torch::Tensor forward(std::span<const CategoryLabel> labels);

  std::int64_t dim() const { return dim_; }

  torch::Tensor table;  // [5, dim]

 private:
  std::int64_t dim_;
};
TORCH_MODULE(CategoryEmbedding);

/// Broadcast-add a category embedding over every spatial position.
/// feat: [B, C, H, W] with c: [B, C], or feat: [C, H, W] with c: [C].
torch::Tensor fuse(const torch::Tensor& feat, const torch::Tensor& c);

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

struct GeneratorOptions {
  std::int64_t in_channels = 3;
  std::int64_t out_channels = 3;
  std::int64_t num_res_blocks = 9;
  bool use_category = false;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Residual encoder-decoder (two stride-2 downsamplings, residual trunk, two
/// transposed-conv upsamplings) whose first layer is the input projection and
/// whose latent map may receive a category embedding. Output in [-1, 1].
/// Spatial dims must be multiples of 4.
class ResnetGeneratorImpl : public torch::nn::Module {
 public:
  explicit ResnetGeneratorImpl(GeneratorOptions options = {});

  torch::Tensor encode_input(const torch::Tensor& x);
  torch::Tensor generate(const torch::Tensor& fused);
  /// x: [B, 3, H, W]. `labels` may be empty (all none); otherwise one per
  /// image. Labels are ignored when the category enhancer is disabled.
  torch::Tensor forward(const torch::Tensor& x, std::span<const CategoryLabel> labels = {});

  const GeneratorOptions& options() const { return options_; }

  InputProjection projection{nullptr};
  CategoryEmbedding category{nullptr};
  torch::nn::Sequential decoder{nullptr};

 private:
  GeneratorOptions options_;
};
TORCH_MODULE(ResnetGenerator);

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

struct DiscriminatorOptions {
  std::int64_t in_channels = 3;
  std::int64_t base_channels = 64;
  bool time_conditioned = true;
  std::int64_t num_steps = 1000;
  std::int64_t time_features = 64;
};

/// Sinusoidal features of integer steps, [B, dim].
torch::Tensor sinusoidal_step_features(const torch::Tensor& steps, std::int64_t dim);

/// Patch discriminator. When time conditioned, an MLP over sinusoidal step
/// features is added to the second feature map.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(DiscriminatorOptions options = {});

  torch::Tensor forward_logits(const torch::Tensor& img, std::span<const std::int64_t> steps);
  /// Sigmoid score map [B, 1, h, w] in [0, 1].
  torch::Tensor forward(const torch::Tensor& img, std::span<const std::int64_t> steps);

  const DiscriminatorOptions& options() const { return options_; }

 private:
  DiscriminatorOptions options_;
  torch::nn::Sequential head{nullptr};
  torch::nn::Sequential tail{nullptr};
  torch::nn::Sequential time_mlp{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

// ---------------------------------------------------------------------------
// Registration network
// ---------------------------------------------------------------------------

/// U-Net over concat(moving, fixed) predicting a dense displacement field in
/// pixel units, [B, 2, H, W] with channel 0 = dx, channel 1 = dy. The output
/// layer is zero-initialized so training starts from the identity field.
/// Spatial dims must be multiples of 8.
class RegistrationUNetImpl : public torch::nn::Module {
 public:
  explicit RegistrationUNetImpl(std::int64_t in_channels = 3, std::int64_t base_channels = 32);

  torch::Tensor forward(const torch::Tensor& moving, const torch::Tensor& fixed);

  torch::nn::Conv2d flow{nullptr};

 private:
  torch::nn::Sequential enc1{nullptr}, enc2{nullptr}, enc3{nullptr}, enc4{nullptr};
  torch::nn::Sequential dec3{nullptr}, dec2{nullptr}, dec1{nullptr};
};
TORCH_MODULE(RegistrationUNet);

}  // namespace cfp2ffa
