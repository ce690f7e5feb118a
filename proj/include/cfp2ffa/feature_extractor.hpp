#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/script.h>
#include <torch/torch.h>

namespace cfp2ffa {

/// Source of layered feature maps (LPIPS) and global descriptors (FID/KID).
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual std::string id() const = 0;
  /// Feature maps [B, C_l, H_l, W_l] for images [B, 3, H, W] in [-1, 1].
  virtual std::vector<torch::Tensor> feature_maps(const torch::Tensor& images) = 0;
  virtual std::vector<double> layer_weights() const = 0;
  /// [B, D] descriptor. Default: concatenated 2x2 average pools of every
  /// feature map.
  virtual torch::Tensor embed(const torch::Tensor& images);
};

/// Single layer whose features are the pixels themselves, unit weight.
class IdentityExtractor final : public FeatureExtractor {
 public:
  std::string id() const override { return "identity"; }
  std::vector<torch::Tensor> feature_maps(const torch::Tensor& images) override;
  std::vector<double> layer_weights() const override { return {1.0}; }
};

/// Fixed random convolutional features (stride-2 3x3 convs + ReLU) seeded
/// independently of any run, for hermetic metric evaluation. Inputs are
/// resized to `input_size` first.
class RandomConvExtractor final : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 20240601, std::int64_t input_size = 64,
                               std::vector<std::int64_t> channels = {16, 32, 64});

  std::string id() const override;
  std::vector<torch::Tensor> feature_maps(const torch::Tensor& images) override;
  std::vector<double> layer_weights() const override;

 private:
  std::uint64_t seed_;
  std::int64_t input_size_;
  std::vector<torch::Tensor> weights_;
};

/// TorchScript module mapping [B, 3, H, W] to a [B, D] embedding (e.g. an
/// exported pretrained inception-style classifier). Used as a single
/// 1x1 "layer" for LPIPS.
class TorchScriptExtractor final : public FeatureExtractor {
 public:
  TorchScriptExtractor(const std::filesystem::path& path, std::int64_t input_size);

  std::string id() const override;
  std::vector<torch::Tensor> feature_maps(const torch::Tensor& images) override;
  std::vector<double> layer_weights() const override { return {1.0}; }
  torch::Tensor embed(const torch::Tensor& images) override;

 private:
  std::filesystem::path path_;
  std::int64_t input_size_;
  torch::jit::script::Module module_;
};

/// "random", "random:<seed>", "identity", or "torchscript:<path>".
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& spec);

}  // namespace cfp2ffa
