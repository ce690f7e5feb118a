#include "cfp2ffa/feature_extractor.hpp"

#include <cmath>
#include <stdexcept>

#include "cfp2ffa/image_io.hpp"

namespace cfp2ffa {

namespace F = torch::nn::functional;

torch::Tensor FeatureExtractor::embed(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (const auto& map : feature_maps(images)) {
    parts.push_back(F::adaptive_avg_pool2d(map, F::AdaptiveAvgPool2dFuncOptions(2)).flatten(1));
  }
  return torch::cat(parts, 1);
}

std::vector<torch::Tensor> IdentityExtractor::feature_maps(const torch::Tensor& images) {
  return {images.dim() == 3 ? images.unsqueeze(0) : images};
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, std::int64_t input_size,
                                         std::vector<std::int64_t> channels)
    : seed_(seed), input_size_(input_size) {
  auto gen = at::detail::createCPUGenerator(seed);
  std::int64_t in = 3;
  for (auto out : channels) {
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    weights_.push_back(torch::randn({out, in, 3, 3}, gen, torch::kFloat32) * std);
    in = out;
  }
}

std::string RandomConvExtractor::id() const { return "random:" + std::to_string(seed_); }

std::vector<torch::Tensor> RandomConvExtractor::feature_maps(const torch::Tensor& images) {
  auto x = resize_image(images.dim() == 3 ? images.unsqueeze(0) : images, input_size_)
               .to(torch::kFloat32);
  std::vector<torch::Tensor> maps;
  for (const auto& w : weights_) {
    x = torch::relu(F::conv2d(x, w, F::Conv2dFuncOptions().stride(2).padding(1)));
    maps.push_back(x);
  }
  return maps;
}

std::vector<double> RandomConvExtractor::layer_weights() const {
  return std::vector<double>(weights_.size(), 1.0);
}

TorchScriptExtractor::TorchScriptExtractor(const std::filesystem::path& path, std::int64_t input_size)
    : path_(path), input_size_(input_size) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("feature extractor weights not found: " + path.string());
  }
  module_ = torch::jit::load(path.string());
  module_.eval();
}

std::string TorchScriptExtractor::id() const { return "torchscript:" + path_.filename().string(); }

torch::Tensor TorchScriptExtractor::embed(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  auto x = resize_image(images.dim() == 3 ? images.unsqueeze(0) : images, input_size_);
  return module_.forward({x}).toTensor().flatten(1);
}

std::vector<torch::Tensor> TorchScriptExtractor::feature_maps(const torch::Tensor& images) {
  auto e = embed(images);
  return {e.view({e.size(0), e.size(1), 1, 1})};
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& spec) {
  if (spec == "identity") return std::make_unique<IdentityExtractor>();
  if (spec == "random") return std::make_unique<RandomConvExtractor>();
  if (spec.rfind("random:", 0) == 0) {
    return std::make_unique<RandomConvExtractor>(std::stoull(spec.substr(7)));
  }
  if (spec.rfind("torchscript:", 0) == 0) {
    return std::make_unique<TorchScriptExtractor>(spec.substr(12), 299);
  }
  throw std::invalid_argument("unknown feature extractor '" + spec + "'");
}

}  // namespace cfp2ffa
