#include "cfp2ffa/networks.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nn = torch::nn;

namespace cfp2ffa {

namespace {

nn::Sequential conv_norm_relu(std::int64_t in, std::int64_t out, std::int64_t kernel,
                              std::int64_t stride, std::int64_t padding) {
  return nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding)),
      nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out)), nn::ReLU(true));
}

nn::Sequential conv_lrelu(std::int64_t in, std::int64_t out, std::int64_t stride) {
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)),
                        nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
}

void check_image_batch(const torch::Tensor& x, std::int64_t channels, const char* who) {
  if (x.dim() != 4 || x.size(1) != channels) {
    throw std::invalid_argument(std::string(who) + ": expected [B, " +
                                std::to_string(channels) + ", H, W] input");
  }
}

}  // namespace

void init_gan_weights(nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& child : module.modules(/*include_self=*/false)) {
    if (auto* conv = child->as<nn::Conv2d>()) {
      nn::init::normal_(conv->weight, 0.0, 0.02);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* tconv = child->as<nn::ConvTranspose2d>()) {
      nn::init::normal_(tconv->weight, 0.0, 0.02);
      if (tconv->bias.defined()) nn::init::zeros_(tconv->bias);
    }
  }
}

std::int64_t count_parameters(const nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

// --- InputProjection --------------------------------------------------------

InputProjectionImpl::InputProjectionImpl(std::int64_t in_channels, std::int64_t latent_channels)
    : in_channels_(in_channels) {
  conv = register_module(
      "conv", nn::Conv2d(nn::Conv2dOptions(in_channels, latent_channels, 7)
                             .padding(3)
                             .padding_mode(torch::kReflect)));
  torch::NoGradGuard no_grad;
  nn::init::zeros_(conv->bias);
}

torch::Tensor InputProjectionImpl::forward(const torch::Tensor& x) {
  check_image_batch(x, in_channels_, "encode_input");
  return conv->forward(x);
}

// --- CategoryEmbedding ------------------------------------------------------

CategoryEmbeddingImpl::CategoryEmbeddingImpl(std::int64_t dim) : dim_(dim) {
  table = register_parameter(
      "table", torch::randn({static_cast<std::int64_t>(kNumDiseaseClasses), dim}));
}

torch::Tensor CategoryEmbeddingImpl::embed(CategoryLabel label) {
  if (label == CategoryLabel::None) return torch::zeros({dim_}, table.options());
  return table[class_index(label)];
}

torch::Tensor CategoryEmbeddingImpl::forward(std::span<const CategoryLabel> labels) {
  std::vector<torch::Tensor> rows;
  rows.reserve(labels.size());
  for (auto label : labels) rows.push_back(embed(label));
  if (rows.empty()) return torch::zeros({0, dim_}, table.options());
  return torch::stack(rows);
}

torch::Tensor fuse(const torch::Tensor& feat, const torch::Tensor& c) {
  if (feat.dim() == 4 && c.dim() == 2 && c.size(0) == feat.size(0) &&
      c.size(1) == feat.size(1)) {
    return feat + c.view({c.size(0), c.size(1), 1, 1});
  }
  if (feat.dim() == 3 && c.dim() == 1 && c.size(0) == feat.size(0)) {
    return feat + c.view({c.size(0), 1, 1});
  }
  throw std::invalid_argument("fuse: embedding does not match feature channels");
}

// --- Generator --------------------------------------------------------------

ResidualBlockImpl::ResidualBlockImpl(std::int64_t channels) {
  body = register_module(
      "body",
      nn::Sequential(
          nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).padding_mode(
              torch::kReflect)),
          nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels)), nn::ReLU(true),
          nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).padding_mode(
              torch::kReflect)),
          nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels))));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body->forward(x); }

ResnetGeneratorImpl::ResnetGeneratorImpl(GeneratorOptions options) : options_(options) {
  projection = register_module("projection", InputProjection(options.in_channels));
  if (options.use_category) {
    category = register_module("category", CategoryEmbedding(kLatentChannels));
  }

  const std::int64_t c = kLatentChannels;
  nn::Sequential seq;
  seq->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(c)));
  seq->push_back(nn::ReLU(true));
  seq->extend(*conv_norm_relu(c, 2 * c, 3, 2, 1));
  seq->extend(*conv_norm_relu(2 * c, 4 * c, 3, 2, 1));
  for (std::int64_t i = 0; i < options.num_res_blocks; ++i) seq->push_back(ResidualBlock(4 * c));
  for (std::int64_t k : {4, 2}) {
    const std::int64_t in = k * c;
    const std::int64_t out = in / 2;
    seq->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1).output_padding(1)));
    seq->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out)));
    seq->push_back(nn::ReLU(true));
  }
  seq->push_back(nn::Conv2d(
      nn::Conv2dOptions(c, options.out_channels, 7).padding(3).padding_mode(torch::kReflect)));
  seq->push_back(nn::Tanh());
  decoder = register_module("decoder", seq);

  init_gan_weights(*this);
}

torch::Tensor ResnetGeneratorImpl::encode_input(const torch::Tensor& x) {
  if (x.dim() == 3) return projection->forward(x.unsqueeze(0)).squeeze(0);
  return projection->forward(x);
}

torch::Tensor ResnetGeneratorImpl::generate(const torch::Tensor& fused) {
  if (fused.dim() == 3) return decoder->forward(fused.unsqueeze(0)).squeeze(0);
  if (fused.size(-1) % 4 != 0 || fused.size(-2) % 4 != 0) {
    throw std::invalid_argument("generator: spatial dims must be multiples of 4");
  }
  return decoder->forward(fused);
}

torch::Tensor ResnetGeneratorImpl::forward(const torch::Tensor& x,
                                           std::span<const CategoryLabel> labels) {
  auto latent = encode_input(x);
  if (category && !labels.empty()) {
    if (static_cast<std::int64_t>(labels.size()) != latent.size(0)) {
      throw std::invalid_argument("generator: one category label per image required");
    }
    latent = fuse(latent, category->forward(labels));
  }
  return generate(latent);
}

// --- Discriminator ----------------------------------------------------------

torch::Tensor sinusoidal_step_features(const torch::Tensor& steps, std::int64_t dim) {
  const std::int64_t half = dim / 2;
  auto freqs = torch::exp(torch::arange(half, torch::kFloat32) *
                          (-std::log(10000.0) / static_cast<double>(std::max<std::int64_t>(half, 1))));
  auto angles = steps.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(angles), torch::cos(angles)}, 1);
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(DiscriminatorOptions options)
    : options_(options) {
  const std::int64_t c = options.base_channels;
  auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
  head = register_module(
      "head",
      nn::Sequential(
          nn::Conv2d(nn::Conv2dOptions(options.in_channels, c, 4).stride(2).padding(1)),
          lrelu(), nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)),
          nn::InstanceNorm2d(nn::InstanceNorm2dOptions(2 * c)), lrelu()));
  tail = register_module(
      "tail", nn::Sequential(
                  nn::Conv2d(nn::Conv2dOptions(2 * c, 4 * c, 4).stride(2).padding(1)),
                  nn::InstanceNorm2d(nn::InstanceNorm2dOptions(4 * c)), lrelu(),
                  nn::Conv2d(nn::Conv2dOptions(4 * c, 8 * c, 4).stride(1).padding(1)),
                  nn::InstanceNorm2d(nn::InstanceNorm2dOptions(8 * c)), lrelu(),
                  nn::Conv2d(nn::Conv2dOptions(8 * c, 1, 4).stride(1).padding(1))));
  if (options.time_conditioned) {
    time_mlp = register_module(
        "time_mlp", nn::Sequential(nn::Linear(options.time_features, 2 * c), lrelu(),
                                   nn::Linear(2 * c, 2 * c)));
  }
  init_gan_weights(*this);
}

torch::Tensor PatchDiscriminatorImpl::forward_logits(const torch::Tensor& img,
                                                     std::span<const std::int64_t> steps) {
  check_image_batch(img, options_.in_channels, "discriminate");
  if (static_cast<std::int64_t>(steps.size()) != img.size(0)) {
    throw std::invalid_argument("discriminate: one diffusion step per image required");
  }
  for (auto t : steps) {
    if (t < 0 || t >= options_.num_steps) {
      throw std::out_of_range("discriminate: diffusion step outside the schedule");
    }
  }
  auto h = head->forward(img);
  if (time_mlp) {
    auto t = torch::tensor(std::vector<std::int64_t>(steps.begin(), steps.end()), torch::kInt64);
    auto emb = time_mlp->forward(sinusoidal_step_features(t, options_.time_features));
    h = h + emb.view({emb.size(0), emb.size(1), 1, 1});
  }
  return tail->forward(h);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& img,
                                              std::span<const std::int64_t> steps) {
  return torch::sigmoid(forward_logits(img, steps));
}

// --- Registration -----------------------------------------------------------

RegistrationUNetImpl::RegistrationUNetImpl(std::int64_t in_channels, std::int64_t base) {
  enc1 = register_module("enc1", conv_lrelu(2 * in_channels, base, 1));
  enc2 = register_module("enc2", conv_lrelu(base, 2 * base, 2));
  enc3 = register_module("enc3", conv_lrelu(2 * base, 4 * base, 2));
  enc4 = register_module("enc4", conv_lrelu(4 * base, 4 * base, 2));
  dec3 = register_module("dec3", conv_lrelu(8 * base, 4 * base, 1));
  dec2 = register_module("dec2", conv_lrelu(6 * base, 2 * base, 1));
  dec1 = register_module("dec1", conv_lrelu(3 * base, base, 1));
  flow = register_module("flow", nn::Conv2d(nn::Conv2dOptions(base, 2, 3).padding(1)));
  init_gan_weights(*this);
  torch::NoGradGuard no_grad;
  nn::init::zeros_(flow->weight);
  nn::init::zeros_(flow->bias);
}

torch::Tensor RegistrationUNetImpl::forward(const torch::Tensor& moving,
                                            const torch::Tensor& fixed) {
  if (!moving.sizes().equals(fixed.sizes())) {
    throw std::invalid_argument("register: moving and fixed images differ in shape");
  }
  if (moving.dim() != 4 || moving.size(-1) % 8 != 0 || moving.size(-2) % 8 != 0) {
    throw std::invalid_argument("register: expected [B, C, H, W] with H, W multiples of 8");
  }
  namespace F = torch::nn::functional;
  auto up = [](const torch::Tensor& t) {
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
  };
  auto e1 = enc1->forward(torch::cat({moving, fixed}, 1));
  auto e2 = enc2->forward(e1);
  auto e3 = enc3->forward(e2);
  auto e4 = enc4->forward(e3);
  auto d3 = dec3->forward(torch::cat({up(e4), e3}, 1));
  auto d2 = dec2->forward(torch::cat({up(d3), e2}, 1));
  auto d1 = dec1->forward(torch::cat({up(d2), e1}, 1));
  return flow->forward(d1);
}

}  // namespace cfp2ffa
