#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "cfp2ffa/config.hpp"

namespace cfp2ffa {

/// Ablation variants: baseline = registration GAN only, m1 = + diffusion-noised
/// discriminator with the adaptive controller, full = m1 + category enhancer.
enum class Variant { Baseline, M1, Full };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

struct TrainConfig {
  std::string profile = "desk";
  Variant variant = Variant::Full;
  std::int64_t epochs = 20;
  std::int64_t batch_size = 4;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double lambda_corr = 20.0;
  double lambda_smooth = 10.0;
  std::uint64_t seed = 1;
  std::int64_t image_size = 128;
  std::int64_t num_res_blocks = 9;

  // Diffusion schedule and controller.
  std::int64_t schedule_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 2e-3;
  std::int64_t t_init = 10;
  double controller_lambda = 0.1;
  std::int64_t controller_every = 1;

  double split_ratio = 0.7;
  bool augment = false;
  bool keep_epoch_checkpoints = false;
  std::int64_t sample_grid_count = 4;

  bool uses_diffusion() const { return variant != Variant::Baseline; }
  bool uses_category() const { return variant == Variant::Full; }

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;

  KeyValueConfig to_config() const;
  /// Overlays the keys present in `config` onto `base`. Unknown keys throw.
  static TrainConfig from_config(const KeyValueConfig& config, TrainConfig base);
  /// "desk" (128 px, batch 4, 20 epochs) or "full" (1024 px, batch 2, 100 epochs).
  static TrainConfig profile_defaults(std::string_view profile);
};

}  // namespace cfp2ffa
