#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <torch/torch.h>

#include "cfp2ffa/category.hpp"
#include "cfp2ffa/config.hpp"
#include "cfp2ffa/dataset.hpp"

namespace cfp2ffa {

/// Procedural parameters of the paired phantom generator. Coordinates and
/// radii are fractions of the image side; intensities are in [0, 1].
struct PhantomConfig {
  std::int64_t image_size = 128;

  // Affine misregistration applied to the FFA rendering.
  double max_translation_px = 2.0;
  double max_rotation_deg = 1.0;

  // Vessel tree.
  std::int64_t vessel_trunks = 4;
  std::int64_t vessel_depth = 4;
  double vessel_length = 0.16;
  double vessel_width = 0.014;

  // CFP rendering: low vessel contrast, strong per-image brightness jitter.
  double cfp_vessel_contrast = 0.35;
  double cfp_brightness_jitter = 0.18;
  double cfp_lesion_contrast = 0.25;

  // FFA rendering: dark background, bright vessels.
  double ffa_background = 0.12;
  double ffa_vessel_gain = 0.85;
  double ffa_brightness_jitter = 0.02;

  // Lesion region around the macula and the FFA intensity each category adds
  // there, in the order normal, dr, rvo, amd, csc.
  double lesion_radius = 0.14;
  std::array<double, 5> lesion_level = {0.0, 0.25, -0.1, 0.7, 0.45};

  double pixel_noise = 0.01;

  KeyValueConfig to_config() const;
  static PhantomConfig from_config(const KeyValueConfig& config);
};

/// One rendered pair plus the masks that tests inspect.
struct PhantomPair {
  torch::Tensor cfp;          // [3, N, N] in [-1, 1]
  torch::Tensor ffa;          // [3, N, N] in [-1, 1]
  torch::Tensor cfp_vessels;  // [N, N] bool
  torch::Tensor ffa_vessels;  // [N, N] bool
  torch::Tensor lesion_mask;  // [N, N] bool, FFA coordinates
  CategoryLabel category = CategoryLabel::Normal;
  std::string sample_id;
};

/// Category of the i-th phantom sample (round-robin over the five classes).
CategoryLabel phantom_category(std::int64_t index);

/// Deterministic in (index, seed, config).
PhantomPair render_phantom_pair(std::int64_t index, std::uint64_t seed, const PhantomConfig& config);

/// Renders n >= 5 pairs into `<out>/<category>/<id>/{cfp,ffa}.png` with a
/// manifest.csv and phantom_config.txt. Throws std::invalid_argument for
/// n < 5 and std::runtime_error when `out` is not writable.
DatasetManifest generate_phantom_dataset(std::int64_t n, std::uint64_t seed,
                                         const PhantomConfig& config,
                                         const std::filesystem::path& out);

}  // namespace cfp2ffa
