#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cfp2ffa/dynamic_controller.hpp"
#include "cfp2ffa/networks.hpp"
#include "cfp2ffa/train_config.hpp"

namespace cfp2ffa {

/// Generator, discriminator and registration network of one variant.
struct SynthesisNetworks {
  ResnetGenerator generator{nullptr};
  PatchDiscriminator discriminator{nullptr};
  RegistrationUNet registration{nullptr};

  /// Seeds torch's global generator with `config.seed` before
  /// initializing, so equal configs give equal weights.
  static SynthesisNetworks build(const TrainConfig& config);

  void train(bool on);
  /// Prefixed names ("generator.", "discriminator.", "registration.").
  std::vector<std::pair<std::string, torch::Tensor>> named_tensors() const;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointHeader {
  std::uint32_t format_version = kCheckpointFormatVersion;
  TrainConfig config;
  ControllerState controller;
  std::int64_t epoch = 0;
};

/// Binary container, all integers little-endian:
///   "CFP2FFA\0" | u32 version | u64 header_len | header (key = value text)
///   | u64 block_count | blocks
/// block: u32 name_len | name | u8 dtype (0 = f32) | u32 ndim | i64 dims[ndim]
///        | u64 byte_len | raw bytes
void save_checkpoint(const std::filesystem::path& path, const SynthesisNetworks& networks,
                     const CheckpointHeader& header);

struct LoadedCheckpoint {
  CheckpointHeader header;
  SynthesisNetworks networks;
};

/// Rebuilds the networks from the stored config and loads every block.
/// Throws on version mismatch, missing or extra blocks, or shape mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Header only, without reading parameter blocks.
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

}  // namespace cfp2ffa
