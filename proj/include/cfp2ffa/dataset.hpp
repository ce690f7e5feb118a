#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cfp2ffa/category.hpp"

namespace cfp2ffa {

enum class Split { Unassigned, Train, Validation };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct ManifestEntry {
  std::string sample_id;
  std::filesystem::path cfp_path;  // relative to the manifest root
  std::filesystem::path ffa_path;
  CategoryLabel category = CategoryLabel::Normal;
  Split split = Split::Unassigned;
};

/// Pairs discovered under a dataset root, optionally assigned to splits.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::uint64_t split_seed = 0;
  double split_ratio = 0.0;
  std::vector<std::string> warnings;

  std::vector<ManifestEntry> select(Split split) const;
  std::size_t count(Split split) const;
  std::size_t count(CategoryLabel category) const;
};

/// Scans `<root>/<category>/<sample_id>/{cfp,ffa}.png`. A `manifest.csv` in the
/// root takes precedence when present. Incomplete pairs are skipped with a
/// warning. Throws on an empty root, unknown category directories or
/// unreadable images.
DatasetManifest load_mpos(const std::filesystem::path& root);

/// CSV with columns sample_id,cfp_path,ffa_path,category,split.
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_csv(const std::filesystem::path& path);

/// Per-category stratified split. The total training count is
/// round(ratio * N), distributed over categories by largest remainder, and
/// every category keeps at least one sample on each side. Throws when
/// 0 < ratio < 1 does not hold or a category has fewer than two samples.
DatasetManifest split(const DatasetManifest& manifest, double ratio, std::uint64_t seed);

struct PairedSample {
  torch::Tensor cfp;  // [3, H, W] in [-1, 1]
  torch::Tensor ffa;
  CategoryLabel category = CategoryLabel::Normal;
  std::string sample_id;
};

/// Loads both images of an entry, resized to `image_size` (0 keeps native).
PairedSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                         std::int64_t image_size);
std::vector<PairedSample> load_samples(const DatasetManifest& manifest, Split split,
                                       std::int64_t image_size);

struct FlipDecision {
  bool horizontal = false;
  bool vertical = false;
};

/// Applies one geometric transform to both modalities of the pair.
PairedSample augment(const PairedSample& sample, FlipDecision flips);
/// Draws each flip with probability 0.5.
PairedSample augment(const PairedSample& sample, std::mt19937_64& rng);

/// Mini-batch of stacked samples.
struct Batch {
  torch::Tensor cfp;  // [B, 3, H, W]
  torch::Tensor ffa;
  std::vector<CategoryLabel> labels;
  std::vector<std::string> ids;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

Batch make_batch(const std::vector<PairedSample>& samples, std::span<const std::size_t> order);

}  // namespace cfp2ffa
