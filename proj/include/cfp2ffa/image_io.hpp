#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include <torch/torch.h>

namespace cfp2ffa {

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA) as a float [3, H, W]
/// tensor in [-1, 1]. Gray images are replicated to three channels.
torch::Tensor read_png(const std::filesystem::path& path);

/// Width and height from the PNG header without decoding pixels. Throws when
/// the file is not a readable PNG.
std::pair<std::int64_t, std::int64_t> png_dimensions(const std::filesystem::path& path);

/// Writes a [3, H, W] (or [1, H, W]) tensor in [-1, 1] as an 8-bit RGB PNG.
/// Output bytes depend only on pixel values.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Bilinear resize of [C, H, W] or [B, C, H, W] to size x size.
torch::Tensor resize_image(const torch::Tensor& image, std::int64_t size);

/// Tiles [N, 3, H, W] images into a rows x cols grid image.
torch::Tensor tile_images(const torch::Tensor& images, std::int64_t cols);

}  // namespace cfp2ffa
