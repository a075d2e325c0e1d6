#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace pathopaint {

/// Writes a float [3,H,W] image in [0,1] as 8-bit RGB PNG (round-to-nearest).
void write_rgb_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Reads an 8-bit RGB PNG as float [3,H,W] with values k/255.
torch::Tensor read_rgb_png(const std::filesystem::path& path);

/// Writes a binary uint8 [H,W] mask as 8-bit grayscale, 0 -> 0 and 1 -> 255.
void write_mask_png(const std::filesystem::path& path, const torch::Tensor& mask);

/// Reads a grayscale mask PNG; any nonzero value maps to 1. Returns uint8 [H,W].
torch::Tensor read_mask_png(const std::filesystem::path& path);

}  // namespace pathopaint
