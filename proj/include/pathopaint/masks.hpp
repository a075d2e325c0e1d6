#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace pathopaint {

/// Max-pool resize of a binary [H,W] mask by factor f: a latent cell is 1 iff any pixel of its
/// f x f block is 1. Returns float32 [1, H/f, W/f].
torch::Tensor downsample_mask(const torch::Tensor& mask, std::int64_t factor);

/// x * (1 - m): zero-fills the foreground of a [3,H,W] image.
torch::Tensor mask_background(const torch::Tensor& image, const torch::Tensor& mask);

/// mask * generated + (1 - mask) * original, selected per pixel so the background is copied
/// exactly.
torch::Tensor composite_background(const torch::Tensor& generated, const torch::Tensor& original,
                                   const torch::Tensor& mask);

}  // namespace pathopaint
