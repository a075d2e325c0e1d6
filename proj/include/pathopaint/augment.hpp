#pragma once

#include <random>

#include <torch/torch.h>

namespace pathopaint {

/// Dihedral transform applied jointly to an image and its masks.
struct GeometricOp {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int rot90 = 0;  // quarter turns, 0..3
};

GeometricOp random_geometric(std::mt19937_64& rng);

/// Applies the op on the last two dims of `x`; works for [3,H,W], [H,W] and batched tensors.
torch::Tensor apply_geometric(const torch::Tensor& x, const GeometricOp& op);

/// Brightness, contrast and saturation factors each drawn from [1-strength, 1+strength];
/// the result is clamped to [0,1].
torch::Tensor color_jitter(const torch::Tensor& image, double strength, std::mt19937_64& rng);

}  // namespace pathopaint
