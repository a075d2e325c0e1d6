#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

namespace pathopaint {

enum class Origin { real, synthetic };

/// One image patch with its binary foreground mask.
///   image: float32 [3,H,W] in [0,1]
///   mask:  uint8   [H,W] in {0,1}, 1 = tumor/foreground
struct PatchSample {
  torch::Tensor image;
  torch::Tensor mask;
  std::string source_image_id;
  std::string patch_id;
  Origin origin = Origin::real;
  // Texture family that rendered the foreground (toy corpus); -1 when unknown.
  int family = -1;
};

using Dataset = std::vector<PatchSample>;

/// Throws ShapeError/ContractError when the sample breaks the PatchSample invariants.
/// patch_size == 0 skips the square-size check.
void validate_sample(const PatchSample& sample, std::int64_t patch_size = 0);

/// True iff every element of `t` is 0 or 1.
bool is_binary(const torch::Tensor& t);

std::int64_t foreground_pixels(const PatchSample& sample);
double foreground_fraction(const PatchSample& sample);

/// Stacks images [B,3,H,W] and masks [B,H,W] (uint8).
torch::Tensor stack_images(const Dataset& samples);
torch::Tensor stack_masks(const Dataset& samples);

/// Copy of `samples` sorted by patch_id (the canonical order used for audits).
Dataset sorted_by_patch_id(Dataset samples);

std::string to_string(Origin origin);

}  // namespace pathopaint
