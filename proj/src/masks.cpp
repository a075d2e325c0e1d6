#include "pathopaint/masks.hpp"

#include "pathopaint/errors.hpp"
#include "pathopaint/sample.hpp"

namespace pathopaint {

torch::Tensor downsample_mask(const torch::Tensor& mask, std::int64_t factor) {
  if (factor < 1) throw ParameterError("downsample_mask: factor must be >= 1");
  if (mask.dim() != 2) throw ShapeError("downsample_mask: mask must be [H,W]");
  if (mask.size(0) % factor != 0 || mask.size(1) % factor != 0) {
    throw ShapeError("downsample_mask: mask dims must be divisible by " + std::to_string(factor));
  }
  if (!is_binary(mask)) throw ContractError("downsample_mask: mask is not binary");
  auto m = mask.to(torch::kFloat32).unsqueeze(0).unsqueeze(0);
  return torch::max_pool2d(m, {factor, factor}, {factor, factor}).squeeze(0);
}

namespace {

void check_image_mask(const torch::Tensor& image, const torch::Tensor& mask, const char* op) {
  if (image.dim() != 3 || mask.dim() != 2 || image.size(1) != mask.size(0) || image.size(2) != mask.size(1)) {
    throw ShapeError(std::string(op) + ": image [C,H,W] and mask [H,W] must share H,W");
  }
}

}  // namespace

torch::Tensor mask_background(const torch::Tensor& image, const torch::Tensor& mask) {
  check_image_mask(image, mask, "mask_background");
  return image * (1.0 - mask.to(image.scalar_type())).unsqueeze(0);
}

torch::Tensor composite_background(const torch::Tensor& generated, const torch::Tensor& original,
                                   const torch::Tensor& mask) {
  if (!generated.sizes().equals(original.sizes())) throw ShapeError("composite_background: image shapes differ");
  check_image_mask(original, mask, "composite_background");
  auto fg = mask.ne(0).unsqueeze(0).expand_as(original);
  return torch::where(fg, generated.to(original.scalar_type()), original);
}

}  // namespace pathopaint
