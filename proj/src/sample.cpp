#include "pathopaint/sample.hpp"

#include <algorithm>

#include "pathopaint/errors.hpp"

namespace pathopaint {

bool is_binary(const torch::Tensor& t) {
  if (t.numel() == 0) return true;
  auto d = t.to(torch::kFloat64);
  return d.eq(0).logical_or(d.eq(1)).all().item<bool>();
}

void validate_sample(const PatchSample& sample, std::int64_t patch_size) {
  const auto& img = sample.image;
  const auto& m = sample.mask;
  if (!img.defined() || img.dim() != 3 || img.size(0) != 3) {
    throw ShapeError("patch '" + sample.patch_id + "': image must be [3,H,W]");
  }
  if (!m.defined() || m.dim() != 2) throw ShapeError("patch '" + sample.patch_id + "': mask must be [H,W]");
  if (img.size(1) != m.size(0) || img.size(2) != m.size(1)) {
    throw ShapeError("patch '" + sample.patch_id + "': image and mask spatial dims differ");
  }
  if (patch_size > 0 && (img.size(1) != patch_size || img.size(2) != patch_size)) {
    throw ShapeError("patch '" + sample.patch_id + "': expected " + std::to_string(patch_size) + "x" +
                     std::to_string(patch_size));
  }
  if (!is_binary(m)) throw ContractError("patch '" + sample.patch_id + "': mask is not binary");
}

std::int64_t foreground_pixels(const PatchSample& sample) {
  return sample.mask.ne(0).sum().item<std::int64_t>();
}

double foreground_fraction(const PatchSample& sample) {
  const auto n = sample.mask.numel();
  return n == 0 ? 0.0 : static_cast<double>(foreground_pixels(sample)) / static_cast<double>(n);
}

torch::Tensor stack_images(const Dataset& samples) {
  std::vector<torch::Tensor> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(s.image);
  return torch::stack(v);
}

torch::Tensor stack_masks(const Dataset& samples) {
  std::vector<torch::Tensor> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(s.mask.to(torch::kUInt8));
  return torch::stack(v);
}

Dataset sorted_by_patch_id(Dataset samples) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const PatchSample& a, const PatchSample& b) { return a.patch_id < b.patch_id; });
  return samples;
}

std::string to_string(Origin origin) { return origin == Origin::real ? "real" : "synthetic"; }

}  // namespace pathopaint
