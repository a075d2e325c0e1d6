#include "pathopaint/uncertainty.hpp"

#include "pathopaint/errors.hpp"

namespace pathopaint {

UncertainMask compute_uncertain(const torch::Tensor& mask, const torch::Tensor& predicted) {
  if (!mask.sizes().equals(predicted.sizes())) throw ContractError("compute_uncertain: mask and prediction shapes differ");
  if (!is_binary(mask) || !is_binary(predicted)) throw ContractError("compute_uncertain: inputs must be binary");
  auto m = mask.to(torch::kUInt8);
  auto p = predicted.to(torch::kUInt8);
  auto fn = (m - m * p).to(torch::kUInt8);
  return {fn, p, m};
}

torch::Tensor predict_masks(const torch::Tensor& images, ForegroundPredictor& segmenter, double threshold) {
  if (!segmenter.is_trained()) throw ContractError("predict_with_pretrained: segmenter is not trained");
  torch::NoGradGuard no_grad;
  return segmenter.foreground_probability(images).ge(threshold).to(torch::kUInt8);
}

torch::Tensor predict_with_pretrained(const PatchSample& sample, ForegroundPredictor& segmenter, double threshold) {
  return predict_masks(sample.image.unsqueeze(0), segmenter, threshold)[0];
}

torch::Tensor masked_seg_loss(const torch::Tensor& logits, const torch::Tensor& target_mask, const torch::Tensor& fn_map,
                              const SegLossWeights& weights) {
  if (!fn_map.sizes().equals(target_mask.sizes())) throw ShapeError("masked_seg_loss: fn_map shape differs from target");
  auto fn = fn_map.to(torch::kFloat64);
  if (fn.gt(target_mask.to(torch::kFloat64)).any().item<bool>()) {
    throw ContractError("masked_seg_loss: fn_map marks background pixels");
  }
  return weighted_seg_loss(logits, target_mask, 1 - fn_map.to(torch::kUInt8), weights).total;
}

}  // namespace pathopaint
