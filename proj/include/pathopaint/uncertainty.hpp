#pragma once

#include <span>

#include <torch/torch.h>

#include "pathopaint/sample.hpp"
#include "pathopaint/seg_losses.hpp"

namespace pathopaint {

/// False-negative map of a pretrained segmenter on a synthetic patch. All fields uint8 [H,W].
struct UncertainMask {
  torch::Tensor fn_map;     // 1 = uncertain, excluded from the loss
  torch::Tensor predicted;  // P
  torch::Tensor mask;       // ground truth m
};

/// fn_map = m - (m AND P): foreground pixels the segmenter did not call foreground.
UncertainMask compute_uncertain(const torch::Tensor& mask, const torch::Tensor& predicted);

/// Anything that yields per-pixel foreground probabilities.
class ForegroundPredictor {
 public:
  virtual ~ForegroundPredictor() = default;
  /// images [B,3,H,W] -> probabilities [B,H,W].
  virtual torch::Tensor foreground_probability(const torch::Tensor& images) = 0;
  virtual bool is_trained() const = 0;
};

/// P = (foreground probability >= threshold), uint8 [H,W].
torch::Tensor predict_with_pretrained(const PatchSample& sample, ForegroundPredictor& segmenter, double threshold = 0.5);

/// Batched prediction, uint8 [B,H,W].
torch::Tensor predict_masks(const torch::Tensor& images, ForegroundPredictor& segmenter, double threshold = 0.5);

/// Segmentation loss with fn_map pixels removed from both terms.
torch::Tensor masked_seg_loss(const torch::Tensor& logits, const torch::Tensor& target_mask, const torch::Tensor& fn_map,
                              const SegLossWeights& weights = {});

}  // namespace pathopaint
