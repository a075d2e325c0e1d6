#pragma once

#include <torch/torch.h>

namespace pathopaint {

/// 1 - (2 sum(p t) + smooth) / (sum(p) + sum(t) + smooth), over all elements.
torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& target, double smooth = 1.0);

struct SegLossWeights {
  double cross_entropy = 0.5;
  double dice = 0.5;
  double smooth = 1.0;
};

struct SegLossTerms {
  torch::Tensor cross_entropy;
  torch::Tensor dice;
  torch::Tensor total;
};

/// Two-class segmentation loss over the pixels where `include` is 1.
///   logits [B,2,H,W] (or [2,H,W]); target and include [B,H,W] (or [H,W]) in {0,1}.
/// Cross-entropy is averaged over included pixels; Dice uses the foreground probability with
/// excluded pixels zeroed in both prediction and target. Throws DegenerateLossError when no
/// pixel is included. Works in the dtype of `logits`.
SegLossTerms weighted_seg_loss(const torch::Tensor& logits, const torch::Tensor& target, const torch::Tensor& include,
                               const SegLossWeights& weights = {});

/// Unfiltered loss: every pixel included.
SegLossTerms seg_loss_terms(const torch::Tensor& logits, const torch::Tensor& target, const SegLossWeights& weights = {});
torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target, const SegLossWeights& weights = {});

}  // namespace pathopaint
