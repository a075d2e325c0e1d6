#include "pathopaint/seg_losses.hpp"

#include "pathopaint/errors.hpp"
#include "pathopaint/sample.hpp"

namespace pathopaint {

torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& target, double smooth) {
  if (!probs.sizes().equals(target.sizes())) throw ShapeError("dice_loss: probs and target shapes differ");
  auto t = target.to(probs.scalar_type());
  auto inter = (probs * t).sum();
  return 1.0 - (2.0 * inter + smooth) / (probs.sum() + t.sum() + smooth);
}

SegLossTerms weighted_seg_loss(const torch::Tensor& logits, const torch::Tensor& target, const torch::Tensor& include,
                               const SegLossWeights& weights) {
  const bool single = logits.dim() == 3;
  auto lg = single ? logits.unsqueeze(0) : logits;
  auto tg = single ? target.unsqueeze(0) : target;
  auto in = single ? include.unsqueeze(0) : include;
  if (lg.dim() != 4 || lg.size(1) != 2) throw ShapeError("seg loss: logits must be [B,2,H,W]");
  const std::vector<std::int64_t> pix{lg.size(0), lg.size(2), lg.size(3)};
  if (!tg.sizes().equals(pix)) throw ShapeError("seg loss: target must be [B,H,W] matching logits");
  if (!in.sizes().equals(pix)) throw ShapeError("seg loss: exclusion map must be [B,H,W] matching logits");

  const auto type = lg.scalar_type();
  auto w = in.to(type);
  const auto included = w.sum();
  if (included.item<double>() <= 0.0) throw DegenerateLossError("seg loss: every pixel is excluded");

  auto target_long = tg.to(torch::kLong);
  auto log_probs = torch::log_softmax(lg, 1);
  auto ce_pix = -log_probs.gather(1, target_long.unsqueeze(1)).squeeze(1);
  auto ce = (ce_pix * w).sum() / included;

  auto fg_prob = torch::softmax(lg, 1).select(1, 1);
  auto dice = dice_loss(fg_prob * w, tg.to(type) * w, weights.smooth);

  return {ce, dice, weights.cross_entropy * ce + weights.dice * dice};
}

SegLossTerms seg_loss_terms(const torch::Tensor& logits, const torch::Tensor& target, const SegLossWeights& weights) {
  return weighted_seg_loss(logits, target, torch::ones(target.sizes(), logits.scalar_type()), weights);
}

torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target, const SegLossWeights& weights) {
  return seg_loss_terms(logits, target, weights).total;
}

}  // namespace pathopaint
