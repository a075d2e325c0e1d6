#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "pathopaint/inpaint.hpp"
#include "pathopaint/sample.hpp"
#include "pathopaint/seg_losses.hpp"
#include "pathopaint/uncertainty.hpp"
#include "pathopaint/unet.hpp"

namespace pathopaint {

struct SegModelOptions {
  std::int64_t depth = 3;
  std::int64_t base_width = 16;
};

/// Two-class (background/foreground) encoder-decoder segmenter.
class SegModel final : public ForegroundPredictor {
 public:
  explicit SegModel(const SegModelOptions& options = {}, std::uint64_t seed = 0);

  /// [B,3,H,W] -> logits [B,2,H,W]; builds a graph unless called under NoGradGuard.
  torch::Tensor logits(const torch::Tensor& images);
  torch::Tensor foreground_probability(const torch::Tensor& images) override;
  bool is_trained() const override { return trained_; }
  void set_trained(bool trained) { trained_ = trained; }

  const SegModelOptions& options() const { return options_; }
  UNet& net() { return net_; }

  /// Deep copy of the parameters.
  SegModel clone() const;

  /// "PPSG" container; header = [depth, width, classes, trained].
  void save(const std::filesystem::path& path) const;
  static SegModel load(const std::filesystem::path& path);

 private:
  SegModelOptions options_;
  UNet net_{nullptr};
  bool trained_ = false;
};

struct SegTrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 12;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool augment = true;
  double color_jitter = 0.1;
  bool filter_synthetic = true;
  // Used only when no validation set is given: fraction of real patches held out.
  double val_fraction = 0.15;
  SegLossWeights loss;
  SegModelOptions model;
};

struct SegTrainResult {
  SegModel model;  // checkpoint with the lowest validation loss
  std::vector<double> train_losses;  // mean batch loss per epoch
  std::vector<double> val_losses;    // per epoch
  int best_epoch = -1;
};

/// Mixed real/synthetic training. Real samples use every pixel; synthetic samples drop their
/// fn_map pixels when `filter_synthetic` is set and an uncertain map is present. Batches are
/// drawn from a uniform shuffle of the merged set. Flip/rot90 act jointly on image, mask and
/// exclusion map; color jitter acts on the image only.
SegTrainResult train_segmentation(const Dataset& real, std::span<const SyntheticPair> synthetic,
                                  const Dataset& validation, const SegTrainConfig& config);

/// Unfiltered mean segmentation loss over a dataset in eval mode.
double dataset_seg_loss(SegModel& model, const Dataset& samples, const SegLossWeights& weights = {},
                        std::int64_t batch_size = 16);

enum class VarianceKind { population, sample };

struct SegMetrics {
  std::vector<double> per_sample_iou;  // in input order
  double mean_iou = 0.0;
  double variance = 0.0;
};

/// |P and m| / |P or m|; 1 when both are empty.
double foreground_iou(const torch::Tensor& predicted, const torch::Tensor& mask);

/// Mean and variance of per-sample scores, computed over the sorted values so the result does
/// not depend on sample order.
SegMetrics summarize_iou(std::vector<double> per_sample, VarianceKind kind = VarianceKind::population);

SegMetrics evaluate_iou(ForegroundPredictor& model, const Dataset& test, double threshold = 0.5,
                        VarianceKind kind = VarianceKind::population, std::int64_t batch_size = 16);

}  // namespace pathopaint
