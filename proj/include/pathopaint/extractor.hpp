#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "pathopaint/sample.hpp"

namespace pathopaint {

/// Dense feature extractor with a fixed output stride: [B,3,H,W] -> [B,d,H/s,W/s].
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual torch::Tensor feature_maps(const torch::Tensor& images) const = 0;
  virtual std::int64_t stride() const = 0;
  virtual std::int64_t feature_dim() const = 0;
};

/// Single-image convenience wrapper with the divisibility check: [3,H,W] -> [d,H/s,W/s].
torch::Tensor extract_feature_map(const torch::Tensor& image, const FeatureExtractor& extractor);

/// Seeded random linear map of each non-overlapping s x s x 3 pixel block.
/// Cell (i,j) = P * vec(block), vec order (channel, row, column); P ~ N(0, 1/(3 s^2)).
class RandomProjectionExtractor final : public FeatureExtractor {
 public:
  RandomProjectionExtractor(std::int64_t feature_dim, std::int64_t stride, std::uint64_t seed);

  torch::Tensor feature_maps(const torch::Tensor& images) const override;
  std::int64_t stride() const override { return stride_; }
  std::int64_t feature_dim() const override { return dim_; }

  /// float64 [d, 3*s*s].
  const torch::Tensor& projection() const { return projection_; }

 private:
  std::int64_t dim_;
  std::int64_t stride_;
  torch::Tensor projection_;
};

struct ConvExtractorOptions {
  std::int64_t feature_dim = 32;
  std::int64_t stride = 4;  // power of two
  std::int64_t base_width = 32;
  std::int64_t projection_dim = 32;
};

struct ConvExtractorNetImpl : torch::nn::Module {
  explicit ConvExtractorNetImpl(const ConvExtractorOptions& options);

  torch::nn::Sequential backbone{nullptr};
  torch::nn::Sequential projector{nullptr};  // training-only head
};
TORCH_MODULE(ConvExtractorNet);

/// Small convolutional encoder trained by contrastive instance discrimination.
class ConvExtractor final : public FeatureExtractor {
 public:
  explicit ConvExtractor(const ConvExtractorOptions& options = {}, std::uint64_t seed = 0);

  torch::Tensor feature_maps(const torch::Tensor& images) const override;
  std::int64_t stride() const override { return options_.stride; }
  std::int64_t feature_dim() const override { return options_.feature_dim; }
  const ConvExtractorOptions& options() const { return options_; }

  ConvExtractorNet& net() { return net_; }

  /// "PPFX" container; header = [d, s, width, projection_dim].
  void save(const std::filesystem::path& path) const;
  static ConvExtractor load(const std::filesystem::path& path);

 private:
  ConvExtractorOptions options_;
  mutable ConvExtractorNet net_{nullptr};
};

struct ExtractorTrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  double learning_rate = 1e-3;
  double temperature = 0.2;
  double jitter = 0.1;
  std::uint64_t seed = 0;
};

struct ExtractorTrainReport {
  std::vector<double> epoch_losses;
};

/// NT-Xent over two augmented views (dihedral transform, color jitter, pixel noise) of each
/// patch, with features averaged over the patch's foreground (whole patch when it has none).
ExtractorTrainReport train_extractor_contrastive(ConvExtractor& extractor, const Dataset& corpus,
                                                 const ExtractorTrainConfig& config);

}  // namespace pathopaint
