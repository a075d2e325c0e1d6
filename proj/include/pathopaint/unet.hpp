#pragma once

#include <torch/torch.h>

namespace pathopaint {

/// Encoder-decoder with skip connections. Used as the diffusion denoiser (with a per-sample
/// embedding injected into every block) and as the segmentation network (embed_dim = 0).
struct UNetOptions {
  std::int64_t in_channels = 3;
  std::int64_t out_channels = 2;
  std::int64_t base_width = 16;
  // Number of resolution levels; spatial input dims must be divisible by 2^(depth-1).
  std::int64_t depth = 3;
  // Width of the conditioning vector added inside each block; 0 disables it.
  std::int64_t embed_dim = 0;
};

struct ConvBlockImpl : torch::nn::Module {
  ConvBlockImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t embed_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Linear emb_proj{nullptr};
};
TORCH_MODULE(ConvBlock);

struct UNetImpl : torch::nn::Module {
  explicit UNetImpl(const UNetOptions& options);

  /// x: [B, in_channels, H, W]; emb: [B, embed_dim] or undefined when embed_dim == 0.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb = {});

  const UNetOptions& options() const { return options_; }

 private:
  UNetOptions options_;
  torch::nn::ModuleList down_blocks{nullptr};
  ConvBlock middle{nullptr};
  torch::nn::ModuleList up_blocks{nullptr};
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UNet);

/// Group count used for GroupNorm at a given width.
std::int64_t norm_groups(std::int64_t channels);

}  // namespace pathopaint
