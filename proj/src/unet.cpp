#include "pathopaint/unet.hpp"

#include "pathopaint/errors.hpp"

namespace pathopaint {

namespace nn = torch::nn;

std::int64_t norm_groups(std::int64_t channels) {
  for (std::int64_t g : {8, 4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

ConvBlockImpl::ConvBlockImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t embed_dim) {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
  norm1 = register_module("norm1", nn::GroupNorm(nn::GroupNormOptions(norm_groups(out_ch), out_ch)));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
  norm2 = register_module("norm2", nn::GroupNorm(nn::GroupNormOptions(norm_groups(out_ch), out_ch)));
  if (in_ch != out_ch) skip = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 1)));
  if (embed_dim > 0) emb_proj = register_module("emb_proj", nn::Linear(embed_dim, out_ch));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
  auto h = torch::silu(norm1(conv1(x)));
  if (emb_proj) h = h + emb_proj(torch::silu(emb)).unsqueeze(-1).unsqueeze(-1);
  h = torch::silu(norm2(conv2(h)));
  return h + (skip ? skip(x) : x);
}

UNetImpl::UNetImpl(const UNetOptions& options) : options_(options) {
  if (options.depth < 1 || options.base_width < 1 || options.in_channels < 1 || options.out_channels < 1) {
    throw ParameterError("UNet: depth, width and channel counts must be positive");
  }
  down_blocks = register_module("down", nn::ModuleList());
  up_blocks = register_module("up", nn::ModuleList());
  std::int64_t in_ch = options.in_channels;
  for (std::int64_t level = 0; level < options.depth; ++level) {
    const auto width = options.base_width << level;
    down_blocks->push_back(ConvBlock(in_ch, width, options.embed_dim));
    in_ch = width;
  }
  middle = register_module("middle", ConvBlock(in_ch, in_ch, options.embed_dim));
  for (std::int64_t level = options.depth - 2; level >= 0; --level) {
    const auto width = options.base_width << level;
    up_blocks->push_back(ConvBlock(in_ch + width, width, options.embed_dim));
    in_ch = width;
  }
  head = register_module("head", nn::Conv2d(nn::Conv2dOptions(in_ch, options.out_channels, 1)));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
  const auto factor = std::int64_t{1} << (options_.depth - 1);
  if (x.dim() != 4 || x.size(1) != options_.in_channels) {
    throw ShapeError("UNet: expected input [B," + std::to_string(options_.in_channels) + ",H,W]");
  }
  if (x.size(2) % factor != 0 || x.size(3) % factor != 0) {
    throw ShapeError("UNet: spatial dims must be divisible by " + std::to_string(factor));
  }
  if (options_.embed_dim > 0 && (!emb.defined() || emb.dim() != 2 || emb.size(1) != options_.embed_dim)) {
    throw ShapeError("UNet: expected embedding [B," + std::to_string(options_.embed_dim) + "]");
  }

  std::vector<torch::Tensor> skips;
  auto h = x;
  for (std::size_t i = 0; i < down_blocks->size(); ++i) {
    h = down_blocks[i]->as<ConvBlock>()->forward(h, emb);
    if (i + 1 < down_blocks->size()) {
      skips.push_back(h);
      h = torch::avg_pool2d(h, 2);
    }
  }
  h = middle->forward(h, emb);
  for (std::size_t i = 0; i < up_blocks->size(); ++i) {
    auto skip = skips.back();
    skips.pop_back();
    h = torch::upsample_nearest2d(h, {skip.size(2), skip.size(3)});
    h = up_blocks[i]->as<ConvBlock>()->forward(torch::cat({h, skip}, 1), emb);
  }
  return head(h);
}

}  // namespace pathopaint
