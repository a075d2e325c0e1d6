#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "pathopaint/sample.hpp"

namespace pathopaint {

enum class CodecMode { identity, learned };

CodecMode parse_codec_mode(const std::string& name);
std::string to_string(CodecMode mode);

struct CodecOptions {
  CodecMode mode = CodecMode::learned;
  // Spatial downsampling factor; a power of two. Identity mode forces 1.
  std::int64_t downsample_factor = 4;
  std::int64_t latent_channels = 4;
  std::int64_t base_width = 32;
};

struct CodecNetImpl : torch::nn::Module {
  explicit CodecNetImpl(const CodecOptions& options);

  torch::nn::Sequential encoder{nullptr};
  torch::nn::Sequential decoder{nullptr};
  // Multiplier that brings latents to roughly unit variance; fitted after pretraining.
  torch::Tensor latent_scale;
};
TORCH_MODULE(CodecNet);

/// Image <-> latent codec with a fixed downsampling factor.
///
/// Images are float [3,H,W] (or batched [B,3,H,W]) in [0,1]; latents are [C,H/f,W/f].
/// encode/decode never build autograd graphs and are safe to call concurrently once frozen.
class LatentCodec {
 public:
  explicit LatentCodec(const CodecOptions& options = {}, std::uint64_t seed = 0);
  static LatentCodec identity();

  torch::Tensor encode(const torch::Tensor& image) const;
  torch::Tensor decode(const torch::Tensor& latent) const;

  /// Decoder output before the [0,1] clamp, with autograd; used by pretraining.
  torch::Tensor reconstruct_unclamped(const torch::Tensor& images) const;

  CodecMode mode() const { return options_.mode; }
  std::int64_t downsample_factor() const { return options_.downsample_factor; }
  std::int64_t latent_channels() const { return options_.latent_channels; }
  const CodecOptions& options() const { return options_; }

  bool frozen() const { return frozen_; }
  void freeze();
  void unfreeze();

  /// Flattened copy of every parameter and buffer (for frozen-codec checks).
  std::vector<float> parameter_snapshot() const;

  CodecNet& net() { return net_; }

  /// "PPVC" container; header = [mode, f, C, width].
  void save(const std::filesystem::path& path) const;
  static LatentCodec load(const std::filesystem::path& path);

 private:
  CodecOptions options_;
  mutable CodecNet net_{nullptr};
  bool frozen_ = false;
};

struct CodecTrainConfig {
  std::int64_t epochs = 20;
  std::int64_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct CodecTrainReport {
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // mean training reconstruction loss per epoch
};

/// Trains a learned codec as a plain autoencoder (L1 + MSE) and freezes it afterwards.
/// epochs == 0 leaves the parameters untouched.
CodecTrainReport pretrain_codec(LatentCodec& codec, const Dataset& corpus, const CodecTrainConfig& config);

/// Mean absolute error of decode(encode(x)) over a dataset, in [0,1] units.
double reconstruction_mae(const LatentCodec& codec, const Dataset& samples);

}  // namespace pathopaint
