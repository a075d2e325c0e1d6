#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "pathopaint/unet.hpp"

namespace pathopaint {

// ---------------------------------------------------------------------------------------------
// Noise schedule
// ---------------------------------------------------------------------------------------------

enum class ScheduleKind { linear, cosine };

/// Precomputed DDPM coefficients over T steps, indexed by t in [0, T).
struct NoiseSchedule {
  std::int64_t num_steps = 0;
  std::vector<double> betas;
  std::vector<double> alphas;      // 1 - beta_t
  std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s
  ScheduleKind kind = ScheduleKind::linear;

  torch::Tensor alpha_bar_tensor() const;  // float64 [T]
};

/// Linear: betas evenly spaced from beta_start to beta_end.
/// Cosine: the squared-cosine cumulative schedule, betas clamped into [beta_start, beta_end].
NoiseSchedule make_noise_schedule(std::int64_t num_steps, double beta_start, double beta_end,
                                  ScheduleKind kind = ScheduleKind::linear);

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// z_t = sqrt(alpha_bar_t) * z_0 + sqrt(1 - alpha_bar_t) * eps.
torch::Tensor forward_diffuse(const torch::Tensor& z0, std::int64_t t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule);

/// Batched variant: z0/eps are [B, ...], t is an integer tensor [B].
torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule);

// ---------------------------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------------------------

/// Full denoiser input for one sample.
///   z_t, z_bg: [C,h,w]; z_m: [1,h,w] binary; v_fg: [d]; t in [0, T).
struct ConditioningBundle {
  torch::Tensor z_t;
  torch::Tensor z_bg;
  torch::Tensor z_m;
  torch::Tensor v_fg;
  std::int64_t t = 0;
};

/// Throws ShapeError/ContractError when a bundle breaks its invariants. `num_steps` <= 0 skips
/// the timestep range check.
void validate_bundle(const ConditioningBundle& bundle, std::int64_t num_steps);

/// Batched bundle: z_t/z_bg [B,C,h,w], z_m [B,1,h,w], v_fg [B,d], t int64 [B].
struct BundleBatch {
  torch::Tensor z_t;
  torch::Tensor z_bg;
  torch::Tensor z_m;
  torch::Tensor v_fg;
  torch::Tensor t;

  std::int64_t size() const { return z_t.size(0); }
};

BundleBatch collate(std::span<const ConditioningBundle> bundles);

// ---------------------------------------------------------------------------------------------
// Denoisers
// ---------------------------------------------------------------------------------------------

/// eps_theta(z_t, z_bg, v_fg, z_m, t).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual torch::Tensor predict_noise(const BundleBatch& batch) = 0;
  virtual std::int64_t latent_channels() const = 0;
  virtual std::int64_t embedding_dim() const = 0;
};

/// Sinusoidal timestep features [B, dim] for integer timesteps t [B].
torch::Tensor timestep_embedding(const torch::Tensor& t, std::int64_t dim);

struct DenoiserOptions {
  std::int64_t latent_channels = 4;
  std::int64_t embedding_dim = 32;
  std::int64_t base_width = 32;
  std::int64_t depth = 3;
};

struct DenoiserNetImpl : torch::nn::Module {
  explicit DenoiserNetImpl(const DenoiserOptions& options);
  torch::Tensor forward(const BundleBatch& batch);

  DenoiserOptions options;
  torch::nn::Linear time_fc1{nullptr}, time_fc2{nullptr}, fg_proj{nullptr};
  UNet unet{nullptr};
};
TORCH_MODULE(DenoiserNet);

/// Trainable conditional U-Net denoiser. Input channels 2C+1 (z_t, z_bg, z_m); the timestep
/// embedding and a learned projection of v_fg are summed and injected into every block.
class ConditionalDenoiser final : public Denoiser {
 public:
  ConditionalDenoiser(const DenoiserOptions& options, std::uint64_t seed);

  torch::Tensor predict_noise(const BundleBatch& batch) override;
  std::int64_t latent_channels() const override { return net_->options.latent_channels; }
  std::int64_t embedding_dim() const override { return net_->options.embedding_dim; }
  const DenoiserOptions& options() const { return net_->options; }

  DenoiserNet& net() { return net_; }

  /// "PPDM" container; header = [T, C, d, width, depth].
  void save(const std::filesystem::path& path, std::int64_t num_steps) const;
  static ConditionalDenoiser load(const std::filesystem::path& path, std::int64_t* num_steps = nullptr);

 private:
  DenoiserNet net_{nullptr};
};

/// Plain LDM-style denoiser eps_theta(z_t, c, t) with one generic condition tensor.
class GenericDenoiser {
 public:
  virtual ~GenericDenoiser() = default;
  /// z_t [B,C,h,w], c [B,Cc,h,w], t int64 [B].
  virtual torch::Tensor predict_noise(const torch::Tensor& z_t, const torch::Tensor& c, const torch::Tensor& t) = 0;
};

struct BaselineNetImpl : torch::nn::Module {
  BaselineNetImpl(std::int64_t latent_channels, std::int64_t condition_channels, std::int64_t base_width);
  torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& c, const torch::Tensor& t);

  std::int64_t latent_channels, condition_channels, base_width;
  torch::nn::Linear time_fc1{nullptr}, time_fc2{nullptr};
  UNet unet{nullptr};
};
TORCH_MODULE(BaselineNet);

/// Generic-condition denoiser: c is concatenated to z_t at the input.
class ConcatConditionDenoiser final : public GenericDenoiser {
 public:
  ConcatConditionDenoiser(std::int64_t latent_channels, std::int64_t condition_channels, std::int64_t base_width,
                          std::uint64_t seed);
  torch::Tensor predict_noise(const torch::Tensor& z_t, const torch::Tensor& c, const torch::Tensor& t) override;
  BaselineNet& net() { return net_; }

 private:
  BaselineNet net_{nullptr};
};

// ---------------------------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------------------------

using TrainingExample = std::pair<ConditioningBundle, torch::Tensor>;  // (bundle, eps_true)

/// Mean over the batch of the squared residual ||eps_true - eps_theta||^2, normalized per
/// latent element. Differentiable w.r.t. the denoiser parameters.
torch::Tensor training_loss(std::span<const TrainingExample> batch, Denoiser& denoiser);
torch::Tensor training_loss(const BundleBatch& batch, const torch::Tensor& eps_true, Denoiser& denoiser);

struct BaselineExample {
  torch::Tensor z_t;  // [C,h,w]
  torch::Tensor c;    // [Cc,h,w]
  torch::Tensor eps;  // [C,h,w]
  std::int64_t t = 0;
};

/// Same objective with a single generic condition c.
torch::Tensor baseline_loss(std::span<const BaselineExample> batch, GenericDenoiser& denoiser);

// ---------------------------------------------------------------------------------------------
// Reverse sampling
// ---------------------------------------------------------------------------------------------

/// Fixed conditioning for generation: everything except z_t.
struct BundleTemplate {
  torch::Tensor z_bg;  // [C,h,w]
  torch::Tensor z_m;   // [1,h,w]
  torch::Tensor v_fg;  // [d]
};

enum class SamplerKind { ancestral, ddim };

struct SamplerOptions {
  SamplerKind kind = SamplerKind::ancestral;
  // DDIM only: visit every stride-th timestep.
  std::int64_t stride = 1;
};

SamplerKind parse_sampler_kind(const std::string& name);

/// Starts from unit Gaussian z_T drawn from `seed` and runs the reverse chain with the
/// template's conditioning held fixed. Returns z_0_hat [C,h,w].
torch::Tensor sample_reverse(const BundleTemplate& tmpl, const NoiseSchedule& schedule, Denoiser& denoiser,
                             std::uint64_t seed, const SamplerOptions& sampler = {});

/// Batched reverse chain; sample i draws all of its noise from seeds[i]. Returns [B,C,h,w].
torch::Tensor sample_reverse(std::span<const BundleTemplate> templates, std::span<const std::uint64_t> seeds,
                             const NoiseSchedule& schedule, Denoiser& denoiser, const SamplerOptions& sampler = {});

// ---------------------------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------------------------

/// Precomputed, codec-frozen conditioning for one training patch.
struct DiffusionExample {
  torch::Tensor z0;    // [C,h,w]
  torch::Tensor z_bg;  // [C,h,w]
  torch::Tensor z_m;   // [1,h,w]
  torch::Tensor v_fg;  // [d]
};

struct DiffusionTrainConfig {
  std::int64_t steps = 2000;
  std::int64_t batch_size = 16;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
};

struct DiffusionTrainReport {
  std::vector<double> losses;  // one per optimizer step
};

/// Adam on the Eq.-2 objective; t is drawn uniformly per sample. `on_step` (optional) is called
/// after every optimizer step with the step index.
DiffusionTrainReport train_diffusion(ConditionalDenoiser& denoiser, std::span<const DiffusionExample> examples,
                                     const NoiseSchedule& schedule, const DiffusionTrainConfig& config,
                                     const std::function<void(std::int64_t)>& on_step = {});

}  // namespace pathopaint
