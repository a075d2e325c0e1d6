#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pathopaint/codec.hpp"
#include "pathopaint/diffusion.hpp"
#include "pathopaint/embedding_bank.hpp"
#include "pathopaint/masks.hpp"
#include "pathopaint/sample.hpp"
#include "pathopaint/uncertainty.hpp"

namespace pathopaint {

struct PreparedConditioning {
  ConditioningBundle bundle;
  torch::Tensor eps;  // noise used to build bundle.z_t
  torch::Tensor z0;   // encode(x)
};

/// Builds one training example: z_0 = encode(x), z_bg = encode(x * (1 - m)), z_m = downsampled m,
/// v_fg from `embedding`, t ~ U[0,T) and eps ~ N(0,1) from `seed`.
PreparedConditioning prepare_conditioning(const PatchSample& patch, const LatentCodec& codec,
                                          const RegionalEmbedding& embedding, const NoiseSchedule& schedule,
                                          std::uint64_t seed, double min_fg_fraction = 0.01);

/// Noise-free conditioning used by the diffusion trainer.
DiffusionExample make_diffusion_example(const PatchSample& patch, const LatentCodec& codec,
                                        const RegionalEmbedding& embedding);

/// Generation-time conditioning: the recipient's background and mask with a donor's embedding.
BundleTemplate make_template(const PatchSample& recipient, const LatentCodec& codec, const RegionalEmbedding& donor);

struct SyntheticPair {
  PatchSample sample;  // origin = synthetic; mask copied from the recipient
  std::string donor_patch_id;
  std::string recipient_patch_id;
  std::int32_t cluster_id = -1;  // donor's cluster
  bool fallback = false;         // donor chosen by the exhausted-cluster policy
  std::uint64_t seed = 0;
  // Mean absolute difference to the recipient outside the mask before compositing.
  double raw_background_mae = 0.0;
  std::optional<UncertainMask> uncertain;
};

struct GenerationOptions {
  FallbackPolicy fallback = FallbackPolicy::nearest_other_cluster;
  SamplerOptions sampler;
  std::int64_t batch_size = 16;
};

/// One request for batched generation.
struct GenerationRequest {
  const PatchSample* recipient = nullptr;
  std::uint64_t seed = 0;
  std::string patch_id;  // id given to the synthetic sample
};

/// Draws a donor embedding from the recipient's cluster, runs the reverse chain on the
/// recipient's background latent and mask, decodes, and composites the original background back.
SyntheticPair generate_pair(const PatchSample& recipient, const EmbeddingBank& bank, const LatentCodec& codec,
                            Denoiser& denoiser, const NoiseSchedule& schedule, std::uint64_t seed,
                            const GenerationOptions& options = {});

std::vector<SyntheticPair> generate_pairs(std::span<const GenerationRequest> requests, const EmbeddingBank& bank,
                                          const LatentCodec& codec, Denoiser& denoiser, const NoiseSchedule& schedule,
                                          const GenerationOptions& options = {});

struct AugmentResult {
  Dataset dataset;                       // real samples followed by synthetic ones
  std::vector<SyntheticPair> synthetic;  // provenance for every appended sample
};

/// Appends round(ratio * |eligible|) synthetic pairs, where eligible real patches are those with
/// a bank entry. Recipients are taken in patch_id order with wrap-around; each pair's seed is
/// derive_seed(seed, synthetic patch_id).
AugmentResult augment_dataset(const Dataset& real, double ratio, const EmbeddingBank& bank, const LatentCodec& codec,
                              Denoiser& denoiser, const NoiseSchedule& schedule, std::uint64_t seed,
                              const GenerationOptions& options = {});

/// Synthetic patch id for the i-th generated pair.
std::string synthetic_patch_id(std::size_t index, const std::string& recipient_patch_id);

}  // namespace pathopaint
