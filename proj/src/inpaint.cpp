#include "pathopaint/inpaint.hpp"

#include <cmath>
#include <cstdio>

#include "pathopaint/errors.hpp"
#include "pathopaint/seeding.hpp"

namespace pathopaint {

namespace {

torch::Tensor embedding_tensor(const RegionalEmbedding& e) {
  return torch::tensor(e.vector, torch::kFloat32);
}

}  // namespace

PreparedConditioning prepare_conditioning(const PatchSample& patch, const LatentCodec& codec,
                                          const RegionalEmbedding& embedding, const NoiseSchedule& schedule,
                                          std::uint64_t seed, double min_fg_fraction) {
  validate_sample(patch);
  if (foreground_pixels(patch) == 0 || foreground_fraction(patch) < min_fg_fraction) {
    throw ContractError("prepare_conditioning: patch '" + patch.patch_id + "' has too little foreground");
  }
  auto ex = make_diffusion_example(patch, codec, embedding);
  auto gen = make_generator(seed);
  const auto t = torch::randint(0, schedule.num_steps, {1}, gen, torch::kLong).item<std::int64_t>();
  auto eps = torch::randn(ex.z0.sizes(), gen, torch::kFloat32);
  PreparedConditioning out;
  out.bundle = {forward_diffuse(ex.z0, t, eps, schedule), ex.z_bg, ex.z_m, ex.v_fg, t};
  out.eps = eps;
  out.z0 = ex.z0;
  return out;
}

DiffusionExample make_diffusion_example(const PatchSample& patch, const LatentCodec& codec,
                                        const RegionalEmbedding& embedding) {
  return {codec.encode(patch.image), codec.encode(mask_background(patch.image, patch.mask)),
          downsample_mask(patch.mask, codec.downsample_factor()), embedding_tensor(embedding)};
}

BundleTemplate make_template(const PatchSample& recipient, const LatentCodec& codec, const RegionalEmbedding& donor) {
  return {codec.encode(mask_background(recipient.image, recipient.mask)),
          downsample_mask(recipient.mask, codec.downsample_factor()), embedding_tensor(donor)};
}

std::string synthetic_patch_id(std::size_t index, const std::string& recipient_patch_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "syn%05zu-", index);
  return buf + recipient_patch_id;
}

std::vector<SyntheticPair> generate_pairs(std::span<const GenerationRequest> requests, const EmbeddingBank& bank,
                                          const LatentCodec& codec, Denoiser& denoiser, const NoiseSchedule& schedule,
                                          const GenerationOptions& options) {
  if (options.batch_size < 1) throw ParameterError("generate: batch size must be >= 1");
  std::vector<SyntheticPair> out;
  out.reserve(requests.size());
  for (std::size_t start = 0; start < requests.size(); start += static_cast<std::size_t>(options.batch_size)) {
    const auto end = std::min(requests.size(), start + static_cast<std::size_t>(options.batch_size));
    std::vector<BundleTemplate> templates;
    std::vector<std::uint64_t> seeds;
    std::vector<SyntheticPair> pending;
    for (auto i = start; i < end; ++i) {
      const auto& req = requests[i];
      const auto& recipient = *req.recipient;
      validate_sample(recipient);
      const auto* entry = bank.find(recipient.patch_id);
      if (entry == nullptr) {
        throw ContractError("generate_pair: recipient '" + recipient.patch_id + "' has no bank entry");
      }
      auto donor = draw_donor(bank, *entry, derive_seed(req.seed, "donor"), options.fallback);
      templates.push_back(make_template(recipient, codec, donor.embedding));
      seeds.push_back(derive_seed(req.seed, "reverse"));

      SyntheticPair pair;
      pair.donor_patch_id = donor.embedding.patch_id;
      pair.recipient_patch_id = recipient.patch_id;
      pair.cluster_id = donor.embedding.cluster_id;
      pair.fallback = donor.fallback;
      pair.seed = req.seed;
      pair.sample.source_image_id = recipient.source_image_id;
      pair.sample.patch_id = req.patch_id;
      pair.sample.origin = Origin::synthetic;
      pair.sample.family = recipient.family;
      pending.push_back(std::move(pair));
    }
    auto latents = sample_reverse(templates, seeds, schedule, denoiser, options.sampler);
    auto decoded = codec.decode(latents);
    for (std::size_t j = 0; j < pending.size(); ++j) {
      const auto& recipient = *requests[start + j].recipient;
      auto raw = decoded[static_cast<std::int64_t>(j)];
      auto bg = recipient.mask.eq(0).unsqueeze(0).expand_as(raw);
      const auto n_bg = bg.sum().item<double>();
      auto& pair = pending[j];
      pair.raw_background_mae = n_bg > 0 ? (raw - recipient.image).abs().masked_select(bg).sum().item<double>() / n_bg : 0.0;
      pair.sample.image = composite_background(raw, recipient.image, recipient.mask);
      pair.sample.mask = recipient.mask.clone();
      out.push_back(std::move(pair));
    }
  }
  return out;
}

SyntheticPair generate_pair(const PatchSample& recipient, const EmbeddingBank& bank, const LatentCodec& codec,
                            Denoiser& denoiser, const NoiseSchedule& schedule, std::uint64_t seed,
                            const GenerationOptions& options) {
  const GenerationRequest req{&recipient, seed, recipient.patch_id + "-syn"};
  return std::move(generate_pairs(std::span<const GenerationRequest>(&req, 1), bank, codec, denoiser, schedule,
                                  options)
                       .front());
}

AugmentResult augment_dataset(const Dataset& real, double ratio, const EmbeddingBank& bank, const LatentCodec& codec,
                              Denoiser& denoiser, const NoiseSchedule& schedule, std::uint64_t seed,
                              const GenerationOptions& options) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw ParameterError("augment_dataset: ratio must be >= 0");
  AugmentResult result;
  result.dataset = real;

  std::vector<const PatchSample*> eligible;
  for (const auto& p : real) {
    if (bank.find(p.patch_id) != nullptr) eligible.push_back(&p);
  }
  std::stable_sort(eligible.begin(), eligible.end(),
                   [](const PatchSample* a, const PatchSample* b) { return a->patch_id < b->patch_id; });
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(eligible.size())));
  if (count == 0) return result;

  std::vector<GenerationRequest> requests;
  requests.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto* recipient = eligible[i % eligible.size()];
    auto id = synthetic_patch_id(i, recipient->patch_id);
    requests.push_back({recipient, derive_seed(seed, id), id});
  }
  result.synthetic = generate_pairs(requests, bank, codec, denoiser, schedule, options);
  for (const auto& pair : result.synthetic) result.dataset.push_back(pair.sample);
  return result;
}

}  // namespace pathopaint
