#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "pathopaint/extractor.hpp"
#include "pathopaint/sample.hpp"

namespace pathopaint {

/// Mask-pooled foreground embedding of one patch.
struct RegionalEmbedding {
  std::vector<float> vector;
  std::string source_image_id;
  std::string patch_id;
  std::int32_t cluster_id = -1;  // -1 = unassigned
  std::uint64_t fg_pixel_count = 0;
};

/// All regional embeddings of a training set plus their K-means grouping.
struct EmbeddingBank {
  std::vector<RegionalEmbedding> embeddings;  // sorted by patch_id
  std::int32_t k = 0;                         // 0 = not clustered
  std::vector<double> centroids;              // k*d, row-major
  std::uint64_t seed = 0;
  bool normalized = false;
  // Diagnostics from the last clustering run (not persisted).
  std::vector<double> inertia_history;
  bool converged = false;

  std::size_t size() const { return embeddings.size(); }
  std::size_t dim() const { return embeddings.empty() ? 0 : embeddings.front().vector.size(); }
  bool clustered() const { return k > 0; }
  const RegionalEmbedding* find(std::string_view patch_id) const;
  std::span<const double> centroid(std::int32_t cluster) const;
};

/// Mean feature vector over the cells that are active after max-pool downsampling of `mask`
/// by `stride`. feature_map [d,h,w], mask [H,W] binary with H = h*stride. Returns float32 [d].
torch::Tensor mask_pool(const torch::Tensor& feature_map, const torch::Tensor& mask, std::int64_t stride);

/// One embedding per patch with foreground fraction >= min_fg_fraction, in patch_id order.
/// With `normalize`, vectors are scaled to unit L2 norm.
EmbeddingBank build_bank(const Dataset& dataset, const FeatureExtractor& extractor, double min_fg_fraction = 0.01,
                         bool normalize = true);

/// Lloyd's algorithm with k-means++ seeding over the bank vectors.
EmbeddingBank cluster_bank(EmbeddingBank bank, std::int32_t k, std::uint64_t seed, int max_iters = 100);

enum class FallbackPolicy { error, nearest_other_cluster, reuse_self };

FallbackPolicy parse_fallback_policy(const std::string& name);
std::string to_string(FallbackPolicy policy);

struct DonorDraw {
  RegionalEmbedding embedding;
  // True when the donor came from the fallback policy rather than the query's own cluster.
  bool fallback = false;
};

/// Uniform draw among embeddings in the query's cluster whose source image differs from the
/// query's. When the cluster has no such member the policy decides:
///   error                  -> ExhaustedClusterError
///   nearest_other_cluster  -> same rule applied to the other clusters in order of centroid distance
///   reuse_self             -> the query itself
DonorDraw draw_donor(const EmbeddingBank& bank, const RegionalEmbedding& query, std::uint64_t rng_seed,
                     FallbackPolicy policy = FallbackPolicy::nearest_other_cluster);

RegionalEmbedding sample_embedding(const EmbeddingBank& bank, const RegionalEmbedding& query, std::uint64_t rng_seed,
                                   FallbackPolicy policy = FallbackPolicy::nearest_other_cluster);

/// "PPEB" bank file:
///   magic "PPEB", u32 version, u64 count, u32 d, u32 k, u64 seed, u8 normalized,
///   count x { u32 len + patch_id, u32 len + source_image_id, i32 cluster_id, u64 fg_pixel_count, d x f32 },
///   k*d x f64 centroids. All little-endian.
void write_bank(const std::filesystem::path& path, const EmbeddingBank& bank);
EmbeddingBank read_bank(const std::filesystem::path& path);

}  // namespace pathopaint
