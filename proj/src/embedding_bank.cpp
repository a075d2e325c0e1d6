#include "pathopaint/embedding_bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "pathopaint/container.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/kmeans.hpp"
#include "pathopaint/masks.hpp"

namespace pathopaint {

const RegionalEmbedding* EmbeddingBank::find(std::string_view patch_id) const {
  auto it = std::lower_bound(embeddings.begin(), embeddings.end(), patch_id,
                             [](const RegionalEmbedding& e, std::string_view id) { return e.patch_id < id; });
  if (it != embeddings.end() && it->patch_id == patch_id) return &*it;
  // Banks assembled by hand may be unsorted.
  for (const auto& e : embeddings) {
    if (e.patch_id == patch_id) return &e;
  }
  return nullptr;
}

std::span<const double> EmbeddingBank::centroid(std::int32_t cluster) const {
  const auto d = dim();
  return std::span<const double>(centroids).subspan(static_cast<std::size_t>(cluster) * d, d);
}

torch::Tensor mask_pool(const torch::Tensor& feature_map, const torch::Tensor& mask, std::int64_t stride) {
  if (feature_map.dim() != 3) throw ShapeError("mask_pool: feature map must be [d,h,w]");
  auto cells = downsample_mask(mask, stride)[0];
  if (cells.size(0) != feature_map.size(1) || cells.size(1) != feature_map.size(2)) {
    throw ShapeError("mask_pool: downsampled mask does not match the feature map");
  }
  const double count = cells.sum().item<double>();
  if (count == 0.0) throw EmptyRegionError("mask_pool: no active cells after downsampling");
  auto f = feature_map.to(torch::kFloat64);
  return ((f * cells.to(torch::kFloat64).unsqueeze(0)).sum({1, 2}) / count).to(torch::kFloat32);
}

EmbeddingBank build_bank(const Dataset& dataset, const FeatureExtractor& extractor, double min_fg_fraction,
                         bool normalize) {
  if (dataset.empty()) throw ParameterError("build_bank: empty dataset");
  std::vector<const PatchSample*> eligible;
  for (const auto& p : dataset) {
    validate_sample(p);
    if (foreground_pixels(p) > 0 && foreground_fraction(p) >= min_fg_fraction) eligible.push_back(&p);
  }
  if (eligible.empty()) throw EmptyBankError("build_bank: no patch meets the foreground threshold");
  std::stable_sort(eligible.begin(), eligible.end(),
                   [](const PatchSample* a, const PatchSample* b) { return a->patch_id < b->patch_id; });
  for (std::size_t i = 1; i < eligible.size(); ++i) {
    if (eligible[i]->patch_id == eligible[i - 1]->patch_id) {
      throw ParameterError("build_bank: duplicate patch_id '" + eligible[i]->patch_id + "'");
    }
  }

  EmbeddingBank bank;
  bank.normalized = normalize;
  constexpr std::size_t chunk = 16;
  for (std::size_t i = 0; i < eligible.size(); i += chunk) {
    const auto end = std::min(eligible.size(), i + chunk);
    std::vector<torch::Tensor> imgs;
    for (auto j = i; j < end; ++j) imgs.push_back(eligible[j]->image);
    auto maps = extractor.feature_maps(torch::stack(imgs));
    for (auto j = i; j < end; ++j) {
      const auto& p = *eligible[j];
      auto v = mask_pool(maps[static_cast<std::int64_t>(j - i)], p.mask, extractor.stride()).to(torch::kFloat64);
      if (normalize) v = v / std::max(v.norm().item<double>(), 1e-12);
      v = v.to(torch::kFloat32).contiguous();
      if (!torch::isfinite(v).all().item<bool>()) {
        throw ContractError("build_bank: non-finite embedding for '" + p.patch_id + "'");
      }
      RegionalEmbedding e;
      e.vector.assign(v.data_ptr<float>(), v.data_ptr<float>() + v.numel());
      e.source_image_id = p.source_image_id;
      e.patch_id = p.patch_id;
      e.fg_pixel_count = static_cast<std::uint64_t>(foreground_pixels(p));
      bank.embeddings.push_back(std::move(e));
    }
  }
  return bank;
}

EmbeddingBank cluster_bank(EmbeddingBank bank, std::int32_t k, std::uint64_t seed, int max_iters) {
  if (k < 1) throw ParameterError("cluster_bank: k must be positive");
  if (bank.size() < static_cast<std::size_t>(k)) {
    throw ParameterError("cluster_bank: bank of " + std::to_string(bank.size()) + " is smaller than k=" +
                         std::to_string(k));
  }
  const auto d = bank.dim();
  std::vector<double> values;
  values.reserve(bank.size() * d);
  for (const auto& e : bank.embeddings) {
    if (e.vector.size() != d) throw ShapeError("cluster_bank: embeddings have mixed dimensions");
    values.insert(values.end(), e.vector.begin(), e.vector.end());
  }
  const PointMatrix points{values, bank.size(), d};
  auto result = kmeans(points, static_cast<std::size_t>(k), seed, max_iters);
  for (std::size_t i = 0; i < bank.size(); ++i) bank.embeddings[i].cluster_id = result.assignments[i];
  bank.k = k;
  bank.seed = seed;
  bank.centroids = std::move(result.centroids);
  bank.inertia_history = std::move(result.inertia_history);
  bank.converged = result.converged;
  return bank;
}

FallbackPolicy parse_fallback_policy(const std::string& name) {
  if (name == "error") return FallbackPolicy::error;
  if (name == "nearest-other-cluster" || name == "nearest_other_cluster") return FallbackPolicy::nearest_other_cluster;
  if (name == "reuse-self" || name == "reuse_self") return FallbackPolicy::reuse_self;
  throw ParameterError("unknown fallback policy '" + name + "'");
}

std::string to_string(FallbackPolicy policy) {
  switch (policy) {
    case FallbackPolicy::error: return "error";
    case FallbackPolicy::nearest_other_cluster: return "nearest-other-cluster";
    case FallbackPolicy::reuse_self: return "reuse-self";
  }
  return "error";
}

namespace {

std::vector<std::size_t> candidates_in(const EmbeddingBank& bank, std::int32_t cluster, const std::string& source) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bank.embeddings.size(); ++i) {
    const auto& e = bank.embeddings[i];
    if (e.cluster_id == cluster && e.source_image_id != source) out.push_back(i);
  }
  return out;
}

}  // namespace

DonorDraw draw_donor(const EmbeddingBank& bank, const RegionalEmbedding& query, std::uint64_t rng_seed,
                     FallbackPolicy policy) {
  if (!bank.clustered()) throw ContractError("sample_embedding: bank is not clustered");
  if (query.cluster_id < 0 || query.cluster_id >= bank.k) {
    throw ContractError("sample_embedding: query has no cluster in this bank");
  }
  std::mt19937_64 rng(rng_seed);
  auto pick = [&](const std::vector<std::size_t>& c) {
    return bank.embeddings[c[std::uniform_int_distribution<std::size_t>(0, c.size() - 1)(rng)]];
  };

  auto same = candidates_in(bank, query.cluster_id, query.source_image_id);
  if (!same.empty()) return {pick(same), false};

  switch (policy) {
    case FallbackPolicy::error:
      break;
    case FallbackPolicy::reuse_self:
      return {query, true};
    case FallbackPolicy::nearest_other_cluster: {
      std::vector<std::int32_t> others;
      for (std::int32_t c = 0; c < bank.k; ++c) {
        if (c != query.cluster_id) others.push_back(c);
      }
      const auto home = bank.centroid(query.cluster_id);
      std::stable_sort(others.begin(), others.end(), [&](std::int32_t a, std::int32_t b) {
        return squared_distance(home, bank.centroid(a)) < squared_distance(home, bank.centroid(b));
      });
      for (auto c : others) {
        auto cand = candidates_in(bank, c, query.source_image_id);
        if (!cand.empty()) return {pick(cand), true};
      }
      break;
    }
  }
  throw ExhaustedClusterError("sample_embedding: cluster " + std::to_string(query.cluster_id) +
                              " has no embedding from an image other than '" + query.source_image_id + "'");
}

RegionalEmbedding sample_embedding(const EmbeddingBank& bank, const RegionalEmbedding& query, std::uint64_t rng_seed,
                                   FallbackPolicy policy) {
  return draw_donor(bank, query, rng_seed, policy).embedding;
}

constexpr std::uint32_t kBankVersion = 1;

void write_bank(const std::filesystem::path& path, const EmbeddingBank& bank) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string());
    const auto d = bank.dim();
    le::put_bytes(os, "PPEB");
    le::put_u32(os, kBankVersion);
    le::put_u64(os, bank.size());
    le::put_u32(os, static_cast<std::uint32_t>(d));
    le::put_u32(os, static_cast<std::uint32_t>(bank.k));
    le::put_u64(os, bank.seed);
    os.put(bank.normalized ? 1 : 0);
    for (const auto& e : bank.embeddings) {
      if (e.vector.size() != d) throw ShapeError("write_bank: embeddings have mixed dimensions");
      le::put_u32(os, static_cast<std::uint32_t>(e.patch_id.size()));
      le::put_bytes(os, e.patch_id);
      le::put_u32(os, static_cast<std::uint32_t>(e.source_image_id.size()));
      le::put_bytes(os, e.source_image_id);
      le::put_i32(os, e.cluster_id);
      le::put_u64(os, e.fg_pixel_count);
      for (float v : e.vector) le::put_f32(os, v);
    }
    if (bank.centroids.size() != static_cast<std::size_t>(bank.k) * d) {
      throw ShapeError("write_bank: centroid array does not match k*d");
    }
    for (double c : bank.centroids) le::put_f64(os, c);
    if (!os) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingBank read_bank(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  if (le::get_bytes(is, 4) != "PPEB") throw FormatError(path.string() + ": not a PPEB bank file");
  if (le::get_u32(is) != kBankVersion) throw FormatError(path.string() + ": unsupported bank version");
  EmbeddingBank bank;
  const auto count = le::get_u64(is);
  const auto d = le::get_u32(is);
  bank.k = static_cast<std::int32_t>(le::get_u32(is));
  bank.seed = le::get_u64(is);
  bank.normalized = le::get_bytes(is, 1)[0] != 0;
  bank.embeddings.resize(count);
  for (auto& e : bank.embeddings) {
    e.patch_id = le::get_bytes(is, le::get_u32(is));
    e.source_image_id = le::get_bytes(is, le::get_u32(is));
    e.cluster_id = le::get_i32(is);
    e.fg_pixel_count = le::get_u64(is);
    e.vector.resize(d);
    for (auto& v : e.vector) v = le::get_f32(is);
  }
  bank.centroids.resize(static_cast<std::size_t>(bank.k) * d);
  for (auto& c : bank.centroids) c = le::get_f64(is);
  return bank;
}

}  // namespace pathopaint
