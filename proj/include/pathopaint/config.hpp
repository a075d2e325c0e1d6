#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "pathopaint/codec.hpp"
#include "pathopaint/corpus.hpp"
#include "pathopaint/diffusion.hpp"
#include "pathopaint/embedding_bank.hpp"
#include "pathopaint/extractor.hpp"
#include "pathopaint/segmentation.hpp"

namespace pathopaint {

enum class ExtractorKind { conv, random_projection };
ExtractorKind parse_extractor_kind(const std::string& name);
std::string to_string(ExtractorKind kind);

struct CodecSection {
  CodecOptions options;
  std::int64_t epochs = 20;
  std::int64_t batch_size = 16;
  double learning_rate = 1e-3;
};

struct ExtractorSection {
  ExtractorKind kind = ExtractorKind::conv;
  ConvExtractorOptions options;
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  double learning_rate = 1e-3;
  double temperature = 0.2;
};

struct BankSection {
  std::int32_t k = 10;
  double min_fg_fraction = 0.01;
  bool normalize = true;
  int max_iters = 100;
};

struct DiffusionSection {
  std::int64_t timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  ScheduleKind schedule = ScheduleKind::linear;
  std::int64_t base_width = 32;
  std::int64_t depth = 3;
  std::int64_t steps = 20000;
  std::int64_t batch_size = 16;
  double learning_rate = 1e-4;
};

struct GenerationSection {
  double ratio = 1.0;
  FallbackPolicy fallback = FallbackPolicy::nearest_other_cluster;
  SamplerOptions sampler;
  std::int64_t batch_size = 16;
};

struct FilterSection {
  bool enabled = true;
  double threshold = 0.5;
};

struct SegmentationSection {
  SegModelOptions model;
  std::int64_t epochs = 10;
  std::int64_t batch_size = 12;
  double learning_rate = 1e-3;
  SegLossWeights loss;
  bool augment = true;
  double color_jitter = 0.1;
  double threshold = 0.5;
  VarianceKind variance = VarianceKind::population;
};

struct PipelineConfig {
  std::string preset = "default";
  std::uint64_t seed = 0;
  // Explicit per-stage seeds; stages without an entry use derive_seed(seed, stage).
  std::map<std::string, std::uint64_t> stage_seeds;
  CorpusSpec corpus;
  CodecSection codec;
  ExtractorSection extractor;
  BankSection bank;
  DiffusionSection diffusion;
  GenerationSection generation;
  FilterSection filter;
  SegmentationSection segmentation;

  std::uint64_t stage_seed(const std::string& stage) const;
};

/// Built-in presets: "default" (256 px patches, full-length training), "smoke" (64 px, T=200,
/// 200 patches) and "tiny" (32 px, for tests).
PipelineConfig preset_config(const std::string& name);

/// Reads a YAML config. A top-level `preset:` key selects the base that the file's sections
/// override; unknown keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& yaml_text);
std::string dump_config(const PipelineConfig& config);

/// Throws ParameterError on values that no stage can accept.
void validate_config(const PipelineConfig& config);

}  // namespace pathopaint
