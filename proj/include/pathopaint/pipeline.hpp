#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathopaint/config.hpp"
#include "pathopaint/extractor.hpp"
#include "pathopaint/manifest.hpp"
#include "pathopaint/segmentation.hpp"

namespace pathopaint {

/// Output layout. Checkpoints go to $PATHOPAINT_CACHE when set, else <root>/checkpoints.
struct Workspace {
  std::filesystem::path root;
  std::filesystem::path checkpoints;

  static Workspace at(const std::filesystem::path& out);

  std::filesystem::path corpus_dir() const { return root / "corpus"; }
  std::filesystem::path synthetic_dir() const { return root / "synthetic"; }
  std::filesystem::path logs_dir() const { return root / "logs"; }
  std::filesystem::path stages_dir() const { return root / "stages"; }
  std::filesystem::path codec_path() const { return checkpoints / "codec.ppvc"; }
  std::filesystem::path extractor_path() const { return checkpoints / "extractor.ppfx"; }
  std::filesystem::path bank_path() const { return checkpoints / "bank.ppeb"; }
  std::filesystem::path denoiser_path() const { return checkpoints / "denoiser.ppdm"; }
  std::filesystem::path baseline_path() const { return checkpoints / "segmenter_real.ppsg"; }
  std::filesystem::path augmented_path() const { return checkpoints / "segmenter_augmented.ppsg"; }
  std::filesystem::path report_json() const { return root / "report.json"; }
  std::filesystem::path report_text() const { return root / "report.txt"; }
};

struct PipelineOptions {
  std::ostream* log = nullptr;  // progress lines; nullptr = silent
  // Fault injection for resume tests: the diffusion stage aborts after this many optimizer steps.
  std::int64_t fail_diffusion_after = -1;
};

struct PipelineReport {
  std::string preset;
  std::uint64_t seed = 0;
  std::size_t train_patches = 0;
  std::size_t test_patches = 0;
  double codec_mae = 0.0;
  std::size_t bank_size = 0;
  std::int32_t k = 0;
  std::int64_t diffusion_steps = 0;
  double diffusion_loss_first = 0.0;  // mean over the first 100 steps
  double diffusion_loss_last = 0.0;   // mean over the last 100 steps
  std::size_t synthetic_pairs = 0;
  std::size_t fallback_pairs = 0;
  double excluded_fraction = 0.0;  // share of synthetic foreground pixels in FN maps
  bool filtered = false;
  SegMetrics baseline;
  SegMetrics augmented;

  nlohmann::json to_json() const;
  static PipelineReport from_json(const nlohmann::json& j);
  std::string to_text() const;
};

/// {mean_iou, variance, per_sample}
nlohmann::json metrics_json(const SegMetrics& metrics);

/// Printed with every report: desk-scale toy numbers are not comparable to whole-slide benchmarks.
std::string non_reproducibility_caveat();

std::unique_ptr<FeatureExtractor> make_extractor(const PipelineConfig& config);

class Pipeline {
 public:
  static inline const std::vector<std::string> kStages{"corpus", "codec", "extractor", "bank", "diffusion",
                                                       "generate", "filter", "seg", "eval"};

  Pipeline(PipelineConfig config, const std::filesystem::path& out, PipelineOptions options = {});

  const PipelineConfig& config() const { return config_; }
  const Workspace& workspace() const { return ws_; }

  // Single stages; each reads its inputs from disk and writes a done-marker on success.
  void corpus();
  void codec();
  void extractor();
  void bank_build();
  void bank_cluster(std::optional<std::int32_t> k = {}, std::optional<std::uint64_t> seed = {});
  void diffusion();
  void generate();
  void filter(const std::optional<std::filesystem::path>& segmenter = {});
  void segment();
  PipelineReport evaluate();

  /// Runs every stage in order, skipping those whose done-marker matches the current config.
  PipelineReport run();

  bool stage_done(const std::string& stage) const;

 private:
  template <typename F>
  auto guarded(const std::string& stage, F&& body);
  void mark_done(const std::string& stage) const;
  void clear_from(const std::string& stage) const;
  void log(const std::string& stage, const std::string& message) const;
  std::string fingerprint() const;

  Corpus load_corpus() const;
  std::unique_ptr<FeatureExtractor> load_extractor() const;
  SegTrainConfig seg_config() const;
  SegModel ensure_baseline(const Corpus& corpus);

  PipelineConfig config_;
  Workspace ws_;
  PipelineOptions options_;
};

PipelineReport run_pipeline(const PipelineConfig& config, const std::filesystem::path& out,
                            const PipelineOptions& options = {});

}  // namespace pathopaint
