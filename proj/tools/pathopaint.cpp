// pathopaint command-line driver.
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "pathopaint/config.hpp"
#include "pathopaint/embedding_bank.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/manifest.hpp"
#include "pathopaint/pipeline.hpp"
#include "pathopaint/segmentation.hpp"

namespace fs = std::filesystem;
using namespace pathopaint;

namespace {

struct Globals {
  std::string config_path;
  std::string preset = "default";
  std::optional<std::uint64_t> seed;
  std::string out = "pathopaint-out";
  bool quiet = false;
  bool print_config = false;
};

PipelineConfig resolve_config(const Globals& g) {
  auto config = g.config_path.empty() ? preset_config(g.preset) : load_config(g.config_path);
  if (g.seed) config.seed = *g.seed;
  validate_config(config);
  return config;
}

void print_metrics(const std::string& name, const SegMetrics& m) {
  std::cout << name << ": mean IoU " << 100.0 * m.mean_iou << "%, variance " << m.variance << " over "
            << m.per_sample_iou.size() << " patches\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathopaint: mask-aligned inpainting augmentation for segmentation"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "YAML config file")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "built-in preset when no config is given (default|smoke|tiny)");
  app.add_option("--seed", g.seed, "base seed for every stage");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("-q,--quiet", g.quiet, "no progress output");
  app.add_flag("--print-config", g.print_config, "print the resolved config and exit");

  auto* corpus = app.add_subcommand("corpus", "render the toy patch corpus");
  auto* codec = app.add_subcommand("codec", "pretrain and freeze the latent codec");
  auto* extractor = app.add_subcommand("extractor", "pretrain the feature extractor");

  auto* bank = app.add_subcommand("bank", "build, cluster or inspect the embedding bank");
  bank->require_subcommand(1);
  auto* bank_build = bank->add_subcommand("build", "mask-pool one embedding per training patch");
  auto* bank_cluster = bank->add_subcommand("cluster", "K-means over the bank");
  std::optional<std::int32_t> cluster_k;
  std::optional<std::uint64_t> cluster_seed;
  bank_cluster->add_option("--k", cluster_k, "number of clusters");
  bank_cluster->add_option("--seed", cluster_seed, "clustering seed");
  auto* bank_inspect = bank->add_subcommand("inspect", "print bank statistics");
  std::string inspect_path;
  bank_inspect->add_option("--bank", inspect_path, "bank file (default: workspace bank)");

  auto* diffusion = app.add_subcommand("diffusion", "train the conditional denoiser");
  std::int64_t fail_after = -1;
  diffusion->add_option("--fail-after", fail_after, "abort after N optimizer steps (resume testing)");

  auto* generate = app.add_subcommand("generate", "generate synthetic image-mask pairs");
  std::optional<double> ratio;
  std::optional<std::uint64_t> generation_seed;
  generate->add_option("--ratio", ratio, "synthetic pairs per eligible real patch");
  generate->add_option("--seed", generation_seed, "generation seed");

  auto* filter = app.add_subcommand("filter", "flag false-negative pixels of synthetic masks");
  std::string segmenter_path;
  std::optional<double> threshold;
  filter->add_option("--segmenter", segmenter_path, "pretrained segmenter checkpoint")->check(CLI::ExistingFile);
  filter->add_option("--threshold", threshold, "foreground probability threshold");

  auto* seg = app.add_subcommand("seg", "train or evaluate a segmenter");
  seg->require_subcommand(1);
  auto* seg_train = seg->add_subcommand("train", "train on real (+ synthetic) patches");
  std::string real_dir, synthetic_dir, ckpt_out;
  seg_train->add_option("--real", real_dir, "corpus directory")->check(CLI::ExistingDirectory);
  seg_train->add_option("--synthetic", synthetic_dir, "synthetic set directory")->check(CLI::ExistingDirectory);
  seg_train->add_option("--ckpt", ckpt_out, "output checkpoint");
  auto* seg_eval = seg->add_subcommand("eval", "foreground IoU on a test split");
  std::string eval_ckpt, test_dir;
  seg_eval->add_option("--ckpt", eval_ckpt, "segmenter checkpoint")->required()->check(CLI::ExistingFile);
  seg_eval->add_option("--test", test_dir, "corpus directory (test split is used)")->check(CLI::ExistingDirectory);
  std::string metrics_out;
  seg_eval->add_option("--metrics", metrics_out, "write metrics JSON here");

  auto* run = app.add_subcommand("run", "run every stage, resuming from completed ones");

  auto* audit = app.add_subcommand("audit", "check a synthetic set for orphans and sampling violations");
  std::string audit_dir, audit_bank;
  audit->add_option("--dir", audit_dir, "synthetic set directory (default: workspace)");
  audit->add_option("--bank", audit_bank, "bank file (default: workspace bank)");

  CLI11_PARSE(app, argc, argv);

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    auto config = resolve_config(g);
    if (ratio) config.generation.ratio = *ratio;
    if (generation_seed) config.stage_seeds["generation"] = *generation_seed;
    if (threshold) config.filter.threshold = *threshold;
    if (g.print_config) {
      std::cout << dump_config(config);
      return 0;
    }

    PipelineOptions options;
    options.log = g.quiet ? nullptr : &std::clog;
    options.fail_diffusion_after = fail_after;
    Pipeline pipeline(config, g.out, options);
    const auto& ws = pipeline.workspace();

    if (*corpus) pipeline.corpus();
    if (*codec) pipeline.codec();
    if (*extractor) pipeline.extractor();
    if (*bank_build) pipeline.bank_build();
    if (*bank_cluster) pipeline.bank_cluster(cluster_k, cluster_seed);
    if (*bank_inspect) {
      const auto b = read_bank(inspect_path.empty() ? ws.bank_path() : fs::path(inspect_path));
      std::cout << "embeddings: " << b.size() << "\ndimension: " << b.dim() << "\nnormalized: " << b.normalized
                << "\nclusters: " << b.k << "\nseed: " << b.seed << "\n";
      if (b.clustered()) {
        std::vector<std::size_t> sizes(static_cast<std::size_t>(b.k), 0);
        std::vector<std::set<std::string>> images(static_cast<std::size_t>(b.k));
        for (const auto& e : b.embeddings) {
          ++sizes[static_cast<std::size_t>(e.cluster_id)];
          images[static_cast<std::size_t>(e.cluster_id)].insert(e.source_image_id);
        }
        for (std::size_t c = 0; c < sizes.size(); ++c) {
          std::cout << "  cluster " << c << ": " << sizes[c] << " embeddings from " << images[c].size()
                    << " images\n";
        }
      }
    }
    if (*diffusion) pipeline.diffusion();
    if (*generate) pipeline.generate();
    if (*filter) pipeline.filter(segmenter_path.empty() ? std::nullopt : std::optional<fs::path>(segmenter_path));
    if (*seg_train) {
      if (real_dir.empty() && synthetic_dir.empty() && ckpt_out.empty()) {
        pipeline.segment();
      } else {
        stage = "seg";
        const auto real = read_corpus(real_dir.empty() ? ws.corpus_dir() : fs::path(real_dir));
        std::vector<SyntheticPair> synthetic;
        if (!synthetic_dir.empty()) synthetic = read_synthetic_set(synthetic_dir);
        SegTrainConfig tc;
        const auto& s = config.segmentation;
        tc.epochs = s.epochs;
        tc.batch_size = s.batch_size;
        tc.learning_rate = s.learning_rate;
        tc.seed = config.stage_seed("segmentation");
        tc.augment = s.augment;
        tc.color_jitter = s.color_jitter;
        tc.filter_synthetic = config.filter.enabled;
        tc.loss = s.loss;
        tc.model = s.model;
        auto result = train_segmentation(real.train, synthetic, real.validation, tc);
        const fs::path out = ckpt_out.empty() ? ws.augmented_path() : fs::path(ckpt_out);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        result.model.save(out);
        std::cout << "best epoch " << result.best_epoch << ", validation loss "
                  << result.val_losses[static_cast<std::size_t>(result.best_epoch)] << "\nsaved " << out.string()
                  << "\n";
      }
    }
    if (*seg_eval) {
      stage = "seg";
      auto model = SegModel::load(eval_ckpt);
      const auto corpus_data = read_corpus(test_dir.empty() ? ws.corpus_dir() : fs::path(test_dir));
      const auto& test = corpus_data.test.empty() ? corpus_data.train : corpus_data.test;
      const auto m = evaluate_iou(model, test, config.segmentation.threshold, config.segmentation.variance);
      print_metrics(fs::path(eval_ckpt).filename().string(), m);
      if (!metrics_out.empty()) std::ofstream(metrics_out) << metrics_json(m).dump(2) << "\n";
    }
    if (*run) {
      const auto report = pipeline.run();
      std::cout << report.to_text();
    }
    if (*audit) {
      const fs::path dir = audit_dir.empty() ? ws.synthetic_dir() : fs::path(audit_dir);
      const fs::path bank_file = audit_bank.empty() ? ws.bank_path() : fs::path(audit_bank);
      std::optional<EmbeddingBank> b;
      if (fs::exists(bank_file)) b = read_bank(bank_file);
      const auto report = audit_synthetic_set(dir, b ? &*b : nullptr);
      std::cout << "records: " << report.records << "\n";
      for (const auto& f : report.orphan_files) std::cout << "orphan: " << f << "\n";
      for (const auto& f : report.missing_files) std::cout << "missing: " << f << "\n";
      for (const auto& f : report.duplicate_refs) std::cout << "duplicate: " << f << "\n";
      for (const auto& v : report.sampling_violations) std::cout << "violation: " << v << "\n";
      if (!b) std::cout << "no bank found; sampling constraints not checked\n";
      std::cout << (report.ok() ? "audit ok" : "audit FAILED") << "\n";
      return report.ok() ? 0 : 3;
    }
  } catch (const StageError& e) {
    std::cerr << "pathopaint: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pathopaint: stage '" << stage << "' failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
