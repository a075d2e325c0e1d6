#include "pathopaint/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pathopaint/codec.hpp"
#include "pathopaint/corpus.hpp"
#include "pathopaint/diffusion.hpp"
#include "pathopaint/embedding_bank.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/image_io.hpp"
#include "pathopaint/inpaint.hpp"
#include "pathopaint/seeding.hpp"
#include "pathopaint/uncertainty.hpp"

namespace pathopaint {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw FormatError("cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }
json read_json(const fs::path& path) { return json::parse(read_text(path)); }

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw ContractError(path.string() + " is missing; run `pathopaint " + producer + "` first");
}

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  if (begin >= end) return 0.0;
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end),
                         0.0) /
         static_cast<double>(end - begin);
}

SegMetrics metrics_from(const json& j) {
  SegMetrics m;
  m.mean_iou = j.at("mean_iou").get<double>();
  m.variance = j.at("variance").get<double>();
  m.per_sample_iou = j.at("per_sample").get<std::vector<double>>();
  return m;
}

json seg_log(const SegTrainResult& r) {
  return {{"train_losses", r.train_losses}, {"val_losses", r.val_losses}, {"best_epoch", r.best_epoch}};
}

}  // namespace

json metrics_json(const SegMetrics& m) {
  return {{"mean_iou", m.mean_iou}, {"variance", m.variance}, {"per_sample", m.per_sample_iou}};
}

Workspace Workspace::at(const fs::path& out) {
  Workspace ws;
  ws.root = out;
  const char* cache = std::getenv("PATHOPAINT_CACHE");
  ws.checkpoints = (cache != nullptr && *cache != '\0') ? fs::path(cache) : out / "checkpoints";
  return ws;
}

json PipelineReport::to_json() const {
  return {{"preset", preset},
          {"seed", seed},
          {"train_patches", train_patches},
          {"test_patches", test_patches},
          {"codec_mae", codec_mae},
          {"bank_size", bank_size},
          {"k", k},
          {"diffusion_steps", diffusion_steps},
          {"diffusion_loss_first", diffusion_loss_first},
          {"diffusion_loss_last", diffusion_loss_last},
          {"synthetic_pairs", synthetic_pairs},
          {"fallback_pairs", fallback_pairs},
          {"excluded_fraction", excluded_fraction},
          {"filtered", filtered},
          {"baseline", metrics_json(baseline)},
          {"augmented", metrics_json(augmented)},
          {"caveat", non_reproducibility_caveat()}};
}

PipelineReport PipelineReport::from_json(const json& j) {
  PipelineReport r;
  r.preset = j.at("preset").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.train_patches = j.at("train_patches").get<std::size_t>();
  r.test_patches = j.at("test_patches").get<std::size_t>();
  r.codec_mae = j.at("codec_mae").get<double>();
  r.bank_size = j.at("bank_size").get<std::size_t>();
  r.k = j.at("k").get<std::int32_t>();
  r.diffusion_steps = j.at("diffusion_steps").get<std::int64_t>();
  r.diffusion_loss_first = j.at("diffusion_loss_first").get<double>();
  r.diffusion_loss_last = j.at("diffusion_loss_last").get<double>();
  r.synthetic_pairs = j.at("synthetic_pairs").get<std::size_t>();
  r.fallback_pairs = j.at("fallback_pairs").get<std::size_t>();
  r.excluded_fraction = j.at("excluded_fraction").get<double>();
  r.filtered = j.at("filtered").get<bool>();
  r.baseline = metrics_from(j.at("baseline"));
  r.augmented = metrics_from(j.at("augmented"));
  return r;
}

std::string non_reproducibility_caveat() {
  return "Caveat: these numbers come from a desk-scale toy corpus with small models. Published whole-slide "
         "results (e.g. CAMELYON16 mean IoU 75.69% -> 77.69%) are NOT reproducible with this setup and the "
         "values above must not be compared with them.";
}

std::string PipelineReport::to_text() const {
  std::ostringstream os;
  os << std::fixed;
  os << "pathopaint report (preset " << preset << ", seed " << seed << ")\n";
  os << "corpus: " << train_patches << " training / " << test_patches << " test patches\n";
  os << "codec: validation MAE " << std::setprecision(4) << codec_mae << "\n";
  os << "bank: " << bank_size << " embeddings in " << k << " clusters\n";
  os << "diffusion: " << diffusion_steps << " steps, loss first-100 mean " << diffusion_loss_first
     << ", last-100 mean " << diffusion_loss_last << "\n";
  os << "generation: " << synthetic_pairs << " synthetic pairs (" << fallback_pairs << " via fallback donor)\n";
  if (filtered) {
    os << "filter: " << std::setprecision(2) << 100.0 * excluded_fraction
       << "% of synthetic foreground pixels excluded\n";
  } else {
    os << "filter: disabled\n";
  }
  os << "\n";
  const std::string dataset = "toy (" + std::to_string(train_patches) + " patches)";
  os << std::left << std::setw(24) << "dataset" << std::setw(18) << "synthetic data" << std::right << std::setw(10)
     << "IoU (%)" << std::setw(12) << "variance" << "\n";
  auto row = [&](const std::string& synthetic, const SegMetrics& m) {
    os << std::left << std::setw(24) << dataset << std::setw(18) << synthetic << std::right << std::setw(10)
       << std::setprecision(2) << 100.0 * m.mean_iou << std::setw(12) << std::setprecision(4) << m.variance << "\n";
  };
  row("None", baseline);
  row("inpainted", augmented);
  os << "\n" << non_reproducibility_caveat() << "\n";
  return os.str();
}

std::unique_ptr<FeatureExtractor> make_extractor(const PipelineConfig& config) {
  const auto& ex = config.extractor;
  const auto seed = config.stage_seed("extractor");
  if (ex.kind == ExtractorKind::random_projection) {
    return std::make_unique<RandomProjectionExtractor>(ex.options.feature_dim, ex.options.stride, seed);
  }
  return std::make_unique<ConvExtractor>(ex.options, seed);
}

Pipeline::Pipeline(PipelineConfig config, const fs::path& out, PipelineOptions options)
    : config_(std::move(config)), ws_(Workspace::at(out)), options_(options) {
  validate_config(config_);
}

void Pipeline::log(const std::string& stage, const std::string& message) const {
  if (options_.log != nullptr) *options_.log << "[" << stage << "] " << message << std::endl;
}

std::string Pipeline::fingerprint() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << derive_seed(0, dump_config(config_)) << "\n";
  return os.str();
}

bool Pipeline::stage_done(const std::string& stage) const {
  const auto marker = ws_.stages_dir() / (stage + ".done");
  return fs::exists(marker) && read_text(marker) == fingerprint();
}

void Pipeline::mark_done(const std::string& stage) const {
  write_text(ws_.stages_dir() / (stage + ".done"), fingerprint());
}

void Pipeline::clear_from(const std::string& stage) const {
  bool on = false;
  for (const auto& s : kStages) {
    on = on || s == stage;
    if (on) fs::remove(ws_.stages_dir() / (s + ".done"));
  }
  fs::remove(ws_.stages_dir() / (stage + ".failed"));
}

template <typename F>
auto Pipeline::guarded(const std::string& stage, F&& body) {
  try {
    clear_from(stage);
    fs::create_directories(ws_.checkpoints);
    log(stage, "start");
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      mark_done(stage);
      log(stage, "done");
    } else {
      auto result = body();
      mark_done(stage);
      log(stage, "done");
      return result;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    write_text(ws_.stages_dir() / (stage + ".failed"), std::string(e.what()) + "\n");
    throw StageError(stage, e.what());
  }
}

Corpus Pipeline::load_corpus() const {
  require(ws_.corpus_dir() / "manifest.jsonl", "corpus");
  return read_corpus(ws_.corpus_dir());
}

std::unique_ptr<FeatureExtractor> Pipeline::load_extractor() const {
  if (config_.extractor.kind == ExtractorKind::random_projection) return make_extractor(config_);
  require(ws_.extractor_path(), "extractor");
  return std::make_unique<ConvExtractor>(ConvExtractor::load(ws_.extractor_path()));
}

SegTrainConfig Pipeline::seg_config() const {
  const auto& s = config_.segmentation;
  SegTrainConfig c;
  c.epochs = s.epochs;
  c.batch_size = s.batch_size;
  c.learning_rate = s.learning_rate;
  c.seed = config_.stage_seed("segmentation");
  c.augment = s.augment;
  c.color_jitter = s.color_jitter;
  c.filter_synthetic = config_.filter.enabled;
  c.loss = s.loss;
  c.model = s.model;
  return c;
}

SegModel Pipeline::ensure_baseline(const Corpus& corpus) {
  if (fs::exists(ws_.baseline_path()) && fs::exists(ws_.logs_dir() / "seg_baseline.json")) {
    return SegModel::load(ws_.baseline_path());
  }
  log("seg", "training real-only segmenter");
  auto result = train_segmentation(corpus.train, {}, corpus.validation, seg_config());
  result.model.save(ws_.baseline_path());
  write_json(ws_.logs_dir() / "seg_baseline.json", seg_log(result));
  return std::move(result.model);
}

void Pipeline::corpus() {
  guarded("corpus", [&] {
    auto spec = config_.corpus;
    spec.seed = config_.stage_seed("corpus");
    const auto corpus = generate_corpus(spec);
    fs::remove_all(ws_.corpus_dir());
    write_corpus(ws_.corpus_dir(), corpus);
    write_text(ws_.root / "config.yaml", dump_config(config_));
    log("corpus", std::to_string(corpus.train.size()) + " train, " + std::to_string(corpus.validation.size()) +
                      " validation, " + std::to_string(corpus.test.size()) + " test patches");
  });
}

void Pipeline::codec() {
  guarded("codec", [&] {
    const auto corpus = load_corpus();
    const auto& c = config_.codec;
    json log_entry;
    if (c.options.mode == CodecMode::identity) {
      LatentCodec::identity().save(ws_.codec_path());
      log_entry["mode"] = "identity";
    } else {
      LatentCodec codec(c.options, config_.stage_seed("codec"));
      const auto report = pretrain_codec(codec, corpus.train,
                                         {c.epochs, c.batch_size, c.learning_rate, config_.stage_seed("codec")});
      codec.save(ws_.codec_path());
      log_entry = {{"mode", "learned"}, {"initial_loss", report.initial_loss}, {"epoch_losses", report.epoch_losses}};
    }
    const auto codec = LatentCodec::load(ws_.codec_path());
    const double mae = reconstruction_mae(codec, corpus.validation.empty() ? corpus.train : corpus.validation);
    log_entry["validation_mae"] = mae;
    write_json(ws_.logs_dir() / "codec.json", log_entry);
    log("codec", "validation MAE " + std::to_string(mae));
  });
}

void Pipeline::extractor() {
  guarded("extractor", [&] {
    const auto& ex = config_.extractor;
    if (ex.kind == ExtractorKind::random_projection) {
      fs::remove(ws_.extractor_path());
      write_json(ws_.logs_dir() / "extractor.json", {{"kind", to_string(ex.kind)}});
      return;
    }
    const auto corpus = load_corpus();
    ConvExtractor extractor(ex.options, config_.stage_seed("extractor"));
    ExtractorTrainConfig tc;
    tc.epochs = ex.epochs;
    tc.batch_size = ex.batch_size;
    tc.learning_rate = ex.learning_rate;
    tc.temperature = ex.temperature;
    tc.seed = config_.stage_seed("extractor");
    const auto report = train_extractor_contrastive(extractor, corpus.train, tc);
    extractor.save(ws_.extractor_path());
    write_json(ws_.logs_dir() / "extractor.json", {{"kind", to_string(ex.kind)}, {"epoch_losses", report.epoch_losses}});
  });
}

void Pipeline::bank_build() {
  guarded("bank", [&] {
    const auto corpus = load_corpus();
    const auto extractor = load_extractor();
    const auto bank = build_bank(corpus.train, *extractor, config_.bank.min_fg_fraction, config_.bank.normalize);
    write_bank(ws_.bank_path(), bank);
    log("bank", std::to_string(bank.size()) + " embeddings of dimension " + std::to_string(bank.dim()));
  });
  // An unclustered bank is not a finished stage.
  fs::remove(ws_.stages_dir() / "bank.done");
}

void Pipeline::bank_cluster(std::optional<std::int32_t> k, std::optional<std::uint64_t> seed) {
  guarded("bank", [&] {
    require(ws_.bank_path(), "bank build");
    auto bank = read_bank(ws_.bank_path());
    bank = cluster_bank(std::move(bank), k.value_or(config_.bank.k), seed.value_or(config_.stage_seed("bank")),
                        config_.bank.max_iters);
    write_bank(ws_.bank_path(), bank);
    std::vector<std::size_t> sizes(static_cast<std::size_t>(bank.k), 0);
    for (const auto& e : bank.embeddings) ++sizes[static_cast<std::size_t>(e.cluster_id)];
    write_json(ws_.logs_dir() / "bank.json", {{"size", bank.size()},
                                              {"k", bank.k},
                                              {"cluster_sizes", sizes},
                                              {"inertia_history", bank.inertia_history},
                                              {"converged", bank.converged}});
    log("bank", "clustered into k=" + std::to_string(bank.k));
  });
}

void Pipeline::diffusion() {
  guarded("diffusion", [&] {
    const auto corpus = load_corpus();
    require(ws_.codec_path(), "codec");
    require(ws_.bank_path(), "bank");
    const auto codec = LatentCodec::load(ws_.codec_path());
    const auto bank = read_bank(ws_.bank_path());
    const auto& d = config_.diffusion;

    std::vector<DiffusionExample> examples;
    for (const auto& patch : sorted_by_patch_id(corpus.train)) {
      if (const auto* e = bank.find(patch.patch_id)) examples.push_back(make_diffusion_example(patch, codec, *e));
    }
    const auto schedule = make_noise_schedule(d.timesteps, d.beta_start, d.beta_end, d.schedule);
    const auto seed = config_.stage_seed("diffusion");
    ConditionalDenoiser denoiser({codec.latent_channels(), static_cast<std::int64_t>(bank.dim()), d.base_width, d.depth},
                                 seed);
    const DiffusionTrainConfig tc{d.steps, d.batch_size, d.learning_rate, seed};
    const auto fail_after = options_.fail_diffusion_after;
    const auto partial = ws_.checkpoints / "denoiser.partial.ppdm";
    const auto report = train_diffusion(denoiser, examples, schedule, tc, [&](std::int64_t step) {
      if (fail_after >= 0 && step + 1 >= fail_after) {
        denoiser.save(partial, d.timesteps);
        throw Error("injected fault after " + std::to_string(step + 1) + " steps");
      }
      if (step % 200 == 0) log("diffusion", "step " + std::to_string(step));
    });
    denoiser.save(ws_.denoiser_path(), d.timesteps);
    fs::remove(partial);

    const auto& losses = report.losses;
    const std::size_t w = std::min<std::size_t>(100, losses.size());
    std::ostringstream csv;
    csv << std::setprecision(17) << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) csv << i << "," << losses[i] << "\n";
    write_text(ws_.logs_dir() / "diffusion_loss.csv", csv.str());
    const double first = window_mean(losses, 0, w);
    const double last = window_mean(losses, losses.size() - w, losses.size());
    write_json(ws_.logs_dir() / "diffusion.json",
               {{"steps", losses.size()}, {"examples", examples.size()}, {"loss_first", first}, {"loss_last", last}});
    log("diffusion", "loss " + std::to_string(first) + " -> " + std::to_string(last));
  });
}

void Pipeline::generate() {
  guarded("generate", [&] {
    const auto corpus = load_corpus();
    require(ws_.codec_path(), "codec");
    require(ws_.bank_path(), "bank");
    require(ws_.denoiser_path(), "diffusion");
    const auto codec = LatentCodec::load(ws_.codec_path());
    const auto bank = read_bank(ws_.bank_path());
    if (!bank.clustered()) throw ContractError("bank is not clustered; run `pathopaint bank cluster` first");
    std::int64_t timesteps = 0;
    auto denoiser = ConditionalDenoiser::load(ws_.denoiser_path(), &timesteps);
    const auto& d = config_.diffusion;
    if (timesteps != d.timesteps) throw ContractError("denoiser was trained with a different number of timesteps");
    const auto schedule = make_noise_schedule(d.timesteps, d.beta_start, d.beta_end, d.schedule);

    GenerationOptions go;
    go.fallback = config_.generation.fallback;
    go.sampler = config_.generation.sampler;
    go.batch_size = config_.generation.batch_size;
    const auto result = augment_dataset(corpus.train, config_.generation.ratio, bank, codec, denoiser, schedule,
                                        config_.stage_seed("generation"), go);
    fs::remove_all(ws_.synthetic_dir());
    write_synthetic_set(ws_.synthetic_dir(), result.synthetic);

    std::size_t fallback = 0;
    double raw_mae = 0.0;
    for (const auto& p : result.synthetic) {
      fallback += p.fallback ? 1 : 0;
      raw_mae += p.raw_background_mae;
    }
    const auto n = result.synthetic.size();
    write_json(ws_.logs_dir() / "generation.json",
               {{"pairs", n},
                {"fallback_pairs", fallback},
                {"mean_raw_background_mae", n > 0 ? raw_mae / static_cast<double>(n) : 0.0}});
    log("generate", std::to_string(n) + " synthetic pairs, " + std::to_string(fallback) + " via fallback");
  });
}

void Pipeline::filter(const std::optional<fs::path>& segmenter_path) {
  guarded("filter", [&] {
    require(ws_.synthetic_dir() / "manifest.jsonl", "generate");
    auto records = read_synthetic_manifest(ws_.synthetic_dir() / "manifest.jsonl");
    fs::remove_all(ws_.synthetic_dir() / "uncertain");
    fs::remove(ws_.baseline_path());
    fs::remove(ws_.logs_dir() / "seg_baseline.json");
    for (auto& r : records) r.uncertain_path.reset();
    if (!config_.filter.enabled) {
      write_synthetic_manifest(ws_.synthetic_dir() / "manifest.jsonl", records);
      write_json(ws_.logs_dir() / "filter.json", {{"enabled", false}});
      return;
    }

    std::optional<SegModel> model;
    if (segmenter_path) {
      model = SegModel::load(*segmenter_path);
    } else {
      model = ensure_baseline(load_corpus());
    }
    const auto pairs = read_synthetic_set(ws_.synthetic_dir());
    std::int64_t fn_total = 0;
    std::int64_t fg_total = 0;
    const std::size_t batch = 16;
    for (std::size_t start = 0; start < pairs.size(); start += batch) {
      const auto end = std::min(pairs.size(), start + batch);
      Dataset chunk;
      for (std::size_t i = start; i < end; ++i) chunk.push_back(pairs[i].sample);
      const auto predicted = predict_masks(stack_images(chunk), *model, config_.filter.threshold);
      for (std::size_t i = start; i < end; ++i) {
        const auto u = compute_uncertain(pairs[i].sample.mask, predicted[static_cast<std::int64_t>(i - start)]);
        auto& r = records[i];
        r.uncertain_path = "uncertain/" + r.patch_id + ".png";
        write_mask_png(ws_.synthetic_dir() / *r.uncertain_path, u.fn_map);
        fn_total += u.fn_map.sum().item<std::int64_t>();
        fg_total += pairs[i].sample.mask.sum().item<std::int64_t>();
      }
    }
    write_synthetic_manifest(ws_.synthetic_dir() / "manifest.jsonl", records);
    const double fraction = fg_total > 0 ? static_cast<double>(fn_total) / static_cast<double>(fg_total) : 0.0;
    write_json(ws_.logs_dir() / "filter.json", {{"enabled", true},
                                                {"threshold", config_.filter.threshold},
                                                {"excluded_fraction", fraction},
                                                {"segmenter", segmenter_path ? segmenter_path->string() : "real-only"}});
    log("filter", std::to_string(100.0 * fraction) + "% of synthetic foreground flagged");
  });
}

void Pipeline::segment() {
  guarded("seg", [&] {
    const auto corpus = load_corpus();
    // The real-only model is cached by the filter stage; anything older is stale.
    if (!stage_done("filter")) fs::remove(ws_.baseline_path());
    ensure_baseline(corpus);
    std::vector<SyntheticPair> synthetic;
    if (fs::exists(ws_.synthetic_dir() / "manifest.jsonl")) synthetic = read_synthetic_set(ws_.synthetic_dir());
    log("seg", "training on " + std::to_string(corpus.train.size()) + " real + " + std::to_string(synthetic.size()) +
                   " synthetic patches");
    auto result = train_segmentation(corpus.train, synthetic, corpus.validation, seg_config());
    result.model.save(ws_.augmented_path());
    write_json(ws_.logs_dir() / "seg_augmented.json", seg_log(result));
  });
}

PipelineReport Pipeline::evaluate() {
  return guarded("eval", [&] {
    const auto corpus = load_corpus();
    require(ws_.baseline_path(), "seg");
    require(ws_.augmented_path(), "seg");
    auto baseline = SegModel::load(ws_.baseline_path());
    auto augmented = SegModel::load(ws_.augmented_path());
    const auto& s = config_.segmentation;

    PipelineReport r;
    r.preset = config_.preset;
    r.seed = config_.seed;
    r.train_patches = corpus.train.size();
    r.test_patches = corpus.test.size();
    r.baseline = evaluate_iou(baseline, corpus.test, s.threshold, s.variance);
    r.augmented = evaluate_iou(augmented, corpus.test, s.threshold, s.variance);

    const auto logs = ws_.logs_dir();
    if (fs::exists(logs / "codec.json")) r.codec_mae = read_json(logs / "codec.json").value("validation_mae", 0.0);
    if (fs::exists(logs / "bank.json")) {
      const auto j = read_json(logs / "bank.json");
      r.bank_size = j.value("size", std::size_t{0});
      r.k = j.value("k", 0);
    }
    if (fs::exists(logs / "diffusion.json")) {
      const auto j = read_json(logs / "diffusion.json");
      r.diffusion_steps = j.value("steps", std::int64_t{0});
      r.diffusion_loss_first = j.value("loss_first", 0.0);
      r.diffusion_loss_last = j.value("loss_last", 0.0);
    }
    if (fs::exists(logs / "generation.json")) {
      const auto j = read_json(logs / "generation.json");
      r.synthetic_pairs = j.value("pairs", std::size_t{0});
      r.fallback_pairs = j.value("fallback_pairs", std::size_t{0});
    }
    if (fs::exists(logs / "filter.json")) {
      const auto j = read_json(logs / "filter.json");
      r.filtered = j.value("enabled", false);
      r.excluded_fraction = j.value("excluded_fraction", 0.0);
    }
    write_json(ws_.report_json(), r.to_json());
    write_text(ws_.report_text(), r.to_text());
    return r;
  });
}

PipelineReport Pipeline::run() {
  bool rerun = false;
  for (const auto& stage : kStages) {
    if (stage == "eval") break;
    if (!rerun && stage_done(stage)) {
      log(stage, "up to date");
      continue;
    }
    rerun = true;
    if (stage == "corpus") corpus();
    if (stage == "codec") codec();
    if (stage == "extractor") extractor();
    if (stage == "bank") {
      bank_build();
      bank_cluster();
    }
    if (stage == "diffusion") diffusion();
    if (stage == "generate") generate();
    if (stage == "filter") filter();
    if (stage == "seg") segment();
  }
  return evaluate();
}

PipelineReport run_pipeline(const PipelineConfig& config, const fs::path& out, const PipelineOptions& options) {
  Pipeline pipeline(config, out, options);
  return pipeline.run();
}

}  // namespace pathopaint
