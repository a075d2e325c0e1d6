#include "pathopaint/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "pathopaint/errors.hpp"
#include "pathopaint/seeding.hpp"

namespace pathopaint {

ExtractorKind parse_extractor_kind(const std::string& name) {
  if (name == "conv") return ExtractorKind::conv;
  if (name == "random-projection") return ExtractorKind::random_projection;
  throw ParameterError("unknown extractor kind: " + name);
}

std::string to_string(ExtractorKind kind) {
  return kind == ExtractorKind::conv ? "conv" : "random-projection";
}

namespace {

std::string to_string(VarianceKind kind) { return kind == VarianceKind::population ? "population" : "sample"; }

VarianceKind parse_variance_kind(const std::string& name) {
  if (name == "population") return VarianceKind::population;
  if (name == "sample") return VarianceKind::sample;
  throw ParameterError("unknown variance kind: " + name);
}

std::string to_string(SamplerKind kind) { return kind == SamplerKind::ancestral ? "ancestral" : "ddim"; }

using Setter = std::function<void(const YAML::Node&)>;

template <typename T>
Setter set(T& field) {
  return [&field](const YAML::Node& n) { field = n.as<T>(); };
}

void apply_section(const YAML::Node& node, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!node) return;
  if (!node.IsMap()) throw ParameterError("config section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    const auto it = setters.find(key);
    if (it == setters.end()) throw ParameterError("unknown config key: " + section + "." + key);
    try {
      it->second(kv.second);
    } catch (const YAML::Exception& e) {
      throw ParameterError("bad value for " + section + "." + key + ": " + e.what());
    }
  }
}

Rgb read_rgb(const YAML::Node& n) {
  if (!n.IsSequence() || n.size() != 3) throw ParameterError("colors are [r, g, b] triples");
  return {n[0].as<double>(), n[1].as<double>(), n[2].as<double>()};
}

void apply(PipelineConfig& c, const YAML::Node& root) {
  for (const auto& kv : root) {
    static const std::set<std::string> known{"preset",    "seed",       "seeds",  "corpus",       "codec",
                                             "extractor", "bank",       "diffusion", "generation", "filter",
                                             "segmentation"};
    const auto key = kv.first.as<std::string>();
    if (!known.contains(key)) throw ParameterError("unknown config key: " + key);
  }
  if (root["seed"]) c.seed = root["seed"].as<std::uint64_t>();
  if (const auto seeds = root["seeds"]) {
    if (!seeds.IsMap()) throw ParameterError("config section 'seeds' must be a mapping");
    for (const auto& kv : seeds) c.stage_seeds[kv.first.as<std::string>()] = kv.second.as<std::uint64_t>();
  }

  auto& cs = c.corpus;
  apply_section(root["corpus"], "corpus",
                {{"num_slides", set(cs.num_slides)},
                 {"patches_per_slide", set(cs.patches_per_slide)},
                 {"patch_size", set(cs.patch_size)},
                 {"background_color", [&](const YAML::Node& n) { cs.background_color = read_rgb(n); }},
                 {"background_variation", set(cs.background_variation)},
                 {"noise_scale", set(cs.noise_scale)},
                 {"families",
                  [&](const YAML::Node& n) {
                    cs.families.clear();
                    for (const auto& f : n) {
                      TextureFamily fam;
                      fam.color = read_rgb(f["color"]);
                      if (f["frequency"]) fam.frequency = f["frequency"].as<double>();
                      if (f["amplitude"]) fam.amplitude = f["amplitude"].as<double>();
                      cs.families.push_back(fam);
                    }
                  }},
                 {"min_family_separation", set(cs.min_family_separation)},
                 {"min_blobs", set(cs.min_blobs)},
                 {"max_blobs", set(cs.max_blobs)},
                 {"min_radius", set(cs.min_radius)},
                 {"max_radius", set(cs.max_radius)},
                 {"val_slides", set(cs.val_slides)},
                 {"test_slides", set(cs.test_slides)}});

  auto& co = c.codec;
  apply_section(root["codec"], "codec",
                {{"mode", [&](const YAML::Node& n) { co.options.mode = parse_codec_mode(n.as<std::string>()); }},
                 {"downsample_factor", set(co.options.downsample_factor)},
                 {"latent_channels", set(co.options.latent_channels)},
                 {"base_width", set(co.options.base_width)},
                 {"epochs", set(co.epochs)},
                 {"batch_size", set(co.batch_size)},
                 {"learning_rate", set(co.learning_rate)}});

  auto& ex = c.extractor;
  apply_section(root["extractor"], "extractor",
                {{"kind", [&](const YAML::Node& n) { ex.kind = parse_extractor_kind(n.as<std::string>()); }},
                 {"feature_dim", set(ex.options.feature_dim)},
                 {"stride", set(ex.options.stride)},
                 {"base_width", set(ex.options.base_width)},
                 {"projection_dim", set(ex.options.projection_dim)},
                 {"epochs", set(ex.epochs)},
                 {"batch_size", set(ex.batch_size)},
                 {"learning_rate", set(ex.learning_rate)},
                 {"temperature", set(ex.temperature)}});

  auto& b = c.bank;
  apply_section(root["bank"], "bank",
                {{"k", set(b.k)},
                 {"min_fg_fraction", set(b.min_fg_fraction)},
                 {"normalize", set(b.normalize)},
                 {"max_iters", set(b.max_iters)}});

  auto& d = c.diffusion;
  apply_section(root["diffusion"], "diffusion",
                {{"timesteps", set(d.timesteps)},
                 {"beta_start", set(d.beta_start)},
                 {"beta_end", set(d.beta_end)},
                 {"schedule", [&](const YAML::Node& n) { d.schedule = parse_schedule_kind(n.as<std::string>()); }},
                 {"base_width", set(d.base_width)},
                 {"depth", set(d.depth)},
                 {"steps", set(d.steps)},
                 {"batch_size", set(d.batch_size)},
                 {"learning_rate", set(d.learning_rate)}});

  auto& g = c.generation;
  apply_section(root["generation"], "generation",
                {{"ratio", set(g.ratio)},
                 {"fallback", [&](const YAML::Node& n) { g.fallback = parse_fallback_policy(n.as<std::string>()); }},
                 {"sampler", [&](const YAML::Node& n) { g.sampler.kind = parse_sampler_kind(n.as<std::string>()); }},
                 {"ddim_stride", set(g.sampler.stride)},
                 {"batch_size", set(g.batch_size)}});

  apply_section(root["filter"], "filter", {{"enabled", set(c.filter.enabled)}, {"threshold", set(c.filter.threshold)}});

  auto& s = c.segmentation;
  apply_section(root["segmentation"], "segmentation",
                {{"depth", set(s.model.depth)},
                 {"base_width", set(s.model.base_width)},
                 {"epochs", set(s.epochs)},
                 {"batch_size", set(s.batch_size)},
                 {"learning_rate", set(s.learning_rate)},
                 {"ce_weight", set(s.loss.cross_entropy)},
                 {"dice_weight", set(s.loss.dice)},
                 {"dice_smooth", set(s.loss.smooth)},
                 {"augment", set(s.augment)},
                 {"color_jitter", set(s.color_jitter)},
                 {"threshold", set(s.threshold)},
                 {"variance", [&](const YAML::Node& n) { s.variance = parse_variance_kind(n.as<std::string>()); }}});
}

}  // namespace

std::uint64_t PipelineConfig::stage_seed(const std::string& stage) const {
  const auto it = stage_seeds.find(stage);
  return it != stage_seeds.end() ? it->second : derive_seed(seed, stage);
}

PipelineConfig preset_config(const std::string& name) {
  PipelineConfig c;
  c.preset = name;
  if (name == "default") return c;
  if (name == "smoke") {
    c.corpus.patch_size = 64;
    c.codec.epochs = 60;
    c.extractor.options.stride = 4;
    c.extractor.epochs = 6;
    c.diffusion.timesteps = 200;
    c.diffusion.base_width = 32;
    c.diffusion.depth = 2;
    c.diffusion.steps = 1200;
    c.diffusion.learning_rate = 1e-3;
    c.segmentation.epochs = 10;
    return c;
  }
  if (name == "tiny") {
    c.corpus.patch_size = 32;
    c.corpus.num_slides = 6;
    c.corpus.patches_per_slide = 6;
    c.corpus.val_slides = 1;
    c.corpus.test_slides = 1;
    c.codec.options.base_width = 8;
    c.codec.epochs = 2;
    c.extractor.options = {8, 4, 8, 8};
    c.extractor.epochs = 1;
    c.bank.k = 3;
    c.diffusion.timesteps = 20;
    c.diffusion.base_width = 8;
    c.diffusion.depth = 2;
    c.diffusion.steps = 30;
    c.diffusion.batch_size = 4;
    c.diffusion.learning_rate = 1e-3;
    c.generation.ratio = 0.5;
    c.segmentation.model = {2, 8};
    c.segmentation.epochs = 2;
    c.segmentation.batch_size = 4;
    return c;
  }
  throw ParameterError("unknown preset: " + name);
}

PipelineConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ParameterError(std::string("invalid YAML: ") + e.what());
  }
  if (root.IsNull()) return preset_config("default");
  if (!root.IsMap()) throw ParameterError("config must be a mapping");
  PipelineConfig c = preset_config(root["preset"] ? root["preset"].as<std::string>() : "default");
  try {
    apply(c, root);
  } catch (const YAML::Exception& e) {
    throw ParameterError(std::string("invalid config: ") + e.what());
  }
  validate_config(c);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParameterError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const PipelineConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(15);
  out << YAML::BeginMap;
  out << YAML::Key << "preset" << YAML::Value << c.preset;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  if (!c.stage_seeds.empty()) {
    out << YAML::Key << "seeds" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : c.stage_seeds) out << YAML::Key << k << YAML::Value << v;
    out << YAML::EndMap;
  }
  auto rgb = [&](const Rgb& v) {
    out << YAML::Flow << YAML::BeginSeq << v[0] << v[1] << v[2] << YAML::EndSeq;
  };

  const auto& cs = c.corpus;
  out << YAML::Key << "corpus" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "num_slides" << YAML::Value << cs.num_slides;
  out << YAML::Key << "patches_per_slide" << YAML::Value << cs.patches_per_slide;
  out << YAML::Key << "patch_size" << YAML::Value << cs.patch_size;
  if (cs.patch_size == 256) out << YAML::Comment("paper_default: true");
  out << YAML::Key << "background_color" << YAML::Value;
  rgb(cs.background_color);
  out << YAML::Key << "background_variation" << YAML::Value << cs.background_variation;
  out << YAML::Key << "noise_scale" << YAML::Value << cs.noise_scale;
  out << YAML::Key << "families" << YAML::Value << YAML::BeginSeq;
  for (const auto& f : cs.families) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "color" << YAML::Value;
    rgb(f.color);
    out << YAML::Key << "frequency" << YAML::Value << f.frequency;
    out << YAML::Key << "amplitude" << YAML::Value << f.amplitude << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "min_family_separation" << YAML::Value << cs.min_family_separation;
  out << YAML::Key << "min_blobs" << YAML::Value << cs.min_blobs;
  out << YAML::Key << "max_blobs" << YAML::Value << cs.max_blobs;
  out << YAML::Key << "min_radius" << YAML::Value << cs.min_radius;
  out << YAML::Key << "max_radius" << YAML::Value << cs.max_radius;
  out << YAML::Key << "val_slides" << YAML::Value << cs.val_slides;
  out << YAML::Key << "test_slides" << YAML::Value << cs.test_slides;
  out << YAML::EndMap;

  const auto& co = c.codec;
  out << YAML::Key << "codec" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << to_string(co.options.mode);
  out << YAML::Key << "downsample_factor" << YAML::Value << co.options.downsample_factor;
  if (co.options.downsample_factor == 4) out << YAML::Comment("paper_default: true");
  out << YAML::Key << "latent_channels" << YAML::Value << co.options.latent_channels;
  out << YAML::Key << "base_width" << YAML::Value << co.options.base_width;
  out << YAML::Key << "epochs" << YAML::Value << co.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << co.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << co.learning_rate;
  out << YAML::EndMap;

  const auto& ex = c.extractor;
  out << YAML::Key << "extractor" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(ex.kind);
  out << YAML::Key << "feature_dim" << YAML::Value << ex.options.feature_dim;
  out << YAML::Key << "stride" << YAML::Value << ex.options.stride;
  out << YAML::Key << "base_width" << YAML::Value << ex.options.base_width;
  out << YAML::Key << "projection_dim" << YAML::Value << ex.options.projection_dim;
  out << YAML::Key << "epochs" << YAML::Value << ex.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << ex.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << ex.learning_rate;
  out << YAML::Key << "temperature" << YAML::Value << ex.temperature;
  out << YAML::EndMap;

  out << YAML::Key << "bank" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "k" << YAML::Value << c.bank.k;
  if (c.bank.k == 10) out << YAML::Comment("paper_default: true");
  out << YAML::Key << "min_fg_fraction" << YAML::Value << c.bank.min_fg_fraction;
  out << YAML::Key << "normalize" << YAML::Value << c.bank.normalize;
  out << YAML::Key << "max_iters" << YAML::Value << c.bank.max_iters;
  out << YAML::EndMap;

  const auto& d = c.diffusion;
  out << YAML::Key << "diffusion" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "timesteps" << YAML::Value << d.timesteps;
  out << YAML::Key << "beta_start" << YAML::Value << d.beta_start;
  out << YAML::Key << "beta_end" << YAML::Value << d.beta_end;
  out << YAML::Key << "schedule" << YAML::Value << to_string(d.schedule);
  out << YAML::Key << "base_width" << YAML::Value << d.base_width;
  out << YAML::Key << "depth" << YAML::Value << d.depth;
  out << YAML::Key << "steps" << YAML::Value << d.steps;
  if (d.steps == 20000) out << YAML::Comment("paper_default: true");
  out << YAML::Key << "batch_size" << YAML::Value << d.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << d.learning_rate;
  if (d.learning_rate == 1e-4) out << YAML::Comment("paper_default: true");
  out << YAML::EndMap;

  const auto& g = c.generation;
  out << YAML::Key << "generation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "ratio" << YAML::Value << g.ratio;
  out << YAML::Key << "fallback" << YAML::Value << to_string(g.fallback);
  out << YAML::Key << "sampler" << YAML::Value << to_string(g.sampler.kind);
  out << YAML::Key << "ddim_stride" << YAML::Value << g.sampler.stride;
  out << YAML::Key << "batch_size" << YAML::Value << g.batch_size;
  out << YAML::EndMap;

  out << YAML::Key << "filter" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << c.filter.enabled;
  out << YAML::Key << "threshold" << YAML::Value << c.filter.threshold;
  out << YAML::EndMap;

  const auto& s = c.segmentation;
  out << YAML::Key << "segmentation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "depth" << YAML::Value << s.model.depth;
  out << YAML::Key << "base_width" << YAML::Value << s.model.base_width;
  out << YAML::Key << "epochs" << YAML::Value << s.epochs;
  if (s.epochs == 10) out << YAML::Comment("paper_default: true");
  out << YAML::Key << "batch_size" << YAML::Value << s.batch_size;
  if (s.batch_size == 12) out << YAML::Comment("paper_default: true");
  out << YAML::Key << "learning_rate" << YAML::Value << s.learning_rate;
  out << YAML::Key << "ce_weight" << YAML::Value << s.loss.cross_entropy;
  if (s.loss.cross_entropy == 0.5) out << YAML::Comment("paper_default: true");
  out << YAML::Key << "dice_weight" << YAML::Value << s.loss.dice;
  if (s.loss.dice == 0.5) out << YAML::Comment("paper_default: true");
  out << YAML::Key << "dice_smooth" << YAML::Value << s.loss.smooth;
  out << YAML::Key << "augment" << YAML::Value << s.augment;
  out << YAML::Key << "color_jitter" << YAML::Value << s.color_jitter;
  out << YAML::Key << "threshold" << YAML::Value << s.threshold;
  out << YAML::Key << "variance" << YAML::Value << to_string(s.variance);
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void validate_config(const PipelineConfig& c) {
  validate_corpus_spec(c.corpus);
  const auto f = c.codec.options.mode == CodecMode::identity ? 1 : c.codec.options.downsample_factor;
  if (c.corpus.patch_size % f != 0) throw ParameterError("patch_size must be divisible by the codec factor");
  if (c.corpus.patch_size % c.extractor.options.stride != 0) {
    throw ParameterError("patch_size must be divisible by the extractor stride");
  }
  const auto latent = c.corpus.patch_size / f;
  const auto down = std::int64_t{1} << (c.diffusion.depth - 1);
  if (c.diffusion.depth < 1 || latent % down != 0) {
    throw ParameterError("latent size must be divisible by 2^(diffusion.depth-1)");
  }
  if (c.corpus.patch_size % (std::int64_t{1} << (c.segmentation.model.depth - 1)) != 0) {
    throw ParameterError("patch_size must be divisible by 2^(segmentation.depth-1)");
  }
  if (c.bank.k < 1) throw ParameterError("bank.k must be >= 1");
  if (c.bank.min_fg_fraction < 0.0 || c.bank.min_fg_fraction > 1.0) {
    throw ParameterError("bank.min_fg_fraction must lie in [0,1]");
  }
  if (c.diffusion.timesteps < 1 || c.diffusion.steps < 1 || c.diffusion.batch_size < 1) {
    throw ParameterError("diffusion timesteps, steps and batch_size must be positive");
  }
  if (!(c.diffusion.beta_start > 0.0 && c.diffusion.beta_start <= c.diffusion.beta_end && c.diffusion.beta_end < 1.0)) {
    throw ParameterError("need 0 < beta_start <= beta_end < 1");
  }
  if (c.generation.ratio < 0.0) throw ParameterError("generation.ratio must be >= 0");
  if (c.generation.sampler.stride < 1) throw ParameterError("generation.ddim_stride must be >= 1");
  if (c.filter.threshold <= 0.0 || c.filter.threshold >= 1.0) throw ParameterError("filter.threshold must lie in (0,1)");
  if (c.segmentation.epochs < 1 || c.segmentation.batch_size < 1) {
    throw ParameterError("segmentation epochs and batch_size must be positive");
  }
  if (c.segmentation.loss.cross_entropy < 0.0 || c.segmentation.loss.dice < 0.0) {
    throw ParameterError("loss weights must be non-negative");
  }
}

}  // namespace pathopaint
