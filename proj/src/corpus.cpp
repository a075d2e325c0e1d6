#include "pathopaint/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "pathopaint/errors.hpp"
#include "pathopaint/seeding.hpp"

namespace pathopaint {

void validate_corpus_spec(const CorpusSpec& spec) {
  if (spec.num_slides < 1 || spec.patches_per_slide < 1) throw ParameterError("corpus: need at least one slide and patch");
  if (spec.patch_size < 8) throw ParameterError("corpus: patch_size must be >= 8");
  if (spec.families.size() < 2) throw ParameterError("corpus: at least two foreground families are required");
  if (spec.min_blobs < 0 || spec.max_blobs < spec.min_blobs) throw ParameterError("corpus: invalid blob count range");
  if (!(spec.min_radius > 0.0 && spec.min_radius <= spec.max_radius && spec.max_radius < 1.0)) {
    throw ParameterError("corpus: invalid blob radius range");
  }
  if (spec.val_slides < 0 || spec.test_slides < 0 || spec.val_slides + spec.test_slides >= spec.num_slides) {
    throw ParameterError("corpus: validation and test slides must leave at least one training slide");
  }
  if (spec.noise_scale < 0.0 || spec.background_variation < 0.0) throw ParameterError("corpus: negative noise");
  for (std::size_t i = 0; i < spec.families.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.families.size(); ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) d2 += std::pow(spec.families[i].color[c] - spec.families[j].color[c], 2);
      if (std::sqrt(d2) < spec.min_family_separation) {
        throw ParameterError("corpus: families " + std::to_string(i) + " and " + std::to_string(j) +
                             " are closer than min_family_separation");
      }
    }
  }
}

namespace {

std::string slide_id(int slide) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "slide%03d", slide);
  return buf;
}

std::string patch_id(int slide, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "slide%03d-p%04d", slide, index);
  return buf;
}

}  // namespace

PatchSample render_patch(const CorpusSpec& spec, int slide, int index) {
  const auto n = static_cast<std::int64_t>(spec.patch_size);
  const auto key = derive_seed(spec.seed, patch_id(slide, index));
  std::mt19937_64 rng(key);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto gen = make_generator(derive_seed(key, "pixels"));

  const int family_index = slide % static_cast<int>(spec.families.size());
  const auto& family = spec.families[static_cast<std::size_t>(family_index)];

  auto ys = torch::arange(n, torch::kFloat64).view({n, 1}).expand({n, n});
  auto xs = torch::arange(n, torch::kFloat64).view({1, n}).expand({n, n});
  const double size = static_cast<double>(n);

  // Background: base color, a smooth two-wave pattern, and fine noise.
  const double phase_a = u01(rng) * 2 * std::numbers::pi;
  const double phase_b = u01(rng) * 2 * std::numbers::pi;
  auto pattern = torch::sin(xs / size * 2 * std::numbers::pi * 1.5 + phase_a) *
                 torch::cos(ys / size * 2 * std::numbers::pi * 1.0 + phase_b);
  std::vector<torch::Tensor> bg;
  for (int c = 0; c < 3; ++c) bg.push_back(spec.background_color[c] + spec.background_variation * pattern);
  auto image = torch::stack(bg);

  // Foreground blobs: wobbly discs.
  const int blobs = std::uniform_int_distribution<int>(spec.min_blobs, spec.max_blobs)(rng);
  auto mask = torch::zeros({n, n}, torch::kBool);
  for (int b = 0; b < blobs; ++b) {
    const double cx = u01(rng) * size;
    const double cy = u01(rng) * size;
    const double r = (spec.min_radius + (spec.max_radius - spec.min_radius) * u01(rng)) * size;
    const double wobble = 0.15 * u01(rng);
    const double lobes = 2.0 + std::floor(u01(rng) * 4.0);
    const double rot = u01(rng) * 2 * std::numbers::pi;
    auto dx = xs - cx;
    auto dy = ys - cy;
    auto theta = torch::atan2(dy, dx);
    auto radius = r * (1.0 + wobble * torch::sin(lobes * theta + rot));
    mask = mask.logical_or((dx * dx + dy * dy).sqrt() <= radius);
  }

  const double angle = u01(rng) * std::numbers::pi;
  const double stripe_phase = u01(rng) * 2 * std::numbers::pi;
  auto stripes = torch::sin((xs * std::cos(angle) + ys * std::sin(angle)) / size * 2 * std::numbers::pi *
                                family.frequency +
                            stripe_phase);
  std::vector<torch::Tensor> fg;
  for (int c = 0; c < 3; ++c) fg.push_back(family.color[c] + family.amplitude * stripes);
  image = torch::where(mask.unsqueeze(0).expand({3, n, n}), torch::stack(fg), image);
  image = image + spec.noise_scale * torch::randn({3, n, n}, gen, torch::kFloat64);
  image = image.clamp(0.0, 1.0);
  // Quantize to 8 bits so in-memory samples match their PNG form exactly.
  image = (image * 255.0).round() / 255.0;

  PatchSample s;
  s.image = image.to(torch::kFloat32).contiguous();
  s.mask = mask.to(torch::kUInt8).contiguous();
  s.source_image_id = slide_id(slide);
  s.patch_id = patch_id(slide, index);
  s.origin = Origin::real;
  s.family = family_index;
  return s;
}

Dataset Corpus::all() const {
  Dataset out = train;
  out.insert(out.end(), validation.begin(), validation.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  validate_corpus_spec(spec);
  Corpus corpus;
  const int first_val = spec.num_slides - spec.val_slides - spec.test_slides;
  const int first_test = spec.num_slides - spec.test_slides;
  for (int slide = 0; slide < spec.num_slides; ++slide) {
    auto& split = slide < first_val ? corpus.train : (slide < first_test ? corpus.validation : corpus.test);
    for (int i = 0; i < spec.patches_per_slide; ++i) split.push_back(render_patch(spec, slide, i));
  }
  return corpus;
}

}  // namespace pathopaint
