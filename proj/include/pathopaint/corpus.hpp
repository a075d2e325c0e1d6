#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pathopaint/sample.hpp"

namespace pathopaint {

using Rgb = std::array<double, 3>;

/// One synthetic "tumor" appearance: base color plus oriented stripes at a spatial frequency
/// (cycles per patch).
struct TextureFamily {
  Rgb color{0.4, 0.2, 0.5};
  double frequency = 4.0;
  double amplitude = 0.06;
};

/// Toy stand-in for slide-level patch datasets. Slide s renders its foreground with family
/// s mod |families|; the last val_slides + test_slides slides form the validation and test splits.
struct CorpusSpec {
  int num_slides = 10;
  int patches_per_slide = 20;
  int patch_size = 256;
  Rgb background_color{0.91, 0.80, 0.86};
  double background_variation = 0.04;  // amplitude of the low-frequency background pattern
  double noise_scale = 0.01;           // per-pixel Gaussian noise
  std::vector<TextureFamily> families{{{0.36, 0.16, 0.48}, 3.0, 0.06}, {{0.78, 0.40, 0.30}, 6.0, 0.06}};
  // Families must differ by at least this Euclidean RGB distance.
  double min_family_separation = 0.25;
  int min_blobs = 0;
  int max_blobs = 3;
  double min_radius = 0.12;  // fraction of patch_size
  double max_radius = 0.28;
  int val_slides = 2;
  int test_slides = 2;
  std::uint64_t seed = 0;
};

/// Throws ParameterError on an invalid spec.
void validate_corpus_spec(const CorpusSpec& spec);

struct Corpus {
  Dataset train;
  Dataset validation;
  Dataset test;

  Dataset all() const;
};

/// Deterministic given spec.seed. Masks mark exactly the pixels inside the rendered blobs.
Corpus generate_corpus(const CorpusSpec& spec);

/// Renders one patch; exposed for tests.
PatchSample render_patch(const CorpusSpec& spec, int slide, int index);

}  // namespace pathopaint
