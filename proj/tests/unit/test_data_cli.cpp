#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "pathopaint/config.hpp"
#include "pathopaint/corpus.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/image_io.hpp"
#include "pathopaint/manifest.hpp"
#include "pathopaint/seeding.hpp"
#include "test_util.hpp"

using namespace pathopaint;

namespace {

CorpusSpec small_spec() {
  CorpusSpec spec;
  spec.patch_size = 32;
  spec.num_slides = 4;
  spec.patches_per_slide = 5;
  spec.val_slides = 1;
  spec.test_slides = 1;
  spec.seed = 21;
  return spec;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("data_cli") {
  TEST_CASE("generate_corpus: splits, families and sample invariants") {
    const auto spec = small_spec();
    const auto c = generate_corpus(spec);
    CHECK(c.train.size() == 10);
    CHECK(c.validation.size() == 5);
    CHECK(c.test.size() == 5);
    for (const auto& s : c.all()) {
      validate_sample(s, 32);
      CHECK(s.family >= 0);
      CHECK(s.family < 2);
    }
    CHECK(c.train[0].family != c.train[5].family);
    CHECK(c.train[0].source_image_id != c.train[5].source_image_id);
  }

  TEST_CASE("generate_corpus: seeded rerun writes bit-identical PNGs") {
    const auto spec = small_spec();
    testutil::TempDir a("corpus-a"), b("corpus-b");
    write_corpus(a.path, generate_corpus(spec));
    write_corpus(b.path, generate_corpus(spec));
    std::size_t files = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(a.path)) {
      if (!e.is_regular_file()) continue;
      const auto rel = std::filesystem::relative(e.path(), a.path);
      CHECK(slurp(e.path()) == slurp(b.path / rel));
      ++files;
    }
    CHECK(files == 41);

    auto other = spec;
    other.seed = 22;
    const auto c1 = generate_corpus(spec), c2 = generate_corpus(other);
    CHECK_FALSE(torch::equal(c1.train[0].image, c2.train[0].image));
  }

  TEST_CASE("generate_corpus: family colors are separated in the pixels") {
    auto spec = small_spec();
    spec.num_slides = 6;
    spec.patches_per_slide = 8;
    spec.min_blobs = 1;
    const auto c = generate_corpus(spec);
    double sum[2][3] = {{0, 0, 0}, {0, 0, 0}}, count[2] = {0, 0};
    for (const auto& s : c.all()) {
      auto fg = s.mask.to(torch::kBool);
      count[s.family] += fg.sum().item<double>();
      for (int ch = 0; ch < 3; ++ch) sum[s.family][ch] += s.image[ch].masked_select(fg).sum().item<double>();
    }
    REQUIRE(count[0] > 0);
    REQUIRE(count[1] > 0);
    double d2 = 0.0;
    for (int ch = 0; ch < 3; ++ch) d2 += std::pow(sum[0][ch] / count[0] - sum[1][ch] / count[1], 2);
    CHECK(std::sqrt(d2) >= spec.min_family_separation);
  }

  TEST_CASE("generate_corpus: zero blobs gives all-background patches") {
    auto spec = small_spec();
    spec.max_blobs = 0;
    for (const auto& s : generate_corpus(spec).all()) CHECK(foreground_pixels(s) == 0);
  }

  TEST_CASE("generate_corpus: invalid specs") {
    auto one_family = small_spec();
    one_family.families.resize(1);
    CHECK_THROWS_AS(generate_corpus(one_family), ParameterError);
    auto close = small_spec();
    close.families[1].color = close.families[0].color;
    CHECK_THROWS_AS(generate_corpus(close), ParameterError);
    auto no_train = small_spec();
    no_train.val_slides = 2;
    no_train.test_slides = 2;
    CHECK_THROWS_AS(generate_corpus(no_train), ParameterError);
    auto blobs = small_spec();
    blobs.min_blobs = 3;
    blobs.max_blobs = 1;
    CHECK_THROWS_AS(generate_corpus(blobs), ParameterError);
  }

  TEST_CASE("corpus round trip through disk") {
    const auto c = generate_corpus(small_spec());
    testutil::TempDir dir("corpus-rt");
    write_corpus(dir.path, c);
    const auto back = read_corpus(dir.path);
    REQUIRE(back.train.size() == c.train.size());
    REQUIRE(back.test.size() == c.test.size());
    for (std::size_t i = 0; i < c.train.size(); ++i) {
      CHECK(back.train[i].patch_id == c.train[i].patch_id);
      CHECK(back.train[i].family == c.train[i].family);
      CHECK(torch::equal(back.train[i].mask, c.train[i].mask));
      CHECK((back.train[i].image - c.train[i].image).abs().max().item<double>() <= 0.5 / 255.0 + 1e-6);
    }
    CHECK(read_dataset(dir.path).size() == 20);
  }

  TEST_CASE("PNG round trip is exact on 8-bit values") {
    testutil::TempDir dir("png");
    auto img = torch::randint(0, 256, {3, 5, 7}).to(torch::kFloat32) / 255.0;
    write_rgb_png(dir.path / "x.png", img);
    CHECK(torch::allclose(read_rgb_png(dir.path / "x.png"), img, 0, 1e-7));
    auto m = (torch::rand({5, 7}) < 0.5).to(torch::kUInt8);
    write_mask_png(dir.path / "m.png", m);
    CHECK(torch::equal(read_mask_png(dir.path / "m.png"), m));
  }

  TEST_CASE("manifest round trips") {
    testutil::TempDir dir("manifest");
    std::vector<CorpusRecord> cr{{"p1", "s0", 0, "train", "images/p1.png", "masks/p1.png", 12},
                                 {"p\"2", "s1", 1, "test", "images/p2.png", "masks/p2.png", 0}};
    write_corpus_manifest(dir.path / "c.jsonl", cr);
    CHECK((read_corpus_manifest(dir.path / "c.jsonl") == cr));

    std::vector<SyntheticRecord> sr{
        {"syn0", "p1", "p7", 3, 0xFFFFFFFFFFFFFFFFull, "images/syn0.png", "masks/syn0.png", std::nullopt, false, "s0"},
        {"syn1", "p2", "p2", 1, 5, "images/syn1.png", "masks/syn1.png", "uncertain/syn1.png", true, "s1"}};
    write_synthetic_manifest(dir.path / "s.jsonl", sr);
    CHECK((read_synthetic_manifest(dir.path / "s.jsonl") == sr));

    std::ofstream(dir.path / "bad.jsonl") << "{not json\n";
    CHECK_THROWS_AS(read_corpus_manifest(dir.path / "bad.jsonl"), FormatError);
  }

  TEST_CASE("config: presets, flagged defaults and stage seeds") {
    const auto def = preset_config("default");
    CHECK(def.corpus.patch_size == 256);
    CHECK(def.codec.options.downsample_factor == 4);
    CHECK(def.bank.k == 10);
    CHECK(def.segmentation.loss.cross_entropy == 0.5);
    CHECK(def.segmentation.loss.dice == 0.5);
    CHECK(def.segmentation.epochs == 10);
    CHECK(def.segmentation.batch_size == 12);
    const auto smoke = preset_config("smoke");
    CHECK(smoke.corpus.patch_size == 64);
    CHECK(smoke.diffusion.timesteps == 200);
    CHECK(smoke.corpus.num_slides * smoke.corpus.patches_per_slide == 200);
    CHECK_THROWS_AS(preset_config("huge"), ParameterError);

    auto cfg = preset_config("tiny");
    cfg.seed = 4;
    CHECK(cfg.stage_seed("codec") == derive_seed(4, "codec"));
    cfg.stage_seeds["codec"] = 99;
    CHECK(cfg.stage_seed("codec") == 99);

    const auto text = dump_config(def);
    CHECK(text.find("paper_default: true") != std::string::npos);
  }

  TEST_CASE("config: dump/parse round trip and unknown keys") {
    auto cfg = preset_config("smoke");
    cfg.seed = 17;
    cfg.stage_seeds["generation"] = 5;
    cfg.generation.ratio = 0.5;
    cfg.extractor.kind = ExtractorKind::random_projection;
    const auto text = dump_config(cfg);
    const auto back = parse_config(text);
    CHECK(dump_config(back) == text);
    CHECK(back.seed == 17);
    CHECK(back.stage_seed("generation") == 5);
    CHECK(back.generation.ratio == 0.5);

    CHECK(parse_config("preset: tiny\nbank:\n  k: 4\n").bank.k == 4);
    CHECK_THROWS_AS(parse_config("bank:\n  kk: 4\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("banks: {}\n"), ParameterError);
    CHECK_THROWS_AS(parse_config("preset: tiny\ncorpus:\n  patch_size: 30\n"), ParameterError);

    testutil::TempDir dir("cfg");
    std::ofstream(dir.path / "c.yaml") << "preset: tiny\nseed: 3\n";
    CHECK(load_config(dir.path / "c.yaml").seed == 3);
    CHECK_THROWS_AS(load_config(dir.path / "missing.yaml"), ParameterError);
  }
}
