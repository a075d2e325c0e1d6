#include <doctest.h>

#include "pathopaint/codec.hpp"
#include "pathopaint/container.hpp"
#include "pathopaint/corpus.hpp"
#include "pathopaint/diffusion.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/seeding.hpp"
#include "test_util.hpp"

using namespace pathopaint;

namespace {

Dataset small_corpus(int size = 16, int slides = 4, int per_slide = 4) {
  CorpusSpec spec;
  spec.patch_size = size;
  spec.num_slides = slides;
  spec.patches_per_slide = per_slide;
  spec.val_slides = 0;
  spec.test_slides = 0;
  spec.seed = 3;
  return generate_corpus(spec).train;
}

}  // namespace

TEST_SUITE("latent_codec") {
  TEST_CASE("identity mode round trip is bitwise") {
    const auto codec = LatentCodec::identity();
    CHECK(codec.downsample_factor() == 1);
    CHECK(codec.latent_channels() == 3);
    auto gen = make_generator(1);
    auto x = torch::rand({3, 12, 12}, gen);
    CHECK(torch::equal(codec.encode(x), x));
    CHECK(torch::equal(codec.decode(codec.encode(x)), x));
  }

  TEST_CASE("learned mode: 256x256 input gives 64x64 latent at f=4") {
    LatentCodec codec({CodecMode::learned, 4, 4, 8}, 0);
    auto z = codec.encode(torch::rand({3, 256, 256}));
    CHECK(z.sizes().equals({4, 64, 64}));
  }

  TEST_CASE("learned mode: shape contract over random divisible shapes") {
    auto gen = make_generator(2);
    for (std::int64_t f : {2, 4, 8}) {
      LatentCodec codec({CodecMode::learned, f, 3, 8}, 1);
      for (int trial = 0; trial < 4; ++trial) {
        const auto h = f * torch::randint(1, 5, {1}, gen).item<std::int64_t>();
        const auto w = f * torch::randint(1, 5, {1}, gen).item<std::int64_t>();
        auto z = codec.encode(torch::rand({2, 3, h, w}, gen));
        CHECK(z.sizes().equals({2, 3, h / f, w / f}));
        auto x = codec.decode(z);
        CHECK(x.sizes().equals({2, 3, h, w}));
      }
    }
  }

  TEST_CASE("non-divisible input is a shape error") {
    LatentCodec codec({CodecMode::learned, 4, 4, 8}, 0);
    CHECK_THROWS_AS(codec.encode(torch::rand({3, 10, 12})), ShapeError);
    CHECK_THROWS_AS(codec.encode(torch::rand({1, 8, 8})), ShapeError);
    CHECK_THROWS_AS(codec.decode(torch::rand({3, 2, 2})), ShapeError);
  }

  TEST_CASE("zero latent decodes to a finite image in [0,1]") {
    LatentCodec codec({CodecMode::learned, 4, 4, 8}, 5);
    auto x = codec.decode(torch::zeros({4, 4, 4}));
    CHECK(x.sizes().equals({3, 16, 16}));
    CHECK(torch::isfinite(x).all().item<bool>());
    CHECK(x.min().item<double>() >= 0.0);
    CHECK(x.max().item<double>() <= 1.0);
    auto wild = codec.decode(torch::full({4, 4, 4}, 1e30));
    CHECK(torch::isfinite(wild).all().item<bool>());
  }

  TEST_CASE("encode is deterministic") {
    LatentCodec a({CodecMode::learned, 4, 4, 8}, 7), b({CodecMode::learned, 4, 4, 8}, 7);
    auto x = torch::rand({3, 16, 16});
    CHECK(torch::equal(a.encode(x), b.encode(x)));
  }

  TEST_CASE("pretrain: zero epochs leaves the codec unchanged") {
    LatentCodec codec({CodecMode::learned, 4, 4, 8}, 1);
    const auto before = codec.parameter_snapshot();
    pretrain_codec(codec, small_corpus(), {0, 4, 1e-3, 1});
    CHECK(codec.parameter_snapshot() == before);
    CHECK(codec.frozen());
  }

  TEST_CASE("pretrain: two seeded epochs lower the loss and are reproducible") {
    const auto data = small_corpus();
    LatentCodec a({CodecMode::learned, 4, 4, 8}, 1), b({CodecMode::learned, 4, 4, 8}, 1);
    const auto ra = pretrain_codec(a, data, {2, 4, 3e-3, 9});
    const auto rb = pretrain_codec(b, data, {2, 4, 3e-3, 9});
    REQUIRE(ra.epoch_losses.size() == 2);
    CHECK(ra.epoch_losses.back() < ra.initial_loss);
    CHECK(ra.epoch_losses == rb.epoch_losses);
    CHECK(a.parameter_snapshot() == b.parameter_snapshot());
    CHECK(a.frozen());
  }

  TEST_CASE("pretrain: contract errors") {
    auto identity = LatentCodec::identity();
    try {
      pretrain_codec(identity, small_corpus(), {});
      FAIL("expected an error");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()) == "identity codec is not trainable");
    }
    LatentCodec codec({CodecMode::learned, 4, 4, 8}, 1);
    CHECK_THROWS_AS(pretrain_codec(codec, {}, {}), ParameterError);
  }

  TEST_CASE("frozen codec parameters survive diffusion training bit-for-bit") {
    const auto data = small_corpus();
    LatentCodec codec({CodecMode::learned, 4, 4, 8}, 2);
    pretrain_codec(codec, data, {1, 4, 1e-3, 1});
    const auto before = codec.parameter_snapshot();
    for (const auto& p : codec.net()->parameters()) CHECK_FALSE(p.requires_grad());

    std::vector<DiffusionExample> ex;
    for (const auto& s : data) {
      ex.push_back({codec.encode(s.image), codec.encode(s.image * 0.5), torch::ones({1, 4, 4}), torch::ones({8})});
    }
    ConditionalDenoiser den({4, 8, 8, 2}, 1);
    train_diffusion(den, ex, make_noise_schedule(10, 1e-4, 0.02), {5, 4, 1e-3, 1});
    CHECK(codec.parameter_snapshot() == before);
  }

  TEST_CASE("checkpoint round trip") {
    testutil::TempDir dir("ppvc");
    LatentCodec codec({CodecMode::learned, 4, 4, 8}, 3);
    pretrain_codec(codec, small_corpus(), {1, 4, 1e-3, 1});
    codec.save(dir.path / "c.ppvc");
    const auto loaded = LatentCodec::load(dir.path / "c.ppvc");
    CHECK(loaded.parameter_snapshot() == codec.parameter_snapshot());
    CHECK(loaded.frozen());
    auto x = torch::rand({3, 16, 16});
    CHECK(torch::equal(loaded.encode(x), codec.encode(x)));
    const auto c = read_container(dir.path / "c.ppvc", "PPVC");
    CHECK(c.magic == make_magic("PPVC"));
    CHECK(c.version == kContainerVersion);

    LatentCodec::identity().save(dir.path / "i.ppvc");
    CHECK(LatentCodec::load(dir.path / "i.ppvc").mode() == CodecMode::identity);
    CHECK_THROWS_AS(LatentCodec::load(dir.path / "missing.ppvc"), FormatError);
  }

  TEST_CASE("mode names") {
    CHECK(parse_codec_mode("identity") == CodecMode::identity);
    CHECK(parse_codec_mode("learned") == CodecMode::learned);
    CHECK_THROWS_AS(parse_codec_mode("vq"), ParameterError);
  }
}
