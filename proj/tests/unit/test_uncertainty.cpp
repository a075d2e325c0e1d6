#include <doctest.h>

#include "oracles.hpp"
#include "pathopaint/corpus.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/seeding.hpp"
#include "pathopaint/segmentation.hpp"
#include "pathopaint/uncertainty.hpp"
#include "test_util.hpp"

using namespace pathopaint;

namespace {

class ConstantPredictor final : public ForegroundPredictor {
 public:
  ConstantPredictor(double p, bool trained) : p_(p), trained_(trained) {}
  torch::Tensor foreground_probability(const torch::Tensor& images) override {
    return torch::full({images.size(0), images.size(2), images.size(3)}, p_);
  }
  bool is_trained() const override { return trained_; }

 private:
  double p_;
  bool trained_;
};

// Reference run: FNV-1a of P's bytes and its foreground count.
constexpr std::uint64_t kReferenceHash = 2879658299562147506ull;
constexpr std::int64_t kReferenceForeground = 169;

torch::Tensor u8(std::vector<int> v) { return torch::tensor(v, torch::kInt32).to(torch::kUInt8); }

}  // namespace

TEST_SUITE("uncertainty_filter") {
  TEST_CASE("compute_uncertain: truth table") {
    const auto r = compute_uncertain(u8({1, 1, 0, 0}), u8({1, 0, 1, 0}));
    CHECK(torch::equal(r.fn_map, u8({0, 1, 0, 0})));
    CHECK(torch::equal(compute_uncertain(u8({1, 1, 1}), u8({0, 0, 0})).fn_map, u8({1, 1, 1})));
    CHECK(torch::equal(compute_uncertain(u8({1, 0, 1}), u8({1, 0, 1})).fn_map, u8({0, 0, 0})));
    CHECK(torch::equal(compute_uncertain(u8({0, 0}), u8({1, 1})).fn_map, u8({0, 0})));
    CHECK((r.fn_map.scalar_type() == torch::kUInt8));
  }

  TEST_CASE("compute_uncertain: subset of the mask and idempotent on the remainder") {
    auto gen = make_generator(4);
    for (int trial = 0; trial < 100; ++trial) {
      auto m = testutil::random_mask(12, 9, 0.5, gen);
      auto p = testutil::random_mask(12, 9, 0.5, gen);
      const auto fn = compute_uncertain(m, p).fn_map;
      CHECK(fn.le(m).all().item<bool>());
      CHECK(torch::equal(fn, (m.eq(1) & p.eq(0)).to(torch::kUInt8)));
      CHECK(torch::equal(compute_uncertain(fn, p).fn_map, fn));
    }
    CHECK_THROWS_AS(compute_uncertain(u8({1, 0}), u8({1, 0, 0})), ContractError);
    CHECK_THROWS_AS(compute_uncertain(torch::tensor({2}), torch::tensor({1})), ContractError);
  }

  TEST_CASE("predict_with_pretrained: thresholding") {
    auto s = testutil::make_sample(torch::rand({3, 6, 6}), torch::zeros({6, 6}), "a", "p");
    ConstantPredictor high(0.9, true);
    CHECK(predict_with_pretrained(s, high).eq(1).all().item<bool>());
    CHECK(predict_with_pretrained(s, high, 1.0).eq(0).all().item<bool>());
    ConstantPredictor half(0.5, true);
    CHECK(predict_with_pretrained(s, half, 0.5).eq(1).all().item<bool>());
    CHECK((predict_with_pretrained(s, high).scalar_type() == torch::kUInt8));
    ConstantPredictor untrained(0.9, false);
    CHECK_THROWS_AS(predict_with_pretrained(s, untrained), ContractError);
    SegModel fresh({2, 4}, 1);
    CHECK_THROWS_AS(predict_with_pretrained(s, fresh), ContractError);
  }

  TEST_CASE("predict_with_pretrained: seeded toy segmenter matches the reference run") {
    CorpusSpec spec;
    spec.patch_size = 16;
    spec.num_slides = 4;
    spec.patches_per_slide = 4;
    spec.val_slides = 1;
    spec.test_slides = 0;
    spec.min_blobs = 1;
    spec.seed = 12;
    const auto corpus = generate_corpus(spec);
    SegTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.model = {2, 4};
    cfg.seed = 5;
    auto model = train_segmentation(corpus.train, {}, corpus.validation, cfg).model;
    const auto p = predict_with_pretrained(corpus.validation[0], model);
    const auto bytes = p.contiguous();
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t i = 0; i < bytes.numel(); ++i) h = (h ^ bytes.data_ptr<std::uint8_t>()[i]) * 1099511628211ull;
    CHECK(h == kReferenceHash);
    CHECK(p.sum().item<std::int64_t>() == kReferenceForeground);
  }

  TEST_CASE("masked_seg_loss: zero fn_map equals the unfiltered loss") {
    auto gen = make_generator(6);
    auto logits = torch::randn({3, 2, 5, 5}, gen);
    auto target = testutil::random_mask(3 * 5, 5, 0.4, gen).view({3, 5, 5});
    auto a = masked_seg_loss(logits, target, torch::zeros_like(target));
    auto b = seg_loss(logits, target);
    CHECK(a.item<double>() == b.item<double>());
  }

  TEST_CASE("masked_seg_loss: excluding all foreground of an all-foreground mask") {
    auto m = torch::ones({4, 4}, torch::kUInt8);
    CHECK_THROWS_AS(masked_seg_loss(torch::randn({2, 4, 4}), m, m), DegenerateLossError);
    auto bg = u8({0, 1, 0, 0}).view({2, 2});
    CHECK_THROWS_AS(masked_seg_loss(torch::randn({2, 2, 2}), torch::zeros({2, 2}, torch::kUInt8), bg), ContractError);
  }

  TEST_CASE("masked_seg_loss: 4x4 case against the loop oracle") {
    auto gen = make_generator(7);
    for (int trial = 0; trial < 20; ++trial) {
      auto logits = torch::randn({2, 4, 4}, gen, torch::kFloat64);
      auto m = testutil::random_mask(4, 4, 0.6, gen);
      auto fn = (m.eq(1) & torch::rand({4, 4}, gen).lt(0.4)).to(torch::kUInt8);
      if (fn.sum().item<int>() == 16) continue;
      const double expect = oracle::seg_loss(logits, m, 1 - fn);
      CHECK(masked_seg_loss(logits, m, fn).item<double>() == doctest::Approx(expect).epsilon(1e-9));
    }
  }

  TEST_CASE("masked_seg_loss: 4x4 with three excluded pixels") {
    auto gen = make_generator(70);
    auto logits = torch::randn({2, 4, 4}, gen, torch::kFloat64);
    auto m = torch::zeros({4, 4}, torch::kUInt8);
    m.index_put_({torch::indexing::Slice(0, 2)}, 1);
    auto fn = torch::zeros({4, 4}, torch::kUInt8);
    fn[0][1] = 1;
    fn[0][3] = 1;
    fn[1][2] = 1;
    const double expect = oracle::seg_loss(logits, m, 1 - fn);
    CHECK(std::abs(masked_seg_loss(logits, m, fn).item<double>() - expect) <= 1e-6);
  }

  TEST_CASE("masked_seg_loss: gradient is zero on excluded pixels and matches finite differences") {
    auto gen = make_generator(8);
    auto logits = torch::randn({2, 4, 4}, gen, torch::kFloat64).requires_grad_(true);
    auto m = torch::zeros({4, 4}, torch::kUInt8);
    m.index_put_({torch::indexing::Slice(0, 3), torch::indexing::Slice(0, 3)}, 1);
    auto fn = torch::zeros({4, 4}, torch::kUInt8);
    fn[0][0] = 1;
    fn[1][2] = 1;
    auto loss = masked_seg_loss(logits, m, fn);
    loss.backward();
    auto g = logits.grad();
    CHECK(g.index({torch::indexing::Slice(), 0, 0}).abs().max().item<double>() == 0.0);
    CHECK(g.index({torch::indexing::Slice(), 1, 2}).abs().max().item<double>() == 0.0);

    const double h = 1e-6;
    auto base = logits.detach();
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          auto plus = base.clone(), minus = base.clone();
          plus[c][i][j] += h;
          minus[c][i][j] -= h;
          const double fd = (oracle::seg_loss(plus, m, 1 - fn) - oracle::seg_loss(minus, m, 1 - fn)) / (2 * h);
          CHECK(std::abs(fd - g[c][i][j].item<double>()) <= 1e-6);
        }
      }
    }
  }
}
