#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "pathopaint/container.hpp"
#include "pathopaint/diffusion.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/seeding.hpp"
#include "test_util.hpp"

using namespace pathopaint;

namespace {

std::vector<TrainingExample> random_batch(std::int64_t n, const NoiseSchedule& s, std::uint64_t seed, std::int64_t C = 4,
                                          std::int64_t hw = 4, std::int64_t d = 8) {
  auto gen = make_generator(seed);
  std::vector<TrainingExample> batch;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto t = torch::randint(0, s.num_steps, {1}, gen).item<std::int64_t>();
    auto z0 = torch::randn({C, hw, hw}, gen);
    auto eps = torch::randn({C, hw, hw}, gen);
    ConditioningBundle b{forward_diffuse(z0, t, eps, s), torch::randn({C, hw, hw}, gen),
                         (torch::rand({1, hw, hw}, gen) < 0.5).to(torch::kFloat32), torch::randn({d}, gen), t};
    batch.emplace_back(b, eps);
  }
  return batch;
}

NoiseSchedule manual_schedule(std::vector<double> alpha_bars) {
  NoiseSchedule s;
  s.num_steps = static_cast<std::int64_t>(alpha_bars.size());
  s.alpha_bars = alpha_bars;
  s.betas.assign(alpha_bars.size(), 0.5);
  s.alphas.assign(alpha_bars.size(), 0.5);
  return s;
}

}  // namespace

TEST_SUITE("diffusion_core") {
  TEST_CASE("schedule: single step") {
    const auto s = make_noise_schedule(1, 0.1, 0.1);
    REQUIRE(s.betas.size() == 1);
    CHECK(s.betas[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.alpha_bars[0] == doctest::Approx(0.9).epsilon(1e-15));
  }

  TEST_CASE("schedule: two steps by hand") {
    const auto s = make_noise_schedule(2, 0.1, 0.3);
    CHECK(s.betas[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.betas[1] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(s.alpha_bars[1] == doctest::Approx(0.63).epsilon(1e-14));
  }

  TEST_CASE("schedule: T=1000 linear against cumulative product oracle") {
    const auto s = make_noise_schedule(1000, 1e-4, 0.02);
    const auto [betas, bars] = oracle::linear_schedule(1000, 1e-4, 0.02);
    REQUIRE(s.alpha_bars.size() == 1000);
    for (std::size_t t = 0; t < 1000; ++t) {
      CHECK(s.betas[t] == doctest::Approx(betas[t]).epsilon(1e-12));
      CHECK(s.alpha_bars[t] == doctest::Approx(bars[t]).epsilon(1e-12));
      if (t > 0) CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
    }
    CHECK(s.alpha_bars.back() < 0.01);
    CHECK(s.alpha_bars[0] == 1.0 - s.betas[0]);
  }

  TEST_CASE("schedule: invariants for both kinds") {
    for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
      for (std::int64_t T : {1, 2, 10, 200, 1000}) {
        const auto s = make_noise_schedule(T, 1e-4, 0.02, kind);
        REQUIRE(static_cast<std::int64_t>(s.betas.size()) == T);
        REQUIRE(s.alphas.size() == s.betas.size());
        REQUIRE(s.alpha_bars.size() == s.betas.size());
        for (std::size_t t = 0; t < s.betas.size(); ++t) {
          CHECK(s.betas[t] > 0.0);
          CHECK(s.betas[t] < 1.0);
          CHECK(s.alphas[t] == 1.0 - s.betas[t]);
          if (t > 0) CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
        }
      }
    }
  }

  TEST_CASE("schedule: invalid ranges") {
    CHECK_THROWS_AS(make_noise_schedule(0, 0.1, 0.2), ParameterError);
    CHECK_THROWS_AS(make_noise_schedule(10, 0.0, 0.2), ParameterError);
    CHECK_THROWS_AS(make_noise_schedule(10, 0.3, 0.2), ParameterError);
    CHECK_THROWS_AS(make_noise_schedule(10, 0.1, 1.0), ParameterError);
    CHECK_THROWS_AS(parse_schedule_kind("quadratic"), ParameterError);
  }

  TEST_CASE("forward_diffuse: limits and hand value") {
    auto gen = make_generator(3);
    auto z0 = torch::randn({2, 3, 3}, gen);
    auto eps = torch::randn({2, 3, 3}, gen);
    const auto s = manual_schedule({1.0, 0.0, 0.25});
    CHECK(torch::equal(forward_diffuse(z0, 0, eps, s), z0));
    CHECK(torch::equal(forward_diffuse(z0, 1, eps, s), eps));
    auto half = forward_diffuse(torch::ones({1, 2, 2}), 2, torch::zeros({1, 2, 2}), s);
    CHECK(torch::equal(half, torch::full({1, 2, 2}, 0.5)));
  }

  TEST_CASE("forward_diffuse: closed form and batched overload agree") {
    const auto s = make_noise_schedule(50, 1e-4, 0.02);
    auto gen = make_generator(11);
    auto z0 = torch::randn({3, 4, 4, 4}, gen);
    auto eps = torch::randn({3, 4, 4, 4}, gen);
    auto t = torch::tensor({0, 17, 49}, torch::kLong);
    auto batched = forward_diffuse(z0, t, eps, s);
    for (int i = 0; i < 3; ++i) {
      const auto ti = t[i].item<std::int64_t>();
      const double ab = s.alpha_bars[static_cast<std::size_t>(ti)];
      auto expect = std::sqrt(ab) * oracle::to_vec(z0[i])[0] + std::sqrt(1.0 - ab) * oracle::to_vec(eps[i])[0];
      CHECK(batched[i].flatten()[0].item<double>() == doctest::Approx(expect).epsilon(1e-6));
      CHECK(torch::allclose(batched[i], forward_diffuse(z0[i], ti, eps[i], s), 1e-6, 1e-6));
    }
  }

  TEST_CASE("forward_diffuse: errors") {
    const auto s = make_noise_schedule(10, 1e-4, 0.02);
    CHECK_THROWS_AS(forward_diffuse(torch::zeros({1, 2, 2}), 0, torch::zeros({1, 2, 3}), s), ShapeError);
    CHECK_THROWS_AS(forward_diffuse(torch::zeros({1, 2, 2}), 10, torch::zeros({1, 2, 2}), s), ParameterError);
    CHECK_THROWS_AS(forward_diffuse(torch::zeros({1, 2, 2}), -1, torch::zeros({1, 2, 2}), s), ParameterError);
  }

  TEST_CASE("forward_diffuse: variance law") {
    const auto s = make_noise_schedule(200, 1e-4, 0.02);
    auto gen = make_generator(5);
    for (std::int64_t t : {10, 100, 199}) {
      auto eps = torch::randn({10000}, gen);
      auto zt = forward_diffuse(torch::zeros({10000}), t, eps, s).to(torch::kFloat64);
      const double var = zt.var(/*unbiased=*/false).item<double>();
      const double expect = 1.0 - s.alpha_bars[static_cast<std::size_t>(t)];
      CHECK(std::abs(var - expect) / expect < 0.05);
    }
  }

  TEST_CASE("bundle validation") {
    ConditioningBundle b{torch::zeros({4, 4, 4}), torch::zeros({4, 4, 4}), torch::zeros({1, 4, 4}), torch::zeros({8}), 3};
    CHECK_NOTHROW(validate_bundle(b, 10));
    auto bad = b;
    bad.t = 10;
    CHECK_THROWS(validate_bundle(bad, 10));
    bad = b;
    bad.z_bg = torch::zeros({4, 4, 2});
    CHECK_THROWS_AS(validate_bundle(bad, 10), ShapeError);
    bad = b;
    bad.z_m = torch::full({1, 4, 4}, 0.5);
    CHECK_THROWS(validate_bundle(bad, 10));
  }

  TEST_CASE("training_loss: oracle is exactly zero") {
    const auto s = make_noise_schedule(100, 1e-4, 0.02);
    const auto batch = random_batch(6, s, 21);
    std::vector<torch::Tensor> eps;
    for (const auto& ex : batch) eps.push_back(ex.second);
    testutil::FixedDenoiser oracle_net(4, 8);
    oracle_net.out = torch::stack(eps);
    CHECK(training_loss(batch, oracle_net).item<double>() == 0.0);
  }

  TEST_CASE("training_loss: zero predictor on unit noise") {
    ConditioningBundle b{torch::zeros({2, 3, 3}), torch::zeros({2, 3, 3}), torch::zeros({1, 3, 3}), torch::zeros({8}), 0};
    std::vector<TrainingExample> batch{{b, torch::ones({2, 3, 3})}, {b, torch::ones({2, 3, 3})}};
    testutil::FixedDenoiser zero(2, 8);
    CHECK(training_loss(batch, zero).item<double>() == 1.0);
  }

  TEST_CASE("training_loss: matches scalar loop oracle") {
    const auto s = make_noise_schedule(100, 1e-4, 0.02);
    const auto batch = random_batch(4, s, 99);
    auto gen = make_generator(7);
    testutil::FixedDenoiser net(4, 8);
    net.out = torch::randn({4, 4, 4, 4}, gen);
    std::vector<torch::Tensor> eps;
    for (const auto& ex : batch) eps.push_back(ex.second);
    const double expect = oracle::mean_squared(torch::stack(eps), net.out);
    CHECK(training_loss(batch, net).item<double>() == doctest::Approx(expect).epsilon(1e-6));
  }

  TEST_CASE("training_loss: permutation invariance") {
    const auto s = make_noise_schedule(100, 1e-4, 0.02);
    auto batch = random_batch(8, s, 5);
    ConditionalDenoiser net({4, 8, 8, 2}, 1);
    const double a = training_loss(batch, net).item<double>();
    std::reverse(batch.begin(), batch.end());
    std::swap(batch[1], batch[5]);
    const double b = training_loss(batch, net).item<double>();
    CHECK(b == doctest::Approx(a).epsilon(1e-6));
  }

  TEST_CASE("training_loss: empty batch and shape errors") {
    testutil::FixedDenoiser net(4, 8);
    CHECK_THROWS_AS(training_loss(std::span<const TrainingExample>{}, net), ParameterError);
    ConditioningBundle b{torch::zeros({4, 2, 2}), torch::zeros({4, 2, 2}), torch::zeros({1, 2, 2}), torch::zeros({8}), 0};
    std::vector<TrainingExample> bad{{b, torch::zeros({4, 2, 3})}};
    CHECK_THROWS_AS(training_loss(bad, net), ShapeError);
  }

  TEST_CASE("training_loss: gradient step decreases loss on a fixed batch") {
    const auto s = make_noise_schedule(50, 1e-4, 0.02);
    const auto batch = random_batch(8, s, 17);
    ConditionalDenoiser net({4, 8, 16, 2}, 2);
    torch::optim::Adam opt(net.net()->parameters(), torch::optim::AdamOptions(1e-3));
    const double before = training_loss(batch, net).item<double>();
    for (int i = 0; i < 5; ++i) {
      opt.zero_grad();
      auto loss = training_loss(batch, net);
      loss.backward();
      opt.step();
    }
    const double after = training_loss(batch, net).item<double>();
    CHECK(after < before);
  }

  TEST_CASE("baseline_loss: oracle, zero predictor and loop oracle") {
    struct Fixed : GenericDenoiser {
      torch::Tensor out;
      torch::Tensor predict_noise(const torch::Tensor& z, const torch::Tensor&, const torch::Tensor&) override {
        return out.defined() ? out : torch::zeros_like(z);
      }
    };
    auto gen = make_generator(8);
    std::vector<BaselineExample> batch;
    for (int i = 0; i < 4; ++i) {
      batch.push_back({torch::randn({3, 4, 4}, gen), torch::randn({2, 4, 4}, gen), torch::randn({3, 4, 4}, gen), i});
    }
    std::vector<torch::Tensor> eps;
    for (const auto& b : batch) eps.push_back(b.eps);
    Fixed f;
    f.out = torch::stack(eps);
    CHECK(baseline_loss(batch, f).item<double>() == 0.0);

    f.out = torch::randn({4, 3, 4, 4}, gen);
    CHECK(baseline_loss(batch, f).item<double>() ==
          doctest::Approx(oracle::mean_squared(torch::stack(eps), f.out)).epsilon(1e-6));

    std::vector<BaselineExample> unit{{torch::zeros({3, 2, 2}), torch::zeros({1, 2, 2}), torch::ones({3, 2, 2}), 0}};
    Fixed zero;
    CHECK(baseline_loss(unit, zero).item<double>() == 1.0);
    CHECK_THROWS_AS(baseline_loss(std::span<const BaselineExample>{}, zero), ParameterError);

    ConcatConditionDenoiser real(3, 2, 8, 4);
    CHECK(real.predict_noise(torch::stack({batch[0].z_t}), torch::stack({batch[0].c}), torch::tensor({1}))
              .sizes()
              .equals({1, 3, 4, 4}));
  }

  TEST_CASE("denoiser: output shape and determinism") {
    ConditionalDenoiser a({4, 8, 8, 3}, 42);
    ConditionalDenoiser b({4, 8, 8, 3}, 42);
    auto gen = make_generator(1);
    BundleBatch batch{torch::randn({2, 4, 8, 8}, gen), torch::randn({2, 4, 8, 8}, gen), torch::ones({2, 1, 8, 8}),
                      torch::randn({2, 8}, gen), torch::tensor({3, 7})};
    auto out_a = a.predict_noise(batch);
    CHECK(out_a.sizes().equals({2, 4, 8, 8}));
    CHECK(torch::equal(out_a, b.predict_noise(batch)));
    CHECK(a.net()->unet->options().in_channels == 2 * 4 + 1);

    // v_fg must reach the output.
    auto other = batch;
    other.v_fg = batch.v_fg + 1.0;
    CHECK_FALSE(torch::equal(out_a, a.predict_noise(other)));
  }

  TEST_CASE("denoiser: checkpoint round trip and header") {
    testutil::TempDir dir("ppdm");
    ConditionalDenoiser a({4, 8, 8, 2}, 3);
    a.save(dir.path / "d.ppdm", 200);
    std::int64_t T = 0;
    auto b = ConditionalDenoiser::load(dir.path / "d.ppdm", &T);
    CHECK(T == 200);
    CHECK(b.options().latent_channels == 4);
    CHECK(b.options().embedding_dim == 8);
    const auto c = read_container(dir.path / "d.ppdm", "PPDM");
    REQUIRE(c.header.size() >= 4);
    CHECK(c.header[0] == 200);
    CHECK(c.header[1] == 4);
    CHECK(c.header[2] == 8);
    CHECK(c.header[3] == 8);
    auto gen = make_generator(2);
    BundleBatch batch{torch::randn({1, 4, 4, 4}, gen), torch::randn({1, 4, 4, 4}, gen), torch::ones({1, 1, 4, 4}),
                      torch::randn({1, 8}, gen), torch::tensor({5})};
    CHECK(torch::equal(a.predict_noise(batch), b.predict_noise(batch)));
    CHECK_THROWS_AS(read_container(dir.path / "d.ppdm", "PPVC"), FormatError);
  }

  TEST_CASE("sample_reverse: one-step inversion with oracle") {
    const auto s = make_noise_schedule(1, 0.1, 0.1);
    auto gen = make_generator(12);
    auto z0 = torch::randn({4, 4, 4}, gen);
    testutil::CleanLatentOracle net(z0, s, 8);
    BundleTemplate tmpl{torch::zeros({4, 4, 4}), torch::ones({1, 4, 4}), torch::zeros({8})};
    auto out = sample_reverse(tmpl, s, net, 77);
    CHECK((out - z0).abs().max().item<double>() < 1e-5);
  }

  TEST_CASE("sample_reverse: ddim recovers z0 with oracle for any stride") {
    const auto s = make_noise_schedule(20, 1e-4, 0.02);
    auto gen = make_generator(13);
    auto z0 = torch::randn({4, 4, 4}, gen);
    testutil::CleanLatentOracle net(z0, s, 8);
    BundleTemplate tmpl{torch::zeros({4, 4, 4}), torch::ones({1, 4, 4}), torch::zeros({8})};
    for (std::int64_t stride : {1, 3, 7}) {
      auto out = sample_reverse(tmpl, s, net, 5, {SamplerKind::ddim, stride});
      CHECK((out - z0).abs().max().item<double>() < 1e-4);
    }
  }

  TEST_CASE("sample_reverse: determinism, shape and step count") {
    const auto s = make_noise_schedule(15, 1e-4, 0.02);
    ConditionalDenoiser net({4, 8, 8, 2}, 9);
    BundleTemplate tmpl{torch::zeros({4, 8, 8}), torch::ones({1, 8, 8}), torch::ones({8})};
    auto a = sample_reverse(tmpl, s, net, 1234);
    auto b = sample_reverse(tmpl, s, net, 1234);
    CHECK(a.sizes().equals({4, 8, 8}));
    CHECK(torch::equal(a, b));
    CHECK_FALSE(torch::equal(a, sample_reverse(tmpl, s, net, 1235)));

    testutil::FixedDenoiser counter(4, 8);
    sample_reverse(tmpl, s, counter, 1);
    CHECK(counter.calls == 15);

    // Batched generation equals the per-template result with the same seed.
    std::vector<BundleTemplate> templates{tmpl, tmpl};
    std::vector<std::uint64_t> seeds{1234, 99};
    auto batched = sample_reverse(templates, seeds, s, net);
    CHECK(torch::allclose(batched[0], a, 1e-5, 1e-5));
  }

  TEST_CASE("sample_reverse: shape mismatch") {
    const auto s = make_noise_schedule(5, 1e-4, 0.02);
    testutil::FixedDenoiser net(4, 8);
    CHECK_THROWS_AS(sample_reverse(BundleTemplate{torch::zeros({3, 4, 4}), torch::ones({1, 4, 4}), torch::zeros({8})},
                                   s, net, 1),
                    ShapeError);
    CHECK_THROWS_AS(sample_reverse(BundleTemplate{torch::zeros({4, 4, 4}), torch::ones({1, 4, 4}), torch::zeros({7})},
                                   s, net, 1),
                    ShapeError);
    CHECK_THROWS_AS(sample_reverse(BundleTemplate{torch::zeros({4, 4, 4}), torch::ones({1, 2, 2}), torch::zeros({8})},
                                   s, net, 1),
                    ShapeError);
  }

  TEST_CASE("train_diffusion: seeded reruns are identical and loss falls") {
    const auto s = make_noise_schedule(20, 1e-4, 0.02);
    auto gen = make_generator(4);
    std::vector<DiffusionExample> ex;
    for (int i = 0; i < 8; ++i) {
      auto z0 = torch::randn({4, 4, 4}, gen) * 0.2 + 0.5;
      ex.push_back({z0, z0 * 0.5, torch::ones({1, 4, 4}), torch::randn({8}, gen)});
    }
    ConditionalDenoiser a({4, 8, 16, 2}, 1), b({4, 8, 16, 2}, 1);
    const DiffusionTrainConfig cfg{60, 8, 2e-3, 5};
    const auto ra = train_diffusion(a, ex, s, cfg);
    const auto rb = train_diffusion(b, ex, s, cfg);
    REQUIRE(ra.losses.size() == 60);
    CHECK(ra.losses == rb.losses);
    const double first = std::accumulate(ra.losses.begin(), ra.losses.begin() + 10, 0.0) / 10;
    const double last = std::accumulate(ra.losses.end() - 10, ra.losses.end(), 0.0) / 10;
    CHECK(last < first);
    CHECK_THROWS_AS(train_diffusion(a, {}, s, cfg), ParameterError);
  }

  TEST_CASE("timestep embedding is sinusoidal") {
    auto e = timestep_embedding(torch::tensor({0, 5}), 8);
    CHECK(e.sizes().equals({2, 8}));
    CHECK(e.abs().max().item<double>() <= 1.0 + 1e-6);
  }
}
