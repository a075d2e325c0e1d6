#include "pathopaint/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "pathopaint/container.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/sample.hpp"
#include "pathopaint/seeding.hpp"

namespace pathopaint {

// ---------------------------------------------------------------------------------------------
// Schedule

NoiseSchedule make_noise_schedule(std::int64_t num_steps, double beta_start, double beta_end, ScheduleKind kind) {
  if (num_steps < 1) throw ParameterError("noise schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ParameterError("noise schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.num_steps = num_steps;
  s.kind = kind;
  s.betas.resize(static_cast<std::size_t>(num_steps));
  const auto T = static_cast<double>(num_steps);
  if (kind == ScheduleKind::linear) {
    for (std::int64_t t = 0; t < num_steps; ++t) {
      s.betas[t] = num_steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * static_cast<double>(t) / (T - 1);
    }
  } else {
    constexpr double offset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (std::int64_t t = 0; t < num_steps; ++t) {
      const double b = 1.0 - f(static_cast<double>(t + 1)) / f(static_cast<double>(t));
      s.betas[t] = std::clamp(b, beta_start, beta_end);
    }
  }
  s.alphas.resize(s.betas.size());
  s.alpha_bars.resize(s.betas.size());
  double prod = 1.0;
  for (std::size_t t = 0; t < s.betas.size(); ++t) {
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

torch::Tensor NoiseSchedule::alpha_bar_tensor() const {
  return torch::tensor(alpha_bars, torch::kFloat64);
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ParameterError("unknown schedule kind '" + name + "'");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::linear ? "linear" : "cosine"; }

torch::Tensor forward_diffuse(const torch::Tensor& z0, std::int64_t t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule) {
  if (!z0.sizes().equals(eps.sizes())) throw ShapeError("forward_diffuse: eps shape differs from z_0");
  if (t < 0 || t >= schedule.num_steps) throw ParameterError("forward_diffuse: timestep out of range");
  const double ab = schedule.alpha_bars[static_cast<std::size_t>(t)];
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                              const NoiseSchedule& schedule) {
  if (!z0.sizes().equals(eps.sizes())) throw ShapeError("forward_diffuse: eps shape differs from z_0");
  if (t.dim() != 1 || t.size(0) != z0.size(0)) throw ShapeError("forward_diffuse: t must be [B]");
  auto tl = t.to(torch::kLong);
  if (tl.numel() > 0 && (tl.min().item<std::int64_t>() < 0 || tl.max().item<std::int64_t>() >= schedule.num_steps)) {
    throw ParameterError("forward_diffuse: timestep out of range");
  }
  std::vector<std::int64_t> bshape(static_cast<std::size_t>(z0.dim()), 1);
  bshape[0] = z0.size(0);
  auto ab = schedule.alpha_bar_tensor().index_select(0, tl).view(bshape);
  auto out = ab.sqrt() * z0.to(torch::kFloat64) + (1.0 - ab).sqrt() * eps.to(torch::kFloat64);
  return out.to(z0.scalar_type());
}

// ---------------------------------------------------------------------------------------------
// Bundles

void validate_bundle(const ConditioningBundle& b, std::int64_t num_steps) {
  if (!b.z_t.defined() || b.z_t.dim() != 3) throw ShapeError("bundle: z_t must be [C,h,w]");
  if (!b.z_bg.defined() || !b.z_bg.sizes().equals(b.z_t.sizes())) throw ShapeError("bundle: z_bg shape differs from z_t");
  if (!b.z_m.defined() || b.z_m.dim() != 3 || b.z_m.size(0) != 1 || b.z_m.size(1) != b.z_t.size(1) ||
      b.z_m.size(2) != b.z_t.size(2)) {
    throw ShapeError("bundle: z_m must be [1,h,w] matching z_t");
  }
  if (!b.v_fg.defined() || b.v_fg.dim() != 1) throw ShapeError("bundle: v_fg must be [d]");
  if (!is_binary(b.z_m)) throw ContractError("bundle: z_m is not binary");
  if (b.t < 0 || (num_steps > 0 && b.t >= num_steps)) throw ParameterError("bundle: timestep out of range");
}

BundleBatch collate(std::span<const ConditioningBundle> bundles) {
  if (bundles.empty()) throw ParameterError("collate: empty batch");
  std::vector<torch::Tensor> zt, zbg, zm, v;
  std::vector<std::int64_t> ts;
  for (const auto& b : bundles) {
    validate_bundle(b, 0);
    zt.push_back(b.z_t);
    zbg.push_back(b.z_bg);
    zm.push_back(b.z_m.to(b.z_t.scalar_type()));
    v.push_back(b.v_fg.to(b.z_t.scalar_type()));
    ts.push_back(b.t);
  }
  return {torch::stack(zt), torch::stack(zbg), torch::stack(zm), torch::stack(v), torch::tensor(ts, torch::kLong)};
}

// ---------------------------------------------------------------------------------------------
// Networks

torch::Tensor timestep_embedding(const torch::Tensor& t, std::int64_t dim) {
  const auto half = dim / 2;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / static_cast<double>(half));
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  if (dim % 2 == 1) emb = torch::cat({emb, torch::zeros({t.size(0), 1})}, 1);
  return emb;
}

DenoiserNetImpl::DenoiserNetImpl(const DenoiserOptions& opts) : options(opts) {
  if (opts.latent_channels < 1 || opts.embedding_dim < 1 || opts.base_width < 1) {
    throw ParameterError("denoiser: channel counts and widths must be positive");
  }
  const auto emb_dim = 4 * opts.base_width;
  time_fc1 = register_module("time_fc1", torch::nn::Linear(opts.base_width, emb_dim));
  time_fc2 = register_module("time_fc2", torch::nn::Linear(emb_dim, emb_dim));
  fg_proj = register_module("fg_proj", torch::nn::Linear(opts.embedding_dim, emb_dim));
  UNetOptions u;
  u.in_channels = 2 * opts.latent_channels + 1;
  u.out_channels = opts.latent_channels;
  u.base_width = opts.base_width;
  u.depth = opts.depth;
  u.embed_dim = emb_dim;
  unet = register_module("unet", UNet(u));
}

torch::Tensor DenoiserNetImpl::forward(const BundleBatch& b) {
  if (b.z_t.dim() != 4 || b.z_t.size(1) != options.latent_channels) {
    throw ShapeError("denoiser: z_t must be [B," + std::to_string(options.latent_channels) + ",h,w]");
  }
  if (!b.z_bg.sizes().equals(b.z_t.sizes())) throw ShapeError("denoiser: z_bg shape differs from z_t");
  if (b.z_m.dim() != 4 || b.z_m.size(1) != 1 || b.z_m.size(2) != b.z_t.size(2) || b.z_m.size(3) != b.z_t.size(3)) {
    throw ShapeError("denoiser: z_m must be [B,1,h,w]");
  }
  if (b.v_fg.dim() != 2 || b.v_fg.size(1) != options.embedding_dim) {
    throw ShapeError("denoiser: v_fg must be [B," + std::to_string(options.embedding_dim) + "]");
  }
  auto temb = time_fc2(torch::silu(time_fc1(timestep_embedding(b.t, options.base_width))));
  auto emb = temb + fg_proj(b.v_fg.to(torch::kFloat32));
  auto x = torch::cat({b.z_t.to(torch::kFloat32), b.z_bg.to(torch::kFloat32), b.z_m.to(torch::kFloat32)}, 1);
  return unet(x, emb);
}

ConditionalDenoiser::ConditionalDenoiser(const DenoiserOptions& options, std::uint64_t seed) {
  torch::manual_seed(seed);
  net_ = DenoiserNet(options);
}

torch::Tensor ConditionalDenoiser::predict_noise(const BundleBatch& batch) { return net_->forward(batch); }

void ConditionalDenoiser::save(const std::filesystem::path& path, std::int64_t num_steps) const {
  const auto& o = net_->options;
  write_container(path, module_to_container("PPDM", {num_steps, o.latent_channels, o.embedding_dim, o.base_width, o.depth},
                                            *net_));
}

ConditionalDenoiser ConditionalDenoiser::load(const std::filesystem::path& path, std::int64_t* num_steps) {
  auto c = read_container(path, "PPDM");
  if (c.header.size() != 5) throw FormatError(path.string() + ": PPDM header must have 5 fields");
  DenoiserOptions o;
  o.latent_channels = c.header[1];
  o.embedding_dim = c.header[2];
  o.base_width = c.header[3];
  o.depth = c.header[4];
  ConditionalDenoiser d(o, 0);
  load_module_state(c, *d.net_);
  if (num_steps != nullptr) *num_steps = c.header[0];
  return d;
}

BaselineNetImpl::BaselineNetImpl(std::int64_t latent, std::int64_t cond, std::int64_t width)
    : latent_channels(latent), condition_channels(cond), base_width(width) {
  time_fc1 = register_module("time_fc1", torch::nn::Linear(width, 4 * width));
  time_fc2 = register_module("time_fc2", torch::nn::Linear(4 * width, 4 * width));
  UNetOptions u;
  u.in_channels = latent + cond;
  u.out_channels = latent;
  u.base_width = width;
  u.embed_dim = 4 * width;
  unet = register_module("unet", UNet(u));
}

torch::Tensor BaselineNetImpl::forward(const torch::Tensor& z_t, const torch::Tensor& c, const torch::Tensor& t) {
  auto emb = time_fc2(torch::silu(time_fc1(timestep_embedding(t, base_width))));
  return unet(torch::cat({z_t.to(torch::kFloat32), c.to(torch::kFloat32)}, 1), emb);
}

ConcatConditionDenoiser::ConcatConditionDenoiser(std::int64_t latent_channels, std::int64_t condition_channels,
                                                 std::int64_t base_width, std::uint64_t seed) {
  torch::manual_seed(seed);
  net_ = BaselineNet(latent_channels, condition_channels, base_width);
}

torch::Tensor ConcatConditionDenoiser::predict_noise(const torch::Tensor& z_t, const torch::Tensor& c,
                                                     const torch::Tensor& t) {
  return net_->forward(z_t, c, t);
}

// ---------------------------------------------------------------------------------------------
// Objectives

namespace {

torch::Tensor noise_residual_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred) {
  if (!eps_true.sizes().equals(eps_pred.sizes())) throw ShapeError("loss: predicted noise shape differs from eps");
  const auto type = eps_pred.scalar_type();
  return (eps_true.to(type) - eps_pred).pow(2).mean();
}

}  // namespace

torch::Tensor training_loss(const BundleBatch& batch, const torch::Tensor& eps_true, Denoiser& denoiser) {
  if (batch.size() == 0) throw ParameterError("training_loss: empty batch");
  return noise_residual_loss(eps_true, denoiser.predict_noise(batch));
}

torch::Tensor training_loss(std::span<const TrainingExample> batch, Denoiser& denoiser) {
  if (batch.empty()) throw ParameterError("training_loss: empty batch");
  std::vector<ConditioningBundle> bundles;
  std::vector<torch::Tensor> eps;
  bundles.reserve(batch.size());
  for (const auto& [bundle, e] : batch) {
    if (!e.sizes().equals(bundle.z_t.sizes())) throw ShapeError("training_loss: eps shape differs from z_t");
    bundles.push_back(bundle);
    eps.push_back(e);
  }
  return training_loss(collate(bundles), torch::stack(eps), denoiser);
}

torch::Tensor baseline_loss(std::span<const BaselineExample> batch, GenericDenoiser& denoiser) {
  if (batch.empty()) throw ParameterError("baseline_loss: empty batch");
  std::vector<torch::Tensor> zt, c, eps;
  std::vector<std::int64_t> ts;
  for (const auto& ex : batch) {
    if (!ex.eps.sizes().equals(ex.z_t.sizes())) throw ShapeError("baseline_loss: eps shape differs from z_t");
    if (ex.c.dim() != 3 || ex.c.size(1) != ex.z_t.size(1) || ex.c.size(2) != ex.z_t.size(2)) {
      throw ShapeError("baseline_loss: condition must be [Cc,h,w] matching z_t");
    }
    zt.push_back(ex.z_t);
    c.push_back(ex.c);
    eps.push_back(ex.eps);
    ts.push_back(ex.t);
  }
  auto pred = denoiser.predict_noise(torch::stack(zt), torch::stack(c), torch::tensor(ts, torch::kLong));
  return noise_residual_loss(torch::stack(eps), pred);
}

// ---------------------------------------------------------------------------------------------
// Sampling

SamplerKind parse_sampler_kind(const std::string& name) {
  if (name == "ancestral") return SamplerKind::ancestral;
  if (name == "ddim") return SamplerKind::ddim;
  throw ParameterError("unknown sampler '" + name + "'");
}

torch::Tensor sample_reverse(std::span<const BundleTemplate> templates, std::span<const std::uint64_t> seeds,
                             const NoiseSchedule& schedule, Denoiser& denoiser, const SamplerOptions& sampler) {
  if (templates.empty()) throw ParameterError("sample_reverse: no templates");
  if (seeds.size() != templates.size()) throw ParameterError("sample_reverse: one seed per template required");
  if (schedule.num_steps < 1) throw ParameterError("sample_reverse: empty schedule");
  if (sampler.kind == SamplerKind::ddim && sampler.stride < 1) throw ParameterError("sample_reverse: stride must be >= 1");

  const auto C = denoiser.latent_channels();
  const auto d = denoiser.embedding_dim();
  std::vector<torch::Tensor> zbg, zm, v;
  for (const auto& t : templates) {
    if (!t.z_bg.defined() || t.z_bg.dim() != 3 || t.z_bg.size(0) != C) {
      throw ShapeError("sample_reverse: z_bg channels do not match the denoiser (" + std::to_string(C) + ")");
    }
    if (!t.z_bg.sizes().equals(templates.front().z_bg.sizes())) throw ShapeError("sample_reverse: mixed latent shapes");
    if (!t.z_m.defined() || t.z_m.dim() != 3 || t.z_m.size(0) != 1 || t.z_m.size(1) != t.z_bg.size(1) ||
        t.z_m.size(2) != t.z_bg.size(2)) {
      throw ShapeError("sample_reverse: z_m must be [1,h,w] matching z_bg");
    }
    if (!t.v_fg.defined() || t.v_fg.dim() != 1 || t.v_fg.size(0) != d) {
      throw ShapeError("sample_reverse: v_fg dim does not match the denoiser (" + std::to_string(d) + ")");
    }
    zbg.push_back(t.z_bg.to(torch::kFloat32));
    zm.push_back(t.z_m.to(torch::kFloat32));
    v.push_back(t.v_fg.to(torch::kFloat32));
  }

  torch::NoGradGuard no_grad;
  const auto B = static_cast<std::int64_t>(templates.size());
  const auto latent_shape = templates.front().z_bg.sizes().vec();
  std::vector<at::Generator> gens;
  gens.reserve(templates.size());
  for (auto s : seeds) gens.push_back(make_generator(s));
  auto draw = [&] {
    std::vector<torch::Tensor> n;
    n.reserve(gens.size());
    for (auto& g : gens) n.push_back(torch::randn(latent_shape, g, torch::kFloat32));
    return torch::stack(n);
  };

  BundleBatch batch{draw(), torch::stack(zbg), torch::stack(zm), torch::stack(v), {}};
  auto& z = batch.z_t;
  auto predict = [&](std::int64_t t) {
    batch.t = torch::full({B}, t, torch::kLong);
    return denoiser.predict_noise(batch);
  };

  if (sampler.kind == SamplerKind::ancestral) {
    for (std::int64_t t = schedule.num_steps - 1; t >= 0; --t) {
      const auto i = static_cast<std::size_t>(t);
      const double beta = schedule.betas[i];
      const double alpha = schedule.alphas[i];
      const double ab = schedule.alpha_bars[i];
      auto eps = predict(t);
      auto mean = (z - (beta / std::sqrt(1.0 - ab)) * eps) / std::sqrt(alpha);
      if (t > 0) {
        // Posterior variance beta_tilde_t = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t).
        const double var = beta * (1.0 - schedule.alpha_bars[i - 1]) / (1.0 - ab);
        z = mean + std::sqrt(var) * draw();
      } else {
        z = mean;
      }
    }
  } else {
    std::vector<std::int64_t> steps;
    for (std::int64_t t = schedule.num_steps - 1; t >= 0; t -= sampler.stride) steps.push_back(t);
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const auto t = steps[k];
      const double ab = schedule.alpha_bars[static_cast<std::size_t>(t)];
      const double ab_prev = k + 1 < steps.size() ? schedule.alpha_bars[static_cast<std::size_t>(steps[k + 1])] : 1.0;
      auto eps = predict(t);
      auto x0 = (z - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
      z = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
    }
  }
  return z;
}

torch::Tensor sample_reverse(const BundleTemplate& tmpl, const NoiseSchedule& schedule, Denoiser& denoiser,
                             std::uint64_t seed, const SamplerOptions& sampler) {
  const std::uint64_t seeds[] = {seed};
  return sample_reverse(std::span<const BundleTemplate>(&tmpl, 1), seeds, schedule, denoiser, sampler)[0];
}

// ---------------------------------------------------------------------------------------------
// Training

DiffusionTrainReport train_diffusion(ConditionalDenoiser& denoiser, std::span<const DiffusionExample> examples,
                                     const NoiseSchedule& schedule, const DiffusionTrainConfig& config,
                                     const std::function<void(std::int64_t)>& on_step) {
  if (examples.empty()) throw ParameterError("train_diffusion: no training examples");
  if (config.batch_size < 1 || config.steps < 0) throw ParameterError("train_diffusion: invalid batch size or steps");

  std::vector<torch::Tensor> z0s, zbgs, zms, vs;
  for (const auto& ex : examples) {
    z0s.push_back(ex.z0);
    zbgs.push_back(ex.z_bg);
    zms.push_back(ex.z_m.to(torch::kFloat32));
    vs.push_back(ex.v_fg.to(torch::kFloat32));
  }
  const auto z0_all = torch::stack(z0s);
  const auto zbg_all = torch::stack(zbgs);
  const auto zm_all = torch::stack(zms);
  const auto v_all = torch::stack(vs);
  const auto n = static_cast<std::int64_t>(examples.size());

  auto gen = make_generator(config.seed);
  auto& net = denoiser.net();
  net->train();
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.learning_rate));

  DiffusionTrainReport report;
  report.losses.reserve(static_cast<std::size_t>(config.steps));
  for (std::int64_t step = 0; step < config.steps; ++step) {
    auto idx = torch::randint(0, n, {config.batch_size}, gen, torch::kLong);
    auto t = torch::randint(0, schedule.num_steps, {config.batch_size}, gen, torch::kLong);
    auto z0 = z0_all.index_select(0, idx);
    auto eps = torch::randn(z0.sizes(), gen, torch::kFloat32);
    BundleBatch batch{forward_diffuse(z0, t, eps, schedule), zbg_all.index_select(0, idx), zm_all.index_select(0, idx),
                      v_all.index_select(0, idx), t};
    opt.zero_grad();
    auto loss = training_loss(batch, eps, denoiser);
    loss.backward();
    opt.step();
    report.losses.push_back(loss.item<double>());
    if (on_step) on_step(step);
  }
  net->eval();
  return report;
}

}  // namespace pathopaint
