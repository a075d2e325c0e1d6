#include "pathopaint/codec.hpp"

#include <bit>

#include "pathopaint/container.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/seeding.hpp"

namespace pathopaint {

namespace nn = torch::nn;

CodecMode parse_codec_mode(const std::string& name) {
  if (name == "identity") return CodecMode::identity;
  if (name == "learned") return CodecMode::learned;
  throw ParameterError("unknown codec mode '" + name + "'");
}

std::string to_string(CodecMode mode) { return mode == CodecMode::identity ? "identity" : "learned"; }

namespace {

nn::Conv2d conv3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

std::int64_t levels_for(std::int64_t f) {
  if (f < 1 || !std::has_single_bit(static_cast<std::uint64_t>(f))) {
    throw ParameterError("codec downsample factor must be a power of two");
  }
  return std::countr_zero(static_cast<std::uint64_t>(f));
}

}  // namespace

CodecNetImpl::CodecNetImpl(const CodecOptions& o) {
  const auto levels = levels_for(o.downsample_factor);
  const auto w = o.base_width;
  encoder = nn::Sequential();
  encoder->push_back(conv3(3, w));
  encoder->push_back(nn::SiLU());
  for (std::int64_t i = 0; i < levels; ++i) {
    encoder->push_back(conv3(w, w, 2));
    encoder->push_back(nn::SiLU());
    encoder->push_back(conv3(w, w));
    encoder->push_back(nn::SiLU());
  }
  encoder->push_back(nn::Conv2d(nn::Conv2dOptions(w, o.latent_channels, 1)));

  decoder = nn::Sequential();
  decoder->push_back(conv3(o.latent_channels, w));
  decoder->push_back(nn::SiLU());
  for (std::int64_t i = 0; i < levels; ++i) {
    decoder->push_back(nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
    decoder->push_back(conv3(w, w));
    decoder->push_back(nn::SiLU());
    decoder->push_back(conv3(w, w));
    decoder->push_back(nn::SiLU());
  }
  decoder->push_back(conv3(w, 3));
  register_module("encoder", encoder);
  register_module("decoder", decoder);
  latent_scale = register_buffer("latent_scale", torch::ones({1}));
}

LatentCodec::LatentCodec(const CodecOptions& options, std::uint64_t seed) : options_(options) {
  if (options_.mode == CodecMode::identity) {
    options_.downsample_factor = 1;
    options_.latent_channels = 3;
    frozen_ = true;
    return;
  }
  if (options_.latent_channels < 1 || options_.base_width < 1) {
    throw ParameterError("codec latent channels and width must be positive");
  }
  torch::manual_seed(seed);
  net_ = CodecNet(options_);
  net_->eval();
}

LatentCodec LatentCodec::identity() {
  CodecOptions o;
  o.mode = CodecMode::identity;
  return LatentCodec(o);
}

namespace {

torch::Tensor as_batch(const torch::Tensor& x, std::int64_t channels, const char* what, bool& squeezed) {
  squeezed = x.dim() == 3;
  auto b = squeezed ? x.unsqueeze(0) : x;
  if (b.dim() != 4 || b.size(1) != channels) {
    throw ShapeError(std::string(what) + ": expected [" + std::to_string(channels) + ",H,W] input");
  }
  return b;
}

}  // namespace

torch::Tensor LatentCodec::encode(const torch::Tensor& image) const {
  bool squeezed = false;
  auto x = as_batch(image, 3, "encode", squeezed);
  const auto f = options_.downsample_factor;
  if (x.size(2) % f != 0 || x.size(3) % f != 0) {
    throw ShapeError("encode: image dims must be divisible by " + std::to_string(f));
  }
  torch::Tensor z;
  if (options_.mode == CodecMode::identity) {
    z = x.to(torch::kFloat32).clone();
  } else {
    torch::NoGradGuard no_grad;
    z = net_->encoder->forward(x.to(torch::kFloat32) * 2.0 - 1.0) * net_->latent_scale;
  }
  return squeezed ? z.squeeze(0) : z;
}

torch::Tensor LatentCodec::decode(const torch::Tensor& latent) const {
  bool squeezed = false;
  auto z = as_batch(latent, options_.latent_channels, "decode", squeezed);
  torch::Tensor x;
  if (options_.mode == CodecMode::identity) {
    x = z.to(torch::kFloat32).clamp(0.0, 1.0);
  } else {
    torch::NoGradGuard no_grad;
    x = (net_->decoder->forward(z.to(torch::kFloat32) / net_->latent_scale) * 0.5 + 0.5).clamp(0.0, 1.0);
  }
  x = torch::nan_to_num(x, 0.0, 1.0, 0.0);
  return squeezed ? x.squeeze(0) : x;
}

torch::Tensor LatentCodec::reconstruct_unclamped(const torch::Tensor& images) const {
  if (options_.mode == CodecMode::identity) throw ContractError("identity codec is not trainable");
  auto z = net_->encoder->forward(images.to(torch::kFloat32) * 2.0 - 1.0);
  return net_->decoder->forward(z) * 0.5 + 0.5;
}

void LatentCodec::freeze() {
  frozen_ = true;
  if (!net_) return;
  net_->eval();
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
}

void LatentCodec::unfreeze() {
  if (options_.mode == CodecMode::identity) throw ContractError("identity codec is not trainable");
  frozen_ = false;
  for (auto& p : net_->parameters()) p.set_requires_grad(true);
}

std::vector<float> LatentCodec::parameter_snapshot() const {
  std::vector<float> out;
  if (!net_) return out;
  auto c = module_to_container("PPVC", {}, *net_);
  for (const auto& a : c.arrays) out.insert(out.end(), a.values.begin(), a.values.end());
  return out;
}

void LatentCodec::save(const std::filesystem::path& path) const {
  const std::vector<std::int64_t> header{static_cast<std::int64_t>(options_.mode), options_.downsample_factor,
                                         options_.latent_channels, options_.base_width};
  if (options_.mode == CodecMode::identity) {
    ParamContainer c;
    c.magic = make_magic("PPVC");
    c.header = header;
    write_container(path, c);
    return;
  }
  write_container(path, module_to_container("PPVC", header, *net_));
}

LatentCodec LatentCodec::load(const std::filesystem::path& path) {
  auto c = read_container(path, "PPVC");
  if (c.header.size() != 4) throw FormatError(path.string() + ": PPVC header must have 4 fields");
  CodecOptions o;
  o.mode = c.header[0] == 0 ? CodecMode::identity : CodecMode::learned;
  o.downsample_factor = c.header[1];
  o.latent_channels = c.header[2];
  o.base_width = c.header[3];
  LatentCodec codec(o, 0);
  if (o.mode == CodecMode::learned) {
    load_module_state(c, *codec.net_);
    codec.freeze();
  }
  return codec;
}

namespace {

torch::Tensor reconstruction_loss(const torch::Tensor& recon, const torch::Tensor& target) {
  return (recon - target).abs().mean() + (recon - target).pow(2).mean();
}

double mean_loss(const LatentCodec& codec, const torch::Tensor& images, std::int64_t batch_size) {
  torch::NoGradGuard no_grad;
  double total = 0.0;
  const auto n = images.size(0);
  for (std::int64_t i = 0; i < n; i += batch_size) {
    auto x = images.slice(0, i, std::min(n, i + batch_size));
    total += reconstruction_loss(codec.reconstruct_unclamped(x), x).item<double>() * static_cast<double>(x.size(0));
  }
  return total / static_cast<double>(n);
}

}  // namespace

CodecTrainReport pretrain_codec(LatentCodec& codec, const Dataset& corpus, const CodecTrainConfig& config) {
  if (codec.mode() == CodecMode::identity) throw ContractError("identity codec is not trainable");
  if (corpus.empty()) throw ParameterError("pretrain_codec: empty corpus");
  if (config.epochs < 0 || config.batch_size < 1) throw ParameterError("pretrain_codec: invalid epochs or batch size");

  CodecTrainReport report;
  const auto images = stack_images(corpus).to(torch::kFloat32);
  const auto n = images.size(0);
  auto& net = codec.net();
  {
    torch::NoGradGuard no_grad;
    net->latent_scale.fill_(1.0);
  }
  report.initial_loss = mean_loss(codec, images, config.batch_size);
  if (config.epochs == 0) {
    codec.freeze();
    return report;
  }

  codec.unfreeze();
  net->train();
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  auto gen = make_generator(config.seed);
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto perm = torch::randperm(n, gen, torch::kLong);
    double total = 0.0;
    for (std::int64_t i = 0; i < n; i += config.batch_size) {
      auto idx = perm.slice(0, i, std::min(n, i + config.batch_size));
      auto x = images.index_select(0, idx);
      opt.zero_grad();
      auto loss = reconstruction_loss(codec.reconstruct_unclamped(x), x);
      loss.backward();
      opt.step();
      total += loss.item<double>() * static_cast<double>(x.size(0));
    }
    report.epoch_losses.push_back(total / static_cast<double>(n));
  }
  codec.freeze();

  // Normalize latents to unit standard deviation over the corpus.
  {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> zs;
    for (std::int64_t i = 0; i < n; i += config.batch_size) {
      zs.push_back(codec.encode(images.slice(0, i, std::min(n, i + config.batch_size))));
    }
    const double sd = torch::cat(zs).std().item<double>();
    if (sd > 1e-8) net->latent_scale.fill_(1.0 / sd);
  }
  return report;
}

double reconstruction_mae(const LatentCodec& codec, const Dataset& samples) {
  if (samples.empty()) throw ParameterError("reconstruction_mae: empty dataset");
  double total = 0.0;
  std::int64_t count = 0;
  for (const auto& s : samples) {
    auto r = codec.decode(codec.encode(s.image));
    total += (r - s.image).abs().sum().item<double>();
    count += s.image.numel();
  }
  return total / static_cast<double>(count);
}

}  // namespace pathopaint
