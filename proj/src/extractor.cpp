#include "pathopaint/extractor.hpp"

#include <bit>
#include <numeric>
#include <random>

#include "pathopaint/augment.hpp"
#include "pathopaint/container.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/masks.hpp"
#include "pathopaint/seeding.hpp"

namespace pathopaint {

namespace nn = torch::nn;

torch::Tensor extract_feature_map(const torch::Tensor& image, const FeatureExtractor& extractor) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("extract_feature_map: image must be [3,H,W]");
  const auto s = extractor.stride();
  if (image.size(1) % s != 0 || image.size(2) % s != 0) {
    throw ShapeError("extract_feature_map: image dims must be divisible by stride " + std::to_string(s));
  }
  return extractor.feature_maps(image.unsqueeze(0)).squeeze(0);
}

RandomProjectionExtractor::RandomProjectionExtractor(std::int64_t feature_dim, std::int64_t stride, std::uint64_t seed)
    : dim_(feature_dim), stride_(stride) {
  if (feature_dim < 1 || stride < 1) throw ParameterError("random projection: dim and stride must be positive");
  auto gen = make_generator(seed);
  const auto in = 3 * stride * stride;
  projection_ = torch::randn({feature_dim, in}, gen, torch::kFloat64) / std::sqrt(static_cast<double>(in));
}

torch::Tensor RandomProjectionExtractor::feature_maps(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("random projection: images must be [B,3,H,W]");
  if (images.size(2) % stride_ != 0 || images.size(3) % stride_ != 0) {
    throw ShapeError("random projection: dims must be divisible by stride " + std::to_string(stride_));
  }
  torch::NoGradGuard no_grad;
  auto weight = projection_.view({dim_, 3, stride_, stride_});
  return torch::conv2d(images.to(torch::kFloat64), weight, {}, {stride_, stride_}).to(torch::kFloat32);
}

ConvExtractorNetImpl::ConvExtractorNetImpl(const ConvExtractorOptions& o) {
  if (o.stride < 1 || !std::has_single_bit(static_cast<std::uint64_t>(o.stride))) {
    throw ParameterError("conv extractor stride must be a power of two");
  }
  const auto w = o.base_width;
  backbone = nn::Sequential();
  backbone->push_back(nn::Conv2d(nn::Conv2dOptions(3, w, 3).padding(1)));
  backbone->push_back(nn::SiLU());
  for (std::int64_t s = o.stride; s > 1; s /= 2) {
    backbone->push_back(nn::Conv2d(nn::Conv2dOptions(w, w, 3).stride(2).padding(1)));
    backbone->push_back(nn::SiLU());
  }
  backbone->push_back(nn::Conv2d(nn::Conv2dOptions(w, w, 3).padding(1)));
  backbone->push_back(nn::SiLU());
  backbone->push_back(nn::Conv2d(nn::Conv2dOptions(w, o.feature_dim, 1)));
  projector = nn::Sequential(nn::Linear(o.feature_dim, o.feature_dim), nn::SiLU(),
                             nn::Linear(o.feature_dim, o.projection_dim));
  register_module("backbone", backbone);
  register_module("projector", projector);
}

ConvExtractor::ConvExtractor(const ConvExtractorOptions& options, std::uint64_t seed) : options_(options) {
  torch::manual_seed(seed);
  net_ = ConvExtractorNet(options_);
  net_->eval();
}

torch::Tensor ConvExtractor::feature_maps(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("conv extractor: images must be [B,3,H,W]");
  if (images.size(2) % options_.stride != 0 || images.size(3) % options_.stride != 0) {
    throw ShapeError("conv extractor: dims must be divisible by stride " + std::to_string(options_.stride));
  }
  torch::NoGradGuard no_grad;
  return net_->backbone->forward(images.to(torch::kFloat32));
}

void ConvExtractor::save(const std::filesystem::path& path) const {
  write_container(path, module_to_container("PPFX",
                                            {options_.feature_dim, options_.stride, options_.base_width,
                                             options_.projection_dim},
                                            *net_));
}

ConvExtractor ConvExtractor::load(const std::filesystem::path& path) {
  auto c = read_container(path, "PPFX");
  if (c.header.size() != 4) throw FormatError(path.string() + ": PPFX header must have 4 fields");
  ConvExtractorOptions o;
  o.feature_dim = c.header[0];
  o.stride = c.header[1];
  o.base_width = c.header[2];
  o.projection_dim = c.header[3];
  ConvExtractor e(o, 0);
  load_module_state(c, *e.net_);
  return e;
}

namespace {

torch::Tensor nt_xent(const torch::Tensor& a, const torch::Tensor& b, double temperature) {
  const auto n = a.size(0);
  auto z = torch::cat({torch::nn::functional::normalize(a, torch::nn::functional::NormalizeFuncOptions().dim(1)),
                       torch::nn::functional::normalize(b, torch::nn::functional::NormalizeFuncOptions().dim(1))});
  auto sim = torch::matmul(z, z.t()) / temperature;
  sim = sim - torch::eye(2 * n) * 1e9;
  auto targets = torch::cat({torch::arange(n, 2 * n), torch::arange(0, n)}).to(torch::kLong);
  return torch::nn::functional::cross_entropy(sim, targets);
}

}  // namespace

ExtractorTrainReport train_extractor_contrastive(ConvExtractor& extractor, const Dataset& corpus,
                                                 const ExtractorTrainConfig& config) {
  if (corpus.empty()) throw ParameterError("train_extractor: empty corpus");
  if (config.batch_size < 2) throw ParameterError("train_extractor: batch size must be >= 2");
  auto& net = extractor.net();
  const auto s = extractor.stride();
  net->train();
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  std::mt19937_64 rng(config.seed);
  auto gen = make_generator(derive_seed(config.seed, "pixel-noise"));

  // Pooling weights: foreground cells when the patch has any, otherwise all cells.
  std::vector<torch::Tensor> weights;
  for (const auto& p : corpus) {
    auto w = downsample_mask(p.mask, s)[0];
    if (w.sum().item<double>() == 0.0) w = torch::ones_like(w);
    weights.push_back(w);
  }

  ExtractorTrainReport report;
  const auto n = static_cast<std::int64_t>(corpus.size());
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::int64_t batches = 0;
    for (std::int64_t i = 0; i + 1 < n; i += config.batch_size) {
      const auto end = std::min(n, i + config.batch_size);
      if (end - i < 2) break;
      std::vector<torch::Tensor> va, vb, wa, wb;
      for (auto j = i; j < end; ++j) {
        const auto& p = corpus[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])];
        const auto& w = weights[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])];
        for (int view = 0; view < 2; ++view) {
          const auto op = random_geometric(rng);
          auto img = color_jitter(apply_geometric(p.image, op), config.jitter, rng);
          img = (img + 0.02 * torch::randn(img.sizes(), gen, torch::kFloat32)).clamp(0.0, 1.0);
          (view == 0 ? va : vb).push_back(img);
          (view == 0 ? wa : wb).push_back(apply_geometric(w, op));
        }
      }
      auto pool = [&](const std::vector<torch::Tensor>& imgs, const std::vector<torch::Tensor>& ws) {
        auto f = net->backbone->forward(torch::stack(imgs));
        auto w = torch::stack(ws).unsqueeze(1);
        auto pooled = (f * w).sum({2, 3}) / w.sum({2, 3});
        return net->projector->forward(pooled);
      };
      opt.zero_grad();
      auto loss = nt_xent(pool(va, wa), pool(vb, wb), config.temperature);
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++batches;
    }
    report.epoch_losses.push_back(batches > 0 ? total / static_cast<double>(batches) : 0.0);
  }
  net->eval();
  return report;
}

}  // namespace pathopaint
