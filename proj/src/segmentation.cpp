#include "pathopaint/segmentation.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "pathopaint/augment.hpp"
#include "pathopaint/container.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/seeding.hpp"

namespace pathopaint {

namespace {

UNetOptions unet_options(const SegModelOptions& o) {
  UNetOptions u;
  u.in_channels = 3;
  u.out_channels = 2;
  u.base_width = o.base_width;
  u.depth = o.depth;
  return u;
}

}  // namespace

SegModel::SegModel(const SegModelOptions& options, std::uint64_t seed) : options_(options) {
  torch::manual_seed(seed);
  net_ = UNet(unet_options(options_));
  net_->eval();
}

torch::Tensor SegModel::logits(const torch::Tensor& images) {
  return net_->forward(images.to(torch::kFloat32) * 2.0 - 1.0);
}

torch::Tensor SegModel::foreground_probability(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  const bool was_training = net_->is_training();
  net_->eval();
  auto p = torch::softmax(logits(images), 1).select(1, 1);
  if (was_training) net_->train();
  return p;
}

SegModel SegModel::clone() const {
  SegModel copy(options_, 0);
  torch::NoGradGuard no_grad;
  auto src = net_->named_parameters(true);
  auto dst = copy.net_->named_parameters(true);
  for (const auto& p : src) dst[p.key()].copy_(p.value());
  copy.trained_ = trained_;
  return copy;
}

void SegModel::save(const std::filesystem::path& path) const {
  write_container(path, module_to_container("PPSG", {options_.depth, options_.base_width, 2, trained_ ? 1 : 0}, *net_));
}

SegModel SegModel::load(const std::filesystem::path& path) {
  auto c = read_container(path, "PPSG");
  if (c.header.size() != 4 || c.header[2] != 2) throw FormatError(path.string() + ": malformed PPSG header");
  SegModelOptions o;
  o.depth = c.header[0];
  o.base_width = c.header[1];
  SegModel m(o, 0);
  load_module_state(c, *m.net_);
  m.trained_ = c.header[3] != 0;
  return m;
}

double dataset_seg_loss(SegModel& model, const Dataset& samples, const SegLossWeights& weights, std::int64_t batch_size) {
  if (samples.empty()) throw ParameterError("dataset_seg_loss: empty dataset");
  torch::NoGradGuard no_grad;
  const bool was_training = model.net()->is_training();
  model.net()->eval();
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(samples.size(), i + static_cast<std::size_t>(batch_size));
    Dataset chunk(samples.begin() + static_cast<std::ptrdiff_t>(i), samples.begin() + static_cast<std::ptrdiff_t>(end));
    auto loss = seg_loss(model.logits(stack_images(chunk)), stack_masks(chunk), weights);
    total += loss.item<double>() * static_cast<double>(chunk.size());
  }
  if (was_training) model.net()->train();
  return total / static_cast<double>(samples.size());
}

namespace {

struct TrainItem {
  const PatchSample* sample;
  torch::Tensor include;  // uint8 [H,W]
};

}  // namespace

SegTrainResult train_segmentation(const Dataset& real, std::span<const SyntheticPair> synthetic,
                                  const Dataset& validation, const SegTrainConfig& config) {
  if (real.empty()) throw ParameterError("train_segmentation: empty real set");
  if (config.batch_size < 1 || config.epochs < 0) throw ParameterError("train_segmentation: invalid batch size or epochs");

  Dataset train_real = real;
  Dataset val = validation;
  if (val.empty()) {
    // Deterministic hold-out from the real set.
    auto sorted = sorted_by_patch_id(real);
    std::mt19937_64 split_rng(derive_seed(config.seed, "validation-split"));
    std::shuffle(sorted.begin(), sorted.end(), split_rng);
    auto n_val = static_cast<std::size_t>(std::max(1.0, std::round(config.val_fraction * static_cast<double>(sorted.size()))));
    if (n_val >= sorted.size()) throw ParameterError("train_segmentation: real set too small to hold out validation data");
    val.assign(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_real.assign(sorted.begin() + static_cast<std::ptrdiff_t>(n_val), sorted.end());
  }

  std::vector<TrainItem> items;
  for (const auto& s : train_real) {
    validate_sample(s);
    items.push_back({&s, torch::ones_like(s.mask, torch::kUInt8)});
  }
  for (const auto& pair : synthetic) {
    validate_sample(pair.sample);
    auto include = torch::ones_like(pair.sample.mask, torch::kUInt8);
    if (config.filter_synthetic && pair.uncertain) include = (1 - pair.uncertain->fn_map.to(torch::kUInt8)).to(torch::kUInt8);
    items.push_back({&pair.sample, include});
  }

  SegTrainResult result{SegModel(config.model, derive_seed(config.seed, "init")), {}, {}, -1};
  SegModel& model = result.model;
  SegModel best = model.clone();
  double best_val = std::numeric_limits<double>::infinity();
  torch::optim::Adam opt(model.net()->parameters(), torch::optim::AdamOptions(config.learning_rate));
  std::mt19937_64 rng(derive_seed(config.seed, "batches"));

  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    model.net()->train();
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::int64_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(order.size(), i + static_cast<std::size_t>(config.batch_size));
      std::vector<torch::Tensor> imgs, masks, incl;
      for (auto j = i; j < end; ++j) {
        const auto& item = items[order[j]];
        auto img = item.sample->image;
        auto m = item.sample->mask;
        auto inc = item.include;
        if (config.augment) {
          const auto op = random_geometric(rng);
          img = color_jitter(apply_geometric(img, op), config.color_jitter, rng);
          m = apply_geometric(m, op);
          inc = apply_geometric(inc, op);
        }
        imgs.push_back(img);
        masks.push_back(m);
        incl.push_back(inc);
      }
      auto include = torch::stack(incl);
      if (include.sum().item<std::int64_t>() == 0) continue;
      opt.zero_grad();
      auto loss = weighted_seg_loss(model.logits(torch::stack(imgs)), torch::stack(masks), include, config.loss).total;
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++batches;
    }
    result.train_losses.push_back(batches > 0 ? total / static_cast<double>(batches) : 0.0);
    const double v = dataset_seg_loss(model, val, config.loss);
    result.val_losses.push_back(v);
    if (v < best_val) {
      best_val = v;
      best = model.clone();
      result.best_epoch = static_cast<int>(epoch);
    }
  }
  model.net()->eval();
  if (result.best_epoch >= 0) result.model = std::move(best);
  result.model.set_trained(true);
  result.model.net()->eval();
  return result;
}

double foreground_iou(const torch::Tensor& predicted, const torch::Tensor& mask) {
  if (!predicted.sizes().equals(mask.sizes())) throw ShapeError("foreground_iou: shapes differ");
  auto p = predicted.ne(0);
  auto m = mask.ne(0);
  const auto inter = p.logical_and(m).sum().item<std::int64_t>();
  const auto uni = p.logical_or(m).sum().item<std::int64_t>();
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

SegMetrics summarize_iou(std::vector<double> per_sample, VarianceKind kind) {
  if (per_sample.empty()) throw ParameterError("summarize_iou: no samples");
  SegMetrics m;
  m.per_sample_iou = per_sample;
  std::sort(per_sample.begin(), per_sample.end());
  const auto n = static_cast<double>(per_sample.size());
  double sum = 0.0;
  for (double v : per_sample) sum += v;
  m.mean_iou = sum / n;
  double ss = 0.0;
  for (double v : per_sample) ss += (v - m.mean_iou) * (v - m.mean_iou);
  const double denom = kind == VarianceKind::population ? n : std::max(1.0, n - 1.0);
  m.variance = ss / denom;
  return m;
}

SegMetrics evaluate_iou(ForegroundPredictor& model, const Dataset& test, double threshold, VarianceKind kind,
                        std::int64_t batch_size) {
  if (test.empty()) throw ParameterError("evaluate_iou: empty test set");
  std::vector<double> ious;
  ious.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(test.size(), i + static_cast<std::size_t>(batch_size));
    Dataset chunk(test.begin() + static_cast<std::ptrdiff_t>(i), test.begin() + static_cast<std::ptrdiff_t>(end));
    auto pred = predict_masks(stack_images(chunk), model, threshold);
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      ious.push_back(foreground_iou(pred[static_cast<std::int64_t>(j)], chunk[j].mask));
    }
  }
  return summarize_iou(std::move(ious), kind);
}

}  // namespace pathopaint
