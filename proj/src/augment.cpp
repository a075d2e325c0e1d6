#include "pathopaint/augment.hpp"

namespace pathopaint {

GeometricOp random_geometric(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> quarter(0, 3);
  GeometricOp op;
  op.flip_horizontal = coin(rng) == 1;
  op.flip_vertical = coin(rng) == 1;
  op.rot90 = quarter(rng);
  return op;
}

torch::Tensor apply_geometric(const torch::Tensor& x, const GeometricOp& op) {
  const auto h = x.dim() - 2;
  const auto w = x.dim() - 1;
  auto y = x;
  if (op.flip_horizontal) y = y.flip({w});
  if (op.flip_vertical) y = y.flip({h});
  if (op.rot90 % 4 != 0) y = torch::rot90(y, op.rot90 % 4, {h, w});
  return y.contiguous();
}

torch::Tensor color_jitter(const torch::Tensor& image, double strength, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1.0 - strength, 1.0 + strength);
  const double brightness = u(rng);
  const double contrast = u(rng);
  const double saturation = u(rng);
  auto x = image * brightness;
  x = (x - x.mean()) * contrast + x.mean();
  auto gray = x.mean(0, true);
  x = (x - gray) * saturation + gray;
  return x.clamp(0.0, 1.0);
}

}  // namespace pathopaint
