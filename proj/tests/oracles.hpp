#pragma once
// Scalar reference implementations used as independent oracles. They deliberately avoid the
// tensor code paths under test and work on plain doubles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace oracle {

inline std::vector<double> to_vec(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

/// Linear betas and their running product.
inline std::pair<std::vector<double>, std::vector<double>> linear_schedule(std::int64_t T, double b0, double b1) {
  std::vector<double> betas, bars;
  double prod = 1.0;
  for (std::int64_t t = 0; t < T; ++t) {
    const double b = T == 1 ? b0 : b0 + (b1 - b0) * static_cast<double>(t) / static_cast<double>(T - 1);
    betas.push_back(b);
    prod *= 1.0 - b;
    bars.push_back(prod);
  }
  return {betas, bars};
}

/// Sum of squared residuals divided by element count.
inline double mean_squared(const torch::Tensor& a, const torch::Tensor& b) {
  const auto x = to_vec(a);
  const auto y = to_vec(b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

/// Max-pool downsampling by explicit block scan; mask [H,W] -> vector of h*w cells.
inline std::vector<int> downsample(const torch::Tensor& mask, std::int64_t f) {
  const auto H = mask.size(0), W = mask.size(1);
  const auto m = to_vec(mask);
  std::vector<int> out(static_cast<std::size_t>((H / f) * (W / f)), 0);
  for (std::int64_t i = 0; i < H; ++i) {
    for (std::int64_t j = 0; j < W; ++j) {
      if (m[static_cast<std::size_t>(i * W + j)] != 0.0) out[static_cast<std::size_t>((i / f) * (W / f) + j / f)] = 1;
    }
  }
  return out;
}

/// Double loop over active cells: feature map [d,h,w], mask [h*stride, w*stride].
inline std::vector<double> mask_pool(const torch::Tensor& fmap, const torch::Tensor& mask, std::int64_t stride) {
  const auto d = fmap.size(0), h = fmap.size(1), w = fmap.size(2);
  const auto cells = downsample(mask, stride);
  const auto f = to_vec(fmap);
  std::vector<double> sum(static_cast<std::size_t>(d), 0.0);
  double count = 0.0;
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      if (cells[static_cast<std::size_t>(i * w + j)] == 0) continue;
      count += 1.0;
      for (std::int64_t c = 0; c < d; ++c) sum[static_cast<std::size_t>(c)] += f[static_cast<std::size_t>((c * h + i) * w + j)];
    }
  }
  for (auto& v : sum) v /= count;
  return sum;
}

/// Set-based IoU over flat indices.
inline double iou(const torch::Tensor& predicted, const torch::Tensor& mask) {
  const auto p = to_vec(predicted);
  const auto m = to_vec(mask);
  std::set<std::size_t> P, M, I, U;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] != 0.0) P.insert(i);
    if (m[i] != 0.0) M.insert(i);
  }
  std::set_intersection(P.begin(), P.end(), M.begin(), M.end(), std::inserter(I, I.begin()));
  std::set_union(P.begin(), P.end(), M.begin(), M.end(), std::inserter(U, U.begin()));
  if (U.empty()) return 1.0;
  return static_cast<double>(I.size()) / static_cast<double>(U.size());
}

/// Two-pass mean and variance (population when sample == false).
inline std::pair<double, double> mean_variance(const std::vector<double>& v, bool sample = false) {
  long double s = 0.0L;
  for (double x : v) s += x;
  const long double mean = s / static_cast<long double>(v.size());
  long double ss = 0.0L;
  for (double x : v) ss += (x - mean) * (x - mean);
  const auto denom = static_cast<long double>(sample ? v.size() - 1 : v.size());
  return {static_cast<double>(mean), static_cast<double>(ss / denom)};
}

/// 0.5 CE + 0.5 Dice by loops. logits [2,H,W], target and include [H,W].
inline double seg_loss(const torch::Tensor& logits, const torch::Tensor& target, const torch::Tensor& include,
                       double w_ce = 0.5, double w_dice = 0.5, double smooth = 1.0) {
  const auto H = target.size(0), W = target.size(1);
  const auto l = to_vec(logits);
  const auto t = to_vec(target);
  const auto inc = to_vec(include);
  const auto n = static_cast<std::size_t>(H * W);
  double ce = 0.0, used = 0.0, pt = 0.0, ps = 0.0, ts = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (inc[i] == 0.0) continue;
    const double l0 = l[i], l1 = l[n + i];
    const double mx = std::max(l0, l1);
    const double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
    const double p1 = std::exp(l1 - lse);
    ce += lse - (t[i] != 0.0 ? l1 : l0);
    used += 1.0;
    pt += p1 * t[i];
    ps += p1;
    ts += t[i];
  }
  const double dice = 1.0 - (2.0 * pt + smooth) / (ps + ts + smooth);
  return w_ce * ce / used + w_dice * dice;
}

inline double dice(const std::vector<double>& p, const std::vector<double>& t, double smooth) {
  double pt = 0.0, ps = 0.0, ts = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pt += p[i] * t[i];
    ps += p[i];
    ts += t[i];
  }
  return 1.0 - (2.0 * pt + smooth) / (ps + ts + smooth);
}

inline double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Nearest centroid with lowest-index tie break.
inline std::vector<int> assign(const std::vector<double>& pts, std::size_t n, std::size_t d,
                               const std::vector<double>& cents, std::size_t k) {
  std::vector<int> a(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = squared_distance(&pts[i * d], &cents[0], d);
    for (std::size_t c = 1; c < k; ++c) {
      const double dist = squared_distance(&pts[i * d], &cents[c * d], d);
      if (dist < best) {
        best = dist;
        a[i] = static_cast<int>(c);
      }
    }
  }
  return a;
}

/// Cluster means; empty clusters keep their previous centroid.
inline std::vector<double> means(const std::vector<double>& pts, std::size_t n, std::size_t d,
                                 const std::vector<int>& a, std::size_t k, const std::vector<double>& prev) {
  std::vector<double> sum(k * d, 0.0);
  std::vector<double> cnt(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cnt[static_cast<std::size_t>(a[i])] += 1.0;
    for (std::size_t j = 0; j < d; ++j) sum[static_cast<std::size_t>(a[i]) * d + j] += pts[i * d + j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) sum[c * d + j] = cnt[c] > 0 ? sum[c * d + j] / cnt[c] : prev[c * d + j];
  }
  return sum;
}

}  // namespace oracle
