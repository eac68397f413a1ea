#include "diffdvr/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "diffdvr/errors.hpp"

namespace diffdvr {

ImageLoss l1_loss(std::span<const ImageRGBA> images, std::span<const ImageRGBA> refs) {
  if (images.size() != refs.size() || images.empty())
    throw InvalidInput("l1_loss: image and reference counts differ");
  std::size_t count = 0;
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (!images[n].same_shape(refs[n])) throw InvalidInput("l1_loss: image shape mismatch");
    count += images[n].values().size();
  }
  const double c = 1.0 / static_cast<double>(count);
  ImageLoss out;
  out.seeds.reserve(images.size());
  double sum = 0.0;
  for (std::size_t n = 0; n < images.size(); ++n) {
    ImageRGBA seed(images[n].width(), images[n].height());
    const auto x = images[n].values();
    const auto y = refs[n].values();
    auto s = seed.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - y[i];
      sum += std::abs(d);
      s[i] = d > 0 ? c : (d < 0 ? -c : 0.0);
    }
    out.seeds.push_back(std::move(seed));
  }
  out.value = sum * c;
  return out;
}

PriorValue smoothness_prior_tf(const TransferFunction& tf) {
  const int R = tf.resolution();
  PriorValue out;
  out.grad.assign(tf.values().size(), 0.0);
  if (R < 2) return out;
  const auto t = tf.values();
  const double c = 1.0 / (4.0 * (R - 1));
  for (int r = 0; r + 1 < R; ++r)
    for (int ch = 0; ch < 4; ++ch) {
      const double d = t[4 * (r + 1) + ch] - t[4 * r + ch];
      out.value += c * d * d;
      out.grad[4 * (r + 1) + ch] += 2 * c * d;
      out.grad[4 * r + ch] -= 2 * c * d;
    }
  return out;
}

PriorValue smoothness_prior_volume(std::span<const double> values, std::array<int, 3> dims,
                                   int channels) {
  const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
  if (static_cast<std::int64_t>(values.size()) != nx * ny * nz * channels)
    throw InvalidInput("smoothness_prior_volume: value count does not match dims");
  PriorValue out;
  out.grad.assign(values.size(), 0.0);
  const std::int64_t diffs =
      ((nx - 1) * ny * nz + nx * (ny - 1) * nz + nx * ny * (nz - 1)) * channels;
  if (diffs <= 0) return out;
  const double c = 1.0 / static_cast<double>(diffs);
  const std::int64_t stride[3] = {channels, nx * channels, nx * ny * channels};
  for (std::int64_t k = 0; k < nz; ++k)
    for (std::int64_t j = 0; j < ny; ++j)
      for (std::int64_t i = 0; i < nx; ++i) {
        const std::int64_t base = ((k * ny + j) * nx + i) * channels;
        const bool has[3] = {i + 1 < nx, j + 1 < ny, k + 1 < nz};
        for (int axis = 0; axis < 3; ++axis) {
          if (!has[axis]) continue;
          for (int ch = 0; ch < channels; ++ch) {
            const std::int64_t a = base + ch, b = a + stride[axis];
            const double d = values[b] - values[a];
            out.value += c * d * d;
            out.grad[b] += 2 * c * d;
            out.grad[a] -= 2 * c * d;
          }
        }
      }
  return out;
}

EntropyValue opacity_entropy(const ImageRGBA& image) {
  EntropyValue out;
  out.seed = ImageRGBA(image.width(), image.height());
  const std::int64_t n = image.pixel_count();
  double total = 0.0;
  for (std::int64_t p = 0; p < n; ++p) total += image.pixel(p).a;
  if (total <= 0.0 || n < 2) {
    out.degenerate = total <= 0.0;
    return out;
  }
  const double norm = 1.0 / std::log2(static_cast<double>(n));
  double plogp = 0.0;
  for (std::int64_t p = 0; p < n; ++p) {
    const double q = image.pixel(p).a / total;
    if (q > 0) plogp += q * std::log2(q);
  }
  out.value = plogp == 0.0 ? 0.0 : -norm * plogp;
  // dH/da_k = -(log2 p_k - sum p log2 p) / (S log2 N)
  auto s = out.seed.values();
  for (std::int64_t p = 0; p < n; ++p) {
    const double q = image.pixel(p).a / total;
    double g = q > 0 ? -norm * (std::log2(q) - plogp) / total : kEntropyGradientBound;
    s[4 * p + 3] = std::clamp(g, -kEntropyGradientBound, kEntropyGradientBound);
  }
  return out;
}

double psnr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidInput("psnr: shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

namespace {

std::vector<double> luminance(const ImageRGBA& img) {
  std::vector<double> y(img.pixel_count());
  for (std::int64_t p = 0; p < img.pixel_count(); ++p) {
    const auto c = img.pixel(p);
    y[p] = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
  }
  return y;
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double ssim_from_moments(double ma, double mb, double va, double vb, double cov) {
  return ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
}

}  // namespace

double ssim(const ImageRGBA& a, const ImageRGBA& b) {
  if (!a.same_shape(b)) throw InvalidInput("ssim: shape mismatch");
  const auto ya = luminance(a);
  const auto yb = luminance(b);
  const int W = a.width(), H = a.height();
  constexpr int kWin = 11;
  if (W < kWin || H < kWin) {
    const double n = static_cast<double>(ya.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ya.size(); ++i) {
      ma += ya[i];
      mb += yb[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < ya.size(); ++i) {
      va += (ya[i] - ma) * (ya[i] - ma);
      vb += (yb[i] - mb) * (yb[i] - mb);
      cov += (ya[i] - ma) * (yb[i] - mb);
    }
    return ssim_from_moments(ma, mb, va / n, vb / n, cov / n);
  }
  std::array<double, kWin * kWin> w{};
  double wsum = 0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      const double dx = x - kWin / 2, dy = y - kWin / 2;
      w[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
      wsum += w[y * kWin + x];
    }
  for (double& v : w) v /= wsum;

  double total = 0;
  int windows = 0;
  for (int oy = 0; oy + kWin <= H; ++oy)
    for (int ox = 0; ox + kWin <= W; ++ox) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
          const double g = w[y * kWin + x];
          const std::size_t p = static_cast<std::size_t>(oy + y) * W + (ox + x);
          ma += g * ya[p];
          mb += g * yb[p];
          saa += g * ya[p] * ya[p];
          sbb += g * yb[p] * yb[p];
          sab += g * ya[p] * yb[p];
        }
      total += ssim_from_moments(ma, mb, saa - ma * ma, sbb - mb * mb, sab - ma * mb);
      ++windows;
    }
  return total / windows;
}

}  // namespace diffdvr
