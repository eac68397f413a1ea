#pragma once

// Image losses, smoothness priors, the opacity-entropy viewpoint objective
// and the PSNR / SSIM quality metrics.

#include <array>
#include <limits>
#include <span>
#include <vector>

#include "diffdvr/field.hpp"
#include "diffdvr/image.hpp"

namespace diffdvr {

// total = data + lambda * prior
struct LossValue {
  double total = 0.0;
  double data = 0.0;
  double prior = 0.0;
  double lambda = 0.0;
};

struct ImageLoss {
  double value = 0.0;
  std::vector<ImageRGBA> seeds;  // dL/dimage, one per input image
};

// Mean absolute difference over images, pixels and the 4 channels. The seed
// uses sign(0) = 0. Throws InvalidInput on count or shape mismatch.
ImageLoss l1_loss(std::span<const ImageRGBA> images, std::span<const ImageRGBA> refs);

struct PriorValue {
  double value = 0.0;
  std::vector<double> grad;
};

// Mean squared difference of adjacent texels, per channel. Zero for R < 2.
PriorValue smoothness_prior_tf(const TransferFunction& tf);

// Mean squared forward difference along x, y and z of a grid carrying
// `channels` interleaved values per voxel.
PriorValue smoothness_prior_volume(std::span<const double> values, std::array<int, 3> dims,
                                   int channels = 1);
inline PriorValue smoothness_prior_volume(const DensityVolume& v) {
  return smoothness_prior_volume(v.values(), v.dims(), 1);
}

// Largest magnitude of an entropy derivative, used where p_i = 0.
inline constexpr double kEntropyGradientBound = 1e6;

struct EntropyValue {
  double value = 0.0;
  ImageRGBA seed;           // only the alpha channel is nonzero
  bool degenerate = false;  // alpha identically zero
};

// Normalized Shannon entropy of the alpha channel, in [0, 1]:
// p_i = a_i / sum(a), H = -sum(p_i log2 p_i) / log2(N).
EntropyValue opacity_entropy(const ImageRGBA& image);

// 10 log10(1 / mse). Identical inputs return +infinity.
double psnr(std::span<const double> a, std::span<const double> b);
inline double psnr(const ImageRGBA& a, const ImageRGBA& b) { return psnr(a.values(), b.values()); }
inline bool psnr_identical(double db) { return db == std::numeric_limits<double>::infinity(); }

// Single-scale SSIM on Rec. 601 luminance of the premultiplied rgb, 11x11
// Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, averaged over all
// windows that fit inside the image. Images smaller than the window fall
// back to global statistics.
double ssim(const ImageRGBA& a, const ImageRGBA& b);

}  // namespace diffdvr
