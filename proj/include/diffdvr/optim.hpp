#pragma once

// First-order optimizers, projection onto the physical parameter range and
// the resolution changes of the coarse-to-fine volume schedule.

#include <cstdint>
#include <span>
#include <vector>

#include "diffdvr/field.hpp"

namespace diffdvr {

inline constexpr double kDefaultTauMax = 100.0;

// params -= lr * grads. Throws NumericalError on non-finite gradients.
void gd_step(std::span<double> params, std::span<const double> grads, double lr);

struct OptimState {
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;

  OptimState() = default;
  OptimState(std::size_t size, double learning_rate) : lr(learning_rate), m(size, 0.0), v(size, 0.0) {}
};

// Adam with bias correction. Moments are (re)sized on the first step.
void adam_step(OptimState& state, std::span<double> params, std::span<const double> grads);

// rgb >= 0 and tau in [0, tau_max], texel-major r,g,b,tau.
void project_tf(std::span<double> params, double tau_max = kDefaultTauMax);
// densities in [0, 1]
void project_volume(std::span<double> params);
// Same layout and bounds as the transfer function, per voxel.
inline void project_color_volume(std::span<double> params, double tau_max = kDefaultTauMax) {
  project_tf(params, tau_max);
}

// Doubles the resolution on every axis. Fine voxel centers are interpolated
// trilinearly from the coarse centers; near the boundary the outermost coarse
// cell is extrapolated linearly, so linear fields survive exactly.
std::vector<double> upsample_grid(std::span<const double> values, std::array<int, 3> dims,
                                  int channels);
// Averages 2x2x2 blocks; dims must be even.
std::vector<double> downsample_grid(std::span<const double> values, std::array<int, 3> dims,
                                    int channels);

DensityVolume upsample_volume(const DensityVolume& v);
ColorVolume upsample_volume(const ColorVolume& v);
DensityVolume downsample_volume(const DensityVolume& v);

}  // namespace diffdvr
