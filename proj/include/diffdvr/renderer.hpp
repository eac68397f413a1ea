#pragma once

// Emission-absorption ray marcher with three ways of differentiating it:
//  * render_forward_grad: forward mode over Dual scalars (camera, stepsize),
//  * render_adjoint with AdjointMemory::Stored: hand-written adjoint that
//    keeps every intermediate compositing state of a ray,
//  * render_adjoint with AdjointMemory::Inversion: the same adjoint, but the
//    intermediate states are recovered by inverting the blend step, so the
//    per-ray memory does not depend on the number of samples.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "diffdvr/field.hpp"
#include "diffdvr/image.hpp"

namespace diffdvr {

enum class DiffTarget { None, Camera, Stepsize, TransferFunction, Volume, ColorVolume };
enum class AdjointMemory { Inversion, Stored };
enum class Precision { Double, Single };

const char* to_string(DiffTarget t);
const char* to_string(AdjointMemory m);

struct RenderConfig {
  double stepsize = 0.01;  // world units
  DiffTarget target = DiffTarget::None;
  AdjointMemory memory = AdjointMemory::Inversion;
  // Stop a ray once its opacity exceeds 1 - 1e-4. Only honored by render()
  // with target None, so differentiated passes see every sample.
  bool early_termination = false;
  // Applies to render(); gradient passes always run in double.
  Precision precision = Precision::Double;

  void validate() const;
};

// Adjoint outputs. Only the selected target is filled; the others stay empty
// (vectors) or zero (scalars).
struct GradientSet {
  double stepsize = 0.0;
  std::array<double, 2> camera{};   // d/dlongitude, d/dlatitude, per degree
  std::vector<double> tf;           // 4 per texel
  std::vector<double> volume;       // 1 per voxel
  std::vector<double> color_volume; // 4 per voxel
};

// Front-to-back compositing. `state` holds accumulated (C, alpha); `sample`
// holds the opacity-weighted emission and the opacity of one segment.
template <typename S>
Rgba<S> blend(const Rgba<S>& state, const Rgba<S>& sample) {
  const S transmit = S(1) - state.a;
  return {state.r + transmit * sample.r, state.g + transmit * sample.g,
          state.b + transmit * sample.b, state.a + transmit * sample.a};
}

// Recovers the state before blend() from the state after it. Throws
// InvalidInput if the sample opacity exceeds 1 - kOpacityEpsilon.
Rgba<double> blend_invert(const Rgba<double>& next, const Rgba<double>& sample);

struct BlendAdjoint {
  Rgba<double> state;
  Rgba<double> sample;
};

// Transposed Jacobian of blend() applied to the adjoint of its output.
BlendAdjoint blend_adjoint(const Rgba<double>& state, const Rgba<double>& sample,
                           const Rgba<double>& next_hat);

// A ray clipped to the volume box: samples are start + i * dt * direction
// for i in [0, samples).
template <typename S>
struct RaySegment {
  Vec3<S> start;
  Vec3<S> direction;
  int samples = 0;
};

template <typename S>
std::optional<RaySegment<S>> setup_ray(const SphericalCamera& cam, const S& longitude,
                                       const S& latitude, PixelCoord pixel, const Box& box,
                                       double dt) {
  const CameraRay<S> ray = camera_ray<S>(cam, longitude, latitude, pixel);
  const auto hit = intersect_box(ray.origin, ray.direction, box);
  if (!hit) return std::nullopt;
  const double length = static_cast<double>(value_of(hit->t_far) - value_of(hit->t_near));
  const int n = static_cast<int>(std::ceil(length / dt));
  if (n < 1) return std::nullopt;
  return RaySegment<S>{ray.origin + ray.direction * hit->t_near, ray.direction, n};
}

ImageRGBA render(const DensityVolume& volume, const TransferFunction& tf,
                 const SphericalCamera& cam, const RenderConfig& cfg);
ImageRGBA render(const ColorVolume& volume, const SphericalCamera& cam, const RenderConfig& cfg);

// Image plus the Jacobian of every pixel channel w.r.t. `params` seeded
// parameters: (longitude, latitude) for the camera, (stepsize) otherwise.
struct ForwardGradResult {
  ImageRGBA image;
  int params = 0;
  std::vector<double> jacobian;  // index ((pixel * 4) + channel) * params + k

  double at(std::int64_t pixel, int channel, int k) const {
    return jacobian[static_cast<std::size_t>((pixel * 4 + channel) * params + k)];
  }
};

// Throws UnsupportedConfiguration unless cfg.target is Camera or Stepsize.
ForwardGradResult render_forward_grad(const DensityVolume& volume, const TransferFunction& tf,
                                      const SphericalCamera& cam, const RenderConfig& cfg);

// Memory bookkeeping of the adjoint pass. Per-ray buffers for intermediate
// states go through a counting allocator.
struct AdjointStats {
  std::size_t peak_ray_state_bytes = 0;
  std::size_t ray_state_allocations = 0;
  int max_samples_per_ray = 0;
};

// Gradients of sum(seed * image) w.r.t. cfg.target. The seed is the adjoint
// of the rendered image, e.g. from a loss function.
GradientSet render_adjoint(const DensityVolume& volume, const TransferFunction& tf,
                           const SphericalCamera& cam, const RenderConfig& cfg,
                           const ImageRGBA& seed, AdjointStats* stats = nullptr);
GradientSet render_adjoint(const ColorVolume& volume, const SphericalCamera& cam,
                           const RenderConfig& cfg, const ImageRGBA& seed,
                           AdjointStats* stats = nullptr);

}  // namespace diffdvr
