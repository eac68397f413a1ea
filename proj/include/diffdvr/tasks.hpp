#pragma once

// End-to-end optimization pipelines built on the renderer: viewpoint
// selection, transfer-function reconstruction, density reconstruction (pure
// absorption and emission-absorption) and a 1D example of the
// non-convexity of density optimization.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diffdvr/field.hpp"
#include "diffdvr/image.hpp"
#include "diffdvr/optim.hpp"
#include "diffdvr/renderer.hpp"

namespace diffdvr {

struct ViewSet {
  std::vector<SphericalCamera> views;
  std::string rule = "explicit";  // or "fibonacci"
};

// n poses spread over the sphere with the Fibonacci rule. Intrinsics,
// radius and center are copied from `base`.
ViewSet fibonacci_views(int n, const SphericalCamera& base);

std::vector<ImageRGBA> render_views(const DensityVolume& volume, const TransferFunction& tf,
                                    const ViewSet& views, const RenderConfig& cfg);
std::vector<ImageRGBA> render_views(const ColorVolume& volume, const ViewSet& views,
                                    const RenderConfig& cfg);

struct TraceRow {
  int iter = 0;
  double total = 0.0;
  double data = 0.0;
  double prior = 0.0;
};

// Finite-difference spot check of one gradient coordinate.
struct GradCheck {
  std::string target;
  std::int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool passed = false;
};

struct TaskReport {
  std::string task;
  std::uint64_t seed = 0;
  std::vector<TraceRow> trace;
  std::map<std::string, double> metrics;
  std::map<std::string, double> timings;  // seconds
  std::vector<GradCheck> gradchecks;
  std::vector<std::string> notes;
};

// Relative error used by the spot checks: |a - n| / max(|n|, floor).
GradCheck make_gradcheck(std::string target, std::int64_t index, double analytic, double numeric,
                         double tolerance = 1e-3, double floor = 1e-6);

// ---------------------------------------------------------------- viewpoint

struct ViewpointConfig {
  SphericalCamera camera;  // intrinsics, radius and center; angles ignored
  RenderConfig render;
  std::vector<std::pair<double, double>> restarts;  // (longitude, latitude) degrees
  int iterations = 20;
  double lr = 2000.0;            // degrees per unit of dEntropy/ddegree
  int max_halvings = 8;          // per iteration, when a step lowers the entropy
  double latitude_limit = 89.0;  // ascent steps are clamped to +-limit

  ViewpointConfig();
};

struct ViewpointSample {
  double longitude = 0.0;
  double latitude = 0.0;
  double entropy = 0.0;
};

struct ViewpointResult {
  TaskReport report;
  std::vector<std::vector<ViewpointSample>> trajectories;
  ViewpointSample best;
};

// Gradient ascent on the opacity entropy from each restart using
// forward-mode camera gradients. A step that decreases the entropy is
// retried with half the step size.
ViewpointResult optimize_viewpoint(const DensityVolume& volume, const TransferFunction& tf,
                                   const ViewpointConfig& cfg);

// Opacity entropy and its (longitude, latitude) gradient at a pose.
struct EntropyAtPose {
  double entropy = 0.0;
  std::array<double, 2> gradient{};
};
EntropyAtPose entropy_at_pose(const DensityVolume& volume, const TransferFunction& tf,
                              const SphericalCamera& cam, const RenderConfig& cfg);

// Best entropy over n Fibonacci-sphere poses.
ViewpointSample entropy_sweep(const DensityVolume& volume, const TransferFunction& tf,
                              const SphericalCamera& base, const RenderConfig& cfg, int n);

// ------------------------------------------------------- TF reconstruction

struct TfReconConfig {
  RenderConfig render;
  int resolution = 64;
  double lambda = 0.4;
  double lr = 0.8;
  int epochs = 200;
  int batch = 0;  // views per step; 0 = all views
  double tau_max = kDefaultTauMax;
  // Gaussian noise initialization, projected to the legal range.
  double init_rgb_mean = 0.0;
  double init_rgb_std = 1.0;
  double init_tau_mean = 0.0;
  double init_tau_std = 1.0;
  std::uint64_t seed = 0;
};

struct TfReconResult {
  TaskReport report;
  TransferFunction tf;
  TransferFunction initial;
};

TransferFunction random_tf(int resolution, const TfReconConfig& cfg);

// Minimizes L1(images, refs) + lambda * prior(T) with Adam. Starts from
// `init` when given, otherwise from random_tf(). Throws InvalidInput when
// refs and views differ in count.
TfReconResult reconstruct_tf(const DensityVolume& volume, const std::vector<ImageRGBA>& refs,
                             const ViewSet& views, const TfReconConfig& cfg,
                             const TransferFunction* init = nullptr);

// ------------------------------------------------- density reconstruction

struct MultiResSchedule {
  int start_resolution = 4;
  int final_resolution = 16;
  int iterations_per_level = 10;
  int final_iterations = 50;
};

struct GridOptimConfig {
  MultiResSchedule schedule;
  double lr = 0.3;
  int batch = 8;
  double lambda = 0.5;
  double stepsize_voxels = 0.2;  // stepsize in voxel widths of the current level
  double tau_max = kDefaultTauMax;
  AdjointMemory memory = AdjointMemory::Inversion;
  Precision precision = Precision::Double;
  std::uint64_t seed = 0;
};

struct DensityReconResult {
  TaskReport report;
  DensityVolume volume;
};

struct ColorReconResult {
  TaskReport report;
  ColorVolume volume;
};

// tau(d) = tau_scale * d with zero emission; exact for d in [0.5/R, 1 - 0.5/R].
TransferFunction absorption_ramp_tf(double tau_scale = 10.0, int resolution = 256);

// Optimizes voxel densities against refs rendered through `tf`. The first
// level has the resolution of `init`; each level doubles it until
// schedule.final_resolution. When `truth` is given, volume PSNR before and
// after is reported.
DensityReconResult reconstruct_density(const std::vector<ImageRGBA>& refs, const ViewSet& views,
                                       const TransferFunction& tf, const GridOptimConfig& cfg,
                                       const DensityVolume& init,
                                       const DensityVolume* truth = nullptr);

// Pure absorption with the identity ramp TF, starting from a constant
// field of `init_density` at the start resolution.
DensityReconResult reconstruct_density_absorption(const std::vector<ImageRGBA>& refs,
                                                  const ViewSet& views, const GridOptimConfig& cfg,
                                                  double tau_scale = 10.0,
                                                  double init_density = 0.5,
                                                  const DensityVolume* truth = nullptr);

// Optimizes per-voxel (r, g, b, tau) against refs, coarse to fine.
ColorReconResult reconstruct_color_volume(const std::vector<ImageRGBA>& refs,
                                          const ViewSet& views, const GridOptimConfig& cfg,
                                          Rgba<double> init = {0.5, 0.5, 0.5, 1.0});

struct ColorToDensityConfig {
  int samples = 256;
  std::optional<double> alpha_w;  // default 1 / max(tau)
  double beta_w = 1.0;
  int sweeps = 50;
  double tolerance = 1e-4;  // mean absolute change between sweeps
  std::uint64_t seed = 0;
};

struct ColorToDensityResult {
  DensityVolume volume;
  int sweeps = 0;
  double last_change = 0.0;
  bool degenerate_alpha = false;
};

// Per-voxel cost of density d:
// |C_T - C(d)|^2 + alpha log(1 + |tau_T - tau(d)|) + beta sum_n (d - d_n)^2
// over the 6-neighborhood.
double color_match_cost(const Rgba<double>& target, const TransferFunction& tf, double d,
                        double alpha_w, double beta_w, std::span<const double> neighbors);

// Random-search estimate of the density that explains each voxel of a
// color volume. The first sweep ignores neighbors; later sweeps update all
// voxels from the previous field and keep the current value as a candidate.
ColorToDensityResult estimate_density_from_colors(const ColorVolume& colors,
                                                  const TransferFunction& tf,
                                                  const ColorToDensityConfig& cfg);

struct EmissionAbsorptionConfig {
  GridOptimConfig color_stage;    // stage 1
  ColorToDensityConfig estimate;  // stage 2
  GridOptimConfig density_stage;  // stage 3, single level at the final resolution

  EmissionAbsorptionConfig();
};

struct EmissionAbsorptionResult {
  TaskReport report;
  ColorVolume colors;
  DensityVolume estimate;
  DensityVolume volume;
};

EmissionAbsorptionResult reconstruct_density_emission_absorption(
    const std::vector<ImageRGBA>& refs, const ViewSet& views, const TransferFunction& tf,
    const EmissionAbsorptionConfig& cfg, const DensityVolume* truth = nullptr);

// The stage-3 optimization alone, from uniform random densities.
DensityReconResult optimize_density_random_init(const std::vector<ImageRGBA>& refs,
                                                const ViewSet& views, const TransferFunction& tf,
                                                const GridOptimConfig& density_stage,
                                                const DensityVolume* truth = nullptr);

// Mean L1 over all views of the given volume against refs.
double image_loss(const DensityVolume& volume, const TransferFunction& tf, const ViewSet& views,
                  const std::vector<ImageRGBA>& refs, const RenderConfig& cfg);

// Gaussian absorption bump around `center` with rgb varying monotonically
// in density (red to blue), so color identifies density but tau does not.
TransferFunction gaussian_bump_tf(int resolution = 64, double center = 0.5, double sigma = 0.15,
                                  double tau_peak = 30.0);

// Smooth multi-colored TF, absorption 12 d + 6 exp(-(d - 0.6)^2 / 0.045) + 0.5;
// hidden ground truth for TF reconstruction.
TransferFunction reference_tf(int resolution = 64);

// ------------------------------------------------------------- 1D example

struct Demo1dConfig {
  double d0 = -1.0;
  double truth = -1.0;
  double variance = 0.5;
  double absorption_scale = 1.0;  // tau = absorption_scale * g(d)
  int samples = 64;
  double stepsize = 1.0 / 64.0;
  double sweep_min = -2.0;
  double sweep_max = 2.0;
  int sweep_points = 401;
};

struct Demo1dRow {
  double d1 = 0.0;
  double loss = 0.0;
  double gradient = 0.0;
};

// Gray value rendered along a segment whose density goes linearly from d0
// (next to the eye) to d1, with emission g(d) = exp(-d^2 / (2 variance)).
double render_segment(double d0, double d1, const Demo1dConfig& cfg);

// (d1, squared gray-value error against the truth rendering, d loss / d d1).
std::vector<Demo1dRow> gaussian_1d_demo(const Demo1dConfig& cfg = {});

// Locations where the gradient changes sign strictly inside (lo, hi),
// linearly interpolated between table rows.
std::vector<double> gradient_sign_changes(const std::vector<Demo1dRow>& table, double lo,
                                          double hi);

}  // namespace diffdvr
