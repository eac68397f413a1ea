#include <gtest/gtest.h>

#include <cmath>

#include "diffdvr/errors.hpp"
#include "diffdvr/objectives.hpp"
#include "diffdvr/parallel.hpp"
#include "diffdvr/phantom.hpp"
#include "diffdvr/tasks.hpp"

namespace diffdvr {
namespace {

SphericalCamera small_camera(int size = 16) {
  SphericalCamera cam;
  cam.width = cam.height = size;
  cam.fov_y = 30;
  return cam;
}

TEST(FibonacciViews, CoverTheSphere) {
  const auto vs = fibonacci_views(32, small_camera());
  ASSERT_EQ(vs.views.size(), 32u);
  EXPECT_EQ(vs.rule, "fibonacci");
  int north = 0;
  for (const auto& v : vs.views) {
    EXPECT_LT(std::abs(v.latitude), 90.0);
    EXPECT_EQ(v.width, 16);
    north += v.latitude > 0;
  }
  EXPECT_EQ(north, 16);
  EXPECT_THROW(fibonacci_views(0, small_camera()), InvalidParameter);
}

TEST(Gaussian1d, TruthIsAZeroOfLossAndGradient) {
  Demo1dConfig cfg;
  cfg.sweep_min = -1.0;
  cfg.sweep_max = 1.0;
  cfg.sweep_points = 3;
  const auto rows = gaussian_1d_demo(cfg);
  EXPECT_EQ(rows[0].d1, -1.0);
  EXPECT_EQ(rows[0].loss, 0.0);
  EXPECT_EQ(rows[0].gradient, 0.0);
}

TEST(Gaussian1d, GradientMatchesFiniteDifferences) {
  Demo1dConfig cfg;
  cfg.sweep_points = 21;
  for (const auto& row : gaussian_1d_demo(cfg)) {
    const double h = 1e-6;
    const double t = render_segment(cfg.d0, cfg.truth, cfg);
    const double p = render_segment(cfg.d0, row.d1 + h, cfg) - t;
    const double m = render_segment(cfg.d0, row.d1 - h, cfg) - t;
    const double fd = (p * p - m * m) / (2 * h);
    EXPECT_NEAR(row.gradient, fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Gaussian1d, SingleSpuriousStationaryPoint) {
  const auto changes = gradient_sign_changes(gaussian_1d_demo(), 0.0, 1.0);
  ASSERT_EQ(changes.size(), 1u);
  EXPECT_NEAR(changes[0], 0.4, 0.2);
}

TEST(Viewpoint, SymmetricPoseHasZeroLongitudeGradient) {
  const auto v = make_phantom(PhantomKind::Sphere, {16, 16, 16});
  auto cam = small_camera(24);
  cam.longitude = 45.0;
  RenderConfig cfg;
  cfg.stepsize = 1.0 / 32;
  const auto e = entropy_at_pose(v, gaussian_bump_tf(16), cam, cfg);
  EXPECT_GT(e.entropy, 0.0);
  EXPECT_LE(std::abs(e.gradient[0]), 1e-4);
}

TEST(Viewpoint, AscentNeverLowersEntropy) {
  const auto v = make_phantom(PhantomKind::Asymmetric, {16, 16, 16});
  ViewpointConfig cfg;
  cfg.camera = small_camera(16);
  cfg.render.stepsize = 1.0 / 32;
  cfg.restarts = {{45, 30}, {200, -20}};
  cfg.iterations = 4;
  const auto res = optimize_viewpoint(v, reference_tf(16), cfg);
  ASSERT_EQ(res.trajectories.size(), 2u);
  for (const auto& traj : res.trajectories) {
    ASSERT_EQ(traj.size(), 5u);
    for (std::size_t i = 1; i < traj.size(); ++i) {
      EXPECT_GE(traj[i].entropy, traj[i - 1].entropy);
      EXPECT_LE(std::abs(traj[i].latitude), cfg.latitude_limit);
      EXPECT_GE(traj[i].longitude, 0.0);
      EXPECT_LT(traj[i].longitude, 360.0);
    }
  }
  EXPECT_GE(res.best.entropy, res.report.metrics.at("best_start_entropy"));
  ASSERT_EQ(res.report.gradchecks.size(), 2u);
  for (const auto& g : res.report.gradchecks) EXPECT_TRUE(g.passed) << g.rel_error;
}

struct TfScene {
  DensityVolume volume = make_phantom(PhantomKind::Shells, {12, 12, 12});
  TransferFunction truth = reference_tf(8);
  ViewSet views = fibonacci_views(3, small_camera(12));
  RenderConfig render;
  std::vector<ImageRGBA> refs;

  TfScene() {
    render.stepsize = 1.0 / 24;
    refs = render_views(volume, truth, views, render);
  }
};

TEST(TfRecon, TruthHasZeroDataTerm) {
  TfScene s;
  TfReconConfig cfg;
  cfg.render = s.render;
  cfg.epochs = 1;
  const auto res = reconstruct_tf(s.volume, s.refs, s.views, cfg, &s.truth);
  ASSERT_EQ(res.report.trace.size(), 1u);
  EXPECT_EQ(res.report.trace[0].data, 0.0);
  EXPECT_NEAR(res.report.trace[0].total, cfg.lambda * smoothness_prior_tf(s.truth).value, 1e-15);
}

TEST(TfRecon, LossDecreasesAndSpotCheckPasses) {
  TfScene s;
  TfReconConfig cfg;
  cfg.render = s.render;
  cfg.resolution = 8;
  cfg.epochs = 25;
  cfg.seed = 3;
  const auto res = reconstruct_tf(s.volume, s.refs, s.views, cfg);
  EXPECT_LT(res.report.metrics.at("final_l1"), 0.5 * res.report.metrics.at("initial_l1"));
  ASSERT_EQ(res.report.gradchecks.size(), 1u);
  EXPECT_TRUE(res.report.gradchecks[0].passed) << res.report.gradchecks[0].rel_error;
  for (double v : res.tf.values()) EXPECT_GE(v, 0.0);
}

TEST(TfRecon, StrongPriorSmooths) {
  TfScene s;
  TfReconConfig cfg;
  cfg.render = s.render;
  cfg.resolution = 8;
  cfg.epochs = 15;
  cfg.lambda = 1e3;
  cfg.lr = 0.1;
  const auto res = reconstruct_tf(s.volume, s.refs, s.views, cfg);
  EXPECT_LT(res.report.metrics.at("final_prior"), 0.5 * res.report.metrics.at("initial_prior"));
}

TEST(TfRecon, DeterministicForSeedAndThreads) {
  TfScene s;
  TfReconConfig cfg;
  cfg.render = s.render;
  cfg.resolution = 8;
  cfg.epochs = 4;
  cfg.seed = 9;
  set_worker_count(1);
  const auto a = reconstruct_tf(s.volume, s.refs, s.views, cfg);
  set_worker_count(3);
  const auto b = reconstruct_tf(s.volume, s.refs, s.views, cfg);
  set_worker_count(0);
  ASSERT_EQ(a.report.trace.size(), b.report.trace.size());
  for (std::size_t i = 0; i < a.report.trace.size(); ++i) EXPECT_EQ(a.report.trace[i].total, b.report.trace[i].total);
  for (std::size_t i = 0; i < a.tf.values().size(); ++i) EXPECT_EQ(a.tf.values()[i], b.tf.values()[i]);
}

TEST(TfRecon, MismatchedRefsThrow) {
  TfScene s;
  s.refs.pop_back();
  EXPECT_THROW(reconstruct_tf(s.volume, s.refs, s.views, TfReconConfig{}), InvalidInput);
}

GridOptimConfig small_grid_config() {
  GridOptimConfig cfg;
  cfg.schedule = {4, 8, 3, 10};
  cfg.batch = 4;
  return cfg;
}

TEST(DensityRecon, EmptyTargetConvergesToEmpty) {
  const auto views = fibonacci_views(4, small_camera(12));
  std::vector<ImageRGBA> refs(4, ImageRGBA(12, 12));
  auto cfg = small_grid_config();
  cfg.lr = 0.1;
  cfg.schedule.final_iterations = 40;
  const TransferFunction tf({{0, 0, 0, 0}, {0, 0, 0, 10}});
  const auto res = reconstruct_density(refs, views, tf, cfg, DensityVolume({4, 4, 4}, Box{}, 0.5));
  EXPECT_EQ(res.volume.dims(), (std::array<int, 3>{8, 8, 8}));
  EXPECT_LT(res.report.trace.back().data, 1e-6);
}

TEST(DensityRecon, AbsorptionLossDecreases) {
  const auto truth = make_phantom(PhantomKind::Sphere, {8, 8, 8});
  const auto views = fibonacci_views(6, small_camera(16));
  RenderConfig rc;
  rc.stepsize = 0.2 / 8;
  const auto refs = render_views(truth, absorption_ramp_tf(), views, rc);
  const auto cfg = small_grid_config();
  const auto res = reconstruct_density_absorption(refs, views, cfg, 10.0, 0.5, &truth);
  EXPECT_LT(res.report.trace.back().data, 0.5 * res.report.trace.front().data);
  EXPECT_GT(res.report.metrics.at("final_volume_psnr"), res.report.metrics.at("initial_volume_psnr"));
  ASSERT_FALSE(res.report.gradchecks.empty());
  EXPECT_TRUE(res.report.gradchecks[0].passed) << res.report.gradchecks[0].rel_error;
  for (double v : res.volume.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(DensityRecon, StoredAndInversionAgree) {
  const auto truth = make_phantom(PhantomKind::Sphere, {8, 8, 8});
  const auto views = fibonacci_views(4, small_camera(12));
  RenderConfig rc;
  rc.stepsize = 0.2 / 8;
  const auto refs = render_views(truth, absorption_ramp_tf(), views, rc);
  auto cfg = small_grid_config();
  cfg.schedule = {4, 4, 0, 5};
  const auto a = reconstruct_density_absorption(refs, views, cfg);
  cfg.memory = AdjointMemory::Stored;
  const auto b = reconstruct_density_absorption(refs, views, cfg);
  for (std::int64_t i = 0; i < a.volume.size(); ++i) EXPECT_NEAR(a.volume.values()[i], b.volume.values()[i], 1e-9);
}

TEST(ColorRecon, LossDecreases) {
  const auto truth = make_phantom(PhantomKind::Blobs, {8, 8, 8}, 2);
  const auto views = fibonacci_views(6, small_camera(16));
  RenderConfig rc;
  rc.stepsize = 0.2 / 8;
  const auto refs = render_views(truth, gaussian_bump_tf(16), views, rc);
  const auto res = reconstruct_color_volume(refs, views, small_grid_config());
  EXPECT_LT(res.report.metrics.at("final_l1"), 0.7 * res.report.trace.front().data);
  EXPECT_TRUE(res.report.gradchecks.at(0).passed) << res.report.gradchecks[0].rel_error;
}

TransferFunction ramp_color_tf(double tau_scale = 4.0) {
  std::vector<Rgba<double>> t(32);
  for (int r = 0; r < 32; ++r) {
    const double d = (r + 0.5) / 32;
    t[r] = {d, 1 - d, 0.5 * d, tau_scale * d};
  }
  return TransferFunction(t);
}

TEST(ColorToDensity, RecoversMonotoneTfWithoutNeighbors) {
  const auto tf = ramp_color_tf();
  ColorVolume colors({4, 3, 2});
  std::vector<double> truth(colors.size());
  for (std::int64_t v = 0; v < colors.size(); ++v) {
    truth[v] = 0.05 + 0.9 * static_cast<double>(v) / (colors.size() - 1);
    colors.set(v, tf_sample<double>(tf, truth[v]));
  }
  ColorToDensityConfig cfg;
  cfg.beta_w = 0.0;
  const auto res = estimate_density_from_colors(colors, tf, cfg);
  for (std::int64_t v = 0; v < colors.size(); ++v) EXPECT_NEAR(res.volume.values()[v], truth[v], 0.02);
}

TEST(ColorToDensity, NeighborsBreakTies) {
  // Symmetric bump: densities 0.3 and 0.7 map to the same sample.
  std::vector<Rgba<double>> t(64);
  for (int r = 0; r < 64; ++r) {
    const double d = (r + 0.5) / 64;
    const double g = std::exp(-(d - 0.5) * (d - 0.5) / 0.02);
    t[r] = {g, g, g, 10 * g};
  }
  const TransferFunction tf(t);
  const auto target = tf_sample<double>(tf, 0.3);
  const std::vector<double> low(6, 0.3), high(6, 0.7);
  EXPECT_NEAR(color_match_cost(target, tf, 0.3, 0.1, 0.0, {}), color_match_cost(target, tf, 0.7, 0.1, 0.0, {}), 1e-3);
  EXPECT_LT(color_match_cost(target, tf, 0.3, 0.1, 1.0, low), color_match_cost(target, tf, 0.7, 0.1, 1.0, low));
  EXPECT_LT(color_match_cost(target, tf, 0.7, 0.1, 1.0, high), color_match_cost(target, tf, 0.3, 0.1, 1.0, high));
}

TEST(ColorToDensity, EmptyColorsMapToZeroCostDensity) {
  // Every density up to the first texel center maps to (0, 0, 0, 0).
  const TransferFunction tf({{0, 0, 0, 0}, {1, 1, 1, 5}});
  const ColorVolume colors({3, 3, 3});
  const auto res = estimate_density_from_colors(colors, tf, ColorToDensityConfig{});
  EXPECT_TRUE(res.degenerate_alpha);
  for (double d : res.volume.values()) {
    EXPECT_TRUE(std::isfinite(d));
    EXPECT_LE(d, 0.25);
  }
}

TEST(EmissionAbsorption, PipelineRuns) {
  const auto truth = make_phantom(PhantomKind::Shells, {8, 8, 8});
  const auto tf = gaussian_bump_tf(16);
  const auto views = fibonacci_views(6, small_camera(16));
  RenderConfig rc;
  rc.stepsize = 0.2 / 8;
  const auto refs = render_views(truth, tf, views, rc);
  EmissionAbsorptionConfig cfg;
  cfg.color_stage = small_grid_config();
  cfg.estimate.sweeps = 3;
  cfg.density_stage.schedule = {8, 8, 0, 5};
  cfg.density_stage.batch = 4;
  const auto res = reconstruct_density_emission_absorption(refs, views, tf, cfg, &truth);
  EXPECT_EQ(res.volume.dims(), truth.dims());
  EXPECT_EQ(res.report.trace.size(), 3u + 10u + 5u);
  for (const char* k : {"stage1_final_l1", "stage2_sweeps", "stage3_initial_l1", "final_l1", "final_volume_psnr"})
    EXPECT_TRUE(res.report.metrics.count(k)) << k;
  for (const auto& g : res.report.gradchecks) EXPECT_TRUE(g.passed) << g.target << " " << g.rel_error;
}

TEST(EmissionAbsorption, MonotoneTfMatchesRandomInit) {
  // With a monotone TF the problem is convex enough that both starts end up
  // at the same volume.
  const auto tf = ramp_color_tf(8.0);
  const auto truth = make_phantom(PhantomKind::Blobs, {8, 8, 8}, 1);
  const auto views = fibonacci_views(8, small_camera(32));
  RenderConfig rc;
  rc.stepsize = 0.2 / 8;
  const auto refs = render_views(truth, tf, views, rc);
  EmissionAbsorptionConfig cfg;
  cfg.color_stage.schedule = {4, 8, 5, 100};
  cfg.color_stage.batch = 4;
  cfg.estimate.sweeps = 5;
  cfg.density_stage.schedule = {8, 8, 0, 100};
  cfg.density_stage.batch = 4;
  cfg.density_stage.seed = 1;
  const auto pipeline = reconstruct_density_emission_absorption(refs, views, tf, cfg, &truth);
  const auto direct = optimize_density_random_init(refs, views, tf, cfg.density_stage, &truth);
  EXPECT_NEAR(pipeline.report.metrics.at("final_volume_psnr"), direct.report.metrics.at("final_volume_psnr"), 2.0);
}

}  // namespace
}  // namespace diffdvr
