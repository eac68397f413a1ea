#include "diffdvr/tasks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "diffdvr/dual.hpp"
#include "diffdvr/errors.hpp"
#include "diffdvr/objectives.hpp"

namespace diffdvr {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0) w += 360.0;
  return w;
}

void check_refs(const std::vector<ImageRGBA>& refs, const ViewSet& views) {
  if (views.views.empty()) throw InvalidInput("view set is empty");
  if (refs.size() != views.views.size())
    throw InvalidInput("got " + std::to_string(refs.size()) + " reference images for " +
                       std::to_string(views.views.size()) + " views");
  for (std::size_t v = 0; v < refs.size(); ++v)
    if (refs[v].width() != views.views[v].width || refs[v].height() != views.views[v].height)
      throw InvalidInput("reference image " + std::to_string(v) + " does not match its view");
}

std::vector<std::size_t> batch_views(int iteration, int batch, std::size_t n) {
  const std::size_t b = (batch <= 0 || static_cast<std::size_t>(batch) > n) ? n : batch;
  std::vector<std::size_t> out(b);
  for (std::size_t j = 0; j < b; ++j) out[j] = (static_cast<std::size_t>(iteration) * b + j) % n;
  return out;
}

}  // namespace

GradCheck make_gradcheck(std::string target, std::int64_t index, double analytic, double numeric,
                         double tolerance, double floor) {
  GradCheck g;
  g.target = std::move(target);
  g.index = index;
  g.analytic = analytic;
  g.numeric = numeric;
  g.rel_error = std::abs(analytic - numeric) / std::max(std::abs(numeric), floor);
  g.passed = g.rel_error < tolerance;
  return g;
}

ViewSet fibonacci_views(int n, const SphericalCamera& base) {
  if (n < 1) throw InvalidParameter("view count must be positive");
  ViewSet set;
  set.rule = "fibonacci";
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    SphericalCamera cam = base;
    cam.latitude = std::asin(y) / kDegToRad;
    cam.longitude = wrap_degrees(i * golden / kDegToRad);
    set.views.push_back(cam);
  }
  return set;
}

std::vector<ImageRGBA> render_views(const DensityVolume& volume, const TransferFunction& tf,
                                    const ViewSet& views, const RenderConfig& cfg) {
  std::vector<ImageRGBA> out;
  for (const auto& cam : views.views) out.push_back(render(volume, tf, cam, cfg));
  return out;
}

std::vector<ImageRGBA> render_views(const ColorVolume& volume, const ViewSet& views,
                                    const RenderConfig& cfg) {
  std::vector<ImageRGBA> out;
  for (const auto& cam : views.views) out.push_back(render(volume, cam, cfg));
  return out;
}

// ---------------------------------------------------------------- viewpoint

ViewpointConfig::ViewpointConfig() {
  for (double lat : {45.0, -45.0})
    for (double lon : {45.0, 135.0, 225.0, 315.0}) restarts.emplace_back(lon, lat);
  render.stepsize = 1.0 / 64.0;
}

EntropyAtPose entropy_at_pose(const DensityVolume& volume, const TransferFunction& tf,
                              const SphericalCamera& cam, const RenderConfig& cfg) {
  RenderConfig c = cfg;
  c.target = DiffTarget::Camera;
  const auto fg = render_forward_grad(volume, tf, cam, c);
  const auto e = opacity_entropy(fg.image);
  EntropyAtPose out;
  out.entropy = e.value;
  for (std::int64_t p = 0; p < fg.image.pixel_count(); ++p) {
    const double s = e.seed.values()[4 * p + 3];
    if (s == 0.0) continue;
    out.gradient[0] += s * fg.at(p, 3, 0);
    out.gradient[1] += s * fg.at(p, 3, 1);
  }
  return out;
}

ViewpointSample entropy_sweep(const DensityVolume& volume, const TransferFunction& tf,
                              const SphericalCamera& base, const RenderConfig& cfg, int n) {
  const auto views = fibonacci_views(n, base);
  RenderConfig c = cfg;
  c.target = DiffTarget::None;
  ViewpointSample best{0, 0, -1.0};
  for (const auto& cam : views.views) {
    const double e = opacity_entropy(render(volume, tf, cam, c)).value;
    if (e > best.entropy) best = {cam.longitude, cam.latitude, e};
  }
  return best;
}

ViewpointResult optimize_viewpoint(const DensityVolume& volume, const TransferFunction& tf,
                                   const ViewpointConfig& cfg) {
  if (cfg.restarts.empty()) throw InvalidParameter("viewpoint: no restarts given");
  if (cfg.iterations < 0) throw InvalidParameter("viewpoint: negative iteration count");
  const auto t0 = Clock::now();
  ViewpointResult res;
  res.report.task = "viewpoint";
  res.best.entropy = -1.0;
  double best_start = -1.0;
  int clamps = 0;
  for (const auto& [lon0, lat0] : cfg.restarts) {
    SphericalCamera cam = cfg.camera;
    cam.longitude = wrap_degrees(lon0);
    cam.latitude = lat0;
    auto here = entropy_at_pose(volume, tf, cam, cfg.render);
    best_start = std::max(best_start, here.entropy);
    std::vector<ViewpointSample> traj{{cam.longitude, cam.latitude, here.entropy}};
    for (int it = 0; it < cfg.iterations; ++it) {
      double step = cfg.lr;
      for (int h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
        SphericalCamera trial = cam;
        trial.longitude = wrap_degrees(cam.longitude + step * here.gradient[0]);
        const double lat = cam.latitude + step * here.gradient[1];
        trial.latitude = std::clamp(lat, -cfg.latitude_limit, cfg.latitude_limit);
        const bool clamped = trial.latitude != lat;
        const auto there = entropy_at_pose(volume, tf, trial, cfg.render);
        if (there.entropy >= here.entropy) {
          if (clamped) ++clamps;
          cam = trial;
          here = there;
          break;
        }
      }
      traj.push_back({cam.longitude, cam.latitude, here.entropy});
    }
    if (traj.back().entropy > res.best.entropy) res.best = traj.back();
    res.trajectories.push_back(std::move(traj));
  }
  if (clamps > 0)
    res.report.notes.push_back("latitude clamped to +-" + std::to_string(cfg.latitude_limit) + " in " +
                               std::to_string(clamps) + " accepted steps");

  // Spot check of the forward-mode gradient at the first restart.
  {
    SphericalCamera cam = cfg.camera;
    cam.longitude = wrap_degrees(cfg.restarts[0].first);
    cam.latitude = cfg.restarts[0].second;
    const auto g = entropy_at_pose(volume, tf, cam, cfg.render);
    // small enough that no ray changes its sample count
    const double h = 1e-5;
    for (int k = 0; k < 2; ++k) {
      SphericalCamera p = cam, m = cam;
      (k == 0 ? p.longitude : p.latitude) += h;
      (k == 0 ? m.longitude : m.latitude) -= h;
      RenderConfig c = cfg.render;
      c.target = DiffTarget::None;
      const double fd = (opacity_entropy(render(volume, tf, p, c)).value -
                         opacity_entropy(render(volume, tf, m, c)).value) /
                        (2 * h);
      res.report.gradchecks.push_back(make_gradcheck("camera", k, g.gradient[k], fd));
    }
  }

  for (const auto& traj : res.trajectories) {
    TraceRow row;
    row.iter = static_cast<int>(res.report.trace.size());
    row.data = row.total = traj.back().entropy;
    res.report.trace.push_back(row);
  }
  res.report.metrics["best_entropy"] = res.best.entropy;
  res.report.metrics["best_longitude"] = res.best.longitude;
  res.report.metrics["best_latitude"] = res.best.latitude;
  res.report.metrics["best_start_entropy"] = best_start;
  res.report.timings["total"] = seconds_since(t0);
  return res;
}

// ------------------------------------------------------- TF reconstruction

TransferFunction random_tf(int resolution, const TfReconConfig& cfg) {
  if (resolution < 1) throw InvalidParameter("TF resolution must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> rgb(cfg.init_rgb_mean, cfg.init_rgb_std);
  std::normal_distribution<double> tau(cfg.init_tau_mean, cfg.init_tau_std);
  std::vector<Rgba<double>> texels(resolution);
  for (auto& t : texels) t = {rgb(rng), rgb(rng), rgb(rng), tau(rng)};
  TransferFunction tf(texels);
  project_tf(tf.values(), cfg.tau_max);
  return tf;
}

namespace {

// Data term over a batch of views and, optionally, its TF gradient.
double tf_batch_loss(const DensityVolume& volume, const TransferFunction& tf,
                     const std::vector<ImageRGBA>& refs, const ViewSet& views,
                     const std::vector<std::size_t>& batch, const RenderConfig& cfg,
                     std::vector<double>* grad) {
  std::vector<ImageRGBA> images, targets;
  for (std::size_t v : batch) {
    images.push_back(render(volume, tf, views.views[v], cfg));
    targets.push_back(refs[v]);
  }
  const auto loss = l1_loss(images, targets);
  if (grad) {
    grad->assign(tf.values().size(), 0.0);
    RenderConfig c = cfg;
    c.target = DiffTarget::TransferFunction;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto g = render_adjoint(volume, tf, views.views[batch[j]], c, loss.seeds[j]);
      for (std::size_t i = 0; i < g.tf.size(); ++i) (*grad)[i] += g.tf[i];
    }
  }
  return loss.value;
}

}  // namespace

TfReconResult reconstruct_tf(const DensityVolume& volume, const std::vector<ImageRGBA>& refs,
                             const ViewSet& views, const TfReconConfig& cfg,
                             const TransferFunction* init) {
  check_refs(refs, views);
  if (cfg.epochs < 0) throw InvalidParameter("tf-recon: negative epoch count");
  const auto t0 = Clock::now();
  TfReconResult res;
  res.report.task = "tf-recon";
  res.report.seed = cfg.seed;
  res.tf = init ? *init : random_tf(cfg.resolution, cfg);
  res.initial = res.tf;
  RenderConfig rcfg = cfg.render;
  rcfg.target = DiffTarget::None;

  std::vector<std::size_t> all(views.views.size());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
  const int steps_per_epoch =
      (cfg.batch <= 0 || static_cast<std::size_t>(cfg.batch) >= all.size())
          ? 1
          : static_cast<int>((all.size() + cfg.batch - 1) / cfg.batch);

  OptimState opt(res.tf.values().size(), cfg.lr);
  std::vector<double> grad;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  int iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int s = 0; s < steps_per_epoch; ++s, ++iteration) {
      const auto batch = batch_views(iteration, cfg.batch, all.size());
      const double data = tf_batch_loss(volume, res.tf, refs, views, batch, rcfg, &grad);
      const auto prior = smoothness_prior_tf(res.tf);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.lambda * prior.grad[i];
      res.report.trace.push_back({iteration, data + cfg.lambda * prior.value, data, prior.value});

      if (iteration == 0) {
        const auto idx = std::uniform_int_distribution<std::size_t>(0, grad.size() - 1)(rng);
        auto total = [&](const TransferFunction& t) {
          return tf_batch_loss(volume, t, refs, views, batch, rcfg, nullptr) +
                 cfg.lambda * smoothness_prior_tf(t).value;
        };
        const double h = 1e-5 * std::max(1.0, std::abs(res.tf.values()[idx]));
        TransferFunction p = res.tf, m = res.tf;
        p.values()[idx] += h;
        m.values()[idx] -= h;
        res.report.gradchecks.push_back(make_gradcheck(
            "tf", static_cast<std::int64_t>(idx), grad[idx], (total(p) - total(m)) / (2 * h)));
      }
      adam_step(opt, res.tf.values(), grad);
      project_tf(res.tf.values(), cfg.tau_max);
    }
  }

  const double initial = tf_batch_loss(volume, res.initial, refs, views, all, rcfg, nullptr);
  const double final_loss = tf_batch_loss(volume, res.tf, refs, views, all, rcfg, nullptr);
  res.report.metrics["initial_l1"] = initial;
  res.report.metrics["final_l1"] = final_loss;
  res.report.metrics["final_prior"] = smoothness_prior_tf(res.tf).value;
  res.report.metrics["initial_prior"] = smoothness_prior_tf(res.initial).value;
  double ps = 0, ss = 0;
  for (std::size_t v = 0; v < all.size(); ++v) {
    const auto img = render(volume, res.tf, views.views[v], rcfg);
    ps += psnr(img, refs[v]);
    ss += ssim(img, refs[v]);
  }
  res.report.metrics["final_image_psnr"] = ps / all.size();
  res.report.metrics["final_image_ssim"] = ss / all.size();
  res.report.timings["total"] = seconds_since(t0);
  return res;
}

// ------------------------------------------------- density reconstruction

namespace {

double grid_stepsize(const Box& box, const std::array<int, 3>& dims, double voxels) {
  return voxels * box.extent()[0] / dims[0];
}

// Data term over a batch of views for a parameter grid, and its gradient.
using GridDataFn = std::function<double(std::span<const double> params, std::array<int, 3> dims,
                                        const RenderConfig& cfg,
                                        const std::vector<std::size_t>& batch,
                                        std::vector<double>* grad)>;

struct GridProblem {
  std::string target;
  int channels = 1;
  Box box;
  GridDataFn data;
  std::function<void(std::span<double>)> project;
};

// Coarse-to-fine Adam on a voxel grid. `params` and `dims` hold the start
// field and receive the result.
void run_grid_schedule(std::vector<double>& params, std::array<int, 3>& dims,
                       const GridProblem& prob, const GridOptimConfig& cfg, std::size_t view_count,
                       TaskReport& report, int iteration_offset = 0) {
  const auto& sched = cfg.schedule;
  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  bool checked = false;
  int iteration = iteration_offset;
  prob.project(params);
  while (true) {
    const bool finest = dims[0] >= sched.final_resolution;
    const int iters = finest ? sched.final_iterations : sched.iterations_per_level;
    RenderConfig rcfg;
    rcfg.stepsize = grid_stepsize(prob.box, dims, cfg.stepsize_voxels);
    rcfg.memory = cfg.memory;
    rcfg.precision = cfg.precision;
    OptimState opt(params.size(), cfg.lr);
    std::vector<double> grad;
    for (int it = 0; it < iters; ++it, ++iteration) {
      const auto batch = batch_views(iteration - iteration_offset, cfg.batch, view_count);
      const double data = prob.data(params, dims, rcfg, batch, &grad);
      const auto prior = smoothness_prior_volume(params, dims, prob.channels);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.lambda * prior.grad[i];
      report.trace.push_back({iteration, data + cfg.lambda * prior.value, data, prior.value});

      if (!checked) {
        checked = true;
        const auto idx = std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng);
        auto total = [&](std::span<const double> p) {
          return prob.data(p, dims, rcfg, batch, nullptr) +
                 cfg.lambda * smoothness_prior_volume(p, dims, prob.channels).value;
        };
        const double h = 1e-6 * std::max(1.0, std::abs(params[idx]));
        std::vector<double> p = params, m = params;
        p[idx] += h;
        m[idx] -= h;
        report.gradchecks.push_back(make_gradcheck(prob.target, static_cast<std::int64_t>(idx),
                                                   grad[idx], (total(p) - total(m)) / (2 * h)));
      }
      adam_step(opt, params, grad);
      prob.project(params);
    }
    if (finest) break;
    params = upsample_grid(params, dims, prob.channels);
    for (int& d : dims) d *= 2;
    prob.project(params);
  }
}

GridProblem density_problem(const std::vector<ImageRGBA>& refs, const ViewSet& views,
                            const TransferFunction& tf, const Box& box) {
  GridProblem prob;
  prob.target = "volume";
  prob.channels = 1;
  prob.box = box;
  prob.project = [](std::span<double> p) { project_volume(p); };
  prob.data = [&refs, &views, &tf, box](std::span<const double> params, std::array<int, 3> dims,
                                        const RenderConfig& cfg,
                                        const std::vector<std::size_t>& batch,
                                        std::vector<double>* grad) {
    const DensityVolume vol(dims, box, std::vector<double>(params.begin(), params.end()));
    std::vector<ImageRGBA> images, targets;
    for (std::size_t v : batch) {
      images.push_back(render(vol, tf, views.views[v], cfg));
      targets.push_back(refs[v]);
    }
    const auto loss = l1_loss(images, targets);
    if (grad) {
      grad->assign(params.size(), 0.0);
      RenderConfig c = cfg;
      c.target = DiffTarget::Volume;
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto g = render_adjoint(vol, tf, views.views[batch[j]], c, loss.seeds[j]);
        for (std::size_t i = 0; i < g.volume.size(); ++i) (*grad)[i] += g.volume[i];
      }
    }
    return loss.value;
  };
  return prob;
}

GridProblem color_problem(const std::vector<ImageRGBA>& refs, const ViewSet& views,
                          const Box& box, double tau_max) {
  GridProblem prob;
  prob.target = "color_volume";
  prob.channels = 4;
  prob.box = box;
  prob.project = [tau_max](std::span<double> p) { project_color_volume(p, tau_max); };
  prob.data = [&refs, &views, box](std::span<const double> params, std::array<int, 3> dims,
                                   const RenderConfig& cfg, const std::vector<std::size_t>& batch,
                                   std::vector<double>* grad) {
    ColorVolume vol(dims, box);
    std::copy(params.begin(), params.end(), vol.values().begin());
    std::vector<ImageRGBA> images, targets;
    for (std::size_t v : batch) {
      images.push_back(render(vol, views.views[v], cfg));
      targets.push_back(refs[v]);
    }
    const auto loss = l1_loss(images, targets);
    if (grad) {
      grad->assign(params.size(), 0.0);
      RenderConfig c = cfg;
      c.target = DiffTarget::ColorVolume;
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto g = render_adjoint(vol, views.views[batch[j]], c, loss.seeds[j]);
        for (std::size_t i = 0; i < g.color_volume.size(); ++i) (*grad)[i] += g.color_volume[i];
      }
    }
    return loss.value;
  };
  return prob;
}

DensityVolume resample_to(const DensityVolume& v, const std::array<int, 3>& dims) {
  DensityVolume out = v;
  while (out.dims()[0] < dims[0]) out = upsample_volume(out);
  return out;
}

void add_volume_metrics(TaskReport& report, const DensityVolume& initial,
                        const DensityVolume& final_volume, const DensityVolume* truth) {
  if (!truth) return;
  if (final_volume.dims() != truth->dims()) {
    report.notes.push_back("ground truth resolution differs from the reconstruction; PSNR skipped");
    return;
  }
  const auto init_fine = resample_to(initial, truth->dims());
  if (init_fine.dims() == truth->dims()) {
    std::vector<double> clamped(init_fine.values().begin(), init_fine.values().end());
    project_volume(clamped);
    report.metrics["initial_volume_psnr"] = psnr(clamped, truth->values());
  }
  report.metrics["final_volume_psnr"] = psnr(final_volume.values(), truth->values());
}

}  // namespace

TransferFunction absorption_ramp_tf(double tau_scale, int resolution) {
  std::vector<Rgba<double>> texels(resolution);
  for (int r = 0; r < resolution; ++r) texels[r] = {0, 0, 0, tau_scale * (r + 0.5) / resolution};
  return TransferFunction(texels);
}

DensityReconResult reconstruct_density(const std::vector<ImageRGBA>& refs, const ViewSet& views,
                                       const TransferFunction& tf, const GridOptimConfig& cfg,
                                       const DensityVolume& init, const DensityVolume* truth) {
  check_refs(refs, views);
  const auto t0 = Clock::now();
  DensityReconResult res;
  res.report.task = "density-recon";
  res.report.seed = cfg.seed;
  std::vector<double> params(init.values().begin(), init.values().end());
  std::array<int, 3> dims = init.dims();
  const auto prob = density_problem(refs, views, tf, init.box());
  run_grid_schedule(params, dims, prob, cfg, views.views.size(), res.report);
  res.volume = DensityVolume(dims, init.box(), std::move(params));

  RenderConfig rcfg;
  rcfg.stepsize = grid_stepsize(init.box(), dims, cfg.stepsize_voxels);
  rcfg.precision = cfg.precision;
  res.report.metrics["final_l1"] = image_loss(res.volume, tf, views, refs, rcfg);
  add_volume_metrics(res.report, init, res.volume, truth);
  res.report.timings["total"] = seconds_since(t0);
  return res;
}

DensityReconResult reconstruct_density_absorption(const std::vector<ImageRGBA>& refs,
                                                  const ViewSet& views, const GridOptimConfig& cfg,
                                                  double tau_scale, double init_density,
                                                  const DensityVolume* truth) {
  const int s = cfg.schedule.start_resolution;
  if (s < 1) throw InvalidParameter("start resolution must be positive");
  const DensityVolume init({s, s, s}, truth ? truth->box() : Box{}, init_density);
  auto res = reconstruct_density(refs, views, absorption_ramp_tf(tau_scale), cfg, init, truth);
  res.report.task = "density-recon";
  return res;
}

ColorReconResult reconstruct_color_volume(const std::vector<ImageRGBA>& refs,
                                          const ViewSet& views, const GridOptimConfig& cfg,
                                          Rgba<double> init) {
  check_refs(refs, views);
  const auto t0 = Clock::now();
  ColorReconResult res;
  res.report.task = "color-recon";
  res.report.seed = cfg.seed;
  const int s = cfg.schedule.start_resolution;
  if (s < 1) throw InvalidParameter("start resolution must be positive");
  const ColorVolume start({s, s, s}, Box{}, init);
  std::vector<double> params(start.values().begin(), start.values().end());
  std::array<int, 3> dims = start.dims();
  const auto prob = color_problem(refs, views, start.box(), cfg.tau_max);
  run_grid_schedule(params, dims, prob, cfg, views.views.size(), res.report);
  res.volume = ColorVolume(dims, start.box());
  std::copy(params.begin(), params.end(), res.volume.values().begin());

  RenderConfig rcfg;
  rcfg.stepsize = grid_stepsize(start.box(), dims, cfg.stepsize_voxels);
  const auto images = render_views(res.volume, views, rcfg);
  res.report.metrics["final_l1"] = l1_loss(images, refs).value;
  res.report.timings["total"] = seconds_since(t0);
  return res;
}

double color_match_cost(const Rgba<double>& target, const TransferFunction& tf, double d,
                        double alpha_w, double beta_w, std::span<const double> neighbors) {
  const auto c = tf_sample<double>(tf, d);
  const double dr = target.r - c.r, dg = target.g - c.g, db = target.b - c.b;
  double cost = dr * dr + dg * dg + db * db + alpha_w * std::log1p(std::abs(target.a - c.a));
  for (double n : neighbors) cost += beta_w * (d - n) * (d - n);
  return cost;
}

ColorToDensityResult estimate_density_from_colors(const ColorVolume& colors,
                                                  const TransferFunction& tf,
                                                  const ColorToDensityConfig& cfg) {
  if (cfg.samples < 1) throw InvalidParameter("density estimation needs at least one sample");
  ColorToDensityResult res;
  double alpha_w = 1.0;
  if (cfg.alpha_w) {
    alpha_w = *cfg.alpha_w;
  } else {
    double tau_max = 0;
    for (std::int64_t v = 0; v < colors.size(); ++v) tau_max = std::max(tau_max, colors.at(v).a);
    if (tau_max > 0) {
      alpha_w = 1.0 / tau_max;
    } else {
      res.degenerate_alpha = true;
    }
  }
  const auto& dims = colors.dims();
  const auto& grid = colors.grid();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> current(colors.size(), 0.0), next(colors.size());
  std::vector<double> nb;
  nb.reserve(6);

  for (int sweep = 0; sweep <= cfg.sweeps; ++sweep) {
    const bool first = sweep == 0;
    for (int k = 0; k < dims[2]; ++k)
      for (int j = 0; j < dims[1]; ++j)
        for (int i = 0; i < dims[0]; ++i) {
          const std::int64_t v = grid.index(i, j, k);
          nb.clear();
          if (!first) {
            if (i > 0) nb.push_back(current[grid.index(i - 1, j, k)]);
            if (i + 1 < dims[0]) nb.push_back(current[grid.index(i + 1, j, k)]);
            if (j > 0) nb.push_back(current[grid.index(i, j - 1, k)]);
            if (j + 1 < dims[1]) nb.push_back(current[grid.index(i, j + 1, k)]);
            if (k > 0) nb.push_back(current[grid.index(i, j, k - 1)]);
            if (k + 1 < dims[2]) nb.push_back(current[grid.index(i, j, k + 1)]);
          }
          const auto target = colors.at(v);
          const double beta = first ? 0.0 : cfg.beta_w;
          double best_d = current[v];
          double best = first ? std::numeric_limits<double>::infinity()
                              : color_match_cost(target, tf, best_d, alpha_w, beta, nb);
          for (int s = 0; s < cfg.samples; ++s) {
            const double d = uni(rng);
            const double c = color_match_cost(target, tf, d, alpha_w, beta, nb);
            if (c < best) {
              best = c;
              best_d = d;
            }
          }
          next[v] = best_d;
        }
    double change = 0;
    for (std::size_t v = 0; v < next.size(); ++v) change += std::abs(next[v] - current[v]);
    change /= static_cast<double>(next.size());
    current.swap(next);
    res.sweeps = sweep;
    res.last_change = change;
    if (!first && change < cfg.tolerance) break;
  }
  res.volume = DensityVolume(dims, colors.box(), std::move(current));
  return res;
}

EmissionAbsorptionConfig::EmissionAbsorptionConfig() {
  density_stage.lambda = 20.0;
  density_stage.schedule.start_resolution = density_stage.schedule.final_resolution;
}

double image_loss(const DensityVolume& volume, const TransferFunction& tf, const ViewSet& views,
                  const std::vector<ImageRGBA>& refs, const RenderConfig& cfg) {
  RenderConfig c = cfg;
  c.target = DiffTarget::None;
  return l1_loss(render_views(volume, tf, views, c), refs).value;
}

EmissionAbsorptionResult reconstruct_density_emission_absorption(
    const std::vector<ImageRGBA>& refs, const ViewSet& views, const TransferFunction& tf,
    const EmissionAbsorptionConfig& cfg, const DensityVolume* truth) {
  const auto t0 = Clock::now();
  EmissionAbsorptionResult res;
  res.report.task = "color-recon";
  res.report.seed = cfg.density_stage.seed;

  auto stage1 = reconstruct_color_volume(refs, views, cfg.color_stage);
  res.colors = stage1.volume;
  res.report.trace = stage1.report.trace;
  res.report.gradchecks = stage1.report.gradchecks;
  res.report.metrics["stage1_final_l1"] = stage1.report.metrics["final_l1"];
  res.report.metrics["stage1_iterations"] = static_cast<double>(stage1.report.trace.size());
  res.report.timings["stage1"] = seconds_since(t0);

  const auto t1 = Clock::now();
  const auto est = estimate_density_from_colors(res.colors, tf, cfg.estimate);
  res.estimate = est.volume;
  res.report.metrics["stage2_sweeps"] = est.sweeps;
  res.report.metrics["stage2_last_change"] = est.last_change;
  if (est.degenerate_alpha) res.report.notes.push_back("color volume has no absorption; alpha weight set to 1");
  res.report.timings["stage2"] = seconds_since(t1);

  const auto t2 = Clock::now();
  auto stage3 = reconstruct_density(refs, views, tf, cfg.density_stage, res.estimate, truth);
  res.volume = stage3.volume;
  const int offset = static_cast<int>(res.report.trace.size());
  for (auto row : stage3.report.trace) {
    row.iter += offset;
    res.report.trace.push_back(row);
  }
  for (const auto& g : stage3.report.gradchecks) res.report.gradchecks.push_back(g);
  for (const auto& [k, v] : stage3.report.metrics) res.report.metrics[k] = v;
  RenderConfig rcfg;
  rcfg.stepsize = grid_stepsize(res.estimate.box(), res.estimate.dims(), cfg.density_stage.stepsize_voxels);
  res.report.metrics["stage3_initial_l1"] = image_loss(res.estimate, tf, views, refs, rcfg);
  res.report.timings["stage3"] = seconds_since(t2);
  res.report.timings["total"] = seconds_since(t0);
  return res;
}

DensityReconResult optimize_density_random_init(const std::vector<ImageRGBA>& refs,
                                                const ViewSet& views, const TransferFunction& tf,
                                                const GridOptimConfig& density_stage,
                                                const DensityVolume* truth) {
  const int s = density_stage.schedule.start_resolution;
  DensityVolume init({s, s, s}, truth ? truth->box() : Box{});
  std::mt19937_64 rng(density_stage.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (double& v : init.values()) v = uni(rng);
  return reconstruct_density(refs, views, tf, density_stage, init, truth);
}

TransferFunction gaussian_bump_tf(int resolution, double center, double sigma, double tau_peak) {
  std::vector<Rgba<double>> texels(resolution);
  for (int r = 0; r < resolution; ++r) {
    const double d = (r + 0.5) / resolution;
    const double g = std::exp(-(d - center) * (d - center) / (2 * sigma * sigma));
    texels[r] = {d, 0.3, 1.0 - d, tau_peak * g};
  }
  return TransferFunction(texels);
}

TransferFunction reference_tf(int resolution) {
  std::vector<Rgba<double>> texels(resolution);
  for (int r = 0; r < resolution; ++r) {
    const double d = (r + 0.5) / resolution;
    const double bump = std::exp(-(d - 0.6) * (d - 0.6) / (2 * 0.15 * 0.15));
    texels[r] = {0.5 + 0.5 * std::cos(2 * kPi * d), 0.5 + 0.5 * std::cos(2 * kPi * (d + 0.33)),
                 0.5 + 0.5 * std::cos(2 * kPi * (d + 0.67)), 12.0 * d + 6.0 * bump + 0.5};
  }
  return TransferFunction(texels);
}

// ------------------------------------------------------------- 1D example

namespace {

template <typename S>
S segment_gray(double d0, const S& d1, const Demo1dConfig& cfg) {
  using std::exp;
  S color(0.0), alpha(0.0);
  const S dt(cfg.stepsize);
  for (int i = 0; i < cfg.samples; ++i) {
    const double t = cfg.samples > 1 ? static_cast<double>(i) / (cfg.samples - 1) : 0.0;
    const S d = S(d0) + (d1 - S(d0)) * t;
    const S g = exp(-(d * d) / (2.0 * cfg.variance));
    const S a = opacity_from_density(g * cfg.absorption_scale, dt);
    color = color + (S(1.0) - alpha) * a * g;
    alpha = alpha + (S(1.0) - alpha) * a;
  }
  return color;
}

}  // namespace

double render_segment(double d0, double d1, const Demo1dConfig& cfg) {
  return segment_gray<double>(d0, d1, cfg);
}

std::vector<Demo1dRow> gaussian_1d_demo(const Demo1dConfig& cfg) {
  if (cfg.sweep_points < 2 || !(cfg.sweep_max > cfg.sweep_min))
    throw InvalidParameter("demo-1d: sweep needs at least two points and max > min");
  if (cfg.samples < 1 || !(cfg.stepsize > 0) || !(cfg.variance > 0))
    throw InvalidParameter("demo-1d: samples, stepsize and variance must be positive");
  using D = Dual<double, 1>;
  const double target = render_segment(cfg.d0, cfg.truth, cfg);
  std::vector<Demo1dRow> rows;
  for (int s = 0; s < cfg.sweep_points; ++s) {
    const double d1 = cfg.sweep_min + (cfg.sweep_max - cfg.sweep_min) * s / (cfg.sweep_points - 1);
    const D c = segment_gray<D>(cfg.d0, D::seed(d1, 0), cfg);
    const double diff = c.value - target;
    rows.push_back({d1, diff * diff, 2.0 * diff * c.deriv[0]});
  }
  return rows;
}

std::vector<double> gradient_sign_changes(const std::vector<Demo1dRow>& table, double lo,
                                          double hi) {
  std::vector<double> out;
  const Demo1dRow* prev = nullptr;
  for (const auto& row : table) {
    if (row.gradient == 0.0) continue;
    if (prev && (prev->gradient < 0) != (row.gradient < 0)) {
      const double x = prev->d1 - prev->gradient * (row.d1 - prev->d1) / (row.gradient - prev->gradient);
      if (x > lo && x < hi) out.push_back(x);
    }
    prev = &row;
  }
  return out;
}

}  // namespace diffdvr
