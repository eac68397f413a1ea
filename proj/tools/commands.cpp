#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <random>

#include "artifacts.hpp"
#include "diffdvr/errors.hpp"
#include "diffdvr/io.hpp"
#include "diffdvr/objectives.hpp"
#include "diffdvr/parallel.hpp"
#include "diffdvr/phantom.hpp"
#include "diffdvr/renderer.hpp"
#include "diffdvr/tasks.hpp"

namespace diffdvr::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

DensityVolume input_volume(const RunConfig& cfg) {
  if (!cfg.is_null("volume_file")) {
    if (!cfg.raw("volume_file").is_string()) throw ConfigError("volume_file must be a path");
    return load_volume(cfg.text("volume_file"));
  }
  const int n = cfg.integer("resolution");
  return make_phantom(phantom_from_string(cfg.text("phantom")), {n, n, n}, cfg.seed());
}

TransferFunction named_tf(const std::string& name, int resolution, double tau_peak = 30.0) {
  if (name == "reference") return reference_tf(resolution);
  if (name == "bump") return gaussian_bump_tf(resolution, 0.5, 0.15, tau_peak);
  if (name == "ramp") return absorption_ramp_tf(10.0, resolution);
  throw ConfigError("unknown transfer function '" + name + "' (reference, bump, ramp)");
}

SphericalCamera camera(const RunConfig& cfg) {
  SphericalCamera cam;
  cam.width = cam.height = cfg.integer("image_size");
  cam.fov_y = cfg.number("fov");
  cam.radius = cfg.number("radius");
  return cam;
}

Precision precision(const RunConfig& cfg) {
  const auto p = cfg.text("precision");
  if (p == "double") return Precision::Double;
  if (p == "single") return Precision::Single;
  throw ConfigError("precision must be 'double' or 'single'");
}

AdjointMemory memory(const std::string& m) {
  if (m == "inversion") return AdjointMemory::Inversion;
  if (m == "stored") return AdjointMemory::Stored;
  throw ConfigError("memory must be 'inversion' or 'stored'");
}

ImageFormat image_format(const std::string& f) {
  if (f == "ppm") return ImageFormat::Ppm;
  if (f == "raw-rgba") return ImageFormat::RawRgba;
  throw ConfigError("format must be 'ppm' or 'raw-rgba'");
}

double world_stepsize(const DensityVolume& v, double voxels) {
  return voxels * v.box().extent()[0] / v.dims()[0];
}

void finish(OutputDir& out, const RunConfig& cfg, TaskReport report, json extra,
            Clock::time_point t0) {
  report.task = cfg.task();
  report.seed = cfg.seed();
  report.timings["total"] = seconds_since(t0);
  extra["threads"] = worker_count();
  auto j = report_json(report, cfg.resolved(), extra);
  auto artifacts = out.written();
  artifacts.push_back("report.json");
  j["artifacts"] = artifacts;
  out.text("report.json", j.dump(2) + "\n");
}

// ------------------------------------------------------------------ render

int run_render(const RunConfig& cfg, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto volume = input_volume(cfg);
  const auto tf = named_tf(cfg.text("tf"), cfg.integer("tf_resolution"));
  auto cam = camera(cfg);
  cam.longitude = cfg.number("longitude");
  cam.latitude = cfg.number("latitude");
  RenderConfig rc;
  rc.stepsize = cfg.number("stepsize");
  rc.precision = precision(cfg);
  rc.early_termination = cfg.flag("early_termination");
  const auto img = render(volume, tf, cam, rc);
  out.image("render", img, image_format(cfg.text("format")));
  TaskReport report;
  report.timings["render"] = seconds_since(t0);
  report.metrics["opacity_entropy"] = opacity_entropy(img).value;
  double alpha = 0;
  for (std::int64_t p = 0; p < img.pixel_count(); ++p) alpha += img.pixel(p).a;
  report.metrics["mean_alpha"] = alpha / static_cast<double>(img.pixel_count());
  finish(out, cfg, report, json::object(), t0);
  return 0;
}

// --------------------------------------------------------------- gradcheck

struct Scene {
  DensityVolume volume;
  TransferFunction tf;
  SphericalCamera cam;
  RenderConfig render;
  ImageRGBA reference;
};

Scene random_scene(const RunConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = cfg.integer("resolution");
  Scene s;
  s.volume = DensityVolume({n, n, n});
  for (double& v : s.volume.values()) v = u(rng);
  std::vector<Rgba<double>> texels(static_cast<std::size_t>(cfg.integer("tf_resolution")));
  for (auto& t : texels) t = {u(rng), u(rng), u(rng), 8.0 * u(rng)};
  s.tf = TransferFunction(texels);
  s.cam.width = s.cam.height = cfg.integer("image_size");
  s.cam.fov_y = 40.0;
  s.cam.longitude = 360.0 * u(rng);
  s.cam.latitude = -60.0 + 120.0 * u(rng);
  s.render.stepsize = cfg.number("stepsize");
  s.reference = ImageRGBA(s.cam.width, s.cam.height);
  for (double& v : s.reference.values()) v = u(rng);
  return s;
}

struct LossAndSeed {
  double value;
  ImageRGBA seed;
};

LossAndSeed evaluate(const Scene& s, bool entropy) {
  RenderConfig rc = s.render;
  rc.target = DiffTarget::None;
  const auto img = render(s.volume, s.tf, s.cam, rc);
  if (entropy) {
    auto e = opacity_entropy(img);
    return {e.value, std::move(e.seed)};
  }
  auto l = l1_loss(std::vector{img}, std::vector{s.reference});
  return {l.value, std::move(l.seeds[0])};
}

double contract(const ForwardGradResult& fg, const ImageRGBA& seed, int k) {
  double sum = 0;
  for (std::int64_t p = 0; p < fg.image.pixel_count(); ++p)
    for (int c = 0; c < 4; ++c) sum += seed.values()[4 * p + c] * fg.at(p, c, k);
  return sum;
}

int run_gradcheck(const RunConfig& cfg, OutputDir& out) {
  const auto t0 = Clock::now();
  const double tol = cfg.number("tolerance");
  const int coords = cfg.integer("coordinates");
  if (cfg.integer("scenes") < 1 || coords < 1) throw InvalidParameter("gradcheck: scenes and coordinates must be positive");
  TaskReport report;
  double max_fd = 0, max_forward = 0;
  for (int si = 0; si < cfg.integer("scenes"); ++si) {
    std::mt19937_64 pick(cfg.seed() * 1000003ULL + static_cast<std::uint64_t>(si));
    for (bool entropy : {false, true}) {
      Scene s = random_scene(cfg, cfg.seed() * 1000003ULL + static_cast<std::uint64_t>(si));
      const auto base = evaluate(s, entropy);
      const std::string loss = entropy ? "entropy" : "l1";
      auto record = [&](const std::string& target, std::int64_t idx, double a, double n, double* worst) {
        auto g = make_gradcheck("scene" + std::to_string(si) + "/" + loss + "/" + target, idx, a, n, tol);
        *worst = std::max(*worst, g.rel_error);
        report.gradchecks.push_back(std::move(g));
      };
      for (DiffTarget target : {DiffTarget::Camera, DiffTarget::Stepsize, DiffTarget::TransferFunction,
                                DiffTarget::Volume}) {
        RenderConfig rc = s.render;
        rc.target = target;
        const auto grads = render_adjoint(s.volume, s.tf, s.cam, rc, base.seed);
        const std::string name = to_string(target);
        auto central = [&](auto&& perturb, double h) {
          perturb(h);
          const double p = evaluate(s, entropy).value;
          perturb(-2 * h);
          const double m = evaluate(s, entropy).value;
          perturb(h);
          return (p - m) / (2 * h);
        };
        if (target == DiffTarget::Camera || target == DiffTarget::Stepsize) {
          const auto fg = render_forward_grad(s.volume, s.tf, s.cam, rc);
          for (int k = 0; k < fg.params; ++k) {
            const double adj = target == DiffTarget::Camera ? grads.camera[k] : grads.stepsize;
            // small enough that no ray changes its sample count
            const double fd = target == DiffTarget::Camera
                                  ? central([&](double h) { (k == 0 ? s.cam.longitude : s.cam.latitude) += h; }, 1e-4)
                                  : central([&](double h) { s.render.stepsize += h; }, 1e-7);
            record(name, k, adj, fd, &max_fd);
            auto g = make_gradcheck("scene" + std::to_string(si) + "/" + loss + "/" + name + "-forward", k,
                                    contract(fg, base.seed, k), adj, tol * 0.1);
            max_forward = std::max(max_forward, g.rel_error);
            report.gradchecks.push_back(std::move(g));
          }
          continue;
        }
        std::span<double> params = target == DiffTarget::Volume ? s.volume.values() : s.tf.values();
        const auto& analytic = target == DiffTarget::Volume ? grads.volume : grads.tf;
        std::uniform_int_distribution<std::size_t> idx(0, params.size() - 1);
        for (int c = 0; c < coords; ++c) {
          const std::size_t i = idx(pick);
          record(name, static_cast<std::int64_t>(i), analytic[i],
                 central([&](double h) { params[i] += h; }, 1e-6), &max_fd);
        }
      }
    }
  }
  bool passed = true;
  for (const auto& g : report.gradchecks) passed &= g.passed;
  report.metrics["max_rel_error"] = max_fd;
  report.metrics["max_forward_rel_error"] = max_forward;
  report.metrics["passed"] = passed ? 1.0 : 0.0;
  out.gradchecks(report.gradchecks);
  finish(out, cfg, report, json::object(), t0);
  std::cout << "max relative error vs finite differences: " << max_fd
            << "\nmax relative error forward vs adjoint: " << max_forward << "\n";
  if (!passed) {
    std::cerr << "gradient check failed\n";
    return 1;
  }
  return 0;
}

// --------------------------------------------------------------- viewpoint

int run_viewpoint(const RunConfig& cfg, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto volume = input_volume(cfg);
  const auto tf = named_tf(cfg.text("tf"), cfg.integer("tf_resolution"));
  ViewpointConfig vc;
  vc.camera = camera(cfg);
  vc.render.stepsize = cfg.number("stepsize");
  vc.iterations = cfg.integer("iterations");
  vc.lr = cfg.number("lr");
  vc.max_halvings = cfg.integer("max_halvings");
  vc.latitude_limit = cfg.number("latitude_limit");
  const auto& restarts = cfg.raw("restarts");
  if (!restarts.empty()) {
    vc.restarts.clear();
    for (const auto& r : restarts) {
      if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
        throw ConfigError("restarts must be a list of [longitude, latitude] pairs");
      vc.restarts.emplace_back(r[0].get<double>(), r[1].get<double>());
    }
  }
  auto res = optimize_viewpoint(volume, tf, vc);

  json trajectories = json::array();
  std::string csv = "restart,step,longitude,latitude,entropy\n";
  for (std::size_t r = 0; r < res.trajectories.size(); ++r) {
    json traj = json::array();
    for (std::size_t i = 0; i < res.trajectories[r].size(); ++i) {
      const auto& p = res.trajectories[r][i];
      traj.push_back({{"longitude", p.longitude}, {"latitude", p.latitude}, {"entropy", p.entropy}});
      csv += std::to_string(r) + "," + std::to_string(i) + "," + format_double(p.longitude) + "," +
             format_double(p.latitude) + "," + format_double(p.entropy) + "\n";
    }
    trajectories.push_back(traj);
  }
  out.text("trajectories.csv", csv);
  if (cfg.integer("sweep") > 0) {
    const auto t1 = Clock::now();
    const auto sweep = entropy_sweep(volume, tf, vc.camera, vc.render, cfg.integer("sweep"));
    res.report.metrics["sweep_best_entropy"] = sweep.entropy;
    res.report.metrics["sweep_best_longitude"] = sweep.longitude;
    res.report.metrics["sweep_best_latitude"] = sweep.latitude;
    res.report.metrics["best_over_sweep"] = res.best.entropy / sweep.entropy;
    res.report.timings["sweep"] = seconds_since(t1);
  }

  RenderConfig rc = vc.render;
  rc.precision = precision(cfg);
  SphericalCamera before = vc.camera, after = vc.camera;
  before.longitude = res.trajectories[0][0].longitude;
  before.latitude = res.trajectories[0][0].latitude;
  after.longitude = res.best.longitude;
  after.latitude = res.best.latitude;
  out.image("before", render(volume, tf, before, rc));
  out.image("after", render(volume, tf, after, rc));
  out.trace(res.report.trace);
  out.gradchecks(res.report.gradchecks);
  json extra{{"trajectories", trajectories},
             {"best", {{"longitude", res.best.longitude}, {"latitude", res.best.latitude}, {"entropy", res.best.entropy}}}};
  finish(out, cfg, res.report, extra, t0);
  return 0;
}

// ---------------------------------------------------------------- tf-recon

std::string tf_csv(const TransferFunction& a, const TransferFunction& b) {
  std::string s = "texel,density,r0,g0,b0,tau0,r,g,b,tau\n";
  for (int r = 0; r < b.resolution(); ++r) {
    const auto x = a.texel(r), y = b.texel(r);
    s += std::to_string(r) + "," + format_double((r + 0.5) / b.resolution());
    for (double v : {x.r, x.g, x.b, x.a, y.r, y.g, y.b, y.a}) s += "," + format_double(v);
    s += "\n";
  }
  return s;
}

ViewSet view_set(const RunConfig& cfg) { return fibonacci_views(cfg.integer("views"), camera(cfg)); }

int run_tf_recon(const RunConfig& cfg, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto volume = input_volume(cfg);
  const auto truth = named_tf(cfg.text("truth_tf"), cfg.integer("truth_tf_resolution"));
  const auto views = view_set(cfg);
  TfReconConfig tc;
  tc.render.stepsize = cfg.number("stepsize");
  tc.render.precision = precision(cfg);
  tc.resolution = cfg.integer("tf_resolution");
  tc.lambda = cfg.number("lambda");
  tc.lr = cfg.number("lr");
  tc.epochs = cfg.integer("epochs");
  tc.batch = cfg.integer("batch");
  tc.tau_max = cfg.number("tau_max");
  tc.init_rgb_mean = cfg.number("init_rgb_mean");
  tc.init_rgb_std = cfg.number("init_rgb_std");
  tc.init_tau_mean = cfg.number("init_tau_mean");
  tc.init_tau_std = cfg.number("init_tau_std");
  tc.seed = cfg.seed();
  RenderConfig rc;
  rc.stepsize = tc.render.stepsize;
  const auto refs = render_views(volume, truth, views, rc);
  const auto res = reconstruct_tf(volume, refs, views, tc);

  out.image("reference", refs[0]);
  out.image("before", render(volume, res.initial, views.views[0], rc));
  out.image("after", render(volume, res.tf, views.views[0], rc));
  out.text("tf.csv", tf_csv(res.initial, res.tf));
  out.trace(res.report.trace);
  out.gradchecks(res.report.gradchecks);
  auto report = res.report;
  report.metrics["final_over_initial_l1"] = report.metrics["final_l1"] / report.metrics["initial_l1"];
  finish(out, cfg, report, json::object(), t0);
  return 0;
}

// ----------------------------------------------------- density reconstruction

GridOptimConfig grid_config(const RunConfig& cfg) {
  GridOptimConfig g;
  g.batch = cfg.integer("batch");
  g.stepsize_voxels = cfg.number("stepsize_voxels");
  g.precision = precision(cfg);
  g.seed = cfg.seed();
  return g;
}

void save_result_volume(OutputDir& out, const DensityVolume& v) {
  const auto raw = out.file("result.raw");
  out.file("result.json");
  save_volume(v, raw);
}

int run_density_recon(const RunConfig& cfg, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto truth = input_volume(cfg);
  const auto views = view_set(cfg);
  auto g = grid_config(cfg);
  g.schedule = {cfg.integer("start_resolution"), cfg.integer("final_resolution"),
                cfg.integer("iterations_per_level"), cfg.integer("final_iterations")};
  g.lr = cfg.number("lr");
  g.lambda = cfg.number("lambda");
  g.memory = memory(cfg.text("memory"));
  const double tau_scale = cfg.number("tau_scale");
  const auto tf = absorption_ramp_tf(tau_scale);
  RenderConfig rc;
  rc.stepsize = world_stepsize(truth, g.stepsize_voxels);
  const auto refs = render_views(truth, tf, views, rc);
  const auto res =
      reconstruct_density_absorption(refs, views, g, tau_scale, cfg.number("init_density"), &truth);

  const int s = g.schedule.start_resolution;
  const DensityVolume init({s, s, s}, truth.box(), cfg.number("init_density"));
  out.image("reference", refs[0]);
  out.image("before", render(init, tf, views.views[0], rc));
  out.image("after", render(res.volume, tf, views.views[0], rc));
  save_result_volume(out, res.volume);
  out.trace(res.report.trace);
  out.gradchecks(res.report.gradchecks);
  auto report = res.report;
  if (report.metrics.count("final_volume_psnr") && report.metrics.count("initial_volume_psnr"))
    report.metrics["volume_psnr_gain"] = report.metrics["final_volume_psnr"] - report.metrics["initial_volume_psnr"];
  finish(out, cfg, report, json::object(), t0);
  return 0;
}

int run_color_recon(const RunConfig& cfg, OutputDir& out) {
  const auto t0 = Clock::now();
  const auto truth = input_volume(cfg);
  const auto views = view_set(cfg);
  const auto tf = named_tf(cfg.text("tf"), cfg.integer("tf_resolution"), cfg.number("tau_peak"));
  const int n = truth.dims()[0];

  EmissionAbsorptionConfig ec;
  ec.color_stage = grid_config(cfg);
  ec.color_stage.schedule = {cfg.integer("start_resolution"), n, cfg.integer("iterations_per_level"),
                             cfg.integer("color_iterations")};
  ec.color_stage.lr = cfg.number("color_lr");
  ec.color_stage.lambda = cfg.number("color_lambda");
  ec.estimate.samples = cfg.integer("estimate_samples");
  if (!cfg.is_null("estimate_alpha")) {
    if (!cfg.raw("estimate_alpha").is_number()) throw ConfigError("estimate_alpha must be a number or null");
    ec.estimate.alpha_w = cfg.number("estimate_alpha");
  }
  ec.estimate.beta_w = cfg.number("estimate_beta");
  ec.estimate.sweeps = cfg.integer("estimate_sweeps");
  ec.estimate.seed = cfg.seed();
  ec.density_stage = grid_config(cfg);
  ec.density_stage.schedule = {n, n, 0, cfg.integer("density_iterations")};
  ec.density_stage.lr = cfg.number("density_lr");
  ec.density_stage.lambda = cfg.number("density_lambda");

  RenderConfig rc;
  rc.stepsize = world_stepsize(truth, ec.density_stage.stepsize_voxels);
  const auto refs = render_views(truth, tf, views, rc);
  const auto res = reconstruct_density_emission_absorption(refs, views, tf, ec, &truth);
  auto report = res.report;
  if (cfg.flag("compare_random_init")) {
    const auto t1 = Clock::now();
    const auto direct = optimize_density_random_init(refs, views, tf, ec.density_stage, &truth);
    report.metrics["random_init_final_l1"] = direct.report.metrics.at("final_l1");
    if (direct.report.metrics.count("final_volume_psnr"))
      report.metrics["random_init_final_volume_psnr"] = direct.report.metrics.at("final_volume_psnr");
    report.timings["random_init"] = seconds_since(t1);
  }

  out.image("reference", refs[0]);
  out.image("before", render(res.estimate, tf, views.views[0], rc));
  out.image("after", render(res.volume, tf, views.views[0], rc));
  save_result_volume(out, res.volume);
  out.trace(report.trace);
  out.gradchecks(report.gradchecks);
  finish(out, cfg, report, json::object(), t0);
  return 0;
}

// ----------------------------------------------------------------- demo-1d

int run_demo_1d(const RunConfig& cfg, OutputDir& out) {
  const auto t0 = Clock::now();
  Demo1dConfig dc;
  dc.d0 = cfg.number("d0");
  dc.truth = cfg.number("truth");
  dc.variance = cfg.number("variance");
  dc.absorption_scale = cfg.number("absorption_scale");
  dc.samples = cfg.integer("samples");
  dc.stepsize = cfg.number("stepsize");
  dc.sweep_min = cfg.number("sweep_min");
  dc.sweep_max = cfg.number("sweep_max");
  dc.sweep_points = cfg.integer("sweep_points");
  const auto rows = gaussian_1d_demo(dc);
  std::string csv = "d1,loss,gradient\n";
  for (const auto& r : rows)
    csv += format_double(r.d1) + "," + format_double(r.loss) + "," + format_double(r.gradient) + "\n";
  out.text("demo1d.csv", csv);
  const auto changes = gradient_sign_changes(rows, 0.0, 1.0);
  TaskReport report;
  report.metrics["sign_changes_in_unit_interval"] = static_cast<double>(changes.size());
  json extra{{"sign_changes", changes},
             {"all_sign_changes", gradient_sign_changes(rows, dc.sweep_min, dc.sweep_max)}};
  finish(out, cfg, report, extra, t0);
  return 0;
}

// ----------------------------------------------------------------- phantom

int run_phantom(const RunConfig& cfg, OutputDir& out) {
  const auto t0 = Clock::now();
  const int n = cfg.integer("resolution");
  const auto v = make_phantom(phantom_from_string(cfg.text("kind")), {n, n, n}, cfg.seed());
  const auto name = cfg.text("name");
  const auto raw = out.file(name + ".raw");
  out.file(name + ".json");
  save_volume(v, raw);
  SphericalCamera cam;
  cam.width = cam.height = 128;
  cam.fov_y = 30;
  cam.longitude = 30;
  cam.latitude = 20;
  RenderConfig rc;
  rc.stepsize = world_stepsize(v, 0.5);
  out.image("preview", render(v, reference_tf(64), cam, rc));
  TaskReport report;
  double mean = 0;
  for (double x : v.values()) mean += x;
  report.metrics["mean_density"] = mean / static_cast<double>(v.size());
  finish(out, cfg, report, json::object(), t0);
  return 0;
}

}  // namespace

int run_task(const RunConfig& cfg) {
  OutputDir out(cfg.text("output"));
  const auto& t = cfg.task();
  if (t == "render") return run_render(cfg, out);
  if (t == "gradcheck") return run_gradcheck(cfg, out);
  if (t == "viewpoint") return run_viewpoint(cfg, out);
  if (t == "tf-recon") return run_tf_recon(cfg, out);
  if (t == "density-recon") return run_density_recon(cfg, out);
  if (t == "color-recon") return run_color_recon(cfg, out);
  if (t == "demo-1d") return run_demo_1d(cfg, out);
  if (t == "phantom") return run_phantom(cfg, out);
  throw ConfigError("unknown task '" + t + "'");
}

}  // namespace diffdvr::cli
