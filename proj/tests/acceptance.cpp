// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. `acceptance 3 7` runs only criteria 3
// and 7 (criterion 11 needs the runs of 6, 7, 8 and 10 and repeats them).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "diffdvr/objectives.hpp"
#include "diffdvr/parallel.hpp"
#include "diffdvr/phantom.hpp"
#include "diffdvr/renderer.hpp"
#include "diffdvr/tasks.hpp"
#include "test_util.hpp"

namespace {

using namespace diffdvr;
using testing::fd_gradient;
using testing::max_rel_error;
using testing::rel_error;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Loss traces of every optimization run, keyed by run name; criterion 11
// compares them against repeats with another worker count.
std::map<std::string, std::vector<double>> g_traces;

std::vector<double> flatten(const std::vector<TraceRow>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), {double(r.iter), r.total, r.data, r.prior});
  return out;
}

// ------------------------------------------------------------ 1 and 2

struct LossFn {
  const char* name;
  std::function<double(const ImageRGBA&, const ImageRGBA&)> value;
  std::function<ImageRGBA(const ImageRGBA&, const ImageRGBA&)> seed;
};

std::vector<LossFn> losses() {
  return {
      {"l1", [](const ImageRGBA& img, const ImageRGBA& ref) { return l1_loss(std::vector{img}, std::vector{ref}).value; },
       [](const ImageRGBA& img, const ImageRGBA& ref) { return l1_loss(std::vector{img}, std::vector{ref}).seeds[0]; }},
      {"entropy", [](const ImageRGBA& img, const ImageRGBA&) { return opacity_entropy(img).value; },
       [](const ImageRGBA& img, const ImageRGBA&) { return opacity_entropy(img).seed; }},
  };
}

constexpr DiffTarget kTargets[] = {DiffTarget::Camera, DiffTarget::Stepsize, DiffTarget::TransferFunction,
                                   DiffTarget::Volume};

testing::RandomScene parity_scene(int i) {
  return testing::make_random_scene(1000 + i, 8, i % 2 == 0 ? 2 : 8, 8);
}

Outcome gradient_parity() {
  double worst_fd = 0, worst_fwd = 0;
  std::string worst_where;
  for (int i = 0; i < 20; ++i) {
    auto s = parity_scene(i);
    for (const auto& loss : losses()) {
      RenderConfig plain = s.config;
      plain.target = DiffTarget::None;
      auto eval = [&] { return loss.value(render(s.volume, s.tf, s.camera, plain), s.reference); };
      const auto seed = loss.seed(render(s.volume, s.tf, s.camera, plain), s.reference);
      for (DiffTarget t : kTargets) {
        RenderConfig cfg = s.config;
        cfg.target = t;
        const auto g = render_adjoint(s.volume, s.tf, s.camera, cfg, seed);
        std::vector<double> analytic, numeric;
        if (t == DiffTarget::Volume) {
          analytic = g.volume;
          numeric = fd_gradient(s.volume.values(), eval, 1e-6);
        } else if (t == DiffTarget::TransferFunction) {
          analytic = g.tf;
          numeric = fd_gradient(s.tf.values(), eval, 1e-6);
        } else if (t == DiffTarget::Camera) {
          analytic = {g.camera[0], g.camera[1]};
          std::vector<double> angles{s.camera.longitude, s.camera.latitude};
          const auto saved = s.camera;
          // small enough that no ray changes its sample count
          numeric = fd_gradient(angles, [&] {
            s.camera.longitude = angles[0];
            s.camera.latitude = angles[1];
            const double v = eval();
            s.camera = saved;
            return v;
          }, 1e-4);
        } else {
          analytic = {g.stepsize};
          std::vector<double> dt{plain.stepsize};
          numeric = fd_gradient(dt, [&] {
            const double saved = plain.stepsize;
            plain.stepsize = dt[0];
            const double v = eval();
            plain.stepsize = saved;
            return v;
          }, 1e-7);
        }
        const double e = max_rel_error(analytic, numeric);
        if (e > worst_fd) {
          worst_fd = e;
          worst_where = "scene " + std::to_string(i) + " " + loss.name + " " + to_string(t);
        }
        if (t == DiffTarget::Camera || t == DiffTarget::Stepsize) {
          const auto fg = render_forward_grad(s.volume, s.tf, s.camera, cfg);
          std::vector<double> fwd(fg.params, 0.0);
          for (std::int64_t p = 0; p < fg.image.pixel_count(); ++p)
            for (int c = 0; c < 4; ++c)
              for (int k = 0; k < fg.params; ++k) fwd[k] += seed.values()[4 * p + c] * fg.at(p, c, k);
          worst_fwd = std::max(worst_fwd, max_rel_error(fwd, analytic));
        }
      }
    }
  }
  return {worst_fd < 1e-3 && worst_fwd < 1e-4,
          "adjoint vs FD max rel " + fmt("%.2e", worst_fd) + " (" + worst_where + "), forward vs adjoint " +
              fmt("%.2e", worst_fwd)};
}

Outcome inversion_equivalence() {
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const auto s = parity_scene(i);
    RenderConfig plain = s.config;
    for (const auto& loss : losses()) {
      const auto seed = loss.seed(render(s.volume, s.tf, s.camera, plain), s.reference);
      for (DiffTarget t : kTargets) {
        RenderConfig cfg = s.config;
        cfg.target = t;
        cfg.memory = AdjointMemory::Inversion;
        const auto a = render_adjoint(s.volume, s.tf, s.camera, cfg, seed);
        cfg.memory = AdjointMemory::Stored;
        const auto b = render_adjoint(s.volume, s.tf, s.camera, cfg, seed);
        worst = std::max({worst, max_rel_error(a.volume, b.volume), max_rel_error(a.tf, b.tf),
                          max_rel_error(a.camera, b.camera), rel_error(a.stepsize, b.stepsize)});
      }
    }
  }
  // Per-ray state with 16 vs 128 samples per unit length.
  auto s = parity_scene(0);
  const auto seed = l1_loss(std::vector{render(s.volume, s.tf, s.camera, s.config)}, std::vector{s.reference}).seeds[0];
  std::map<std::pair<int, int>, AdjointStats> stats;
  for (AdjointMemory m : {AdjointMemory::Inversion, AdjointMemory::Stored})
    for (int n : {16, 128}) {
      RenderConfig cfg = s.config;
      cfg.stepsize = 1.0 / n;
      cfg.target = DiffTarget::Volume;
      cfg.memory = m;
      render_adjoint(s.volume, s.tf, s.camera, cfg, seed, &stats[{int(m), n}]);
    }
  const auto& i16 = stats[{int(AdjointMemory::Inversion), 16}];
  const auto& i128 = stats[{int(AdjointMemory::Inversion), 128}];
  const auto& s16 = stats[{int(AdjointMemory::Stored), 16}];
  const auto& s128 = stats[{int(AdjointMemory::Stored), 128}];
  const bool constant = i16.peak_ray_state_bytes == i128.peak_ray_state_bytes &&
                        i16.ray_state_allocations == i128.ray_state_allocations &&
                        i128.max_samples_per_ray > i16.max_samples_per_ray;
  const bool grows = s128.peak_ray_state_bytes > s16.peak_ray_state_bytes;
  return {worst < 1e-5 && constant && grows,
          "max rel " + fmt("%.2e", worst) + ", inversion state " + std::to_string(i16.peak_ray_state_bytes) + "/" +
              std::to_string(i128.peak_ray_state_bytes) + " B at N=" + std::to_string(i16.max_samples_per_ray) + "/" +
              std::to_string(i128.max_samples_per_ray) + ", stored " + std::to_string(s16.peak_ray_state_bytes) + "/" +
              std::to_string(s128.peak_ray_state_bytes) + " B"};
}

// ------------------------------------------------------------------- 3-5

Outcome analytic_transparency() {
  double worst = 0;
  for (double tau0 : {0.1, 1.0, 10.0}) {
    const DensityVolume v({4, 4, 4}, Box{}, 0.5);
    const TransferFunction tf({{0.3, 0.6, 0.9, tau0}});
    SphericalCamera cam;
    cam.width = cam.height = 9;
    RenderConfig cfg;
    cfg.stepsize = 1.0 / 128;
    const auto img = render(v, tf, cam, cfg);
    const double transparency = 1.0 - img.pixel(4, 4).a;
    worst = std::max(worst, std::abs(transparency - std::exp(-tau0 * 1.0)));
  }
  return {worst <= 1e-5, "max abs error " + fmt("%.2e", worst)};
}

Outcome blend_round_trip() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), as = u(rng) * (1.0 - 1e-6);
    const Rgba<double> state{a * u(rng), a * u(rng), a * u(rng), a};
    const Rgba<double> sample{as * u(rng), as * u(rng), as * u(rng), as};
    const auto back = blend_invert(blend(state, sample), sample);
    for (int c = 0; c < 4; ++c) worst = std::max(worst, std::abs(back[c] - state[c]));
  }
  return {worst <= 1e-6, "max abs error " + fmt("%.2e", worst)};
}

Outcome entropy_contract() {
  ImageRGBA uniform(8, 8), one_hot(8, 8);
  for (std::int64_t p = 0; p < 64; ++p) uniform.set_pixel(p, {0, 0, 0, 0.37});
  one_hot.set_pixel(13, {0, 0, 0, 0.8});
  const double hu = opacity_entropy(uniform).value, h1 = opacity_entropy(one_hot).value;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.02, 1.0);
  double scale_err = 0, grad_err = 0;
  for (int i = 0; i < 10; ++i) {
    ImageRGBA img(7, 6);
    for (double& v : img.values()) v = u(rng);
    const auto e = opacity_entropy(img);
    ImageRGBA scaled = img;
    const double factor = 0.01 + u(rng);
    for (double& v : scaled.values()) v *= factor;
    scale_err = std::max(scale_err, std::abs(opacity_entropy(scaled).value - e.value));
    const auto fd = fd_gradient(img.values(), [&] { return opacity_entropy(img).value; }, 1e-7);
    grad_err = std::max(grad_err, max_rel_error(e.seed.values(), fd));
  }
  const bool pass = std::abs(hu - 1.0) < 1e-12 && h1 == 0.0 && scale_err <= 1e-9 && grad_err <= 1e-4;
  return {pass, "uniform " + fmt("%.15f", hu) + ", one-hot " + fmt("%g", h1) + ", scale " + fmt("%.1e", scale_err) +
                    ", gradient rel " + fmt("%.1e", grad_err)};
}

// ------------------------------------------------------------------- 6

ViewpointConfig viewpoint_config() {
  ViewpointConfig cfg;
  cfg.camera.width = cfg.camera.height = 64;
  cfg.camera.fov_y = 30;
  cfg.render.stepsize = 1.0 / 64;
  return cfg;
}

Outcome viewpoint() {
  const auto v = make_phantom(PhantomKind::Asymmetric, {32, 32, 32});
  const auto tf = reference_tf(64);
  const auto cfg = viewpoint_config();
  const auto res = optimize_viewpoint(v, tf, cfg);
  g_traces["viewpoint"] = flatten(res.report.trace);
  for (const auto& traj : res.trajectories)
    for (const auto& p : traj) g_traces["viewpoint"].insert(g_traces["viewpoint"].end(), {p.longitude, p.latitude, p.entropy});
  const auto sweep = entropy_sweep(v, tf, cfg.camera, cfg.render, 256);
  const double ratio = res.best.entropy / sweep.entropy;
  return {ratio >= 0.98 && res.trajectories.size() == 8,
          "best " + fmt("%.4f", res.best.entropy) + " vs sweep " + fmt("%.4f", sweep.entropy) + " (ratio " +
              fmt("%.4f", ratio) + ")"};
}

// ------------------------------------------------------------------- 7

Outcome tf_reconstruction() {
  SphericalCamera base;
  base.width = base.height = 64;
  base.fov_y = 30;
  const auto views = fibonacci_views(8, base);
  TfReconConfig cfg;
  cfg.render.stepsize = 1.0 / 64;
  cfg.resolution = 16;
  cfg.lambda = 0.4;
  cfg.lr = 0.8;
  cfg.epochs = 200;
  cfg.seed = 1;

  const auto shells = make_phantom(PhantomKind::Shells, {32, 32, 32});
  const auto refs = render_views(shells, reference_tf(256), views, cfg.render);
  const auto a = reconstruct_tf(shells, refs, views, cfg);
  g_traces["tf-recon"] = flatten(a.report.trace);
  const double ratio = a.report.metrics.at("final_l1") / a.report.metrics.at("initial_l1");

  // Two texels, centered at densities 0.25 and 0.75; a linear density ramp
  // covers both.
  DensityVolume ramp({32, 32, 32});
  for (int k = 0; k < 32; ++k)
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i) ramp.at(i, j, k) = (i + 0.5) / 32;
  const TransferFunction truth({{0.9, 0.3, 0.1, 2.0}, {0.1, 0.5, 0.9, 6.0}});
  const auto refs2 = render_views(ramp, truth, views, cfg.render);
  TfReconConfig cfg2 = cfg;
  cfg2.resolution = 2;
  cfg2.lambda = 0.0;
  cfg2.lr = 0.05;
  const auto b = reconstruct_tf(ramp, refs2, views, cfg2);
  g_traces["tf-recon-2"] = flatten(b.report.trace);
  double worst = 0;
  for (std::size_t i = 0; i < truth.values().size(); ++i)
    worst = std::max(worst, std::abs(b.tf.values()[i] - truth.values()[i]));
  return {ratio <= 0.1 && worst <= 0.05,
          "L1 final/initial " + fmt("%.4f", ratio) + " (" + fmt("%.4f", a.report.metrics.at("final_l1")) + "/" +
              fmt("%.4f", a.report.metrics.at("initial_l1")) + "), 2-texel max error " + fmt("%.4f", worst)};
}

// ------------------------------------------------------------------- 8

Outcome density_reconstruction() {
  const auto truth = make_phantom(PhantomKind::Sphere, {16, 16, 16});
  SphericalCamera base;
  base.width = base.height = 64;
  base.fov_y = 30;
  const auto views = fibonacci_views(16, base);
  GridOptimConfig cfg;  // 4^3 -> 16^3, 10 iterations per level, 50 at 16^3
  RenderConfig rc;
  rc.stepsize = cfg.stepsize_voxels / 16;
  const auto refs = render_views(truth, absorption_ramp_tf(), views, rc);
  const auto res = reconstruct_density_absorption(refs, views, cfg, 10.0, 0.5, &truth);
  g_traces["density-recon"] = flatten(res.report.trace);
  const double gain = res.report.metrics.at("final_volume_psnr") - res.report.metrics.at("initial_volume_psnr");
  std::vector<double> windows;
  const auto& tr = res.report.trace;
  for (std::size_t w = 0; w + 10 <= tr.size(); w += 10) {
    double sum = 0;
    for (std::size_t i = w; i < w + 10; ++i) sum += tr[i].total;
    windows.push_back(sum / 10);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < windows.size(); ++i) monotone &= windows[i] <= windows[i - 1];
  std::ostringstream w;
  for (double x : windows) w << fmt("%.4f", x) << " ";
  return {gain >= 10.0 && monotone,
          "volume PSNR " + fmt("%.2f", res.report.metrics.at("initial_volume_psnr")) + " -> " +
              fmt("%.2f", res.report.metrics.at("final_volume_psnr")) + " dB (gain " + fmt("%.2f", gain) +
              "), window means " + w.str()};
}

// ------------------------------------------------------------------- 9

Outcome nonconvexity_demo() {
  Demo1dConfig cfg;
  const auto rows = gaussian_1d_demo(cfg);
  const Demo1dRow* at_truth = nullptr;
  for (const auto& r : rows)
    if (std::abs(r.d1 - cfg.truth) < 1e-12) at_truth = &r;
  const auto changes = gradient_sign_changes(rows, 0.0, 1.0);
  const bool pass = at_truth && at_truth->loss == 0.0 && at_truth->gradient == 0.0 && changes.size() == 1 &&
                    std::abs(changes[0] - 0.4) <= 0.2;
  return {pass, std::to_string(changes.size()) + " sign change(s) in (0,1)" +
                    (changes.empty() ? std::string() : " at " + fmt("%.4f", changes[0]))};
}

// ------------------------------------------------------------------ 10

Outcome emission_absorption() {
  const auto truth = make_phantom(PhantomKind::Shells, {16, 16, 16});
  const auto tf = gaussian_bump_tf(64);
  SphericalCamera base;
  base.width = base.height = 64;
  base.fov_y = 30;
  const auto views = fibonacci_views(16, base);
  EmissionAbsorptionConfig cfg;
  cfg.color_stage.schedule = {4, 16, 10, 50};
  cfg.density_stage.schedule = {16, 16, 0, 50};
  RenderConfig rc;
  rc.stepsize = cfg.density_stage.stepsize_voxels / 16;
  const auto refs = render_views(truth, tf, views, rc);
  double worst_pipeline = 0, best_direct = 1e300;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.color_stage.seed = cfg.estimate.seed = cfg.density_stage.seed = seed;
    const auto p = reconstruct_density_emission_absorption(refs, views, tf, cfg, &truth);
    const auto d = optimize_density_random_init(refs, views, tf, cfg.density_stage, &truth);
    g_traces["color-recon-" + std::to_string(seed)] = flatten(p.report.trace);
    g_traces["random-init-" + std::to_string(seed)] = flatten(d.report.trace);
    const double lp = p.report.metrics.at("final_l1"), ld = d.report.metrics.at("final_l1");
    worst_pipeline = std::max(worst_pipeline, lp);
    best_direct = std::min(best_direct, ld);
    detail += "seed " + std::to_string(seed) + ": " + fmt("%.4f", lp) + " vs " + fmt("%.4f", ld) + "; ";
  }
  return {worst_pipeline < best_direct, "final L1 pipeline vs random init, " + detail};
}

// ------------------------------------------------------------------ 11

Outcome determinism(const std::map<int, std::function<Outcome()>>& producers) {
  const auto first = g_traces;
  const int before = worker_count();
  set_worker_count(4);
  for (const auto& [id, run] : producers) run();
  set_worker_count(before);
  int identical = 0;
  std::string mismatched;
  for (const auto& [name, trace] : first) {
    const auto it = g_traces.find(name);
    const bool same = it != g_traces.end() && it->second.size() == trace.size() &&
                      std::equal(trace.begin(), trace.end(), it->second.begin(),
                                 [](double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; });
    if (same) {
      ++identical;
    } else {
      mismatched += name + " ";
    }
  }
  return {!first.empty() && identical == static_cast<int>(first.size()),
          std::to_string(identical) + "/" + std::to_string(first.size()) + " traces bit-identical with 1 vs 4 workers" +
              (mismatched.empty() ? "" : ", differing: " + mismatched)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::map<int, std::function<Outcome()>> producers{
      {6, viewpoint}, {7, tf_reconstruction}, {8, density_reconstruction}, {10, emission_absorption}};
  const std::vector<Criterion> all{
      {1, "gradient parity", 60, gradient_parity},
      {2, "inversion equivalence", 30, inversion_equivalence},
      {3, "analytic transparency", 5, analytic_transparency},
      {4, "blend/invert round trip", 1, blend_round_trip},
      {5, "entropy contract", 5, entropy_contract},
      {6, "viewpoint optimization", 300, viewpoint},
      {7, "TF reconstruction", 600, tf_reconstruction},
      {8, "absorption density reconstruction", 600, density_reconstruction},
      {9, "non-convexity demo", 10, nonconvexity_demo},
      {10, "emission-absorption pipeline", 1800, emission_absorption},
      {11, "determinism", 1e300, nullptr},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& c : all) selected.insert(c.id);

  set_worker_count(1);
  int failures = 0;
  std::set<int> done;
  for (const auto& c : all) {
    if (!selected.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    if (c.id == 11) {
      for (const auto& [id, run] : producers)
        if (!done.count(id)) run();
      o = determinism(producers);
    } else {
      o = c.run();
      done.insert(c.id);
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("criterion %2d %s  %-34s %s [%.1f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                secs, c.limit_s < 1e300 ? (", limit " + fmt("%.0f", c.limit_s) + " s").c_str() : "");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
