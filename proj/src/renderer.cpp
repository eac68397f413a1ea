#include "diffdvr/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "diffdvr/errors.hpp"
#include "diffdvr/parallel.hpp"

namespace diffdvr {

const char* to_string(DiffTarget t) {
  switch (t) {
    case DiffTarget::None: return "none";
    case DiffTarget::Camera: return "camera";
    case DiffTarget::Stepsize: return "stepsize";
    case DiffTarget::TransferFunction: return "tf";
    case DiffTarget::Volume: return "volume";
    case DiffTarget::ColorVolume: return "color_volume";
  }
  return "unknown";
}

const char* to_string(AdjointMemory m) {
  return m == AdjointMemory::Inversion ? "inversion" : "stored";
}

void RenderConfig::validate() const {
  if (!(stepsize > 0.0) || !std::isfinite(stepsize)) {
    throw InvalidParameter("stepsize must be positive");
  }
}

Rgba<double> blend_invert(const Rgba<double>& next, const Rgba<double>& sample) {
  if (!(sample.a <= 1.0 - kOpacityEpsilon) || sample.a < 0.0) {
    throw InvalidInput("blend_invert: sample opacity outside [0, 1 - eps]");
  }
  Rgba<double> prev;
  prev.a = (sample.a - next.a) / (sample.a - 1.0);
  const double transmit = 1.0 - prev.a;
  prev.r = next.r - transmit * sample.r;
  prev.g = next.g - transmit * sample.g;
  prev.b = next.b - transmit * sample.b;
  return prev;
}

BlendAdjoint blend_adjoint(const Rgba<double>& state, const Rgba<double>& sample,
                           const Rgba<double>& next_hat) {
  BlendAdjoint out;
  const double transmit = 1.0 - state.a;
  out.sample.r = transmit * next_hat.r;
  out.sample.g = transmit * next_hat.g;
  out.sample.b = transmit * next_hat.b;
  out.sample.a = transmit * next_hat.a;
  out.state.r = next_hat.r;
  out.state.g = next_hat.g;
  out.state.b = next_hat.b;
  out.state.a = (1.0 - sample.a) * next_hat.a - sample.r * next_hat.r - sample.g * next_hat.g -
                sample.b * next_hat.b;
  return out;
}

namespace {

constexpr int kMaxBlocks = 16;
constexpr double kTerminationAlpha = 1.0 - 1e-4;

// Fixed partition of the pixels. Gradient partials are kept per block and
// summed in block order, so results do not depend on the worker count.
struct PixelBlock {
  std::int64_t begin = 0;
  std::int64_t end = 0;
};

std::vector<PixelBlock> make_blocks(std::int64_t pixels) {
  const std::int64_t n = std::max<std::int64_t>(1, std::min<std::int64_t>(kMaxBlocks, pixels));
  std::vector<PixelBlock> blocks(static_cast<std::size_t>(n));
  for (std::int64_t b = 0; b < n; ++b) {
    blocks[b] = {b * pixels / n, (b + 1) * pixels / n};
  }
  return blocks;
}

struct AllocationCounter {
  std::size_t peak_bytes = 0;
  std::size_t allocations = 0;
};

template <typename T>
struct CountingAllocator {
  using value_type = T;
  AllocationCounter* counter = nullptr;

  explicit CountingAllocator(AllocationCounter* c) : counter(c) {}
  template <typename U>
  CountingAllocator(const CountingAllocator<U>& o) : counter(o.counter) {}  // NOLINT

  T* allocate(std::size_t n) {
    ++counter->allocations;
    counter->peak_bytes = std::max(counter->peak_bytes, n * sizeof(T));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) { std::allocator<T>{}.deallocate(p, n); }

  template <typename U>
  bool operator==(const CountingAllocator<U>& o) const { return counter == o.counter; }
};

struct Accumulator {
  double stepsize = 0.0;
  std::array<double, 2> camera{};
  std::vector<double> tf;
  std::vector<double> volume;
  std::vector<double> color_volume;
  AllocationCounter alloc;
  int max_samples = 0;
};

struct DensityMedium {
  const DensityVolume& volume;
  const TransferFunction& tf;

  const Box& box() const { return volume.box(); }

  template <typename S>
  Rgba<S> sample(const Vec3<S>& x) const {
    return tf_sample(tf, trilinear_sample(volume, x));
  }

  struct Eval {
    TrilinearGradients tri;
    TfGradients tfg;
  };

  Rgba<double> eval(const Vec3d& x, Eval& e) const {
    e.tri = trilinear_gradients(volume, x);
    e.tfg = tf_gradients(tf, e.tri.value);
    return e.tfg.value;
  }

  // Scatters the adjoint of (rgb, tau) into the selected parameter and
  // returns the adjoint of the sample position.
  Vec3d backprop(const Eval& e, const Rgba<double>& hat, DiffTarget target, Accumulator& acc) const {
    if (target == DiffTarget::TransferFunction) {
      double* lo = acc.tf.data() + 4 * e.tfg.lower;
      double* hi = acc.tf.data() + 4 * e.tfg.upper;
      for (int ch = 0; ch < 4; ++ch) {
        lo[ch] += e.tfg.weight_lower * hat[ch];
        hi[ch] += e.tfg.weight_upper * hat[ch];
      }
      return {};
    }
    const double d_hat = e.tfg.d_density.r * hat.r + e.tfg.d_density.g * hat.g +
                         e.tfg.d_density.b * hat.b + e.tfg.d_density.a * hat.a;
    if (target == DiffTarget::Volume) {
      for (int c = 0; c < 8; ++c) acc.volume[e.tri.index[c]] += e.tri.weight[c] * d_hat;
      return {};
    }
    return e.tri.d_position * d_hat;
  }
};

struct ColorMedium {
  const ColorVolume& volume;

  const Box& box() const { return volume.box(); }

  template <typename S>
  Rgba<S> sample(const Vec3<S>& x) const {
    return color_sample(volume, x);
  }

  struct Eval {
    TrilinearStencil<double> st;
    Rgba<double> value;
  };

  Rgba<double> eval(const Vec3d& x, Eval& e) const {
    e.st = trilinear_stencil(volume.grid(), x);
    e.value = color_sample(volume, x);
    return e.value;
  }

  Vec3d backprop(const Eval& e, const Rgba<double>& hat, DiffTarget target, Accumulator& acc) const {
    if (!e.st.inside) return {};
    if (target == DiffTarget::ColorVolume) {
      for (int c = 0; c < 8; ++c) {
        const double w = e.st.weight(c);
        double* g = acc.color_volume.data() + 4 * e.st.index[c];
        for (int ch = 0; ch < 4; ++ch) g[ch] += w * hat[ch];
      }
      return {};
    }
    if (target != DiffTarget::Camera && target != DiffTarget::Stepsize) return {};
    const auto values = volume.values();
    const Vec3d ext = volume.box().extent();
    Vec3d out{};
    for (int a = 0; a < 3; ++a) {
      if (e.st.edge_clamped[a]) continue;
      double dfrac = 0.0;
      for (int c = 0; c < 8; ++c) {
        double w = 1.0;
        for (int b = 0; b < 3; ++b) {
          const bool hi = (c >> b) & 1;
          if (b == a) {
            w *= hi ? 1.0 : -1.0;
          } else {
            w *= hi ? e.st.frac[b] : 1.0 - e.st.frac[b];
          }
        }
        const double* p = values.data() + 4 * e.st.index[c];
        dfrac += w * (p[0] * hat.r + p[1] * hat.g + p[2] * hat.b + p[3] * hat.a);
      }
      out[a] = dfrac * volume.dims()[a] / ext[a];
    }
    return out;
  }
};

template <typename S, typename Medium>
Rgba<S> march(const Medium& medium, const RaySegment<S>& seg, const S& dt, bool early_termination) {
  Rgba<S> state{S(0), S(0), S(0), S(0)};
  for (int i = 0; i < seg.samples; ++i) {
    const Vec3<S> x = seg.start + seg.direction * (S(i) * dt);
    const Rgba<S> rgbt = medium.template sample<S>(x);
    const S alpha = opacity_from_density(rgbt.a, dt);
    state = blend(state, Rgba<S>{alpha * rgbt.r, alpha * rgbt.g, alpha * rgbt.b, alpha});
    if (early_termination && static_cast<double>(value_of(state.a)) > kTerminationAlpha) break;
  }
  return state;
}

template <typename S, typename Medium>
ImageRGBA render_impl(const Medium& medium, const SphericalCamera& cam, const RenderConfig& cfg) {
  ImageRGBA image(cam.width, cam.height);
  const bool early = cfg.early_termination && cfg.target == DiffTarget::None;
  const S lon(static_cast<S>(cam.longitude));
  const S lat(static_cast<S>(cam.latitude));
  const S dt(static_cast<S>(cfg.stepsize));
  const auto blocks = make_blocks(image.pixel_count());
  parallel_for(static_cast<std::int64_t>(blocks.size()), [&](std::int64_t b) {
    for (std::int64_t p = blocks[b].begin; p < blocks[b].end; ++p) {
      const PixelCoord px{static_cast<int>(p % cam.width), static_cast<int>(p / cam.width)};
      const auto seg = setup_ray<S>(cam, lon, lat, px, medium.box(), cfg.stepsize);
      if (!seg) continue;
      const Rgba<S> c = march(medium, *seg, dt, early);
      image.set_pixel(p, {double(c.r), double(c.g), double(c.b), double(c.a)});
    }
  });
  return image;
}

template <typename Medium>
ImageRGBA render_dispatch(const Medium& medium, const SphericalCamera& cam, const RenderConfig& cfg) {
  cam.validate();
  cfg.validate();
  if (cfg.precision == Precision::Single) return render_impl<float>(medium, cam, cfg);
  return render_impl<double>(medium, cam, cfg);
}

template <int P>
ForwardGradResult forward_impl(const DensityMedium& medium, const SphericalCamera& cam,
                               const RenderConfig& cfg) {
  using D = Dual<double, P>;
  ForwardGradResult out;
  out.image = ImageRGBA(cam.width, cam.height);
  out.params = P;
  out.jacobian.assign(static_cast<std::size_t>(out.image.pixel_count() * 4 * P), 0.0);
  D lon(cam.longitude), lat(cam.latitude), dt(cfg.stepsize);
  if constexpr (P == 2) {
    lon = D::seed(cam.longitude, 0);
    lat = D::seed(cam.latitude, 1);
  } else {
    dt = D::seed(cfg.stepsize, 0);
  }
  const auto blocks = make_blocks(out.image.pixel_count());
  parallel_for(static_cast<std::int64_t>(blocks.size()), [&](std::int64_t b) {
    for (std::int64_t p = blocks[b].begin; p < blocks[b].end; ++p) {
      const PixelCoord px{static_cast<int>(p % cam.width), static_cast<int>(p / cam.width)};
      const auto seg = setup_ray<D>(cam, lon, lat, px, medium.box(), cfg.stepsize);
      if (!seg) continue;
      const Rgba<D> c = march(medium, *seg, dt, false);
      out.image.set_pixel(p, {c.r.value, c.g.value, c.b.value, c.a.value});
      for (int ch = 0; ch < 4; ++ch) {
        for (int k = 0; k < P; ++k) {
          out.jacobian[static_cast<std::size_t>((p * 4 + ch) * P + k)] = c[ch].deriv[k];
        }
      }
    }
  });
  return out;
}

template <typename Medium>
void adjoint_ray(const Medium& medium, const SphericalCamera& cam, PixelCoord px,
                 const RaySegment<double>& seg, const RenderConfig& cfg, const Rgba<double>& seed,
                 Accumulator& acc) {
  const double dt = cfg.stepsize;
  const DiffTarget target = cfg.target;
  const bool stored = cfg.memory == AdjointMemory::Stored;
  const int n = seg.samples;
  acc.max_samples = std::max(acc.max_samples, n);

  using StateVector = std::vector<Rgba<double>, CountingAllocator<Rgba<double>>>;
  StateVector states{CountingAllocator<Rgba<double>>(&acc.alloc)};
  if (stored) states.reserve(static_cast<std::size_t>(n));

  typename Medium::Eval ev;
  auto sample_at = [&](int i, OpacityGradients& og) {
    const Vec3d x = seg.start + seg.direction * (double(i) * dt);
    const Rgba<double> rgbt = medium.eval(x, ev);
    og = opacity_gradients(rgbt.a, dt);
    return rgbt;
  };

  // Forward pass: only the final state survives unless states are stored.
  Rgba<double> state{};
  OpacityGradients og;
  for (int i = 0; i < n; ++i) {
    const Rgba<double> rgbt = sample_at(i, og);
    if (stored) states.push_back(state);
    state = blend(state, Rgba<double>{og.alpha * rgbt.r, og.alpha * rgbt.g, og.alpha * rgbt.b, og.alpha});
  }

  const bool need_position = target == DiffTarget::Camera || target == DiffTarget::Stepsize;
  Rgba<double> next_hat = seed;
  Vec3d start_hat{}, dir_hat{};
  for (int i = n - 1; i >= 0; --i) {
    const Rgba<double> rgbt = sample_at(i, og);
    const Rgba<double> sample{og.alpha * rgbt.r, og.alpha * rgbt.g, og.alpha * rgbt.b, og.alpha};
    const Rgba<double> prev = stored ? states[static_cast<std::size_t>(i)] : blend_invert(state, sample);
    const BlendAdjoint ba = blend_adjoint(prev, sample, next_hat);

    // sample = (alpha * rgb, alpha), alpha = 1 - exp(-dt * tau)
    const double alpha_hat = ba.sample.a + rgbt.r * ba.sample.r + rgbt.g * ba.sample.g +
                             rgbt.b * ba.sample.b;
    const Rgba<double> rgbt_hat{og.alpha * ba.sample.r, og.alpha * ba.sample.g,
                                og.alpha * ba.sample.b, og.d_tau * alpha_hat};
    if (target == DiffTarget::Stepsize) acc.stepsize += og.d_dt * alpha_hat;

    const Vec3d x_hat = medium.backprop(ev, rgbt_hat, target, acc);
    if (need_position) {
      start_hat = start_hat + x_hat;
      if (target == DiffTarget::Stepsize) acc.stepsize += double(i) * dot(seg.direction, x_hat);
      dir_hat = dir_hat + x_hat * (double(i) * dt);
    }
    next_hat = ba.state;
    state = prev;
  }

  if (target == DiffTarget::Camera) {
    using D = Dual<double, 2>;
    const auto dseg = setup_ray<D>(cam, D::seed(cam.longitude, 0), D::seed(cam.latitude, 1), px,
                                   medium.box(), dt);
    if (!dseg) return;
    for (int k = 0; k < 2; ++k) {
      double g = 0.0;
      for (int a = 0; a < 3; ++a) {
        g += start_hat[a] * dseg->start[a].deriv[k] + dir_hat[a] * dseg->direction[a].deriv[k];
      }
      acc.camera[k] += g;
    }
  }
}

template <typename Medium>
GradientSet adjoint_impl(const Medium& medium, const SphericalCamera& cam, const RenderConfig& cfg,
                         const ImageRGBA& seed, std::size_t tf_size, std::size_t volume_size,
                         std::size_t color_size, AdjointStats* stats) {
  cam.validate();
  cfg.validate();
  if (seed.width() != cam.width || seed.height() != cam.height) {
    throw InvalidInput("adjoint seed size does not match the camera image size");
  }
  GradientSet grads;
  if (cfg.target == DiffTarget::None) return grads;

  const auto blocks = make_blocks(seed.pixel_count());
  std::vector<Accumulator> partial(blocks.size());
  parallel_for(static_cast<std::int64_t>(blocks.size()), [&](std::int64_t b) {
    Accumulator& acc = partial[static_cast<std::size_t>(b)];
    if (cfg.target == DiffTarget::TransferFunction) acc.tf.assign(tf_size, 0.0);
    if (cfg.target == DiffTarget::Volume) acc.volume.assign(volume_size, 0.0);
    if (cfg.target == DiffTarget::ColorVolume) acc.color_volume.assign(color_size, 0.0);
    for (std::int64_t p = blocks[b].begin; p < blocks[b].end; ++p) {
      const Rgba<double> s = seed.pixel(p);
      if (s.r == 0.0 && s.g == 0.0 && s.b == 0.0 && s.a == 0.0) continue;
      const PixelCoord px{static_cast<int>(p % cam.width), static_cast<int>(p / cam.width)};
      const auto seg = setup_ray<double>(cam, cam.longitude, cam.latitude, px, medium.box(), cfg.stepsize);
      if (!seg) continue;
      adjoint_ray(medium, cam, px, *seg, cfg, s, acc);
    }
  });

  auto fold = [&](std::vector<double> Accumulator::*member, std::vector<double>& out, std::size_t n) {
    out.assign(n, 0.0);
    for (const auto& acc : partial) {
      const auto& v = acc.*member;
      for (std::size_t i = 0; i < n; ++i) out[i] += v[i];
    }
  };
  switch (cfg.target) {
    case DiffTarget::TransferFunction: fold(&Accumulator::tf, grads.tf, tf_size); break;
    case DiffTarget::Volume: fold(&Accumulator::volume, grads.volume, volume_size); break;
    case DiffTarget::ColorVolume: fold(&Accumulator::color_volume, grads.color_volume, color_size); break;
    default: break;
  }
  AdjointStats st;
  for (const auto& acc : partial) {
    grads.stepsize += acc.stepsize;
    grads.camera[0] += acc.camera[0];
    grads.camera[1] += acc.camera[1];
    st.peak_ray_state_bytes = std::max(st.peak_ray_state_bytes, acc.alloc.peak_bytes);
    st.ray_state_allocations += acc.alloc.allocations;
    st.max_samples_per_ray = std::max(st.max_samples_per_ray, acc.max_samples);
  }
  if (stats) *stats = st;
  return grads;
}

}  // namespace

ImageRGBA render(const DensityVolume& volume, const TransferFunction& tf,
                 const SphericalCamera& cam, const RenderConfig& cfg) {
  return render_dispatch(DensityMedium{volume, tf}, cam, cfg);
}

ImageRGBA render(const ColorVolume& volume, const SphericalCamera& cam, const RenderConfig& cfg) {
  return render_dispatch(ColorMedium{volume}, cam, cfg);
}

ForwardGradResult render_forward_grad(const DensityVolume& volume, const TransferFunction& tf,
                                      const SphericalCamera& cam, const RenderConfig& cfg) {
  cam.validate();
  cfg.validate();
  const DensityMedium medium{volume, tf};
  switch (cfg.target) {
    case DiffTarget::Camera: return forward_impl<2>(medium, cam, cfg);
    case DiffTarget::Stepsize: return forward_impl<1>(medium, cam, cfg);
    default:
      throw UnsupportedConfiguration(std::string("forward-mode gradients do not support target ") +
                                     to_string(cfg.target));
  }
}

GradientSet render_adjoint(const DensityVolume& volume, const TransferFunction& tf,
                           const SphericalCamera& cam, const RenderConfig& cfg,
                           const ImageRGBA& seed, AdjointStats* stats) {
  if (cfg.target == DiffTarget::ColorVolume) {
    throw UnsupportedConfiguration("color volume gradients need a ColorVolume scene");
  }
  return adjoint_impl(DensityMedium{volume, tf}, cam, cfg, seed, tf.values().size(),
                      static_cast<std::size_t>(volume.size()), 0, stats);
}

GradientSet render_adjoint(const ColorVolume& volume, const SphericalCamera& cam,
                           const RenderConfig& cfg, const ImageRGBA& seed, AdjointStats* stats) {
  if (cfg.target == DiffTarget::TransferFunction || cfg.target == DiffTarget::Volume) {
    throw UnsupportedConfiguration("color volume scenes have no transfer function or densities");
  }
  return adjoint_impl(ColorMedium{volume}, cam, cfg, seed, 0, 0,
                      static_cast<std::size_t>(volume.values().size()), stats);
}

}  // namespace diffdvr
