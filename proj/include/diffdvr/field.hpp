#pragma once

// Differentiable building blocks of the volume renderer: density grids,
// 1D transfer functions, the spherical camera, and the Beer-Lambert opacity.
// Sampling functions are templates over the scalar type so they can be
// evaluated with plain doubles, floats, or forward-mode Duals.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "diffdvr/dual.hpp"
#include "diffdvr/vec3.hpp"

namespace diffdvr {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;

// Pole exclusion margin for the camera latitude, in degrees.
inline constexpr double kPoleEpsilonDeg = 1e-3;
// Per-sample opacity never exceeds 1 - kOpacityEpsilon so blending stays
// invertible.
inline constexpr double kOpacityEpsilon = 1e-6;

template <typename S>
struct Rgba {
  S r{}, g{}, b{}, a{};

  constexpr S& operator[](int i) { return i == 0 ? r : (i == 1 ? g : (i == 2 ? b : a)); }
  constexpr const S& operator[](int i) const {
    return i == 0 ? r : (i == 1 ? g : (i == 2 ? b : a));
  }
};

struct Box {
  Vec3d min{-0.5, -0.5, -0.5};
  Vec3d max{0.5, 0.5, 0.5};

  Vec3d extent() const { return max - min; }
  Vec3d center() const { return (min + max) * 0.5; }
};

// Regular grid of samples spanning a world-space box. Sample (i,j,k) sits at
// the center of its cell, min + (i + 0.5) * extent / dims, like a 3D texture.
// Indices are x-fastest.
struct GridGeometry {
  std::array<int, 3> dims{1, 1, 1};
  Box box{};

  std::int64_t count() const {
    return std::int64_t(dims[0]) * dims[1] * dims[2];
  }
  std::int64_t index(int i, int j, int k) const {
    return i + std::int64_t(dims[0]) * (j + std::int64_t(dims[1]) * k);
  }
  Vec3d spacing() const {
    const Vec3d e = box.extent();
    return {e.x / dims[0], e.y / dims[1], e.z / dims[2]};
  }
  Vec3d voxel_center(int i, int j, int k) const {
    const Vec3d s = spacing();
    return {box.min.x + (i + 0.5) * s.x, box.min.y + (j + 0.5) * s.y,
            box.min.z + (k + 0.5) * s.z};
  }
  // Throws InvalidParameter on empty dims or a degenerate box.
  void validate() const;
};

// The eight grid samples surrounding a point together with the fractional
// position inside that cell.
template <typename S>
struct TrilinearStencil {
  bool inside = false;
  std::array<std::int64_t, 8> index{};
  std::array<S, 3> frac{};
  // True where the point lies between the box face and the first/last sample
  // center; the field is flat there.
  std::array<bool, 3> edge_clamped{};

  // Corner c uses bit 0 for x, bit 1 for y, bit 2 for z.
  S weight(int c) const {
    const S one(1);
    const S wx = (c & 1) ? frac[0] : one - frac[0];
    const S wy = (c & 2) ? frac[1] : one - frac[1];
    const S wz = (c & 4) ? frac[2] : one - frac[2];
    return wx * wy * wz;
  }
};

// Points more than this fraction of the box extent outside the box are
// treated as vacuum. The slack absorbs rounding of ray entry points.
inline constexpr double kBoxSlack = 1e-6;

template <typename S>
TrilinearStencil<S> trilinear_stencil(const GridGeometry& grid, const Vec3<S>& x) {
  TrilinearStencil<S> st;
  std::array<int, 3> lo{};
  for (int a = 0; a < 3; ++a) {
    const double bmin = grid.box.min[a];
    const double ext = grid.box.max[a] - bmin;
    const double xv = static_cast<double>(value_of(x[a]));
    if (xv < bmin - kBoxSlack * ext || xv > bmin + ext * (1.0 + kBoxSlack)) {
      return st;
    }
    const int n = grid.dims[a];
    const S g = (x[a] - S(static_cast<decltype(value_of(x[a]))>(bmin))) *
                    S(static_cast<decltype(value_of(x[a]))>(n / ext)) -
                S(0.5f);
    const double gv = static_cast<double>(value_of(g));
    if (n == 1 || gv <= 0.0) {
      lo[a] = 0;
      st.frac[a] = S(0);
      st.edge_clamped[a] = true;
    } else if (gv >= n - 1) {
      lo[a] = n - 2;
      st.frac[a] = S(1);
      st.edge_clamped[a] = true;
    } else {
      int i0 = static_cast<int>(std::floor(gv));
      if (i0 > n - 2) i0 = n - 2;
      lo[a] = i0;
      st.frac[a] = g - S(static_cast<decltype(value_of(x[a]))>(i0));
    }
  }
  st.inside = true;
  for (int c = 0; c < 8; ++c) {
    const int i = std::min(lo[0] + ((c & 1) ? 1 : 0), grid.dims[0] - 1);
    const int j = std::min(lo[1] + ((c & 2) ? 1 : 0), grid.dims[1] - 1);
    const int k = std::min(lo[2] + ((c & 4) ? 1 : 0), grid.dims[2] - 1);
    st.index[c] = grid.index(i, j, k);
  }
  return st;
}

// Scalar density field in [0,1]; the optimization parameter for density
// reconstruction.
class DensityVolume {
 public:
  DensityVolume() = default;
  DensityVolume(std::array<int, 3> dims, Box box = {}, double fill = 0.0);
  DensityVolume(std::array<int, 3> dims, Box box, std::vector<double> values);

  const GridGeometry& grid() const { return grid_; }
  const std::array<int, 3>& dims() const { return grid_.dims; }
  const Box& box() const { return grid_.box; }
  std::int64_t size() const { return grid_.count(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& at(int i, int j, int k) { return values_[grid_.index(i, j, k)]; }
  double at(int i, int j, int k) const { return values_[grid_.index(i, j, k)]; }

 private:
  GridGeometry grid_{};
  std::vector<double> values_;
};

// Pre-shaded volume holding rgb emission and absorption per sample,
// interleaved as r,g,b,tau.
class ColorVolume {
 public:
  ColorVolume() = default;
  ColorVolume(std::array<int, 3> dims, Box box = {}, Rgba<double> fill = {});

  const GridGeometry& grid() const { return grid_; }
  const std::array<int, 3>& dims() const { return grid_.dims; }
  const Box& box() const { return grid_.box; }
  std::int64_t size() const { return grid_.count(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  Rgba<double> at(std::int64_t voxel) const {
    const double* p = values_.data() + 4 * voxel;
    return {p[0], p[1], p[2], p[3]};
  }
  void set(std::int64_t voxel, const Rgba<double>& c) {
    double* p = values_.data() + 4 * voxel;
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
    p[3] = c.a;
  }

 private:
  GridGeometry grid_{};
  std::vector<double> values_;
};

// 1D transfer function with R texels of (r, g, b emission, tau absorption).
// Texel r is centered at (r + 0.5) / R; lookups clamp to the edge texels.
class TransferFunction {
 public:
  TransferFunction() = default;
  explicit TransferFunction(std::vector<Rgba<double>> texels);

  int resolution() const { return static_cast<int>(data_.size() / 4); }
  Rgba<double> texel(int r) const {
    const double* p = data_.data() + 4 * r;
    return {p[0], p[1], p[2], p[3]};
  }
  void set_texel(int r, const Rgba<double>& t);

  // Flat view of the 4R parameters, texel-major.
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

 private:
  std::vector<double> data_;
};

struct PixelCoord {
  int x = 0;
  int y = 0;
};

// Camera on a sphere around `center`, looking at it. Angles in degrees.
struct SphericalCamera {
  double longitude = 0.0;
  double latitude = 0.0;
  double radius = 2.5;
  Vec3d center{0.0, 0.0, 0.0};
  double fov_y = 40.0;
  int width = 64;
  int height = 64;

  // Throws InvalidParameter on pole violations or bad intrinsics.
  void validate() const;
};

template <typename S>
struct CameraRay {
  Vec3<S> origin;
  Vec3<S> direction;
};

// Eye position and unit direction through the center of `pixel`, with the
// angles supplied separately so they can be seeded as Duals.
template <typename S>
CameraRay<S> camera_ray(const SphericalCamera& cam, const S& longitude_deg,
                        const S& latitude_deg, PixelCoord pixel) {
  using std::cos;
  using std::sin;
  using V = decltype(value_of(std::declval<S>()));
  const S lon = longitude_deg * S(V(kDegToRad));
  const S lat = latitude_deg * S(V(kDegToRad));
  const Vec3<S> offset{cos(lat) * cos(lon), sin(lat), cos(lat) * sin(lon)};
  const Vec3<S> center = Vec3<S>::from(cam.center);
  const Vec3<S> eye = center + offset * S(V(cam.radius));

  const Vec3<S> forward = -offset;
  const Vec3<S> world_up{S(0), S(1), S(0)};
  const Vec3<S> right = normalize(cross(forward, world_up));
  const Vec3<S> up = cross(right, forward);

  const double tan_half = std::tan(0.5 * cam.fov_y * kDegToRad);
  const double aspect = double(cam.width) / double(cam.height);
  const double sx = (2.0 * (pixel.x + 0.5) / cam.width - 1.0) * tan_half * aspect;
  const double sy = (1.0 - 2.0 * (pixel.y + 0.5) / cam.height) * tan_half;
  const Vec3<S> dir = normalize(forward + right * S(V(sx)) + up * S(V(sy)));
  return {eye, dir};
}

CameraRay<double> camera_from_sphere(const SphericalCamera& cam, PixelCoord pixel);

// d(origin)/d(lon, lat) and d(direction)/d(lon, lat), per degree.
struct CameraJacobian {
  std::array<Vec3d, 2> origin;     // [0] = d/dlon, [1] = d/dlat
  std::array<Vec3d, 2> direction;  // [0] = d/dlon, [1] = d/dlat
};

CameraJacobian camera_gradients(const SphericalCamera& cam, PixelCoord pixel);

struct Ray {
  Vec3d origin;
  Vec3d direction;
  double t_near = 0.0;
  double t_far = 0.0;

  Vec3d at(double t) const { return origin + direction * t; }
};

template <typename S>
struct BoxHit {
  S t_near;
  S t_far;
};

// Slab intersection restricted to t >= 0. Returns nothing on a miss.
template <typename S>
std::optional<BoxHit<S>> intersect_box(const Vec3<S>& origin, const Vec3<S>& dir, const Box& box) {
  using V = decltype(value_of(std::declval<S>()));
  bool have_enter = false;
  bool have_exit = false;
  S t_enter(0), t_exit(0);
  for (int a = 0; a < 3; ++a) {
    const double d = static_cast<double>(value_of(dir[a]));
    const double o = static_cast<double>(value_of(origin[a]));
    if (std::abs(d) < 1e-12) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    const S t0 = (S(V(box.min[a])) - origin[a]) / dir[a];
    const S t1 = (S(V(box.max[a])) - origin[a]) / dir[a];
    const S lo = d > 0 ? t0 : t1;
    const S hi = d > 0 ? t1 : t0;
    t_enter = have_enter ? smax(t_enter, lo) : lo;
    t_exit = have_exit ? smin(t_exit, hi) : hi;
    have_enter = have_exit = true;
  }
  if (!have_enter) return std::nullopt;
  if (value_of(t_enter) < V(0)) t_enter = S(0);
  if (!(value_of(t_exit) > value_of(t_enter))) return std::nullopt;
  return BoxHit<S>{t_enter, t_exit};
}

// Trilinear density lookup: 0 outside the box, clamped to [0,1].
template <typename S>
S trilinear_sample(const DensityVolume& volume, const Vec3<S>& x) {
  const auto st = trilinear_stencil(volume.grid(), x);
  if (!st.inside) return S(0);
  using V = decltype(value_of(std::declval<S>()));
  const auto values = volume.values();
  S d(0);
  for (int c = 0; c < 8; ++c) d = d + st.weight(c) * S(V(values[st.index[c]]));
  return sclamp(d, 0.0, 1.0);
}

struct TrilinearGradients {
  double value = 0.0;
  Vec3d d_position{};  // d(density)/dx in world units
  std::array<std::int64_t, 8> index{};
  std::array<double, 8> weight{};  // d(density)/d(voxel value)
};

TrilinearGradients trilinear_gradients(const DensityVolume& volume, const Vec3d& x);

// Four-channel trilinear lookup on a color volume; 0 outside the box.
template <typename S>
Rgba<S> color_sample(const ColorVolume& volume, const Vec3<S>& x) {
  const auto st = trilinear_stencil(volume.grid(), x);
  Rgba<S> out{S(0), S(0), S(0), S(0)};
  if (!st.inside) return out;
  using V = decltype(value_of(std::declval<S>()));
  const auto values = volume.values();
  for (int c = 0; c < 8; ++c) {
    const S w = st.weight(c);
    const double* p = values.data() + 4 * st.index[c];
    for (int ch = 0; ch < 4; ++ch) out[ch] = out[ch] + w * S(V(p[ch]));
  }
  return out;
}

// Locates density d on the texel grid: lower texel, upper texel and weight
// of the upper one. `flat` is set in the clamp-to-edge regions.
struct TexelLookup {
  int lower = 0;
  int upper = 0;
  double frac = 0.0;
  bool flat = true;
};

TexelLookup locate_texel(int resolution, double d);

template <typename S>
Rgba<S> tf_sample(const TransferFunction& tf, const S& density) {
  using V = decltype(value_of(std::declval<S>()));
  const S d = sclamp(density, 0.0, 1.0);
  const int n = tf.resolution();
  const TexelLookup loc = locate_texel(n, static_cast<double>(value_of(d)));
  const Rgba<double> t0 = tf.texel(loc.lower);
  if (loc.flat) return {S(V(t0.r)), S(V(t0.g)), S(V(t0.b)), S(V(t0.a))};
  const Rgba<double> t1 = tf.texel(loc.upper);
  const S f = d * S(V(n)) - S(V(0.5)) - S(V(loc.lower));
  const S one(1);
  Rgba<S> out;
  for (int ch = 0; ch < 4; ++ch) out[ch] = (one - f) * S(V(t0[ch])) + f * S(V(t1[ch]));
  return out;
}

struct TfGradients {
  Rgba<double> value{};
  Rgba<double> d_density{};  // slope of each channel w.r.t. the density
  int lower = 0;
  int upper = 0;
  double weight_lower = 1.0;
  double weight_upper = 0.0;
};

TfGradients tf_gradients(const TransferFunction& tf, double density);

// Beer-Lambert opacity of a segment of length dt with absorption tau.
template <typename S>
S opacity_from_density(const S& tau, const S& dt) {
  using std::exp;
  const S alpha = S(1) - exp(-(dt * tau));
  if (static_cast<double>(value_of(alpha)) > 1.0 - kOpacityEpsilon) {
    using V = decltype(value_of(std::declval<S>()));
    return S(V(1.0 - kOpacityEpsilon));
  }
  return alpha;
}

struct OpacityGradients {
  double alpha = 0.0;
  double d_tau = 0.0;  // dt * exp(-dt * tau), zero when clamped
  double d_dt = 0.0;   // tau * exp(-dt * tau), zero when clamped
};

OpacityGradients opacity_gradients(double tau, double dt);

}  // namespace diffdvr
