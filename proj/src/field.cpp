#include "diffdvr/field.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "diffdvr/errors.hpp"

namespace diffdvr {

void GridGeometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw InvalidParameter("grid dimensions must be >= 1");
    const double ext = box.max[a] - box.min[a];
    if (!(ext > 0.0) || !std::isfinite(ext)) {
      throw InvalidParameter("grid box must have positive extent on every axis");
    }
  }
}

DensityVolume::DensityVolume(std::array<int, 3> dims, Box box, double fill)
    : grid_{dims, box} {
  grid_.validate();
  values_.assign(static_cast<std::size_t>(grid_.count()), fill);
}

DensityVolume::DensityVolume(std::array<int, 3> dims, Box box, std::vector<double> values)
    : grid_{dims, box}, values_(std::move(values)) {
  grid_.validate();
  if (static_cast<std::int64_t>(values_.size()) != grid_.count()) {
    throw InvalidInput("density value count does not match dimensions");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw InvalidInput("density values must be finite");
  }
}

ColorVolume::ColorVolume(std::array<int, 3> dims, Box box, Rgba<double> fill)
    : grid_{dims, box} {
  grid_.validate();
  values_.resize(static_cast<std::size_t>(4 * grid_.count()));
  for (std::int64_t v = 0; v < grid_.count(); ++v) set(v, fill);
}

TransferFunction::TransferFunction(std::vector<Rgba<double>> texels) {
  if (texels.empty()) throw InvalidParameter("transfer function needs at least one texel");
  data_.reserve(4 * texels.size());
  for (const auto& t : texels) {
    for (int ch = 0; ch < 4; ++ch) {
      if (!std::isfinite(t[ch])) throw InvalidInput("transfer function entries must be finite");
      data_.push_back(t[ch]);
    }
  }
}

void TransferFunction::set_texel(int r, const Rgba<double>& t) {
  double* p = data_.data() + 4 * r;
  for (int ch = 0; ch < 4; ++ch) p[ch] = t[ch];
}

void SphericalCamera::validate() const {
  if (!(std::abs(latitude) < 90.0 - kPoleEpsilonDeg)) {
    std::ostringstream msg;
    msg << "camera latitude " << latitude << " violates pole exclusion";
    throw InvalidParameter(msg.str());
  }
  if (!std::isfinite(longitude)) throw InvalidParameter("camera longitude must be finite");
  if (!(radius > 0.0)) throw InvalidParameter("camera radius must be positive");
  if (!(fov_y > 0.0 && fov_y < 180.0)) throw InvalidParameter("camera fov must be in (0, 180)");
  if (width < 1 || height < 1) throw InvalidParameter("image size must be positive");
}

CameraRay<double> camera_from_sphere(const SphericalCamera& cam, PixelCoord pixel) {
  cam.validate();
  if (pixel.x < 0 || pixel.y < 0 || pixel.x >= cam.width || pixel.y >= cam.height) {
    throw InvalidParameter("pixel outside the image");
  }
  return camera_ray<double>(cam, cam.longitude, cam.latitude, pixel);
}

CameraJacobian camera_gradients(const SphericalCamera& cam, PixelCoord pixel) {
  cam.validate();
  using D = Dual<double, 2>;
  const auto ray = camera_ray<D>(cam, D::seed(cam.longitude, 0), D::seed(cam.latitude, 1), pixel);
  CameraJacobian jac;
  for (int p = 0; p < 2; ++p) {
    for (int a = 0; a < 3; ++a) {
      jac.origin[p][a] = ray.origin[a].deriv[p];
      jac.direction[p][a] = ray.direction[a].deriv[p];
    }
  }
  return jac;
}

TrilinearGradients trilinear_gradients(const DensityVolume& volume, const Vec3d& x) {
  TrilinearGradients out;
  const auto st = trilinear_stencil(volume.grid(), x);
  if (!st.inside) return out;
  const auto values = volume.values();
  double raw = 0.0;
  Vec3d dfrac{};  // d(density)/d(frac) per axis
  for (int c = 0; c < 8; ++c) {
    const double v = values[st.index[c]];
    raw += st.weight(c) * v;
    for (int a = 0; a < 3; ++a) {
      double w = 1.0;
      for (int b = 0; b < 3; ++b) {
        const bool hi = (c >> b) & 1;
        if (b == a) {
          w *= hi ? 1.0 : -1.0;
        } else {
          w *= hi ? st.frac[b] : 1.0 - st.frac[b];
        }
      }
      dfrac[a] += w * v;
    }
  }
  out.index = st.index;
  if (raw < 0.0 || raw > 1.0) {
    out.value = raw < 0.0 ? 0.0 : 1.0;
    return out;
  }
  out.value = raw;
  const Vec3d ext = volume.box().extent();
  for (int a = 0; a < 3; ++a) {
    out.d_position[a] = st.edge_clamped[a] ? 0.0 : dfrac[a] * volume.dims()[a] / ext[a];
  }
  for (int c = 0; c < 8; ++c) out.weight[c] = st.weight(c);
  return out;
}

TexelLookup locate_texel(int resolution, double d) {
  TexelLookup loc;
  const double s = d * resolution - 0.5;
  if (resolution == 1 || s <= 0.0) {
    return loc;
  }
  if (s >= resolution - 1) {
    loc.lower = loc.upper = resolution - 1;
    return loc;
  }
  int i0 = static_cast<int>(std::floor(s));
  if (i0 > resolution - 2) i0 = resolution - 2;
  loc.lower = i0;
  loc.upper = i0 + 1;
  loc.frac = s - i0;
  loc.flat = false;
  return loc;
}

TfGradients tf_gradients(const TransferFunction& tf, double density) {
  TfGradients out;
  const bool clamped = density < 0.0 || density > 1.0;
  const double d = std::clamp(density, 0.0, 1.0);
  const int n = tf.resolution();
  const TexelLookup loc = locate_texel(n, d);
  out.lower = loc.lower;
  out.upper = loc.upper;
  const Rgba<double> t0 = tf.texel(loc.lower);
  if (loc.flat) {
    out.value = t0;
    out.weight_lower = 1.0;
    out.weight_upper = 0.0;
    return out;
  }
  const Rgba<double> t1 = tf.texel(loc.upper);
  out.weight_lower = 1.0 - loc.frac;
  out.weight_upper = loc.frac;
  for (int ch = 0; ch < 4; ++ch) {
    out.value[ch] = out.weight_lower * t0[ch] + out.weight_upper * t1[ch];
    out.d_density[ch] = clamped ? 0.0 : (t1[ch] - t0[ch]) * n;
  }
  return out;
}

OpacityGradients opacity_gradients(double tau, double dt) {
  OpacityGradients out;
  const double transmit = std::exp(-dt * tau);
  const double alpha = 1.0 - transmit;
  if (alpha > 1.0 - kOpacityEpsilon) {
    out.alpha = 1.0 - kOpacityEpsilon;
    return out;
  }
  out.alpha = alpha;
  out.d_tau = dt * transmit;
  out.d_dt = tau * transmit;
  return out;
}

}  // namespace diffdvr
