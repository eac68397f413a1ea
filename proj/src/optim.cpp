#include "diffdvr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffdvr/errors.hpp"

namespace diffdvr {

namespace {

void check_finite(std::span<const double> grads, const char* who) {
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw NumericalError(std::string(who) + ": non-finite gradient at index " + std::to_string(i));
}

}  // namespace

void gd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) throw InvalidInput("gd_step: size mismatch");
  if (!(lr > 0)) throw InvalidParameter("gd_step: learning rate must be positive");
  check_finite(grads, "gd_step");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void adam_step(OptimState& s, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw InvalidInput("adam_step: size mismatch");
  check_finite(grads, "adam_step");
  if (s.m.size() != params.size()) {
    if (s.step != 0) throw InvalidInput("adam_step: parameter count changed mid-run");
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1 - s.beta2) * grads[i] * grads[i];
    params[i] -= s.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.eps);
  }
}

void project_tf(std::span<double> params, double tau_max) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] = (i % 4 == 3) ? std::clamp(params[i], 0.0, tau_max) : std::max(params[i], 0.0);
}

void project_volume(std::span<double> params) {
  for (double& p : params) p = std::clamp(p, 0.0, 1.0);
}

namespace {

struct AxisTap {
  int lo;
  int hi;
  double frac;
};

// Coarse taps for fine index i on an axis with n coarse cells.
AxisTap fine_tap(int i, int n) {
  if (n == 1) return {0, 0, 0.0};
  const double g = (i + 0.5) / 2.0 - 0.5;
  const int lo = std::clamp(static_cast<int>(std::floor(g)), 0, n - 2);
  return {lo, lo + 1, g - lo};
}

}  // namespace

std::vector<double> upsample_grid(std::span<const double> values, std::array<int, 3> dims,
                                  int channels) {
  const int nx = dims[0], ny = dims[1], nz = dims[2];
  if (static_cast<std::int64_t>(values.size()) != std::int64_t(nx) * ny * nz * channels)
    throw InvalidInput("upsample: value count does not match dims");
  const int fx = 2 * nx, fy = 2 * ny, fz = 2 * nz;
  std::vector<double> out(static_cast<std::size_t>(fx) * fy * fz * channels);
  auto at = [&](int i, int j, int k, int c) {
    return values[((static_cast<std::size_t>(k) * ny + j) * nx + i) * channels + c];
  };
  for (int k = 0; k < fz; ++k) {
    const AxisTap tz = fine_tap(k, nz);
    for (int j = 0; j < fy; ++j) {
      const AxisTap ty = fine_tap(j, ny);
      for (int i = 0; i < fx; ++i) {
        const AxisTap tx = fine_tap(i, nx);
        for (int c = 0; c < channels; ++c) {
          auto lerp_x = [&](int jj, int kk) {
            return (1 - tx.frac) * at(tx.lo, jj, kk, c) + tx.frac * at(tx.hi, jj, kk, c);
          };
          auto lerp_y = [&](int kk) {
            return (1 - ty.frac) * lerp_x(ty.lo, kk) + ty.frac * lerp_x(ty.hi, kk);
          };
          out[((static_cast<std::size_t>(k) * fy + j) * fx + i) * channels + c] =
              (1 - tz.frac) * lerp_y(tz.lo) + tz.frac * lerp_y(tz.hi);
        }
      }
    }
  }
  return out;
}

std::vector<double> downsample_grid(std::span<const double> values, std::array<int, 3> dims,
                                    int channels) {
  for (int d : dims)
    if (d % 2 != 0) throw InvalidInput("downsample: dims must be even");
  const int cx = dims[0] / 2, cy = dims[1] / 2, cz = dims[2] / 2;
  std::vector<double> out(static_cast<std::size_t>(cx) * cy * cz * channels, 0.0);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i)
        for (int c = 0; c < channels; ++c)
          out[((static_cast<std::size_t>(k / 2) * cy + j / 2) * cx + i / 2) * channels + c] +=
              0.125 * values[((static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i) * channels + c];
  return out;
}

DensityVolume upsample_volume(const DensityVolume& v) {
  const auto& d = v.dims();
  return DensityVolume({2 * d[0], 2 * d[1], 2 * d[2]}, v.box(), upsample_grid(v.values(), d, 1));
}

ColorVolume upsample_volume(const ColorVolume& v) {
  const auto& d = v.dims();
  ColorVolume out({2 * d[0], 2 * d[1], 2 * d[2]}, v.box());
  const auto fine = upsample_grid(v.values(), d, 4);
  std::copy(fine.begin(), fine.end(), out.values().begin());
  return out;
}

DensityVolume downsample_volume(const DensityVolume& v) {
  const auto& d = v.dims();
  return DensityVolume({d[0] / 2, d[1] / 2, d[2] / 2}, v.box(), downsample_grid(v.values(), d, 1));
}

}  // namespace diffdvr
