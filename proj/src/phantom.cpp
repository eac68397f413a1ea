#include "diffdvr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "diffdvr/errors.hpp"

namespace diffdvr {

PhantomKind phantom_from_string(const std::string& name) {
  if (name == "sphere") return PhantomKind::Sphere;
  if (name == "shells") return PhantomKind::Shells;
  if (name == "blobs") return PhantomKind::Blobs;
  if (name == "asymmetric") return PhantomKind::Asymmetric;
  throw InvalidParameter("unknown phantom kind '" + name + "'");
}

const char* to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::Sphere: return "sphere";
    case PhantomKind::Shells: return "shells";
    case PhantomKind::Blobs: return "blobs";
    case PhantomKind::Asymmetric: return "asymmetric";
  }
  return "?";
}

namespace {

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

struct Blob {
  Vec3d center;
  double sigma;
  double amplitude;
};

std::vector<Blob> make_blobs(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-0.25, 0.25), sig(0.06, 0.14), amp(0.4, 1.0);
  std::vector<Blob> blobs(6);
  for (auto& b : blobs) {
    b.center = {pos(rng), pos(rng), pos(rng)};
    b.sigma = sig(rng);
    b.amplitude = amp(rng);
  }
  return blobs;
}

double blob_field(const std::vector<Blob>& blobs, const Vec3d& x) {
  double d = 0;
  for (const auto& b : blobs) {
    const Vec3d r = x - b.center;
    d += b.amplitude * std::exp(-dot(r, r) / (2 * b.sigma * b.sigma));
  }
  return d;
}

// Rod from (0.05, 0.1, 0.05) to (0.45, 0.1, 0.05), radius 0.04.
double rod_field(const Vec3d& x) {
  const double along = std::clamp(x[0], 0.05, 0.45);
  const double dy = x[1] - 0.1, dz = x[2] - 0.05, dx = x[0] - along;
  const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
  return 1.0 - smoothstep(0.03, 0.05, dist);
}

}  // namespace

DensityVolume make_phantom(PhantomKind kind, std::array<int, 3> dims, std::uint64_t seed) {
  for (int d : dims)
    if (d < 4) throw InvalidParameter("phantom dimensions must be at least 4");
  DensityVolume vol(dims);
  const auto& grid = vol.grid();
  const auto blobs = make_blobs(seed);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3d x = grid.voxel_center(i, j, k);
        const double r = length(x - grid.box.center());
        double d = 0;
        switch (kind) {
          case PhantomKind::Sphere:
            d = 1.0 - smoothstep(0.25, 0.4, r);
            break;
          case PhantomKind::Shells:
            d = (0.5 + 0.4 * std::sin(2 * kPi * r / 0.15)) * (1.0 - smoothstep(0.4, 0.47, r));
            break;
          case PhantomKind::Blobs:
            d = blob_field(blobs, x);
            break;
          case PhantomKind::Asymmetric:
            d = std::max(blob_field(blobs, x), rod_field(x));
            break;
        }
        vol.at(i, j, k) = std::clamp(d, 0.0, 1.0);
      }
  return vol;
}

}  // namespace diffdvr
