#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "diffdvr/field.hpp"

namespace diffdvr {

enum class PhantomKind { Sphere, Shells, Blobs, Asymmetric };

// Throws InvalidParameter for unknown names.
PhantomKind phantom_from_string(const std::string& name);
const char* to_string(PhantomKind kind);

// Synthetic test volumes in the unit box:
//  sphere     - centered ball of density 1 with a smoothstep falloff,
//  shells     - concentric bands 0.5 + 0.4 sin(2 pi r / 0.15), fading out at r = 0.4..0.47,
//  blobs      - seeded sum of Gaussians,
//  asymmetric - blobs plus a thin rod sticking out towards +x.
// Throws InvalidParameter if any dimension is below 4.
DensityVolume make_phantom(PhantomKind kind, std::array<int, 3> dims, std::uint64_t seed = 0);

}  // namespace diffdvr
