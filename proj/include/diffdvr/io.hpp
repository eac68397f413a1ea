#pragma once

// Volume and image files.
//
// A volume is stored as `<name>.raw`, little-endian float32 in x-fastest
// order, next to a `<name>.json` sidecar:
//   {"dims": [X, Y, Z], "box_min": [..], "box_max": [..], "value_range": [lo, hi]}
// `value_range` is optional; when present values are mapped (v - lo) / (hi - lo).

#include <filesystem>
#include <string>

#include "diffdvr/field.hpp"
#include "diffdvr/image.hpp"

namespace diffdvr {

std::filesystem::path sidecar_path(const std::filesystem::path& raw);

// Throws MissingMetadata without a sidecar and CorruptFile when the data
// length or sidecar contents are wrong.
DensityVolume load_volume(const std::filesystem::path& raw);
void save_volume(const DensityVolume& volume, const std::filesystem::path& raw);

enum class ImageFormat { Ppm, RawRgba };

// ppm: binary P6, rgb composited over white, round(255 * clamp(c, 0, 1)).
// raw-rgba: premultiplied float32, W * H * 4, no header.
void save_image(const ImageRGBA& image, const std::filesystem::path& path, ImageFormat format);
ImageRGBA load_raw_rgba(const std::filesystem::path& path, int width, int height);

}  // namespace diffdvr
