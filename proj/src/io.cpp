#include "diffdvr/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "diffdvr/errors.hpp"

namespace diffdvr {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "raw files are little-endian");

namespace {

std::vector<float> read_floats(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(float) != 0) throw CorruptFile(path.string() + ": length is not a multiple of 4");
  in.seekg(0);
  std::vector<float> data(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw CorruptFile(path.string() + ": short read");
  return data;
}

void write_floats(const fs::path& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw Error("cannot write " + path.string());
}

Vec3d vec_from_json(const json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw CorruptFile(std::string("sidecar field '") + key + "' must have 3 entries");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

}  // namespace

fs::path sidecar_path(const fs::path& raw) {
  fs::path p = raw;
  p.replace_extension(".json");
  return p;
}

DensityVolume load_volume(const fs::path& raw) {
  const fs::path meta_path = sidecar_path(raw);
  if (!fs::exists(meta_path)) throw MissingMetadata("missing sidecar " + meta_path.string());
  json meta;
  try {
    std::ifstream in(meta_path);
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptFile(meta_path.string() + ": " + e.what());
  }
  std::array<int, 3> dims{};
  Box box;
  double lo = 0.0, hi = 1.0;
  bool normalize = false;
  try {
    const auto& d = meta.at("dims");
    if (!d.is_array() || d.size() != 3) throw CorruptFile("sidecar 'dims' must have 3 entries");
    for (int a = 0; a < 3; ++a) dims[a] = d[a].get<int>();
    if (meta.contains("box_min")) box.min = vec_from_json(meta, "box_min");
    if (meta.contains("box_max")) box.max = vec_from_json(meta, "box_max");
    if (meta.contains("value_range")) {
      const auto& r = meta.at("value_range");
      if (!r.is_array() || r.size() != 2) throw CorruptFile("sidecar 'value_range' must have 2 entries");
      lo = r[0].get<double>();
      hi = r[1].get<double>();
      if (!(hi > lo)) throw CorruptFile("sidecar 'value_range' must be increasing");
      normalize = true;
    }
  } catch (const json::exception& e) {
    throw CorruptFile(meta_path.string() + ": " + e.what());
  }
  for (int d : dims)
    if (d < 1) throw CorruptFile(meta_path.string() + ": dims must be positive");

  const auto data = read_floats(raw);
  const std::size_t expected = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (data.size() != expected)
    throw CorruptFile(raw.string() + ": expected " + std::to_string(expected * 4) + " bytes, found " +
                      std::to_string(data.size() * 4));
  std::vector<double> values(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    values[i] = normalize ? (data[i] - lo) / (hi - lo) : static_cast<double>(data[i]);
    if (!std::isfinite(values[i])) throw CorruptFile(raw.string() + ": non-finite value");
  }
  return DensityVolume(dims, box, std::move(values));
}

void save_volume(const DensityVolume& volume, const fs::path& raw) {
  std::vector<float> data(volume.values().begin(), volume.values().end());
  write_floats(raw, data);
  const Box& b = volume.box();
  json meta = {{"dims", volume.dims()},
               {"box_min", {b.min[0], b.min[1], b.min[2]}},
               {"box_max", {b.max[0], b.max[1], b.max[2]}}};
  std::ofstream out(sidecar_path(raw));
  out << meta.dump(2) << "\n";
  if (!out) throw Error("cannot write " + sidecar_path(raw).string());
}

void save_image(const ImageRGBA& image, const fs::path& path, ImageFormat format) {
  if (format == ImageFormat::RawRgba) {
    write_floats(path, std::vector<float>(image.values().begin(), image.values().end()));
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(3 * image.pixel_count()));
  for (std::int64_t p = 0; p < image.pixel_count(); ++p) {
    const auto c = image.pixel(p);
    for (double v : {c.r, c.g, c.b}) {
      const double over_white = v + (1.0 - c.a);
      bytes.push_back(static_cast<unsigned char>(std::lround(255.0 * std::clamp(over_white, 0.0, 1.0))));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path.string());
}

ImageRGBA load_raw_rgba(const fs::path& path, int width, int height) {
  const auto data = read_floats(path);
  if (data.size() != static_cast<std::size_t>(4) * width * height)
    throw CorruptFile(path.string() + ": size does not match " + std::to_string(width) + "x" +
                      std::to_string(height));
  ImageRGBA img(width, height);
  std::copy(data.begin(), data.end(), img.values().begin());
  return img;
}

}  // namespace diffdvr
