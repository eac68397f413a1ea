#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diffdvr/field.hpp"

namespace diffdvr {

// W x H premultiplied rgba buffer, row-major with row 0 at the top.
class ImageRGBA {
 public:
  ImageRGBA() = default;
  ImageRGBA(int width, int height) : width_(width), height_(height) {
    data_.assign(static_cast<std::size_t>(4) * width * height, 0.0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t pixel_count() const { return std::int64_t(width_) * height_; }

  Rgba<double> pixel(std::int64_t p) const {
    const double* q = data_.data() + 4 * p;
    return {q[0], q[1], q[2], q[3]};
  }
  Rgba<double> pixel(int x, int y) const { return pixel(std::int64_t(y) * width_ + x); }
  void set_pixel(std::int64_t p, const Rgba<double>& c) {
    double* q = data_.data() + 4 * p;
    q[0] = c.r;
    q[1] = c.g;
    q[2] = c.b;
    q[3] = c.a;
  }
  void set_pixel(int x, int y, const Rgba<double>& c) { set_pixel(std::int64_t(y) * width_ + x, c); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const ImageRGBA& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

}  // namespace diffdvr
