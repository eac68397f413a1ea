#pragma once

#include <cmath>

#include "diffdvr/dual.hpp"

namespace diffdvr {

// Scalar helpers that work for plain floating point and for Dual. Ties pick
// the first argument.
template <typename S>
constexpr S smin(const S& a, const S& b) {
  return b < a ? b : a;
}

template <typename S>
constexpr S smax(const S& a, const S& b) {
  return b > a ? b : a;
}

template <typename S>
constexpr S sclamp(const S& x, double lo, double hi) {
  if (value_of(x) < lo) return S(static_cast<decltype(value_of(x))>(lo));
  if (value_of(x) > hi) return S(static_cast<decltype(value_of(x))>(hi));
  return x;
}

template <typename S>
struct Vec3 {
  S x{}, y{}, z{};

  constexpr Vec3() = default;
  constexpr Vec3(S x_, S y_, S z_) : x(x_), y(y_), z(z_) {}

  // Lifts a vector of plain values into another scalar type.
  template <typename U>
  static constexpr Vec3 from(const Vec3<U>& v) {
    return {S(v.x), S(v.y), S(v.z)};
  }

  constexpr S& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr const S& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

template <typename S>
constexpr Vec3<S> operator+(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <typename S>
constexpr Vec3<S> operator-(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <typename S>
constexpr Vec3<S> operator-(const Vec3<S>& a) {
  return {-a.x, -a.y, -a.z};
}
template <typename S>
constexpr Vec3<S> operator*(const Vec3<S>& a, const S& s) {
  return {a.x * s, a.y * s, a.z * s};
}
template <typename S>
constexpr Vec3<S> operator*(const S& s, const Vec3<S>& a) {
  return {a.x * s, a.y * s, a.z * s};
}
template <typename S>
constexpr S dot(const Vec3<S>& a, const Vec3<S>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <typename S>
constexpr Vec3<S> cross(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <typename S>
S length(const Vec3<S>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}
template <typename S>
Vec3<S> normalize(const Vec3<S>& a) {
  const S inv = S(1) / length(a);
  return a * inv;
}

using Vec3d = Vec3<double>;

}  // namespace diffdvr
