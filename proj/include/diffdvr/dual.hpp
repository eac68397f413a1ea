#pragma once

// Forward-mode automatic differentiation.
//
// Dual<T, P> carries a value together with its partial derivatives with
// respect to P seeded parameters. All renderer primitives are templates over
// the scalar type, so instantiating them with a Dual propagates derivatives
// through the whole computation without further changes.

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>

#include "diffdvr/errors.hpp"

namespace diffdvr {

template <typename T, int P>
struct Dual {
  static_assert(P >= 1, "Dual needs at least one partial derivative");
  using value_type = T;
  static constexpr int kParams = P;

  T value{};
  std::array<T, P> deriv{};

  constexpr Dual() = default;
  // Constants carry a zero derivative part.
  constexpr Dual(T v) : value(v) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(T v, const std::array<T, P>& d) : value(v), deriv(d) {}

  // A parameter seeded with derivative one in slot `index`.
  static constexpr Dual seed(T v, int index) {
    Dual r(v);
    r.deriv[static_cast<std::size_t>(index)] = T(1);
    return r;
  }

  Dual& operator+=(const Dual& b) { return *this = *this + b; }
  Dual& operator-=(const Dual& b) { return *this = *this - b; }
  Dual& operator*=(const Dual& b) { return *this = *this * b; }
  Dual& operator/=(const Dual& b) { return *this = *this / b; }
};

template <typename>
struct is_dual : std::false_type {};
template <typename T, int P>
struct is_dual<Dual<T, P>> : std::true_type {};
template <typename S>
inline constexpr bool is_dual_v = is_dual<S>::value;

// Value part of a scalar or a Dual; used for branching and indexing.
template <typename S>
constexpr auto value_of(const S& x) {
  if constexpr (is_dual_v<S>) {
    return x.value;
  } else {
    return x;
  }
}

template <typename T, int P>
constexpr Dual<T, P> operator+(const Dual<T, P>& a, const Dual<T, P>& b) {
  Dual<T, P> c(a.value + b.value);
  for (int i = 0; i < P; ++i) c.deriv[i] = a.deriv[i] + b.deriv[i];
  return c;
}

template <typename T, int P>
constexpr Dual<T, P> operator-(const Dual<T, P>& a, const Dual<T, P>& b) {
  Dual<T, P> c(a.value - b.value);
  for (int i = 0; i < P; ++i) c.deriv[i] = a.deriv[i] - b.deriv[i];
  return c;
}

template <typename T, int P>
constexpr Dual<T, P> operator-(const Dual<T, P>& a) {
  Dual<T, P> c(-a.value);
  for (int i = 0; i < P; ++i) c.deriv[i] = -a.deriv[i];
  return c;
}

template <typename T, int P>
constexpr Dual<T, P> operator*(const Dual<T, P>& a, const Dual<T, P>& b) {
  Dual<T, P> c(a.value * b.value);
  for (int i = 0; i < P; ++i) {
    c.deriv[i] = a.value * b.deriv[i] + b.value * a.deriv[i];
  }
  return c;
}

template <typename T, int P>
Dual<T, P> operator/(const Dual<T, P>& a, const Dual<T, P>& b) {
  if (b.value == T(0)) throw DomainError("Dual division by zero");
  const T inv = T(1) / b.value;
  Dual<T, P> c(a.value * inv);
  for (int i = 0; i < P; ++i) {
    c.deriv[i] = (a.deriv[i] - c.value * b.deriv[i]) * inv;
  }
  return c;
}

// Mixed scalar overloads. Scalars are treated as constants.
#define DIFFDVR_DUAL_MIXED_OP(op)                                            \
  template <typename T, int P>                                               \
  constexpr auto operator op(const Dual<T, P>& a, T b) {                     \
    return a op Dual<T, P>(b);                                               \
  }                                                                          \
  template <typename T, int P>                                               \
  constexpr auto operator op(T a, const Dual<T, P>& b) {                     \
    return Dual<T, P>(a) op b;                                               \
  }
DIFFDVR_DUAL_MIXED_OP(+)
DIFFDVR_DUAL_MIXED_OP(-)
DIFFDVR_DUAL_MIXED_OP(*)
DIFFDVR_DUAL_MIXED_OP(/)
#undef DIFFDVR_DUAL_MIXED_OP

template <typename T, int P>
constexpr bool operator<(const Dual<T, P>& a, const Dual<T, P>& b) { return a.value < b.value; }
template <typename T, int P>
constexpr bool operator>(const Dual<T, P>& a, const Dual<T, P>& b) { return a.value > b.value; }
template <typename T, int P>
constexpr bool operator<=(const Dual<T, P>& a, const Dual<T, P>& b) { return a.value <= b.value; }
template <typename T, int P>
constexpr bool operator>=(const Dual<T, P>& a, const Dual<T, P>& b) { return a.value >= b.value; }

// Applies the chain rule for a unary function with value fx and slope dfx.
template <typename T, int P>
constexpr Dual<T, P> chain(const Dual<T, P>& a, T fx, T dfx) {
  Dual<T, P> c(fx);
  for (int i = 0; i < P; ++i) c.deriv[i] = dfx * a.deriv[i];
  return c;
}

template <typename T, int P>
Dual<T, P> exp(const Dual<T, P>& a) {
  const T e = std::exp(a.value);
  return chain(a, e, e);
}

template <typename T, int P>
Dual<T, P> log(const Dual<T, P>& a) {
  if (!(a.value > T(0))) throw DomainError("log of non-positive Dual");
  return chain(a, std::log(a.value), T(1) / a.value);
}

template <typename T, int P>
Dual<T, P> log2(const Dual<T, P>& a) {
  if (!(a.value > T(0))) throw DomainError("log2 of non-positive Dual");
  return chain(a, std::log2(a.value), T(1) / (a.value * std::log(T(2))));
}

template <typename T, int P>
Dual<T, P> sqrt(const Dual<T, P>& a) {
  if (a.value < T(0)) throw DomainError("sqrt of negative Dual");
  const T s = std::sqrt(a.value);
  if (s == T(0)) {
    // Derivative is unbounded at zero; only a constant zero is representable.
    for (int i = 0; i < P; ++i) {
      if (a.deriv[i] != T(0)) throw DomainError("sqrt derivative at zero");
    }
    return Dual<T, P>(T(0));
  }
  return chain(a, s, T(0.5) / s);
}

template <typename T, int P>
Dual<T, P> pow(const Dual<T, P>& a, T exponent) {
  if (a.value < T(0) && std::floor(exponent) != exponent) {
    throw DomainError("pow of negative Dual with fractional exponent");
  }
  const T fx = std::pow(a.value, exponent);
  const T dfx = exponent == T(0) ? T(0) : exponent * std::pow(a.value, exponent - T(1));
  return chain(a, fx, dfx);
}

template <typename T, int P>
Dual<T, P> sin(const Dual<T, P>& a) {
  return chain(a, std::sin(a.value), std::cos(a.value));
}

template <typename T, int P>
Dual<T, P> cos(const Dual<T, P>& a) {
  return chain(a, std::cos(a.value), -std::sin(a.value));
}

template <typename T, int P>
Dual<T, P> abs(const Dual<T, P>& a) {
  return a.value < T(0) ? -a : a;
}

// Ties select the first argument, including its derivative.
template <typename T, int P>
constexpr Dual<T, P> min(const Dual<T, P>& a, const Dual<T, P>& b) {
  return b.value < a.value ? b : a;
}

template <typename T, int P>
constexpr Dual<T, P> max(const Dual<T, P>& a, const Dual<T, P>& b) {
  return b.value > a.value ? b : a;
}

// Inside [lo, hi] (inclusive) the derivative of x is kept; outside, the
// result is the constant bound.
template <typename T, int P>
constexpr Dual<T, P> clamp(const Dual<T, P>& x, T lo, T hi) {
  if (x.value < lo) return Dual<T, P>(lo);
  if (x.value > hi) return Dual<T, P>(hi);
  return x;
}

}  // namespace diffdvr
