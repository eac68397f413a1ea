#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "diffdvr/dual.hpp"
#include "diffdvr/errors.hpp"
#include "test_util.hpp"

namespace diffdvr {
namespace {

using D1 = Dual<double, 1>;

TEST(Dual, ProductRule) {
  const D1 c = D1(2.0, {1.0}) * D1(3.0, {0.0});
  EXPECT_DOUBLE_EQ(c.value, 6.0);
  EXPECT_DOUBLE_EQ(c.deriv[0], 3.0);
}

TEST(Dual, SumIsLinear) {
  const D1 x = D1::seed(1.7, 0);
  const D1 c = x + x;
  EXPECT_DOUBLE_EQ(c.value, 3.4);
  EXPECT_DOUBLE_EQ(c.deriv[0], 2.0);
}

TEST(Dual, QuotientRule) {
  const D1 c = D1(4.0, {1.0}) / D1(2.0, {0.0});
  EXPECT_DOUBLE_EQ(c.value, 2.0);
  EXPECT_DOUBLE_EQ(c.deriv[0], 0.5);
}

TEST(Dual, DivisionByZeroThrows) {
  EXPECT_THROW(D1(1.0, {1.0}) / D1(0.0), DomainError);
}

TEST(Dual, ConstantsHaveZeroDerivative) {
  const Dual<double, 3> c(5.0);
  for (double d : c.deriv) EXPECT_EQ(d, 0.0);
  const auto s = Dual<double, 3>::seed(5.0, 1);
  EXPECT_EQ(s.deriv[0], 0.0);
  EXPECT_EQ(s.deriv[1], 1.0);
  EXPECT_EQ(s.deriv[2], 0.0);
}

TEST(Dual, ElementaryFunctions) {
  const D1 e = exp(D1(0.0, {1.0}));
  EXPECT_DOUBLE_EQ(e.value, 1.0);
  EXPECT_DOUBLE_EQ(e.deriv[0], 1.0);

  const D1 s = sqrt(D1(4.0, {1.0}));
  EXPECT_DOUBLE_EQ(s.value, 2.0);
  EXPECT_DOUBLE_EQ(s.deriv[0], 0.25);

  const D1 l = log(D1(2.0, {1.0}));
  EXPECT_DOUBLE_EQ(l.value, std::log(2.0));
  EXPECT_DOUBLE_EQ(l.deriv[0], 0.5);

  const D1 p = pow(D1(3.0, {1.0}), 2.0);
  EXPECT_DOUBLE_EQ(p.value, 9.0);
  EXPECT_DOUBLE_EQ(p.deriv[0], 6.0);
}

TEST(Dual, DomainErrors) {
  EXPECT_THROW(log(D1(0.0, {1.0})), DomainError);
  EXPECT_THROW(log(D1(-1.0, {1.0})), DomainError);
  EXPECT_THROW(sqrt(D1(-1.0, {1.0})), DomainError);
  EXPECT_THROW(pow(D1(-2.0, {1.0}), 0.5), DomainError);
}

TEST(Dual, TiesSelectFirstArgument) {
  const D1 m = max(D1(1.0, {1.0}), D1(1.0, {0.0}));
  EXPECT_DOUBLE_EQ(m.value, 1.0);
  EXPECT_DOUBLE_EQ(m.deriv[0], 1.0);
  const D1 n = min(D1(1.0, {1.0}), D1(1.0, {0.0}));
  EXPECT_DOUBLE_EQ(n.deriv[0], 1.0);
  EXPECT_DOUBLE_EQ(max(D1(1.0, {1.0}), D1(2.0, {0.5})).deriv[0], 0.5);
}

TEST(Dual, ClampPropagatesInsideOnly) {
  EXPECT_DOUBLE_EQ(clamp(D1(0.5, {1.0}), 0.0, 1.0).deriv[0], 1.0);
  EXPECT_DOUBLE_EQ(clamp(D1(1.0, {1.0}), 0.0, 1.0).deriv[0], 1.0);
  EXPECT_DOUBLE_EQ(clamp(D1(1.5, {1.0}), 0.0, 1.0).deriv[0], 0.0);
  EXPECT_DOUBLE_EQ(clamp(D1(-0.5, {1.0}), 0.0, 1.0).value, 0.0);
}

// f(x, y) = exp(x*y) / sqrt(1 + x^2) + log(2 + y) * pow(x, 3) - max(x, y) * clamp(x - y, -0.5, 0.5)
template <typename S>
S composite(const S& x, const S& y) {
  using std::exp;
  using std::log;
  using std::pow;
  using std::sqrt;
  return exp(x * y) / sqrt(S(1.0) + x * x) + log(S(2.0) + y) * pow(x, 3.0) -
         smax(x, y) * sclamp(x - y, -0.5, 0.5);
}

TEST(Dual, CompositeMatchesFiniteDifferences) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  using D2 = Dual<double, 2>;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const double x = u(rng), y = u(rng);
    if (std::abs(x - y) < 1e-3 || std::abs(std::abs(x - y) - 0.5) < 1e-3) continue;  // branch ties
    const D2 r = composite(D2::seed(x, 0), D2::seed(y, 1));
    EXPECT_NEAR(r.value, composite(x, y), 1e-14);
    const double h = 1e-5;
    const double gx = testing::central_difference([&](double t) { return composite(t, y); }, x, h);
    const double gy = testing::central_difference([&](double t) { return composite(x, t); }, y, h);
    EXPECT_LT(testing::rel_error(r.deriv[0], gx, 1e-3), 1e-6) << x << " " << y;
    EXPECT_LT(testing::rel_error(r.deriv[1], gy, 1e-3), 1e-6) << x << " " << y;
    ++checked;
  }
  EXPECT_GT(checked, 150);
}

template <int P>
double time_chain(int reps) {
  using D = Dual<double, P>;
  D acc = D::seed(0.3, 0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) acc = acc * D(0.999) + sin(acc) * D(1e-3);
  const auto t1 = std::chrono::steady_clock::now();
  volatile double sink = acc.deriv[0];
  (void)sink;
  return std::chrono::duration<double>(t1 - t0).count();
}

// Cost grows with the number of partials: compare p = 1 against p = 32 so
// timing noise cannot invert the order.
TEST(Dual, CostGrowsWithParameterCount) {
  const int reps = 200000;
  double best1 = 1e9, best8 = 1e9, best32 = 1e9;
  for (int k = 0; k < 3; ++k) {
    best1 = std::min(best1, time_chain<1>(reps));
    best8 = std::min(best8, time_chain<8>(reps));
    best32 = std::min(best32, time_chain<32>(reps));
  }
  EXPECT_LE(best1, best32);
  EXPECT_LE(best8, best32 * 1.05);
}

}  // namespace
}  // namespace diffdvr
