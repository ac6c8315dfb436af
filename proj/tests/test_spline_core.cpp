#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kmono/mixture.hpp"
#include "kmono/piecewise_poly.hpp"
#include "kmono/random.hpp"

using namespace kmono;

namespace {

MixingMeasure random_measure(Rng& rng, int m, bool unit = false) {
  std::uniform_real_distribution<double> u(0.1, 5.0), w(0.05, 1.0);
  std::vector<double> t(m), wt(m);
  for (auto& v : t) v = u(rng);
  std::sort(t.begin(), t.end());
  double s = 0;
  for (auto& v : wt) s += (v = w(rng));
  if (unit)
    for (auto& v : wt) v /= s;
  return MixingMeasure(t, wt, MassConstraint::free);
}

PiecewisePoly random_pp(Rng& rng, int pieces, int degree) {
  std::uniform_real_distribution<double> u(0.05, 1.0), c(-2.0, 2.0);
  std::vector<double> br{-0.3};
  for (int i = 0; i < pieces; ++i) br.push_back(br.back() + u(rng));
  std::vector<double> co(static_cast<std::size_t>(pieces * (degree + 1)));
  for (auto& v : co) v = c(rng);
  return PiecewisePoly(br, degree, co, -1);
}

}  // namespace

TEST(BetaKernel, Examples) {
  EXPECT_DOUBLE_EQ(beta_kernel(1, 2.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(beta_kernel(3, 1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(beta_kernel(2, 2.0, 1.0), 0.5);
  EXPECT_THROW(beta_kernel(2, 0.0, 0.1), std::domain_error);
  EXPECT_THROW(beta_kernel(2, -1.0, 0.1), std::domain_error);
  EXPECT_THROW(beta_kernel(9, 1.0, 0.1), std::domain_error);
}

TEST(BetaKernel, IntegratesToOne) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.01, 50.0);
  for (int k = 1; k <= kMaxK; ++k) {
    for (int rep = 0; rep < 20; ++rep) {
      const double y = u(rng);
      MixingMeasure mm({y}, {1.0});
      auto g = mixture_to_piecewise(mm, k);
      auto G = g.antiderivative(1, 0.0);
      EXPECT_NEAR(G.eval(y), 1.0, 1e-10) << "k=" << k << " y=" << y;
    }
  }
}

TEST(MixtureDensity, Examples) {
  MixingMeasure two({1.0, 2.0}, {0.5, 0.5}, MassConstraint::unit);
  EXPECT_DOUBLE_EQ(mixture_density(two, 1, 0.5), 0.75);
  MixingMeasure one({1.0}, {1.0}, MassConstraint::unit);
  EXPECT_DOUBLE_EQ(mixture_density(one, 2, 0.0), 2.0);
  MixingMeasure empty;
  for (int k = 1; k <= 5; ++k) EXPECT_EQ(mixture_density(empty, k, 0.7), 0.0);
}

TEST(MixingMeasure, Invariants) {
  EXPECT_THROW(MixingMeasure({0.0}, {1.0}), std::domain_error);
  EXPECT_THROW(MixingMeasure({1.0}, {-0.1}), std::domain_error);
  EXPECT_THROW(MixingMeasure({2.0, 1.0}, {0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(MixingMeasure({1.0}, {0.9}, MassConstraint::unit), std::domain_error);
  EXPECT_NO_THROW(MixingMeasure({1.0, 2.0}, {0.25, 0.75}, MassConstraint::unit));
}

TEST(MixtureToPiecewise, SingleAtomHat) {
  const double t1 = 1.7;
  auto g = mixture_to_piecewise(MixingMeasure({t1}, {1.0}), 2, 3.0);
  ASSERT_EQ(g.num_pieces(), 2u);
  EXPECT_NEAR(g.eval(0.3, 1), -2.0 / (t1 * t1), 1e-14);
  EXPECT_NEAR(g.eval(2.0, 1), 0.0, 1e-14);
  EXPECT_NEAR(g.eval(2.0), 0.0, 1e-14);
  EXPECT_NEAR(g.eval(0.0), 2.0 / t1, 1e-14);
}

TEST(MixtureToPiecewise, StepForK1) {
  MixingMeasure mm({1.0, 2.0, 4.0}, {0.2, 0.3, 0.5});
  auto g = mixture_to_piecewise(mm, 1);
  EXPECT_EQ(g.degree(), 0);
  EXPECT_NEAR(g.eval(0.5), 0.2 + 0.15 + 0.125, 1e-15);
  EXPECT_NEAR(g.eval(1.5), 0.15 + 0.125, 1e-15);
  EXPECT_NEAR(g.eval(3.0), 0.125, 1e-15);
}

TEST(MixtureToPiecewise, MatchesDirectSummation) {
  Rng rng(5);
  for (int k = 1; k <= kMaxK; ++k) {
    auto mm = random_measure(rng, 5);
    auto g = mixture_to_piecewise(mm, k);
    std::uniform_real_distribution<double> x(0.0, mm.atoms().back());
    for (int i = 0; i < 100; ++i) {
      const double xi = x(rng);
      const double direct = mixture_density(mm, k, xi);
      EXPECT_NEAR(g.eval(xi), direct, 1e-12 * std::max(1.0, std::abs(direct))) << "k=" << k;
    }
    EXPECT_LE(g.continuity_defect(k - 2), 1e-9);
  }
}

TEST(MixtureToPiecewise, KMonotoneCertificate) {
  Rng rng(9);
  for (int k = 2; k <= 6; ++k) {
    auto mm = random_measure(rng, 6);
    auto g = mixture_to_piecewise(mm, k);
    for (int i = 0; i <= 2000; ++i) {
      const double x = mm.atoms().back() * i / 2000.0;
      for (int j = 0; j <= k - 2; ++j) {
        const double sgn = (j % 2 == 0) ? 1.0 : -1.0;
        EXPECT_GE(sgn * g.eval(x, j), -1e-10) << "k=" << k << " j=" << j;
      }
    }
    // (-1)^{k-1} g^{(k-1)} is a nonincreasing step function.
    const double sgn = (k % 2 == 1) ? 1.0 : -1.0;
    double prev = INFINITY;
    for (std::size_t i = 0; i < g.num_pieces(); ++i) {
      const double v = sgn * g.piece(i)[static_cast<std::size_t>(k - 1)] * detail::factorial(k - 1);
      EXPECT_LE(v, prev + 1e-10);
      prev = v;
    }
  }
}

TEST(PiecewisePoly, EvalExamples) {
  auto c = PiecewisePoly::polynomial(0.0, 1.0, {3.0});
  EXPECT_EQ(c.eval(0.5, 1), 0.0);
  auto cube = PiecewisePoly::polynomial(0.0, 2.0, {0.0, 0.0, 0.0, 1.0});
  EXPECT_DOUBLE_EQ(cube.eval(1.0, 2), 6.0);
  EXPECT_THROW(cube.eval(2.5), std::domain_error);
  EXPECT_THROW(cube.eval(-0.1), std::domain_error);
}

TEST(PiecewisePoly, BreakpointConvention) {
  PiecewisePoly f({0.0, 1.0, 2.0}, 0, {1.0, 2.0});
  EXPECT_EQ(f.eval(1.0), 2.0);
  EXPECT_EQ(f.eval(1.0, 0, Side::left), 1.0);
  EXPECT_EQ(f.eval(2.0), 2.0);
  EXPECT_EQ(f.eval(0.0), 1.0);
}

TEST(PiecewisePoly, InvariantsChecked) {
  EXPECT_THROW(PiecewisePoly({0.0}, 0, {}), std::invalid_argument);
  EXPECT_THROW(PiecewisePoly({0.0, 0.0}, 0, {1.0}), std::invalid_argument);
  EXPECT_THROW(PiecewisePoly({0.0, 1.0}, 1, {1.0}), std::invalid_argument);
}

TEST(PiecewisePoly, AntiderivativeExamples) {
  auto one = PiecewisePoly::polynomial(0.0, 1.0, {1.0});
  auto a2 = one.antiderivative(2, 0.0);
  for (double x : {0.0, 0.3, 0.9, 1.0}) EXPECT_NEAR(a2.eval(x), x * x / 2, 1e-15);
  auto t = PiecewisePoly::polynomial(0.0, 1.0, {0.0, 1.0});
  auto a3 = t.antiderivative(3, 0.0);
  for (double x : {0.0, 0.3, 0.9, 1.0}) EXPECT_NEAR(a3.eval(x), std::pow(x, 4) / 24, 1e-15);
}

TEST(PiecewisePoly, AntiderivativeAnchorAndRoundTrip) {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto f = random_pp(rng, 6, 3);
    const double anchor = 0.5 * (f.lower() + f.upper());
    for (int order = 1; order <= 4; ++order) {
      auto F = f.antiderivative(order, anchor);
      for (int d = 0; d < order; ++d) EXPECT_NEAR(F.eval(anchor, d), 0.0, 1e-12);
      auto back = F.derivative(order);
      for (int i = 0; i <= 50; ++i) {
        const double x = f.lower() + (f.upper() - f.lower()) * i / 50.0;
        EXPECT_NEAR(back.eval(x), f.eval(x), 1e-10);
      }
      EXPECT_LE(F.continuity_defect(order - 1), 1e-9);
    }
  }
}

TEST(PiecewisePoly, AntiderivativeFiniteDifference) {
  Rng rng(4);
  auto f = random_pp(rng, 5, 2);
  auto F = f.antiderivative(1, f.lower());
  const double h = 1e-6;
  for (int i = 1; i < 40; ++i) {
    const double x = f.lower() + (f.upper() - f.lower()) * (i + 0.37) / 41.0;
    EXPECT_NEAR((F.eval(x + h) - F.eval(x - h)) / (2 * h), f.eval(x), 1e-6);
  }
}

TEST(PiecewisePoly, MixtureRoundTrip) {
  Rng rng(8);
  for (int k = 1; k <= 6; ++k) {
    auto mm = random_measure(rng, 4);
    auto g = mixture_to_piecewise(mm, k);
    auto back = g.antiderivative(k, 0.0).derivative(k);
    for (int i = 0; i <= 100; ++i) {
      const double x = g.upper() * i / 100.0;
      EXPECT_NEAR(back.eval(x), g.eval(x), 1e-11);
    }
  }
}

TEST(PiecewisePoly, TruncatedPowerConstructor) {
  const double poly[] = {1.0, -0.5};
  const TruncatedPower terms[] = {{0.4, 3, 2.0}, {0.7, 2, -1.0}};
  auto f = PiecewisePoly::from_truncated_powers({0.0, 0.4, 0.7, 1.0}, 3, poly, terms);
  for (int i = 0; i <= 40; ++i) {
    const double x = i / 40.0;
    const double ref = 1.0 - 0.5 * x + 2.0 * std::pow(std::max(0.0, x - 0.4), 3) - std::pow(std::max(0.0, x - 0.7), 2);
    EXPECT_NEAR(f.eval(x), ref, 1e-14);
  }
  const TruncatedPower bad[] = {{0.5, 1, 1.0}};
  EXPECT_THROW(PiecewisePoly::from_truncated_powers({0.0, 0.4, 1.0}, 2, poly, bad), std::invalid_argument);
}

TEST(PiecewisePoly, LinearCombinationAndSupNorm) {
  auto a = PiecewisePoly::polynomial(0.0, 1.0, {0.0, 1.0});
  PiecewisePoly step({0.0, 0.5, 1.0}, 0, {1.0, -1.0});
  auto d = linear_combination(2.0, a, 1.0, step);
  EXPECT_EQ(d.num_pieces(), 2u);
  EXPECT_NEAR(d.eval(0.25), 1.5, 1e-15);
  EXPECT_NEAR(d.eval(0.75), 0.5, 1e-15);
  auto q = PiecewisePoly::polynomial(0.0, 1.0, {0.0, 1.0, -1.0});
  auto s = sup_norm(q, 64);
  EXPECT_NEAR(s.value, 0.25, 1e-14);
  EXPECT_NEAR(s.argmax, 0.5, 1e-7);
}

TEST(PiecewisePoly, EvalSortedMatchesEval) {
  Rng rng(12);
  auto f = random_pp(rng, 7, 4);
  std::vector<double> xs;
  for (int i = 0; i <= 300; ++i) xs.push_back(f.lower() + (f.upper() - f.lower()) * i / 300.0);
  for (int d = 0; d <= 2; ++d) {
    auto v = f.eval_sorted(xs, d);
    for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_DOUBLE_EQ(v[i], f.eval(xs[i], d));
  }
}
