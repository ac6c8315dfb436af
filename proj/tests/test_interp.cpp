#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>

#include "kmono/conjecture.hpp"
#include "kmono/interp.hpp"
#include "kmono/random.hpp"

using namespace kmono;

namespace {

std::vector<double> random_sites(Rng& rng, int count, double a, double b) {
  std::vector<double> s;
  for (int i = 0; i < count - 2; ++i) s.push_back(a + (b - a) * uniform_open(rng));
  s.push_back(a);
  s.push_back(b);
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<double> random_poly(Rng& rng, int degree) {
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  std::vector<double> p(static_cast<std::size_t>(degree) + 1);
  for (auto& v : p) v = c(rng);
  return p;
}

double poly_eval(const std::vector<double>& p, double x, int d) {
  return detail::horner(p, x, d);
}

// Same polynomial evaluated in 50 digits so that rounding of the data does
// not dominate on badly conditioned sites.
detail::wide poly_eval_wide(const std::vector<double>& p, double x, int d) {
  detail::wide acc = 0;
  for (std::size_t j = p.size(); j-- > static_cast<std::size_t>(d);) {
    detail::wide c = p[j];
    for (int m = 0; m < d; ++m) c *= static_cast<double>(j - static_cast<std::size_t>(m));
    acc = acc * x + c;
  }
  return acc;
}

}  // namespace

TEST(Hermite, TwoPointRemainderForQuarticK2) {
  const double sites[] = {0.0, 1.0};
  auto h = hermite_of(2, sites, [](double x, int d) { return d == 0 ? std::pow(x, 4) / 24 : std::pow(x, 3) / 6; });
  // Oracle: remainder t^2 (1-t)^2 f''''/4! with f'''' = 1, maximised on a grid.
  double oracle = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double t = i / 100000.0;
    oracle = std::max(oracle, t * t * (1 - t) * (1 - t) / 24.0);
  }
  EXPECT_NEAR(oracle, 1.0 / 384.0, 1e-12);
  const double poly[] = {0, 0, 0, 0, 1.0 / 24};
  auto f = PiecewisePoly::polynomial(0.0, 1.0, std::vector<double>(poly, poly + 5));
  auto err = sup_norm(linear_combination(1.0, f, -1.0, h));
  EXPECT_NEAR(err.value, 1.0 / 384.0, 1e-9);
  EXPECT_NEAR(err.argmax, 0.5, 1e-6);
}

TEST(Hermite, SineK3MatchesAtSites) {
  const double sites[] = {0.0, 0.3, 0.55, 0.8};
  auto h = hermite_of(3, sites, [](double x, int d) { return d == 0 ? std::sin(x) : std::cos(x); });
  EXPECT_EQ(h.degree(), 5);
  EXPECT_EQ(h.num_pieces(), 3u);
  for (double y : sites) {
    EXPECT_NEAR(h.eval(y), std::sin(y), 1e-12);
    EXPECT_NEAR(h.eval(y, 1), std::cos(y), 1e-12);
  }
  EXPECT_LE(h.continuity_defect(4), 1e-9);
}

TEST(Hermite, ReproducesPolynomials) {
  Rng rng(21);
  for (int k = 2; k <= 6; ++k) {
    for (int rep = 0; rep < 30; ++rep) {
      std::uniform_real_distribution<double> shift(-3.0, 3.0), len(0.1, 4.0);
      const double a = shift(rng), b = a + len(rng);
      auto sites = random_sites(rng, 2 * k - 2, a, b);
      auto p = random_poly(rng, 2 * k - 1);
      auto h = hermite_of(k, sites, [&](double x, int d) { return poly_eval_wide(p, x, d); });
      double scale = 0.0, err = 0.0;
      for (int i = 0; i <= 500; ++i) {
        const double x = a + (b - a) * i / 500.0;
        scale = std::max(scale, std::abs(poly_eval(p, x, 0)));
        err = std::max(err, std::abs(h.eval(x) - poly_eval(p, x, 0)));
      }
      EXPECT_LE(err, 1e-9 * std::max(1.0, scale)) << "k=" << k;
    }
  }
}

TEST(Hermite, Linearity) {
  Rng rng(22);
  for (int k = 3; k <= 6; ++k) {
    auto sites = random_sites(rng, 2 * k - 2, 0.0, 1.0);
    using detail::wide;
    auto f = [](double x, int) { return wide(exp(wide(x))); };
    auto g = [](double x, int d) { return d == 0 ? wide(cos(3 * wide(x))) : wide(-3 * sin(3 * wide(x))); };
    const double al = 1.7, be = -0.6;
    auto hf = hermite_of(k, sites, f);
    auto hg = hermite_of(k, sites, g);
    auto hc = hermite_of(k, sites, [&](double x, int d) { return wide(al * f(x, d) + be * g(x, d)); });
    for (int i = 0; i <= 200; ++i) {
      const double x = i / 200.0;
      EXPECT_NEAR(hc.eval(x), al * hf.eval(x) + be * hg.eval(x), 1e-9);
    }
  }
}

TEST(Hermite, RejectsBadData) {
  HermiteData d;
  d.k = 3;
  d.sites = {0.0, 0.5, 0.5, 1.0};
  d.values = d.slopes = {0, 0, 0, 0};
  EXPECT_THROW(hermite_interpolant(d), std::invalid_argument);
  d.sites = {0.0, 0.5, 0.5 + 1e-12, 1.0};
  EXPECT_THROW(hermite_interpolant(d), IllConditionedError);
  d.sites = {0.0, 0.5, 1.0};
  EXPECT_THROW(hermite_interpolant(d), std::invalid_argument);
}

TEST(Monospline, DoubleZerosAndChebyshevBound) {
  Rng rng(31);
  for (int k = 3; k <= 5; ++k) {
    for (int rep = 0; rep < 100; ++rep) {
      auto knots = random_sites(rng, 2 * k - 2, 0.0, 1.0);
      auto e = error_monospline(k, knots);
      double scale = 0.0;
      for (int i = 0; i <= 2000; ++i) scale = std::max(scale, std::abs(e.eval(i / 2000.0)));
      for (double t : knots) {
        EXPECT_LE(std::abs(e.eval(t)), 1e-9 * scale + 1e-18);
        EXPECT_LE(std::abs(e.eval(t, 1)), 1e-7 * scale + 1e-16);
      }
      const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
      std::size_t jm = 0;
      for (std::size_t j = 1; j + 1 < knots.size(); ++j)
        if (knots[j + 1] - knots[j] > knots[jm + 1] - knots[jm]) jm = j;
      const double a = knots[jm], b = knots[jm + 1], h = b - a;
      const double lower = std::pow(h, 2 * k) / (std::pow(2.0, 4 * k - 1) * detail::factorial(2 * k));
      auto piece_sup = sup_norm_fn([&](double x) { return sgn * e.eval(x); }, std::vector<double>{a, b}, 512);
      EXPECT_GE(piece_sup.value, lower * (1 - 1e-9)) << "k=" << k << " rep=" << rep;
    }
  }
}

TEST(Monospline, SignOnEquispacedKnots) {
  for (int k = 2; k <= 6; ++k) {
    std::vector<double> knots;
    for (int i = 0; i < 2 * k - 2; ++i) knots.push_back(i / (2.0 * k - 3));
    auto e = error_monospline(k, knots);
    const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
      for (int i = 1; i < 64; ++i) EXPECT_GT(sgn * e.eval(knots[j] + (knots[j + 1] - knots[j]) * i / 64.0), 0.0);
    }
  }
}

TEST(Monospline, SignDependsOnKnots) {
  // The sign of e_3 is not fixed: with these knots e_3 > 0 on the whole span.
  // Oracle values from a 40-digit truncated-power solve.
  const std::vector<double> knots{0.0, 0.326273, 0.423619, 1.0};
  auto e = error_monospline(3, knots);
  EXPECT_NEAR(e.eval(0.1), 6.438622469294999e-08, 1e-15);
  EXPECT_NEAR(e.eval(0.35), 3.4713923970924356e-10, 1e-16);
  EXPECT_NEAR(e.eval(0.8), 1.4190961203294005e-06, 1e-14);
}

TEST(Monospline, ShiftIdentity) {
  Rng rng(32);
  for (int k = 2; k <= 5; ++k) {
    auto knots = random_sites(rng, 2 * k - 2, 0.0, 1.0);
    auto e = error_monospline(k, knots);
    for (int rep = 0; rep < 10; ++rep) {
      const double tb = uniform_open(rng);
      const int n = 2 * k;
      auto h = hermite_of(k, knots, [&](double x, int d) {
        return d == 0 ? std::pow(x - tb, n) / detail::factorial(n) : std::pow(x - tb, n - 1) / detail::factorial(n - 1);
      });
      EXPECT_NEAR(h.eval(tb), -e.eval(tb), 1e-12);
    }
  }
}

TEST(PerfectSpline, TopDerivativeAlternates) {
  Rng rng(41);
  for (int k = 3; k <= 6; ++k) {
    auto s = random_sites(rng, 2 * k - 2, 0.0, 1.0);
    std::vector<double> interior(s.begin() + 1, s.end() - 1);
    auto p = perfect_spline(k, interior);
    auto top = p.derivative(2 * k);
    for (std::size_t i = 0; i < top.num_pieces(); ++i) {
      const double v = top.piece(i)[0];
      EXPECT_NEAR(std::abs(v), 1.0, 1e-9);
      EXPECT_NEAR(v, (i % 2 == 0) ? 1.0 : -1.0, 1e-9);
    }
    EXPECT_LE(p.continuity_defect(2 * k - 1), 1e-9);
  }
  auto p2 = perfect_spline(2, std::vector<double>{});
  for (double x : {0.0, 0.25, 0.8, 1.0}) EXPECT_NEAR(p2.eval(x), std::pow(x, 4) / 24, 1e-15);
}

TEST(Chebyshev, QuarticOnSymmetricInterval) {
  auto p = chebyshev_best_poly(4, -1.0, 1.0);
  auto x4 = PiecewisePoly::polynomial(-1.0, 1.0, {1.0, -4.0, 6.0, -4.0, 1.0});  // x^4 about -1
  auto err = linear_combination(1.0, x4, -1.0, p);
  // Dense-grid equioscillation oracle.
  double mx = 0.0;
  std::vector<double> extrema;
  const int N = 200000;
  std::vector<double> v(N + 1);
  for (int i = 0; i <= N; ++i) v[i] = err.eval(-1.0 + 2.0 * i / N);
  for (int i = 0; i <= N; ++i) mx = std::max(mx, std::abs(v[i]));
  EXPECT_NEAR(mx, 1.0 / 8.0, 1e-12);
  int alternations = 0;
  double last_sign = 0.0;
  for (int i = 0; i <= N; ++i)
    if (std::abs(std::abs(v[i]) - mx) < 1e-9) {
      const double sg = v[i] > 0 ? 1.0 : -1.0;
      if (sg != last_sign) {
        ++alternations;
        last_sign = sg;
      }
    }
  EXPECT_EQ(alternations, 5);
}

TEST(Chebyshev, ErrorOnZeroH) {
  for (int k = 2; k <= 5; ++k) {
    const double h = 0.37;
    auto p = chebyshev_best_poly(2 * k, 0.0, h);
    std::vector<double> mono(static_cast<std::size_t>(2 * k) + 1, 0.0);
    mono.back() = 1.0;
    auto f = PiecewisePoly::polynomial(0.0, h, mono);
    auto err = sup_norm(linear_combination(1.0, f, -1.0, p));
    const double expect = std::pow(h, 2 * k) / std::pow(2.0, 4 * k - 1);
    EXPECT_NEAR(err.value / expect, 1.0, 1e-8) << "k=" << k;
  }
}

TEST(Complete, ReproducesPolynomialsAndConditions) {
  Rng rng(51);
  for (int k = 1; k <= 6; ++k) {
    for (int rep = 0; rep < 10; ++rep) {
      const double a = -0.5, b = 1.5;
      // Separated knots: the data are double, so their rounding is amplified
      // by the condition number of the problem.
      const int m = 1 + rep % 4;
      std::vector<double> s;
      do {
        s = random_sites(rng, m + 2, a, b);
      } while (std::adjacent_find(s.begin(), s.end(), [](double u, double v) { return v - u < 0.1; }) != s.end());
      std::vector<double> y(s.begin() + 1, s.end() - 1);
      auto p = random_poly(rng, 2 * k - 1);
      std::vector<double> vals, ld, rd;
      for (double t : y) vals.push_back(poly_eval(p, t, 0));
      for (int d = 0; d < k; ++d) {
        ld.push_back(poly_eval(p, a, d));
        rd.push_back(poly_eval(p, b, d));
      }
      auto c = complete_interpolant(k, a, b, y, vals, ld, rd);
      for (int i = 0; i <= 300; ++i) {
        const double x = a + (b - a) * i / 300.0;
        EXPECT_NEAR(c.eval(x), poly_eval(p, x, 0), 1e-9);
      }
    }
  }
  // t^4 on [0, 1], k = 2, one interior knot.
  const double y[] = {0.5};
  const double vals[] = {0.0625};
  const double ld[] = {0.0, 0.0}, rd[] = {1.0, 4.0};
  auto c = complete_interpolant(2, 0.0, 1.0, y, vals, ld, rd);
  EXPECT_NEAR(c.eval(0.5), 0.0625, 1e-9);
  EXPECT_NEAR(c.eval(0.0), 0.0, 1e-9);
  EXPECT_NEAR(c.eval(0.0, 1), 0.0, 1e-9);
  EXPECT_NEAR(c.eval(1.0), 1.0, 1e-9);
  EXPECT_NEAR(c.eval(1.0, 1), 4.0, 1e-9);
}

// (Cf)^{(k)} is the L2 projection of f^{(k)} onto splines of degree k-1 with
// the same knots; the oracle solves the normal equations in the truncated
// power basis with Gauss-Legendre quadrature.
TEST(Complete, LeastSquaresProperty) {
  using Quad = boost::math::quadrature::gauss<double, 30>;
  Rng rng(52);
  for (int k = 2; k <= 4; ++k) {
    const double a = 0.0, b = 1.0;
    std::vector<double> s;
    do {
      s = random_sites(rng, 5, a, b);
    } while (std::adjacent_find(s.begin(), s.end(), [](double u, double v) { return v - u < 0.1; }) != s.end());
    std::vector<double> y(s.begin() + 1, s.end() - 1);
    auto f = [](double x, int d) {
      // derivatives of sin(3x) + x^{8}
      double v = 0.0;
      const int r = d % 4;
      const double c = std::pow(3.0, d);
      v += c * (r == 0 ? std::sin(3 * x) : r == 1 ? std::cos(3 * x) : r == 2 ? -std::sin(3 * x) : -std::cos(3 * x));
      if (d <= 8) v += detail::factorial(8) / detail::factorial(8 - d) * std::pow(x, 8 - d);
      return v;
    };
    std::vector<double> vals, ld, rd;
    for (double t : y) vals.push_back(f(t, 0));
    for (int d = 0; d < k; ++d) {
      ld.push_back(f(a, d));
      rd.push_back(f(b, d));
    }
    auto c = complete_interpolant(k, a, b, y, vals, ld, rd);
    auto ck = c.derivative(k);

    const int nb = k + static_cast<int>(y.size());
    auto basis = [&](int i, double x) {
      if (i < k) return std::pow(x, i);
      const double t = y[static_cast<std::size_t>(i - k)];
      return x > t ? std::pow(x - t, k - 1) : 0.0;
    };
    Eigen::MatrixXd G(nb, nb);
    Eigen::VectorXd r(nb);
    std::vector<double> cuts{a};
    cuts.insert(cuts.end(), y.begin(), y.end());
    cuts.push_back(b);
    for (int i = 0; i < nb; ++i) {
      for (int j = 0; j < nb; ++j) {
        double s2 = 0.0;
        for (std::size_t q = 0; q + 1 < cuts.size(); ++q)
          s2 += Quad::integrate([&](double x) { return basis(i, x) * basis(j, x); }, cuts[q], cuts[q + 1]);
        G(i, j) = s2;
      }
      double s1 = 0.0;
      for (std::size_t q = 0; q + 1 < cuts.size(); ++q)
        s1 += Quad::integrate([&](double x) { return basis(i, x) * f(x, k); }, cuts[q], cuts[q + 1]);
      r(i) = s1;
    }
    Eigen::VectorXd coef = G.colPivHouseholderQr().solve(r);
    for (int i = 0; i <= 200; ++i) {
      const double x = a + (b - a) * (i + 0.5) / 201.0;
      double proj = 0.0;
      for (int j = 0; j < nb; ++j) proj += coef(j) * basis(j, x);
      EXPECT_NEAR(ck.eval(x), proj, 1e-6 * std::max(1.0, std::abs(proj))) << "k=" << k << " x=" << x;
    }
  }
}

TEST(Conjecture, PolynomialTargetIsExact) {
  ConjectureOptions o;
  o.k = 4;
  o.trials = 50;
  o.target = ConjectureTarget::user;
  o.user_f = [](double x, int d) {
    const detail::wide q(x);
    return detail::wide(d == 0 ? pow(q, 7) - q : 7 * pow(q, 6) - 1);
  };
  o.grid_resolution = 256;
  auto r = conjecture_trial(o);
  EXPECT_EQ(r.completed, 50u);
  EXPECT_LE(r.max_sup_error, 1e-9);
}

TEST(Conjecture, PerfectSplineSmallRun) {
  ConjectureOptions o;
  o.k = 3;
  o.trials = 500;
  o.sampler = KnotSampler::mixed;
  o.grid_resolution = 256;
  o.threads = 2;
  auto r = conjecture_trial(o);
  EXPECT_FALSE(r.violated);
  EXPECT_LE(r.max_sup_error, 2.0 / 720.0);
  EXPECT_GT(r.max_sup_error, 0.0);
  // Thread count does not change the result.
  o.threads = 1;
  auto r1 = conjecture_trial(o);
  EXPECT_EQ(r1.max_sup_error, r.max_sup_error);
  EXPECT_EQ(r1.argmax_knots, r.argmax_knots);
}

TEST(Conjecture, ClusteredKnotsBoundedOrFlagged) {
  ConjectureOptions o;
  o.k = 3;
  o.trials = 300;
  o.sampler = KnotSampler::clustered;
  o.grid_resolution = 256;
  o.keep_trials = true;
  auto r = conjecture_trial(o);
  EXPECT_EQ(r.completed + r.ill_conditioned, r.trials);
  for (const auto& t : r.log)
    if (!t.ill_conditioned) EXPECT_LE(t.sup_error, r.bound);
}

TEST(Conjecture, TruncatedPowerTarget) {
  ConjectureOptions o;
  o.k = 3;
  o.trials = 200;
  o.target = ConjectureTarget::truncated_power;
  o.grid_resolution = 256;
  auto r = conjecture_trial(o);
  EXPECT_EQ(r.completed, 200u);
  EXPECT_TRUE(std::isfinite(r.max_sup_error));
  EXPECT_FALSE(r.violated);
  EXPECT_TRUE(std::isinf(r.bound));
}

TEST(Conjecture, ZeroTrials) {
  ConjectureOptions o;
  o.trials = 0;
  auto r = conjecture_trial(o);
  EXPECT_EQ(r.completed, 0u);
  EXPECT_FALSE(r.violated);
}
