#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kmono/estimators.hpp"
#include "kmono/grenander.hpp"
#include "kmono/interp.hpp"
#include "kmono/inversion.hpp"
#include "kmono/processes.hpp"
#include "kmono/random.hpp"

using namespace kmono;

namespace {

Sample exp_sample(std::uint64_t seed, int n) {
  Rng rng(seed);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = e(rng);
  return Sample(v);
}

// Min-max formula for the nonincreasing slope on (x_{j-1}, x_j]:
// min over s <= j of max over t >= j of the chord slope from s-1 to t.
std::vector<double> minmax_grenander(const Sample& s) {
  std::vector<double> xs{0.0}, F{0.0}, d, c;
  s.distinct(d, c);
  double cum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    cum += c[i];
    xs.push_back(d[i]);
    F.push_back(cum / static_cast<double>(s.n()));
  }
  const std::size_t m = xs.size();
  std::vector<double> out(m - 1);
  for (std::size_t j = 1; j < m; ++j) {
    double best = INFINITY;
    for (std::size_t a = 1; a <= j; ++a) {
      double mx = -INFINITY;
      for (std::size_t b = j; b < m; ++b) mx = std::max(mx, (F[b] - F[a - 1]) / (xs[b] - xs[a - 1]));
      best = std::min(best, mx);
    }
    out[j - 1] = best;
  }
  return out;
}

bool trace_nonincreasing(const std::vector<double>& t) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[i - 1] + 1e-12 * (1.0 + std::abs(t[i - 1]))) return false;
  return true;
}

}  // namespace

TEST(Grenander, HandExample) {
  auto g = grenander(Sample({1.0, 2.0, 4.0}));
  EXPECT_NEAR(g(0.5), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g(2.0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g(2.5), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(g(4.0), 1.0 / 6.0, 1e-15);
  EXPECT_EQ(g(4.5), 0.0);
  EXPECT_NEAR(g.integral(10.0), 1.0, 1e-15);
}

TEST(Grenander, SingleObservation) {
  auto g = grenander(Sample({2.5}));
  EXPECT_NEAR(g(1.0), 1.0 / 2.5, 1e-15);
  EXPECT_NEAR(g.integral(3.0), 1.0, 1e-15);
}

TEST(Grenander, MatchesMinMaxFormula) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto s = exp_sample(seed, 150);
    auto g = grenander(s);
    auto ref = minmax_grenander(s);
    std::vector<double> d, c;
    s.distinct(d, c);
    for (std::size_t j = 0; j < d.size(); ++j) EXPECT_NEAR(g(d[j]), ref[j], 1e-12);
    for (std::size_t i = 1; i < g.values.size(); ++i) EXPECT_LE(g.values[i], g.values[i - 1]);
    EXPECT_NEAR(g.integral(s.max()), 1.0, 1e-12);
  }
}

TEST(Processes, YnExamples) {
  std::vector<double> x{2.0};
  EXPECT_DOUBLE_EQ(process_Yn(Sample({1.0}), 2, x).values[0], 1.0);
  std::vector<double> x4{4.0};
  EXPECT_DOUBLE_EQ(process_Yn(Sample({1.0, 3.0}), 3, x4).values[0], 2.5);
  std::vector<double> low{0.0, 0.5, 0.99};
  for (double v : process_Yn(Sample({1.0, 3.0}), 3, low).values) EXPECT_EQ(v, 0.0);
}

TEST(Processes, PiecewiseMatchesDirectSum) {
  auto s = exp_sample(3, 60);
  for (int k = 1; k <= 5; ++k) {
    auto Y = yn_piecewise(s, k);
    std::vector<double> grid;
    for (int i = 0; i <= 200; ++i) grid.push_back(s.max() * i / 200.0);
    auto tr = process_Yn(s, k, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(Y.eval(grid[i]), tr.values[i], 1e-12 * (1.0 + tr.values[i]));
  }
}

TEST(Processes, HtildeAnchoredAtZero) {
  MixingMeasure mm({0.5, 1.5, 3.0}, {0.2, 0.5, 0.3});
  for (int k = 1; k <= 5; ++k) {
    auto H = htilde_piecewise(mm, k, 4.0);
    EXPECT_EQ(H.degree(), 2 * k - 1);
    for (int d = 0; d < k; ++d) EXPECT_NEAR(H.eval(0.0, d), 0.0, 1e-15);
    EXPECT_NEAR(H.eval(1.0, k), mixture_to_piecewise(mm, k).eval(1.0), 1e-12);
  }
}

TEST(Processes, HhatBelowSampleIsZero) {
  MixingMeasure mm({5.0}, {1.0});
  std::vector<double> grid{0.0, 0.5, 0.99};
  for (double v : process_Hhat(Sample({1.0, 2.0}), mm, 3, grid).values) EXPECT_EQ(v, 0.0);
  MixingMeasure gap({0.5}, {1.0});
  EXPECT_THROW(process_Hhat(Sample({1.0}), gap, 2, grid), DegenerateFitError);
}

TEST(Nnqp, MatchesBruteForceOverActiveSets) {
  Rng rng(11);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 5;
    Eigen::MatrixXd A(8, m);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < m; ++j) A(i, j) = z(rng);
    Eigen::MatrixXd P = A.transpose() * A;
    Eigen::VectorXd c(m);
    for (int j = 0; j < m; ++j) c(j) = z(rng);
    auto w = detail::nnqp(P, c, {});
    Eigen::VectorXd wv = Eigen::Map<Eigen::VectorXd>(w.data(), m);
    const double got = 0.5 * wv.dot(P * wv) - c.dot(wv);
    double best = 0.0;
    for (int mask = 1; mask < (1 << m); ++mask) {
      std::vector<int> idx;
      for (int j = 0; j < m; ++j)
        if (mask >> j & 1) idx.push_back(j);
      Eigen::MatrixXd Pf(idx.size(), idx.size());
      Eigen::VectorXd cf(idx.size());
      for (std::size_t a = 0; a < idx.size(); ++a) {
        cf(a) = c(idx[a]);
        for (std::size_t b = 0; b < idx.size(); ++b) Pf(a, b) = P(idx[a], idx[b]);
      }
      Eigen::VectorXd x = Pf.ldlt().solve(cf);
      if ((x.array() < 0.0).any()) continue;
      best = std::min(best, 0.5 * x.dot(Pf * x) - cf.dot(x));
    }
    EXPECT_NEAR(got, best, 1e-10 * (1.0 + std::abs(best)));
  }
}

TEST(KernelIntegral, MatchesQuadrature) {
  for (int p = 0; p <= 5; ++p)
    for (int q = 0; q <= 5; ++q)
      for (auto [t, s] : {std::pair{0.7, 1.3}, std::pair{2.0, 0.4}, std::pair{1.0, 1.0}}) {
        const double hi = std::min(t, s);
        const int N = 4000;
        double sum = 0.0;
        for (int i = 0; i < N; ++i) {
          // Midpoint rule on a polynomial integrand, refined enough for 1e-7.
          const double x = hi * (i + 0.5) / N;
          sum += detail::pow_int(t - x, p) * detail::pow_int(s - x, q);
        }
        sum *= hi / N;
        EXPECT_NEAR(detail::kernel_integral(t, s, p, q), sum, 1e-7 * (1.0 + sum));
      }
}

TEST(FitK1, LseAndMleMatchMinMaxOracle) {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    auto s = exp_sample(seed, 120);
    auto ref = minmax_grenander(s);
    std::vector<double> d, c;
    s.distinct(d, c);
    for (auto fit : {fit_lse(s, 1), fit_mle(s, 1)}) {
      for (std::size_t j = 0; j < d.size(); ++j) EXPECT_NEAR(fit.estimate.eval(d[j], 0, Side::left), ref[j], 1e-8);
      EXPECT_NEAR(fit.mixing.total_mass(), 1.0, 1e-10);
    }
  }
}

TEST(FitLse, SingleObservationMass) {
  Rng rng(5);
  for (int k = 2; k <= 6; ++k) {
    const double x = 0.1 + 5.0 * uniform_open(rng);
    auto fit = fit_lse(Sample({x}), k);
    const double mk = (2.0 * k - 1.0) / k * std::pow(1.0 - 1.0 / (2.0 * k - 1.0), k - 1);
    EXPECT_NEAR(fit.mixing.total_mass(), mk, 1e-6) << "k=" << k;
  }
  EXPECT_NEAR(fit_lse(Sample({2.0}), 3).mixing.total_mass(), 16.0 / 15.0, 1e-6);
  EXPECT_NEAR(fit_lse(Sample({0.3}), 2).mixing.total_mass(), 1.0, 1e-6);
}

TEST(FitLse, CertificateAndNormalEquations) {
  for (int k = 2; k <= 4; ++k) {
    auto s = exp_sample(200 + k, 200);
    auto fit = fit_lse(s, k);
    EXPECT_TRUE(fit.certificate.passed);
    EXPECT_TRUE(trace_nonincreasing(fit.objective_trace));
    auto again = certify(fit, s, k, EstimatorKind::lse);
    EXPECT_TRUE(again.passed);
    auto H = htilde_piecewise(fit.mixing, k, 100.0 * s.max());
    auto Y = yn_piecewise(s, k, 100.0 * s.max());
    for (double t : fit.knots) {
      EXPECT_NEAR(H.eval(t), Y.eval(t), 1e-7 * again.scale);
      EXPECT_NEAR(H.eval(t, 1), Y.eval(t, 1), 1e-7 * again.scale);
    }
    std::vector<double> grid(again.grid.begin(), again.grid.end());
    auto ht = process_Htilde(fit, k, grid);
    auto yt = process_Yn(s, k, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_GE(ht.values[i] - yt.values[i], -1e-7 * again.scale);
    // The estimate is the mixture itself.
    auto ref = mixture_to_piecewise(fit.mixing, k);
    for (double x = 0.01; x < s.max(); x += 0.05) EXPECT_NEAR(fit.estimate.eval(x), ref.eval(x), 1e-10);
  }
}

TEST(FitLse, PerturbedWeightFailsCertificate) {
  auto s = exp_sample(7, 200);
  auto fit = fit_lse(s, 3);
  auto w = fit.mixing.weights();
  w[w.size() / 2] *= 1.1;
  FitResult broken = fit;
  broken.mixing = MixingMeasure(fit.mixing.atoms(), w);
  EXPECT_FALSE(certify(broken, s, 3, EstimatorKind::lse).passed);
}

TEST(FitLse, HermiteIdentification) {
  for (int k = 2; k <= 4; ++k) {
    auto s = exp_sample(300 + k, 2000);
    auto fit = fit_lse(s, k);
    const std::size_t need = static_cast<std::size_t>(2 * k - 2);
    ASSERT_GE(fit.knots.size(), need);
    auto H = htilde_piecewise(fit.mixing, k, 100.0 * s.max());
    auto Y = yn_piecewise(s, k, 100.0 * s.max());
    for (std::size_t start = 0; start + need <= fit.knots.size(); ++start) {
      HermiteData hd;
      hd.k = k;
      for (std::size_t i = start; i < start + need; ++i) {
        hd.sites.push_back(fit.knots[i]);
        hd.values.push_back(Y.eval(fit.knots[i]));
        hd.slopes.push_back(Y.eval(fit.knots[i], 1));
      }
      auto h = hermite_interpolant(hd);
      const double a = hd.sites.front(), b = hd.sites.back();
      for (int i = 0; i <= 400; ++i) {
        const double x = a + (b - a) * i / 400.0;
        EXPECT_NEAR(h.eval(x), H.eval(x), 1e-6 * fit.certificate.scale) << "k=" << k << " start=" << start;
      }
    }
  }
}

TEST(FitMle, CertificateUnitMassAndOptimality) {
  Rng rng(77);
  for (int k = 2; k <= 4; ++k) {
    auto s = exp_sample(400 + k, 200);
    auto fit = fit_mle(s, k);
    EXPECT_TRUE(fit.certificate.passed);
    EXPECT_LE(fit.certificate.max_derivative_residual, 1e-6);
    EXPECT_NEAR(fit.mixing.total_mass(), 1.0, 1e-10);
    EXPECT_TRUE(trace_nonincreasing(fit.objective_trace));
    EXPECT_TRUE(certify(fit, s, k, EstimatorKind::mle).passed);
    const double best = negative_loglik(s, fit.mixing, k);
    EXPECT_NEAR(best, fit.objective, 1e-9);
    for (int rep = 0; rep < 100; ++rep) {
      // Random unit-mass measures, some near the fit and some far from it.
      std::vector<double> atoms, w;
      if (rep % 2 == 0) {
        for (std::size_t j = 0; j < fit.mixing.size(); ++j) {
          atoms.push_back(fit.mixing.atoms()[j] * (1.0 + 0.02 * (uniform_open(rng) - 0.5)));
          w.push_back(fit.mixing.weights()[j] * (1.0 + 0.1 * (uniform_open(rng) - 0.5)));
        }
      } else {
        const int m = 1 + rep % 5;
        for (int j = 0; j < m; ++j) {
          atoms.push_back(s.max() * (1.0 + 2.0 * uniform_open(rng)) * (j + 1));
          w.push_back(uniform_open(rng));
        }
      }
      std::vector<std::size_t> ord(atoms.size());
      std::iota(ord.begin(), ord.end(), 0);
      std::sort(ord.begin(), ord.end(), [&](auto a, auto b) { return atoms[a] < atoms[b]; });
      std::vector<double> a2, w2;
      double tot = 0.0;
      for (auto i : ord) tot += w[i];
      for (auto i : ord) {
        a2.push_back(atoms[i]);
        w2.push_back(w[i] / tot);
      }
      MixingMeasure other(a2, w2);
      EXPECT_GE(negative_loglik(s, other, k), best - 1e-12);
    }
    std::vector<double> grid(fit.certificate.grid.begin(), fit.certificate.grid.end());
    for (double v : process_Hhat(s, fit, k, grid).values) EXPECT_LE(v, 1.0 + 1e-7);
    for (double v : process_Hhat(s, fit, k, fit.knots).values) EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(FitMle, EmptySampleIsDomainError) { EXPECT_THROW(fit_mle(Sample(), 2), std::domain_error); }

TEST(FitLse, TiesAndFewObservations) {
  auto fit = fit_lse(Sample({1.0, 1.0, 2.0}), 4);
  EXPECT_TRUE(fit.certificate.passed);
  EXPECT_FALSE(fit.warnings.empty());
  auto mle = fit_mle(Sample({1.0, 1.0, 2.0, 2.0, 3.0}), 2);
  EXPECT_TRUE(mle.certificate.passed);
}

TEST(FitLse, ScaleEquivariance) {
  auto s = exp_sample(9, 300);
  std::vector<double> scaled;
  for (double v : s.values()) scaled.push_back(3.0 * v);
  for (int k : {1, 3}) {
    auto a = fit_lse(s, k);
    auto b = fit_lse(Sample(scaled), k);
    ASSERT_EQ(a.knots.size(), b.knots.size());
    for (std::size_t i = 0; i < a.knots.size(); ++i) {
      EXPECT_NEAR(b.knots[i], 3.0 * a.knots[i], 1e-6 * b.knots[i]);
      EXPECT_NEAR(b.mixing.weights()[i], a.mixing.weights()[i], 1e-6);
    }
    for (double x = 0.05; x < s.max(); x += 0.1) EXPECT_NEAR(b.estimate.eval(3.0 * x), a.estimate.eval(x) / 3.0, 1e-6);
  }
}

TEST(Certify, K1ReducesToMajorantTouching) {
  auto s = exp_sample(12, 80);
  auto fit = fit_lse(s, 1);
  auto rep = certify(fit, s, 1, EstimatorKind::lse);
  EXPECT_TRUE(rep.passed);
  // G >= F_n with equality at the knots.
  for (double x : rep.grid) {
    const double G = fit.estimate.antiderivative(1, 0.0).eval(std::min(x, fit.estimate.upper()));
    EXPECT_GE(G - s.ecdf(x), -1e-12);
  }
  for (double t : fit.knots) EXPECT_NEAR(fit.estimate.antiderivative(1, 0.0).eval(t), s.ecdf(t), 1e-12);
}

TEST(Inversion, SingleAtomK2) {
  MixingMeasure mm({1.0}, {1.0});
  EXPECT_NEAR(invert_mixing(mm, 2, 0.5), 0.0, 1e-15);
  EXPECT_NEAR(invert_mixing(mm, 2, 1.5), 1.0, 1e-15);
  EXPECT_THROW(invert_mixing(mm, 2, 0.0), std::domain_error);
}

TEST(Inversion, RecoversRandomMixtures) {
  Rng rng(21);
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 1 + rep % 5;
    const int m = 1 + rep % 10;
    std::vector<double> atoms, w;
    for (int j = 0; j < m; ++j) {
      atoms.push_back(0.2 + 5.0 * uniform_open(rng));
      w.push_back(uniform_open(rng));
    }
    std::sort(atoms.begin(), atoms.end());
    atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
    w.resize(atoms.size());
    MixingMeasure mm(atoms, w);
    auto g = mixture_to_piecewise(mm, k);
    for (int i = 0; i < 50; ++i) {
      const double t = 6.0 * uniform_open(rng);
      EXPECT_NEAR(invert_mixing(g, k, t), mm.cdf(t), 1e-9) << "k=" << k << " m=" << m << " t=" << t;
    }
    EXPECT_NEAR(invert_mixing(g, k, 10.0), mm.total_mass(), 1e-12);
  }
}

TEST(Inversion, HampelReweightedCdf) {
  Rng rng(22);
  for (int rep = 0; rep < 30; ++rep) {
    const int k = 1 + rep % 4;
    std::vector<double> atoms{0.5 + uniform_open(rng), 2.0 + uniform_open(rng), 4.0 + uniform_open(rng)};
    std::vector<double> w{uniform_open(rng), uniform_open(rng), uniform_open(rng)};
    MixingMeasure mm(atoms, w);
    auto g = mixture_to_piecewise(mm, k);
    double tot = 0.0;
    for (int j = 0; j < 3; ++j) tot += w[j] / std::pow(atoms[j], k);
    for (double t : {0.2, 1.0, 3.0, 4.2, 6.0}) {
      double ref = 0.0;
      for (int j = 0; j < 3; ++j)
        if (atoms[j] <= t) ref += w[j] / std::pow(atoms[j], k) / tot;
      EXPECT_NEAR(invert_hampel(g, k, t), ref, 1e-10);
      // Reweighting by y^{-k} turns the Hampel inverse into the mixing CDF.
      std::vector<double> rw(3);
      for (int j = 0; j < 3; ++j) rw[j] = w[j] / std::pow(atoms[j], k) / tot;
      EXPECT_NEAR(invert_hampel(g, k, t), MixingMeasure(atoms, rw).cdf(t), 1e-10);
    }
    EXPECT_EQ(invert_hampel(g, k, 100.0), 1.0);
  }
  MixingMeasure one({2.0}, {1.0});
  auto g = mixture_to_piecewise(one, 3);
  EXPECT_NEAR(invert_hampel(g, 3, 1.9), 0.0, 1e-14);
  EXPECT_NEAR(invert_hampel(g, 3, 2.1), 1.0, 1e-14);
}

TEST(Inversion, FitCdfNondecreasing) {
  auto s = exp_sample(31, 300);
  auto fit = fit_mle(s, 3);
  double prev = -1.0;
  for (double t = 0.01; t < 2.0 * s.max(); t += 0.01) {
    const double F = invert_mixing(fit, t);
    EXPECT_GE(F, prev - 1e-9);
    prev = F;
  }
  EXPECT_NEAR(prev, 1.0, 1e-9);
}
