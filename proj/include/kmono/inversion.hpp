// Recovering the mixing distribution from a k-monotone density.
#pragma once

#include <cmath>
#include <stdexcept>

#include "kmono/estimators.hpp"
#include "kmono/mixture.hpp"
#include "kmono/piecewise_poly.hpp"
#include "kmono/processes.hpp"

namespace kmono {

/// F(t) = sum_{j=0}^{k} (-1)^j t^j / j! G^{(j)}(t), with G the distribution
/// function of g and G^{(j)} = g^{(j-1)}. Right limits at breakpoints; past the
/// domain g vanishes and F equals the total mass.
inline double invert_mixing(const PiecewisePoly& g, int k, double t) {
  check_k(k);
  if (!(t > 0.0)) throw std::domain_error("invert_mixing: t must be positive");
  if (g.degree() > k - 1) throw std::invalid_argument("invert_mixing: density degree exceeds k - 1");
  const auto G = g.antiderivative(1, g.lower());
  if (t >= g.upper()) return G.eval(g.upper(), 0, Side::left);
  double sum = G.eval(t);
  double f = 1.0;
  for (int j = 1; j <= k; ++j) {
    f *= -t / j;
    sum += f * g.eval(t, j - 1);
  }
  return sum;
}

inline double invert_mixing(const MixingMeasure& mm, int k, double t) {
  return invert_mixing(mixture_to_piecewise(mm, k), k, t);
}

inline double invert_mixing(const FitResult& fit, double t) { return invert_mixing(fit.estimate, fit.k, t); }

/// 1 - g^{(k-1)}(t) / g^{(k-1)}(0+): the mixing distribution reweighted by
/// y^{-k}, normalized.
inline double invert_hampel(const PiecewisePoly& g, int k, double t) {
  check_k(k);
  if (!(t >= 0.0)) throw std::domain_error("invert_hampel: t must be nonnegative");
  const double d0 = g.eval(g.lower(), k - 1);
  if (d0 == 0.0 || !std::isfinite(d0)) throw DegenerateFitError("invert_hampel: g^(k-1)(0+) vanishes");
  if (t >= g.upper()) return 1.0;
  return 1.0 - g.eval(t, k - 1) / d0;
}

inline double invert_hampel(const FitResult& fit, double t) { return invert_hampel(fit.estimate, fit.k, t); }

}  // namespace kmono
