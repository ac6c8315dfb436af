// Spline interpolation operators of odd degree 2k-1: the Hermite operator
// that matches values and slopes at 2k-2 sites (interior sites are knots),
// the complete spline, the Hermite error monospline, the perfect spline and
// the Chebyshev best approximation of x^{2k}.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmono/detail/bspline.hpp"
#include "kmono/mixture.hpp"
#include "kmono/piecewise_poly.hpp"

namespace kmono {

inline constexpr double kDefaultCondLimit = 1e12;
// Hermite collocation runs with 50 significant digits; the guard keeps
// cond * eps near 1e-10 there.
inline constexpr double kHermiteCondLimit = 1e40;
// Complete splines are solved in quad precision.
inline constexpr double kCompleteCondLimit = 1e24;

struct HermiteData {
  int k = 2;
  std::vector<double> sites;
  std::vector<double> values;
  std::vector<double> slopes;

  void validate() const {
    check_k(k, 2);
    const std::size_t m = static_cast<std::size_t>(2 * k - 2);
    if (sites.size() != m || values.size() != m || slopes.size() != m)
      throw std::invalid_argument("HermiteData: need exactly 2k-2 sites, values and slopes");
    const double span = sites.back() - sites.front();
    if (!(span > 0.0)) throw std::invalid_argument("HermiteData: sites must be strictly increasing");
    for (std::size_t i = 1; i < m; ++i) {
      const double gap = sites[i] - sites[i - 1];
      if (!(gap > 0.0)) throw std::invalid_argument("HermiteData: sites must be strictly increasing");
      if (gap < 1e-10 * span)
        throw IllConditionedError("HermiteData: sites closer than 1e-10 x span", INFINITY);
    }
  }
};

namespace detail {

inline std::vector<double> to_unit(std::span<const double> xs, double x0, double L) {
  std::vector<double> u(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) u[i] = (xs[i] - x0) / L;
  return u;
}

}  // namespace detail

namespace detail {

template <class T>
PiecewisePoly hermite_solve(int k, std::span<const double> sites, const std::vector<T>& values,
                            const std::vector<T>& slopes, double cond_limit, double* condition) {
  const double x0 = sites.front();
  const double L = sites.back() - x0;
  // Sites are normalized in T: a rounding shift of a site is amplified by the
  // condition number just like a data error.
  std::vector<T> u;
  for (double y : sites) u.push_back((T(y) - T(x0)) / T(L));
  u.front() = T(0);
  u.back() = T(1);
  std::vector<T> interior(u.begin() + 1, u.end() - 1);
  BSplineBasis<T> basis(2 * k - 1, interior);
  std::vector<Collocation<T>> conds;
  conds.reserve(u.size() * 2);
  for (std::size_t i = 0; i < u.size(); ++i) {
    conds.push_back({u[i], 0, values[i]});
    conds.push_back({u[i], 1, slopes[i] * T(L)});
  }
  auto pu = basis.interpolate(conds, cond_limit, condition);
  const std::vector<double> br(sites.begin(), sites.end());
  return from_unit_interval(pu, x0, L, 1.0, &br);
}

}  // namespace detail

/// Degree 2k-1 spline with interior knots sites[1..2k-4] matching values and
/// slopes at all sites. `condition` receives the collocation condition number.
inline PiecewisePoly hermite_interpolant(const HermiteData& data, double cond_limit = kHermiteCondLimit,
                                         double* condition = nullptr) {
  data.validate();
  std::vector<detail::wide> v(data.values.begin(), data.values.end());
  std::vector<detail::wide> s(data.slopes.begin(), data.slopes.end());
  return detail::hermite_solve(data.k, data.sites, v, s, cond_limit, condition);
}

/// Hermite interpolant of a callable: f(x, d) returns the d-th derivative,
/// d in {0, 1}. The callable may return double or detail::wide; the latter
/// keeps the data exact enough for badly conditioned sites.
template <class F>
PiecewisePoly hermite_of(int k, std::span<const double> sites, F&& f, double cond_limit = kHermiteCondLimit,
                         double* condition = nullptr) {
  HermiteData d;
  d.k = k;
  d.sites.assign(sites.begin(), sites.end());
  d.values.assign(d.sites.size(), 0.0);
  d.slopes.assign(d.sites.size(), 0.0);
  d.validate();
  std::vector<detail::wide> v, s;
  for (double y : sites) {
    v.push_back(detail::wide(f(y, 0)));
    s.push_back(detail::wide(f(y, 1)));
  }
  return detail::hermite_solve(k, sites, v, s, cond_limit, condition);
}

namespace detail {

template <class T>
PiecewisePoly complete_solve(int k, double a, double b, std::span<const double> interior_knots,
                             std::span<const double> values, std::span<const double> left_derivs,
                             std::span<const double> right_derivs, double cond_limit, double* condition) {
  check_k(k);
  if (!(b > a)) throw std::invalid_argument("complete_interpolant: need a < b");
  if (values.size() != interior_knots.size())
    throw std::invalid_argument("complete_interpolant: one value per interior knot required");
  if (left_derivs.size() != static_cast<std::size_t>(k) || right_derivs.size() != static_cast<std::size_t>(k))
    throw std::invalid_argument("complete_interpolant: need derivatives of orders 0..k-1 at both ends");
  const double L = b - a;
  std::vector<T> u;
  for (std::size_t i = 0; i < interior_knots.size(); ++i) {
    const double y = interior_knots[i];
    if (!(y > a && y < b)) throw std::invalid_argument("complete_interpolant: knots must lie inside (a, b)");
    if (i > 0 && !(y > interior_knots[i - 1]))
      throw std::invalid_argument("complete_interpolant: knots must be strictly increasing");
    if (i > 0 && (y - interior_knots[i - 1]) < 1e-12 * L)
      throw IllConditionedError("complete_interpolant: coincident knots", INFINITY);
    u.push_back((T(y) - T(a)) / T(L));
  }
  BSplineBasis<T> basis(2 * k - 1, u);
  std::vector<Collocation<T>> conds;
  conds.reserve(u.size() + 2 * static_cast<std::size_t>(k));
  T f = 1;
  for (int d = 0; d < k; ++d) {
    conds.push_back({T(0), d, T(left_derivs[static_cast<std::size_t>(d)]) * f});
    f *= L;
  }
  for (std::size_t i = 0; i < u.size(); ++i) conds.push_back({u[i], 0, T(values[i])});
  f = 1;
  for (int d = 0; d < k; ++d) {
    conds.push_back({T(1), d, T(right_derivs[static_cast<std::size_t>(d)]) * f});
    f *= L;
  }
  auto pu = basis.interpolate(conds, cond_limit, condition);
  std::vector<double> br{a};
  br.insert(br.end(), interior_knots.begin(), interior_knots.end());
  br.push_back(b);
  return from_unit_interval(pu, a, L, 1.0, &br);
}

}  // namespace detail

/// Complete spline of degree 2k-1 on [a, b] with the given interior knots:
/// values at the interior knots and derivatives 0..k-1 at both ends. Solved
/// in quad precision.
inline PiecewisePoly complete_interpolant(int k, double a, double b, std::span<const double> interior_knots,
                                          std::span<const double> values, std::span<const double> left_derivs,
                                          std::span<const double> right_derivs,
                                          double cond_limit = kCompleteCondLimit, double* condition = nullptr) {
  return detail::complete_solve<detail::quad>(k, a, b, interior_knots, values, left_derivs, right_derivs, cond_limit,
                                              condition);
}

namespace detail {

/// x^n/n! minus its interpolant on the same domain.
inline PiecewisePoly monomial_minus(const PiecewisePoly& interp, int n) {
  std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
  c[static_cast<std::size_t>(n)] = 1.0 / factorial(n);
  auto mono = PiecewisePoly::polynomial(interp.lower(), interp.upper(), c);
  return linear_combination(1.0, mono, -1.0, interp);
}

}  // namespace detail

/// e_k(t) = t^{2k}/(2k)! - H_k[x^{2k}/(2k)!](t) for knots tau_0 < ... < tau_{2k-3}.
inline PiecewisePoly error_monospline(int k, std::span<const double> knots, double cond_limit = kHermiteCondLimit,
                                      double* condition = nullptr) {
  check_k(k, 2);
  if (knots.size() != static_cast<std::size_t>(2 * k - 2))
    throw std::invalid_argument("error_monospline: need 2k-2 knots");
  const double x0 = knots.front();
  const double L = knots.back() - x0;
  if (!(L > 0.0)) throw std::invalid_argument("error_monospline: knots must be increasing");
  // Hermite interpolation commutes with affine changes of variable and
  // reproduces polynomials of degree 2k-1, so the error for x^{2k} is L^{2k}
  // times the error for u^{2k} on the normalized knots.
  auto u = detail::to_unit(knots, x0, L);
  u.front() = 0.0;
  u.back() = 1.0;
  const int n = 2 * k;
  auto pu = hermite_of(
      k, u,
      [&](double x, int d) {
        const detail::wide q(x);
        return d == 0 ? pow(q, n) / detail::factorial(n) : pow(q, n - 1) / detail::factorial(n - 1);
      },
      cond_limit, condition);
  auto eu = detail::monomial_minus(pu, n);
  const std::vector<double> br(knots.begin(), knots.end());
  return detail::from_unit_interval(eu, x0, L, detail::pow_int(L, n), &br);
}

/// S*(t) = ((2k)!)^{-1} (t^{2k} + 2 sum_i (-1)^i (t - tau_i)_+^{2k}) on [0, 1].
inline PiecewisePoly perfect_spline(int k, std::span<const double> interior_knots) {
  check_k(k, 2);
  if (interior_knots.size() != static_cast<std::size_t>(2 * k - 4))
    throw std::invalid_argument("perfect_spline: need 2k-4 interior knots");
  std::vector<double> br{0.0};
  for (double t : interior_knots) {
    if (!(t > br.back() && t < 1.0)) throw std::invalid_argument("perfect_spline: knots must increase inside (0, 1)");
    br.push_back(t);
  }
  br.push_back(1.0);
  const int n = 2 * k;
  const double nf = detail::factorial(n);
  std::vector<double> poly(static_cast<std::size_t>(n) + 1, 0.0);
  poly[static_cast<std::size_t>(n)] = 1.0 / nf;
  std::vector<TruncatedPower> terms;
  for (std::size_t i = 0; i < interior_knots.size(); ++i) {
    const double sign = (i % 2 == 0) ? -1.0 : 1.0;  // (-1)^{i+1} with 1-based index
    terms.push_back({interior_knots[i], n, 2.0 * sign / nf});
  }
  return PiecewisePoly::from_truncated_powers(std::move(br), n, poly, terms, n - 1);
}

/// Best uniform approximation of x^n on [a, b] by polynomials of degree < n:
/// x^n minus the rescaled monic Chebyshev polynomial.
inline PiecewisePoly chebyshev_best_poly(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("chebyshev_best_poly: degree must be positive");
  if (!(a < b)) throw std::invalid_argument("chebyshev_best_poly: need a < b");
  // T_n coefficients in s by the three-term recurrence.
  std::vector<double> t0{1.0}, t1{0.0, 1.0};
  for (int m = 1; m < n; ++m) {
    std::vector<double> t2(static_cast<std::size_t>(m) + 2, 0.0);
    for (std::size_t i = 0; i < t1.size(); ++i) t2[i + 1] += 2.0 * t1[i];
    for (std::size_t i = 0; i < t0.size(); ++i) t2[i] -= t0[i];
    t0 = std::move(t1);
    t1 = std::move(t2);
  }
  // s = alpha u + beta with u = x - a.
  const double alpha = 2.0 / (b - a), beta = -1.0;
  auto tu = detail::taylor_shift(t1, beta);
  double f = 1.0;
  for (auto& c : tu) {
    c *= f;
    f *= alpha;
  }
  const double scale = detail::pow_int((b - a) / 2.0, n) * std::pow(2.0, 1 - n);
  std::vector<double> c(static_cast<std::size_t>(n), 0.0);
  for (int p = 0; p < n; ++p)
    c[static_cast<std::size_t>(p)] = detail::binomial(n, p) * detail::pow_int(a, n - p) - scale * tu[static_cast<std::size_t>(p)];
  return PiecewisePoly::polynomial(a, b, std::move(c));
}

}  // namespace kmono
