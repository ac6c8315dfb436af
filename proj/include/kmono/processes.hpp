// The integrated empirical processes Y_n, H~_n and H^_n as exact piecewise
// polynomials, and their evaluation on grids.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "kmono/mixture.hpp"
#include "kmono/piecewise_poly.hpp"

namespace kmono {

/// Thrown when an MLE-type process needs 1/g at a point where g vanishes.
class DegenerateFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProcessTrace {
  std::vector<double> grid;
  std::vector<double> values;
};

namespace detail {

/// sum_i w_i (x - x_i)_+^{p} / p! on [0, upper], right-continuous at the x_i.
/// xs must be sorted and positive. Taylor coefficients at each breakpoint are
/// built left to right; with positive weights every update adds nonnegative
/// terms, so no cancellation occurs.
inline PiecewisePoly truncated_power_sum(std::span<const double> xs, std::span<const double> ws, int p,
                                         double upper) {
  if (xs.size() != ws.size()) throw std::invalid_argument("truncated_power_sum: size mismatch");
  std::vector<double> br{0.0};
  std::vector<double> add{0.0};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < 0.0) throw std::invalid_argument("truncated_power_sum: points must be nonnegative");
    if (xs[i] == br.back()) {
      add.back() += ws[i];
    } else {
      br.push_back(xs[i]);
      add.push_back(ws[i]);
    }
  }
  if (!(upper > br.back())) upper = br.back() + std::max(1.0, br.back());
  br.push_back(upper);
  const std::size_t s = static_cast<std::size_t>(p) + 1;
  const std::size_t pieces = br.size() - 1;
  std::vector<double> c(pieces * s, 0.0);
  std::vector<double> cur(s, 0.0);
  const double pf = factorial(p);
  for (std::size_t i = 0; i < pieces; ++i) {
    if (i > 0) cur = taylor_shift(cur, br[i] - br[i - 1]);
    cur[static_cast<std::size_t>(p)] += add[i] / pf;
    std::copy(cur.begin(), cur.end(), c.begin() + static_cast<long>(i * s));
  }
  return PiecewisePoly(std::move(br), p, std::move(c), p - 1);
}

}  // namespace detail

/// Y_n(x) = (1/n) sum (x - X_i)_+^{k-1}/(k-1)! as a piecewise polynomial on
/// [0, upper] (upper defaults to twice the largest observation).
inline PiecewisePoly yn_piecewise(const Sample& sample, int k, double upper = 0.0) {
  check_k(k);
  if (sample.n() == 0) throw std::domain_error("yn_piecewise: empty sample");
  std::vector<double> w(sample.n(), 1.0 / static_cast<double>(sample.n()));
  return detail::truncated_power_sum(sample.values(), w, k - 1, upper > 0.0 ? upper : 2.0 * sample.max());
}

/// Y_n on a grid, by direct summation.
inline ProcessTrace process_Yn(const Sample& sample, int k, std::span<const double> grid) {
  check_k(k);
  if (sample.n() == 0) throw std::domain_error("process_Yn: empty sample");
  ProcessTrace tr;
  tr.grid.assign(grid.begin(), grid.end());
  const double pf = detail::factorial(k - 1);
  for (double x : grid) {
    double s = 0.0;
    for (double xi : sample.values()) {
      if (xi > x) break;
      s += detail::pow_int(x - xi, k - 1);
    }
    tr.values.push_back(s / (pf * static_cast<double>(sample.n())));
  }
  return tr;
}

/// k-fold antiderivative from 0 of the mixture density, on [0, upper].
inline PiecewisePoly htilde_piecewise(const MixingMeasure& mm, int k, double upper) {
  double top = upper;
  if (!mm.empty()) top = std::max(top, mm.atoms().back() * (1.0 + 1e-9) + 1e-300);
  return mixture_to_piecewise(mm, k, top).antiderivative(k, 0.0);
}

inline ProcessTrace process_Htilde(const MixingMeasure& mm, int k, std::span<const double> grid) {
  check_k(k);
  double top = 1.0;
  for (double x : grid) top = std::max(top, x);
  auto h = htilde_piecewise(mm, k, top);
  ProcessTrace tr;
  tr.grid.assign(grid.begin(), grid.end());
  for (double x : grid) tr.values.push_back(h.eval_extrapolated(x));
  return tr;
}

namespace detail {

/// Mixture density at the observations, left-closed kernel.
inline std::vector<double> density_at(const MixingMeasure& mm, int k, std::span<const double> xs) {
  std::vector<double> g(xs.size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < mm.size(); ++j) g[i] += mm.weights()[j] * kernel_left(k, mm.atoms()[j], xs[i]);
  return g;
}

/// R(x) = (1/n) sum (x - X_i)_+^{k-1} / ((k-1)! g(X_i)).
inline PiecewisePoly mle_r_piecewise(const Sample& sample, const MixingMeasure& mm, int k, double upper) {
  auto g = density_at(mm, k, sample.values());
  std::vector<double> w(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0.0)) throw DegenerateFitError("estimate vanishes at an observation");
    w[i] = 1.0 / (static_cast<double>(sample.n()) * g[i]);
  }
  return truncated_power_sum(sample.values(), w, k - 1, upper);
}

}  // namespace detail

/// H^_n(x, g) = (1/n) sum_{X_i <= x} k (x - X_i)^{k-1} / (x^k g(X_i)); 0 at x = 0.
inline ProcessTrace process_Hhat(const Sample& sample, const MixingMeasure& mm, int k,
                                 std::span<const double> grid) {
  check_k(k);
  double top = 2.0 * sample.max();
  for (double x : grid) top = std::max(top, x);
  auto r = detail::mle_r_piecewise(sample, mm, k, top);
  ProcessTrace tr;
  tr.grid.assign(grid.begin(), grid.end());
  const double kf = detail::factorial(k);
  for (double x : grid) tr.values.push_back(x > 0.0 ? kf * r.eval_extrapolated(x) / detail::pow_int(x, k) : 0.0);
  return tr;
}

}  // namespace kmono
