// Piecewise polynomials in a local power basis.
//
// Every piece i lives on [x_i, x_{i+1}] and stores the coefficients of
// sum_p c_{i,p} (x - x_i)^p. Evaluation at an interior breakpoint takes the
// right limit, at the final breakpoint the left limit. Splines, fitted
// densities, their k-fold primitives and the interpolation error functions
// are all carried by this one type.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kmono {

/// Largest k accepted at API boundaries.
inline constexpr int kMaxK = 8;

namespace detail {

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

inline double binomial(int n, int r) {
  if (r < 0 || r > n) return 0.0;
  r = std::min(r, n - r);
  double out = 1.0;
  for (int i = 1; i <= r; ++i) out = out * (n - r + i) / i;
  return out;
}

/// Integer power with a non-negative exponent; pow_int(0, 0) == 1.
inline double pow_int(double x, int p) {
  double r = 1.0;
  while (p > 0) {
    if (p & 1) r *= x;
    x *= x;
    p >>= 1;
  }
  return r;
}

/// Value of the `deriv`-th derivative of sum_p c[p] u^p.
inline double horner(std::span<const double> c, double u, int deriv = 0) {
  const int deg = static_cast<int>(c.size()) - 1;
  if (deriv > deg) return 0.0;
  double acc = 0.0;
  for (int p = deg; p >= deriv; --p) {
    double f = 1.0;
    for (int q = 0; q < deriv; ++q) f *= (p - q);
    acc = acc * u + c[p] * f;
  }
  return acc;
}

/// Sum of the absolute values of the terms in horner(c, u, deriv).
inline double horner_magnitude(std::span<const double> c, double u, int deriv = 0) {
  const int deg = static_cast<int>(c.size()) - 1;
  double acc = 0.0;
  for (int p = deg; p >= deriv; --p) {
    double f = 1.0;
    for (int q = 0; q < deriv; ++q) f *= (p - q);
    acc = acc * std::abs(u) + std::abs(c[p]) * f;
  }
  return acc;
}

/// Re-expands sum_p c[p] (x-a)^p about b = a + h.
inline std::vector<double> taylor_shift(std::span<const double> c, double h) {
  std::vector<double> out(c.begin(), c.end());
  const int deg = static_cast<int>(c.size()) - 1;
  // Repeated synthetic division; exact in exact arithmetic, O(deg^2).
  for (int i = 0; i < deg; ++i)
    for (int j = deg - 1; j >= i; --j) out[j] += h * out[j + 1];
  return out;
}

}  // namespace detail

enum class Side { right, left };

/// One term coef * (x - knot)_+^power of a truncated-power expansion.
struct TruncatedPower {
  double knot;
  int power;
  double coef;
};

class PiecewisePoly {
 public:
  PiecewisePoly(std::vector<double> breakpoints, int degree, std::vector<double> coeffs,
                int smoothness = -1)
      : breaks_(std::move(breakpoints)),
        degree_(degree),
        coeffs_(std::move(coeffs)),
        smoothness_(smoothness) {
    if (breaks_.size() < 2) throw std::invalid_argument("PiecewisePoly: need at least two breakpoints");
    if (degree_ < 0) throw std::invalid_argument("PiecewisePoly: negative degree");
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      if (!(breaks_[i] > breaks_[i - 1]))
        throw std::invalid_argument("PiecewisePoly: breakpoints must be strictly increasing");
    if (coeffs_.size() != num_pieces() * stride())
      throw std::invalid_argument("PiecewisePoly: coefficient count does not match pieces x (degree+1)");
    smoothness_ = std::min(smoothness_, degree_);
  }

  /// Single polynomial sum_p c[p] (x-a)^p on [a, b].
  static PiecewisePoly polynomial(double a, double b, std::vector<double> c) {
    const int deg = c.empty() ? 0 : static_cast<int>(c.size()) - 1;
    if (c.empty()) c.push_back(0.0);
    return PiecewisePoly({a, b}, deg, std::move(c), deg);
  }

  /// Builds poly(x - x_0) + sum_j coef_j (x - knot_j)_+^power_j on the given
  /// breakpoints. `poly` holds coefficients about the first breakpoint. Knots
  /// inside the domain must coincide with breakpoints.
  static PiecewisePoly from_truncated_powers(std::vector<double> breakpoints, int degree,
                                             std::span<const double> poly,
                                             std::span<const TruncatedPower> terms,
                                             int smoothness = -1) {
    if (breakpoints.size() < 2) throw std::invalid_argument("from_truncated_powers: need two breakpoints");
    const std::size_t pieces = breakpoints.size() - 1;
    const std::size_t s = static_cast<std::size_t>(degree) + 1;
    if (poly.size() > s) throw std::invalid_argument("from_truncated_powers: polynomial degree too high");
    for (const auto& t : terms) {
      if (t.power < 0 || t.power > degree)
        throw std::invalid_argument("from_truncated_powers: term power out of range");
      if (t.knot > breakpoints.front() && t.knot < breakpoints.back() &&
          !std::binary_search(breakpoints.begin(), breakpoints.end(), t.knot))
        throw std::invalid_argument("from_truncated_powers: interior knot is not a breakpoint");
    }
    std::vector<double> base(s, 0.0);
    std::copy(poly.begin(), poly.end(), base.begin());
    std::vector<double> coeffs(pieces * s, 0.0);
    for (std::size_t i = 0; i < pieces; ++i) {
      const double b = breakpoints[i];
      auto shifted = detail::taylor_shift(base, b - breakpoints.front());
      for (const auto& t : terms) {
        if (t.knot > b) continue;
        // (b - knot + u)^power expanded in u.
        const double h = b - t.knot;
        for (int p = 0; p <= t.power; ++p)
          shifted[p] += t.coef * detail::binomial(t.power, p) * detail::pow_int(h, t.power - p);
      }
      std::copy(shifted.begin(), shifted.end(), coeffs.begin() + i * s);
    }
    return PiecewisePoly(std::move(breakpoints), degree, std::move(coeffs), smoothness);
  }

  std::size_t num_pieces() const { return breaks_.size() - 1; }
  int degree() const { return degree_; }
  int smoothness() const { return smoothness_; }
  const std::vector<double>& breakpoints() const { return breaks_; }
  double lower() const { return breaks_.front(); }
  double upper() const { return breaks_.back(); }
  std::span<const double> piece(std::size_t i) const {
    return {coeffs_.data() + i * stride(), stride()};
  }
  const std::vector<double>& coefficients() const { return coeffs_; }

  bool contains(double x) const { return x >= lower() - slack() && x <= upper() + slack(); }

  /// Index of the piece used for evaluation at x (see the class comment).
  std::size_t find_piece(double x, Side side = Side::right) const {
    if (!contains(x))
      throw std::domain_error("PiecewisePoly: x = " + std::to_string(x) + " outside [" +
                              std::to_string(lower()) + ", " + std::to_string(upper()) + "]");
    const std::size_t last = num_pieces() - 1;
    if (side == Side::right) {
      auto it = std::upper_bound(breaks_.begin(), breaks_.end(), x);
      if (it == breaks_.begin()) return 0;
      return std::min<std::size_t>(static_cast<std::size_t>(it - breaks_.begin()) - 1, last);
    }
    auto it = std::lower_bound(breaks_.begin(), breaks_.end(), x);
    if (it == breaks_.begin()) return 0;
    return std::min<std::size_t>(static_cast<std::size_t>(it - breaks_.begin()) - 1, last);
  }

  double eval(double x, int deriv = 0, Side side = Side::right) const {
    if (deriv < 0) throw std::invalid_argument("PiecewisePoly::eval: negative derivative order");
    const std::size_t i = find_piece(x, side);
    return detail::horner(piece(i), x - breaks_[i], deriv);
  }

  double operator()(double x) const { return eval(x); }

  /// Evaluates the first/last piece's polynomial outside the domain.
  double eval_extrapolated(double x, int deriv = 0) const {
    std::size_t i;
    if (x < lower()) i = 0;
    else if (x > upper()) i = num_pieces() - 1;
    else i = find_piece(x);
    return detail::horner(piece(i), x - breaks_[i], deriv);
  }

  /// Evaluation on nondecreasing abscissas with a moving piece cursor.
  std::vector<double> eval_sorted(std::span<const double> xs, int deriv = 0) const {
    std::vector<double> out(xs.size());
    std::size_t i = 0;
    const std::size_t last = num_pieces() - 1;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const double x = xs[j];
      if (!contains(x)) throw std::domain_error("PiecewisePoly::eval_sorted: x outside domain");
      if (j > 0 && x < xs[j - 1]) throw std::invalid_argument("PiecewisePoly::eval_sorted: abscissas not sorted");
      while (i < last && x >= breaks_[i + 1]) ++i;
      out[j] = detail::horner(piece(i), x - breaks_[i], deriv);
    }
    return out;
  }

  PiecewisePoly derivative(int order = 1) const {
    if (order < 0) throw std::invalid_argument("PiecewisePoly::derivative: negative order");
    if (order == 0) return *this;
    const int nd = std::max(0, degree_ - order);
    const std::size_t s_new = static_cast<std::size_t>(nd) + 1;
    std::vector<double> c(num_pieces() * s_new, 0.0);
    if (order <= degree_) {
      for (std::size_t i = 0; i < num_pieces(); ++i) {
        auto src = piece(i);
        for (int p = 0; p <= nd; ++p) {
          double f = 1.0;
          for (int q = 1; q <= order; ++q) f *= (p + q);
          c[i * s_new + p] = src[p + order] * f;
        }
      }
    }
    const int sm = smoothness_ < 0 ? -1 : std::max(-1, smoothness_ - order);
    return PiecewisePoly(breaks_, nd, std::move(c), sm);
  }

  /// `order`-fold primitive whose value and first order-1 derivatives vanish
  /// at `anchor`.
  PiecewisePoly antiderivative(int order, double anchor) const {
    if (order < 1) throw std::invalid_argument("PiecewisePoly::antiderivative: order must be >= 1");
    if (!contains(anchor)) throw std::domain_error("PiecewisePoly::antiderivative: anchor outside domain");
    PiecewisePoly cur = *this;
    for (int r = 0; r < order; ++r) cur = cur.integrate_once(anchor);
    return cur;
  }

  /// Same function on a finer breakpoint set (must contain the current one).
  PiecewisePoly refined(std::span<const double> extra) const {
    std::vector<double> nb = breaks_;
    for (double x : extra)
      if (x > lower() && x < upper()) nb.push_back(x);
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    std::vector<double> c;
    c.reserve((nb.size() - 1) * stride());
    std::size_t src = 0;
    for (std::size_t j = 0; j + 1 < nb.size(); ++j) {
      while (src + 1 < num_pieces() && nb[j] >= breaks_[src + 1]) ++src;
      auto shifted = detail::taylor_shift(piece(src), nb[j] - breaks_[src]);
      c.insert(c.end(), shifted.begin(), shifted.end());
    }
    return PiecewisePoly(std::move(nb), degree_, std::move(c), smoothness_);
  }

  /// a*this + b*other on the union of breakpoints; domains must agree.
  friend PiecewisePoly linear_combination(double a, const PiecewisePoly& f, double b,
                                          const PiecewisePoly& g) {
    const double tol = 1e-12 * std::max({1.0, std::abs(f.lower()), std::abs(f.upper())});
    if (std::abs(f.lower() - g.lower()) > tol || std::abs(f.upper() - g.upper()) > tol)
      throw std::invalid_argument("linear_combination: domains differ");
    auto fr = f.refined(g.breaks_);
    auto gr = g.refined(f.breaks_);
    if (fr.breaks_.size() != gr.breaks_.size())
      throw std::invalid_argument("linear_combination: breakpoint merge failed");
    const int deg = std::max(f.degree_, g.degree_);
    const std::size_t s = static_cast<std::size_t>(deg) + 1;
    std::vector<double> c(fr.num_pieces() * s, 0.0);
    for (std::size_t i = 0; i < fr.num_pieces(); ++i) {
      auto pf = fr.piece(i);
      auto pg = gr.piece(i);
      for (std::size_t p = 0; p < pf.size(); ++p) c[i * s + p] += a * pf[p];
      for (std::size_t p = 0; p < pg.size(); ++p) c[i * s + p] += b * pg[p];
    }
    int sm = std::min(f.smoothness_, g.smoothness_);
    return PiecewisePoly(fr.breaks_, deg, std::move(c), sm);
  }

  PiecewisePoly scaled(double a) const {
    auto c = coeffs_;
    for (auto& v : c) v *= a;
    return PiecewisePoly(breaks_, degree_, std::move(c), smoothness_);
  }

  /// Largest relative mismatch of derivatives 0..upto between the two sides of
  /// the interior breakpoints, relative to the size of the terms summed.
  double continuity_defect(int upto) const {
    double worst = 0.0;
    for (std::size_t i = 1; i < num_pieces(); ++i) {
      const double h = breaks_[i] - breaks_[i - 1];
      for (int d = 0; d <= std::min(upto, degree_); ++d) {
        const double left = detail::horner(piece(i - 1), h, d);
        const double right = detail::horner(piece(i), 0.0, d);
        const double scale = std::max({1.0, std::abs(left), std::abs(right), detail::horner_magnitude(piece(i - 1), h, d)});
        worst = std::max(worst, std::abs(left - right) / scale);
      }
    }
    return worst;
  }

 private:
  std::size_t stride() const { return static_cast<std::size_t>(degree_) + 1; }
  double slack() const { return 1e-13 * std::max({1.0, std::abs(lower()), std::abs(upper())}); }

  PiecewisePoly integrate_once(double anchor) const {
    const int nd = degree_ + 1;
    const std::size_t s = static_cast<std::size_t>(nd) + 1;
    std::vector<double> c(num_pieces() * s, 0.0);
    double carry = 0.0;
    for (std::size_t i = 0; i < num_pieces(); ++i) {
      auto src = piece(i);
      double* dst = c.data() + i * s;
      dst[0] = carry;
      for (int p = 0; p <= degree_; ++p) dst[p + 1] = src[p] / (p + 1);
      carry = detail::horner({dst, s}, breaks_[i + 1] - breaks_[i]);
    }
    PiecewisePoly out(breaks_, nd, std::move(c), smoothness_ < 0 ? 0 : smoothness_ + 1);
    const double shift = out.eval(anchor);
    for (std::size_t i = 0; i < num_pieces(); ++i) out.coeffs_[i * s] -= shift;
    return out;
  }

  std::vector<double> breaks_;
  int degree_;
  std::vector<double> coeffs_;
  int smoothness_;
};

/// Grid plus golden-section estimate of sup |f| over the domain.
struct SupNorm {
  double value = 0.0;
  double argmax = 0.0;
};

namespace detail {

/// sup of absval(u) over u in [0, h]: uniform grid, then golden section in
/// the bracket around the grid maximiser.
template <class F>
SupNorm sup_on_interval(F&& absval, double h, int points) {
  if (points < 2) points = 2;
  int arg = 0;
  double vmax = -1.0;
  for (int j = 0; j <= points; ++j) {
    const double v = absval(h * j / points);
    if (v > vmax) {
      vmax = v;
      arg = j;
    }
  }
  double lo = h * std::max(0, arg - 1) / points;
  double hi = h * std::min(points, arg + 1) / points;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = absval(x1), f2 = absval(x2);
  for (int it = 0; it < 100 && hi - lo > 1e-15 * std::max(1.0, h); ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = absval(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = absval(x1);
    }
  }
  SupNorm out{vmax, h * arg / points};
  if (f1 > out.value) out = {f1, x1};
  if (f2 > out.value) out = {f2, x2};
  return out;
}

}  // namespace detail

inline SupNorm sup_norm(const PiecewisePoly& f, int points_per_piece = 2048) {
  SupNorm best{-1.0, f.lower()};
  for (std::size_t i = 0; i < f.num_pieces(); ++i) {
    const double a = f.breakpoints()[i];
    const double h = f.breakpoints()[i + 1] - a;
    const auto c = f.piece(i);
    auto r = detail::sup_on_interval([&](double u) { return std::abs(detail::horner(c, u)); }, h, points_per_piece);
    if (r.value > best.value) best = {r.value, a + r.argmax};
  }
  return best;
}

/// Same estimate for an arbitrary function on the pieces of `breaks`.
template <class F>
SupNorm sup_norm_fn(F&& f, std::span<const double> breaks, int points_per_piece = 2048) {
  SupNorm best{-1.0, breaks.front()};
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i];
    const double h = breaks[i + 1] - a;
    auto r = detail::sup_on_interval([&](double u) { return std::abs(f(a + u)); }, h, points_per_piece);
    if (r.value > best.value) best = {r.value, a + r.argmax};
  }
  return best;
}

}  // namespace kmono
