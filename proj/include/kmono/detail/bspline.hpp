// B-spline collocation on [0, 1] used by the interpolation operators.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmono/piecewise_poly.hpp"

namespace kmono {

/// Thrown when a collocation matrix is too ill-conditioned to trust.
class IllConditionedError : public std::runtime_error {
 public:
  IllConditionedError(const std::string& what, double condition)
      : std::runtime_error(what + " (condition estimate " + std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

namespace detail {

using quad = boost::multiprecision::float128;
using wide = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<50>, boost::multiprecision::et_off>;

/// One collocation condition: s^{(order)}(u) = value.
template <class T = double>
struct Collocation {
  T u;
  int order;
  T value;
};

/// Clamped B-spline basis on [0, 1]. Knots and arithmetic are in T.
template <class T = double>
class BSplineBasis {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  // Clamped knot vector of the given degree on [0, 1] with simple interior knots.
  BSplineBasis(int degree, std::vector<T> interior) : p_(degree) {
    knots_.assign(static_cast<std::size_t>(p_ + 1), T(0));
    knots_.insert(knots_.end(), interior.begin(), interior.end());
    knots_.insert(knots_.end(), static_cast<std::size_t>(p_ + 1), T(1));
    breaks_.push_back(T(0));
    breaks_.insert(breaks_.end(), interior.begin(), interior.end());
    breaks_.push_back(T(1));
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      if (!(breaks_[i] > breaks_[i - 1]))
        throw std::invalid_argument("BSplineBasis: interior knots must be strictly increasing inside (0, 1)");
  }

  int degree() const { return p_; }
  std::size_t size() const { return knots_.size() - static_cast<std::size_t>(p_) - 1; }
  const std::vector<T>& breaks() const { return breaks_; }

  std::size_t find_span(const T& u) const {
    const std::size_t n = size() - 1;
    if (u >= knots_[n + 1]) return n;
    if (u <= knots_[static_cast<std::size_t>(p_)]) return static_cast<std::size_t>(p_);
    auto it = std::upper_bound(knots_.begin() + p_, knots_.begin() + static_cast<long>(n) + 1, u);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
  }

  /// Derivatives 0..nd of the p+1 nonzero basis functions at u (span given).
  /// Row d holds the d-th derivatives of N_{span-p}, ..., N_{span}.
  std::vector<std::vector<T>> derivatives(std::size_t span, const T& u, int nd) const {
    const int p = p_;
    std::vector<std::vector<T>> ndu(p + 1, std::vector<T>(p + 1, T(0)));
    std::vector<T> left(p + 1), right(p + 1);
    ndu[0][0] = T(1);
    for (int j = 1; j <= p; ++j) {
      left[j] = u - knots_[span + 1 - j];
      right[j] = knots_[span + j] - u;
      T saved = 0;
      for (int r = 0; r < j; ++r) {
        ndu[j][r] = right[r + 1] + left[j - r];
        const T temp = ndu[r][j - 1] / ndu[j][r];
        ndu[r][j] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      ndu[j][j] = saved;
    }
    std::vector<std::vector<T>> ders(nd + 1, std::vector<T>(p + 1, T(0)));
    for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
    std::vector<std::vector<T>> a(2, std::vector<T>(p + 1, T(0)));
    for (int r = 0; r <= p; ++r) {
      int s1 = 0, s2 = 1;
      a[0][0] = T(1);
      for (int kk = 1; kk <= std::min(nd, p); ++kk) {
        T d = 0;
        const int rk = r - kk, pk = p - kk;
        if (r >= kk) {
          a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
          d = a[s2][0] * ndu[rk][pk];
        }
        const int j1 = (rk >= -1) ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? kk - 1 : p - r;
        for (int j = j1; j <= j2; ++j) {
          a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
          d += a[s2][j] * ndu[rk + j][pk];
        }
        if (r <= pk) {
          a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
          d += a[s2][kk] * ndu[r][pk];
        }
        ders[kk][r] = d;
        std::swap(s1, s2);
      }
    }
    T f = p;
    for (int kk = 1; kk <= std::min(nd, p); ++kk) {
      for (int j = 0; j <= p; ++j) ders[kk][j] *= f;
      f *= (p - kk);
    }
    return ders;
  }

  /// Solves the square collocation problem and returns the spline as a
  /// piecewise polynomial on [0, 1]. Throws IllConditionedError when the
  /// row-equilibrated matrix has 1-norm condition number above `cond_limit`.
  PiecewisePoly interpolate(const std::vector<Collocation<T>>& conds, double cond_limit,
                            double* condition_out = nullptr) const {
    const std::size_t n = size();
    if (conds.size() != n)
      throw std::invalid_argument("BSplineBasis::interpolate: expected " + std::to_string(n) +
                                  " conditions, got " + std::to_string(conds.size()));
    const long N = static_cast<long>(n);
    Matrix A = Matrix::Zero(N, N);
    Vector rhs(N);
    for (std::size_t r = 0; r < n; ++r) {
      const auto& c = conds[r];
      const std::size_t span = find_span(c.u);
      const auto d = derivatives(span, c.u, c.order);
      T rowmax = 0;
      for (int i = 0; i <= p_; ++i) {
        const T v = c.order <= p_ ? d[c.order][i] : T(0);
        A(static_cast<long>(r), static_cast<long>(span) - p_ + i) = v;
        using std::abs;
        rowmax = std::max<T>(rowmax, abs(v));
      }
      if (rowmax == 0) throw IllConditionedError("BSplineBasis::interpolate: empty collocation row", INFINITY);
      A.row(static_cast<long>(r)) /= rowmax;
      rhs(static_cast<long>(r)) = c.value / rowmax;
    }
    Eigen::PartialPivLU<Matrix> lu(A);
    // Exact 1-norm condition number; the systems are small.
    const Matrix inv = lu.inverse();
    const T anorm = A.cwiseAbs().colwise().sum().maxCoeff();
    const T inorm = inv.cwiseAbs().colwise().sum().maxCoeff();
    double cond = static_cast<double>(anorm * inorm);
    if (!std::isfinite(cond)) cond = INFINITY;
    if (condition_out) *condition_out = cond;
    if (!(cond <= cond_limit)) throw IllConditionedError("collocation matrix is ill-conditioned", cond);
    const Vector coef = lu.solve(rhs);
    return to_piecewise(coef);
  }

  PiecewisePoly to_piecewise(const Vector& coef) const {
    const std::size_t pieces = breaks_.size() - 1;
    const std::size_t s = static_cast<std::size_t>(p_) + 1;
    std::vector<double> c(pieces * s, 0.0);
    for (std::size_t i = 0; i < pieces; ++i) {
      const T& u = breaks_[i];
      const std::size_t span = static_cast<std::size_t>(p_) + i;
      const auto d = derivatives(span, u, p_);
      for (int j = 0; j <= p_; ++j) {
        T v = 0;
        for (int r = 0; r <= p_; ++r) v += d[j][r] * coef(static_cast<long>(span) - p_ + r);
        c[i * s + j] = static_cast<double>(v / T(factorial(j)));
      }
    }
    std::vector<double> br;
    for (const T& b : breaks_) br.push_back(static_cast<double>(b));
    return PiecewisePoly(std::move(br), p_, std::move(c), p_ - 1);
  }

 private:
  int p_;
  std::vector<T> knots_;
  std::vector<T> breaks_;
};

/// Maps a piecewise polynomial in u = (x - x0)/L back to x. `breaks`, when
/// given, replaces the mapped breakpoints by their exact x values.
inline PiecewisePoly from_unit_interval(const PiecewisePoly& pu, double x0, double L, double value_scale = 1.0,
                                        const std::vector<double>* breaks = nullptr) {
  std::vector<double> br(pu.breakpoints());
  if (breaks) {
    if (breaks->size() != br.size()) throw std::invalid_argument("from_unit_interval: breakpoint count mismatch");
    br = *breaks;
  } else {
    for (auto& b : br) b = x0 + L * b;
    br.front() = x0;
    br.back() = x0 + L;
  }
  std::vector<double> c(pu.coefficients());
  const std::size_t s = static_cast<std::size_t>(pu.degree()) + 1;
  for (std::size_t i = 0; i < pu.num_pieces(); ++i) {
    double f = value_scale;
    for (std::size_t j = 0; j < s; ++j) {
      c[i * s + j] *= f;
      f /= L;
    }
  }
  return PiecewisePoly(std::move(br), pu.degree(), std::move(c), pu.smoothness());
}

}  // namespace detail
}  // namespace kmono
