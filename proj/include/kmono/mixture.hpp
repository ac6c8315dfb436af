// Scale mixtures of Beta(1, k) densities and the data containers used by the
// estimators.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmono/piecewise_poly.hpp"

namespace kmono {

inline void check_k(int k, int lo = 1) {
  if (k < lo || k > kMaxK)
    throw std::domain_error("k = " + std::to_string(k) + " outside [" + std::to_string(lo) + ", " +
                            std::to_string(kMaxK) + "]");
}

enum class MassConstraint { unit, free };

class MixingMeasure {
 public:
  MixingMeasure() = default;
  MixingMeasure(std::vector<double> atoms, std::vector<double> weights,
                MassConstraint constraint = MassConstraint::free)
      : atoms_(std::move(atoms)), weights_(std::move(weights)), constraint_(constraint) {
    if (atoms_.size() != weights_.size())
      throw std::invalid_argument("MixingMeasure: atoms and weights differ in length");
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (!(atoms_[i] > 0.0)) throw std::domain_error("MixingMeasure: atoms must be positive");
      if (i > 0 && !(atoms_[i] > atoms_[i - 1]))
        throw std::invalid_argument("MixingMeasure: atoms must be strictly increasing");
      if (!(weights_[i] >= 0.0)) throw std::domain_error("MixingMeasure: weights must be nonnegative");
    }
    if (constraint_ == MassConstraint::unit && std::abs(total_mass() - 1.0) > 1e-12)
      throw std::domain_error("MixingMeasure: unit mass constraint violated");
  }

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  MassConstraint constraint() const { return constraint_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  double total_mass() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

  /// Right-continuous distribution function sum_{t_i <= t} w_i.
  double cdf(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < atoms_.size() && atoms_[i] <= t; ++i) s += weights_[i];
    return s;
  }

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
  MassConstraint constraint_ = MassConstraint::free;
};

/// Sorted positive observations.
class Sample {
 public:
  Sample() = default;
  explicit Sample(std::vector<double> values) : values_(std::move(values)) {
    std::sort(values_.begin(), values_.end());
    for (double v : values_)
      if (!(v > 0.0) || !std::isfinite(v)) throw std::domain_error("Sample: observations must be positive and finite");
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t n() const { return values_.size(); }
  double min() const { return values_.front(); }
  double max() const { return values_.back(); }

  /// Empirical distribution function (right-continuous).
  double ecdf(double x) const {
    auto it = std::upper_bound(values_.begin(), values_.end(), x);
    return static_cast<double>(it - values_.begin()) / static_cast<double>(n());
  }

  /// Distinct values and their multiplicities.
  void distinct(std::vector<double>& xs, std::vector<double>& counts) const {
    xs.clear();
    counts.clear();
    for (double v : values_) {
      if (!xs.empty() && v == xs.back()) {
        counts.back() += 1.0;
      } else {
        xs.push_back(v);
        counts.push_back(1.0);
      }
    }
  }

 private:
  std::vector<double> values_;
};

/// k (y - x)_+^{k-1} / y^k.
inline double beta_kernel(int k, double y, double x) {
  check_k(k);
  if (!(y > 0.0)) throw std::domain_error("beta_kernel: y must be positive");
  if (x < 0.0) throw std::domain_error("beta_kernel: x must be nonnegative");
  if (x >= y) return 0.0;
  return k * detail::pow_int(y - x, k - 1) / detail::pow_int(y, k);
}

namespace detail {

/// Kernel with the left-limit convention at x == y, so that for k = 1 an atom
/// placed at an observation still covers it. Used inside the estimators.
inline double kernel_left(int k, double y, double x) {
  if (x > y) return 0.0;
  return k * pow_int(y - x, k - 1) / pow_int(y, k);
}

}  // namespace detail

inline double mixture_density(const MixingMeasure& mm, int k, double x) {
  check_k(k);
  double s = 0.0;
  for (std::size_t i = 0; i < mm.size(); ++i) s += mm.weights()[i] * beta_kernel(k, mm.atoms()[i], x);
  return s;
}

/// Exact spline of degree k-1 on [0, max atom] (extended by a zero piece up
/// to `upper` when that is larger).
inline PiecewisePoly mixture_to_piecewise(const MixingMeasure& mm, int k,
                                          std::optional<double> upper = std::nullopt) {
  check_k(k);
  const int deg = k - 1;
  const std::size_t s = static_cast<std::size_t>(k);
  if (mm.empty()) {
    const double b = upper.value_or(1.0);
    return PiecewisePoly({0.0, b > 0.0 ? b : 1.0}, deg, std::vector<double>(s, 0.0), deg);
  }
  std::vector<double> br{0.0};
  br.insert(br.end(), mm.atoms().begin(), mm.atoms().end());
  const bool tail = upper && *upper > mm.atoms().back();
  if (tail) br.push_back(*upper);
  const std::size_t pieces = br.size() - 1;
  std::vector<double> c(pieces * s, 0.0);
  const auto& t = mm.atoms();
  const auto& w = mm.weights();
  for (std::size_t j = 0; j < mm.size(); ++j) {
    const double scale = w[j] * k / detail::pow_int(t[j], k);
    // Atom j contributes to pieces 0..j; (t_j - b - u)^{k-1} expanded in u.
    for (std::size_t i = 0; i <= j; ++i) {
      const double h = t[j] - br[i];
      for (int p = 0; p <= deg; ++p) {
        const double sign = (p % 2 == 0) ? 1.0 : -1.0;
        c[i * s + p] += scale * sign * detail::binomial(deg, p) * detail::pow_int(h, deg - p);
      }
    }
  }
  return PiecewisePoly(std::move(br), deg, std::move(c), k - 2);
}

}  // namespace kmono
