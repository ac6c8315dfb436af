// Grenander estimator: left derivative of the least concave majorant of the
// empirical distribution function, by pool-adjacent-violators.
#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "kmono/mixture.hpp"

namespace kmono {

/// Left-continuous step function: values[i] on (knots[i], knots[i+1]], zero
/// outside (knots.front(), knots.back()].
struct StepFunction {
  std::vector<double> knots;
  std::vector<double> values;

  double operator()(double x) const {
    if (knots.size() < 2 || x <= knots.front() || x > knots.back()) return 0.0;
    auto it = std::lower_bound(knots.begin(), knots.end(), x);
    return values[static_cast<std::size_t>(it - knots.begin()) - 1];
  }

  /// Integral from knots.front() to x.
  double integral(double x) const {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
      if (x <= knots[i]) break;
      s += values[i] * (std::min(x, knots[i + 1]) - knots[i]);
    }
    return s;
  }
};

/// Slopes of the least concave majorant of the points (xs[i], ys[i]); xs
/// strictly increasing. Returns a StepFunction over xs.
inline StepFunction least_concave_majorant(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("least_concave_majorant: need >= 2 points");
  struct Block {
    double dx, dy;
    std::size_t end;  // index of the right end point
  };
  std::vector<Block> st;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    Block b{xs[i] - xs[i - 1], ys[i] - ys[i - 1], i};
    if (!(b.dx > 0.0)) throw std::invalid_argument("least_concave_majorant: abscissae must increase");
    // Pool while the slope would increase.
    while (!st.empty() && st.back().dy * b.dx <= b.dy * st.back().dx) {
      b.dx += st.back().dx;
      b.dy += st.back().dy;
      st.pop_back();
    }
    st.push_back(b);
  }
  StepFunction f;
  f.knots.push_back(xs.front());
  for (const auto& b : st) {
    f.knots.push_back(xs[b.end]);
    f.values.push_back(b.dy / b.dx);
  }
  return f;
}

/// Greatest convex minorant slopes: the negated majorant of -ys.
inline StepFunction greatest_convex_minorant(const std::vector<double>& xs, const std::vector<double>& ys) {
  std::vector<double> neg(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) neg[i] = -ys[i];
  auto f = least_concave_majorant(xs, neg);
  for (auto& v : f.values) v = -v;
  return f;
}

/// Nonincreasing density estimate from the sample; integrates to one.
inline StepFunction grenander(const Sample& sample) {
  if (sample.n() == 0) throw std::domain_error("grenander: empty sample");
  std::vector<double> xs{0.0}, ys{0.0}, counts;
  std::vector<double> d;
  sample.distinct(d, counts);
  double cum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    cum += counts[i];
    xs.push_back(d[i]);
    ys.push_back(cum / static_cast<double>(sample.n()));
  }
  return least_concave_majorant(xs, ys);
}

}  // namespace kmono
