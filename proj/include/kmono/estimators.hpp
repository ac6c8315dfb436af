// Least squares and maximum likelihood estimators of a k-monotone density,
// fitted as finite mixtures of the kernels k (y - x)_+^{k-1} / y^k by support
// reduction, and their characterization certificates.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kmono/mixture.hpp"
#include "kmono/piecewise_poly.hpp"
#include "kmono/processes.hpp"

namespace kmono {

enum class EstimatorKind { lse, mle };

inline const char* to_string(EstimatorKind e) { return e == EstimatorKind::lse ? "lse" : "mle"; }

struct FitOptions {
  int max_iter = 500;
  double tol = 1e-9;  // stopping slack, relative to the certificate scale
  double tol_ineq = 1e-7;
  double tol_eq = 1e-6;
  int grid_density = 16;  // certificate abscissas per piece
  bool polish = true;     // Newton refinement of weights and knots
};

/// Slack and residuals are divided by `scale`, so passed is
/// min_slack >= -tol_ineq && max_knot_residual <= tol_eq (&& the derivative
/// residual <= tol_eq).
struct CharacterizationReport {
  EstimatorKind kind = EstimatorKind::lse;
  double min_slack = 0.0;
  double argmin_slack = 0.0;
  double max_knot_residual = 0.0;
  double max_derivative_residual = 0.0;
  double scale = 1.0;
  double tol_ineq = 1e-7;
  double tol_eq = 1e-6;
  std::vector<double> grid;
  bool passed = false;
};

struct FitResult {
  EstimatorKind kind = EstimatorKind::lse;
  int k = 1;
  PiecewisePoly estimate = PiecewisePoly::polynomial(0.0, 1.0, {0.0});
  MixingMeasure mixing;
  std::vector<double> knots;
  double objective = 0.0;  // Phi_n for the LSE, -l_n for the MLE
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  CharacterizationReport certificate;
  std::vector<std::string> warnings;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, FitResult best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const FitResult& best() const { return best_; }

 private:
  FitResult best_;
};

namespace detail {

/// int_0^{min(t,s)} (t - x)^p (s - x)^q dx, summed without cancellation.
inline double kernel_integral(double t, double s, int p, int q) {
  if (t > s) {
    std::swap(t, s);
    std::swap(p, q);
  }
  if (!(t > 0.0)) return 0.0;
  const double d = s - t;
  double sum = 0.0;
  for (int r = 0; r <= q; ++r)
    sum += binomial(q, r) * pow_int(d, q - r) * pow_int(t, p + r + 1) / (p + r + 1);
  return sum;
}

inline double kernel_integral_dt(double t, double s, int p, int q) {
  if (p > 0) return p * kernel_integral(t, s, p - 1, q);
  return t < s ? pow_int(s - t, q) : 0.0;
}

inline double kernel_integral_ds(double t, double s, int p, int q) {
  if (q > 0) return q * kernel_integral(t, s, p, q - 1);
  return s < t ? pow_int(t - s, p) : 0.0;
}

/// k-fold integral from 0 of a unit atom's kernel at s, evaluated at t, with
/// the partial derivatives the Newton polish needs.
struct AtomIntegral {
  double h, ht, htt, hs, hts;
};

inline AtomIntegral atom_integral(int k, double t, double s) {
  const double c = k / factorial(k - 1);
  const double sk = pow_int(s, k);
  const double J = kernel_integral(t, s, k - 1, k - 1);
  const double Jt = kernel_integral_dt(t, s, k - 1, k - 1);
  const double Js = kernel_integral_ds(t, s, k - 1, k - 1);
  double Jtt = 0.0, Jts = 0.0;
  if (k >= 2) {
    Jtt = (k - 1) * kernel_integral_dt(t, s, k - 2, k - 1);
    Jts = (k - 1) * kernel_integral_ds(t, s, k - 2, k - 1);
  }
  return {c * J / sk, c * Jt / sk, c * Jtt / sk, c * (Js / sk - k * J / (sk * s)),
          c * (Jts / sk - k * Jt / (sk * s))};
}

/// Minimizes 0.5 w'Pw - c'w over w >= 0 by the Lawson-Hanson active set
/// method, warm-started from w (entries > 0 form the initial passive set).
inline std::vector<double> nnqp(const Eigen::MatrixXd& P, const Eigen::VectorXd& c, std::vector<double> w) {
  const long m = P.rows();
  if (static_cast<long>(w.size()) != m) w.assign(static_cast<std::size_t>(m), 0.0);
  std::vector<char> passive(static_cast<std::size_t>(m), 0);
  for (long i = 0; i < m; ++i) {
    if (w[static_cast<std::size_t>(i)] > 0.0) passive[static_cast<std::size_t>(i)] = 1;
    else w[static_cast<std::size_t>(i)] = 0.0;
  }
  const double gtol = 1e-14 * (1.0 + c.cwiseAbs().maxCoeff());
  auto solve_passive = [&](std::vector<long>& idx, Eigen::VectorXd& z) {
    idx.clear();
    for (long i = 0; i < m; ++i)
      if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
    const long q = static_cast<long>(idx.size());
    Eigen::MatrixXd A(q, q);
    Eigen::VectorXd b(q);
    for (long a = 0; a < q; ++a) {
      b(a) = c(idx[static_cast<std::size_t>(a)]);
      for (long e = 0; e < q; ++e) A(a, e) = P(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(e)]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    z = ldlt.solve(b);
    if (ldlt.info() != Eigen::Success || !z.allFinite()) z = A.completeOrthogonalDecomposition().solve(b);
  };
  const int max_outer = 3 * static_cast<int>(m) + 50;
  for (int outer = 0; outer < max_outer; ++outer) {
    for (int inner = 0; inner <= m; ++inner) {
      std::vector<long> idx;
      Eigen::VectorXd z;
      if (std::none_of(passive.begin(), passive.end(), [](char p) { return p; })) break;
      solve_passive(idx, z);
      bool feasible = true;
      for (long a = 0; a < z.size(); ++a)
        if (!(z(a) > 0.0)) feasible = false;
      if (feasible) {
        for (long a = 0; a < z.size(); ++a) w[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])] = z(a);
        break;
      }
      double alpha = 1.0;
      long drop = -1;
      for (long a = 0; a < z.size(); ++a) {
        if (z(a) > 0.0) continue;
        const double wi = w[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
        const double r = wi / (wi - z(a));
        if (r < alpha) {
          alpha = r;
          drop = idx[static_cast<std::size_t>(a)];
        }
      }
      for (long a = 0; a < z.size(); ++a) {
        auto& wi = w[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
        wi += alpha * (z(a) - wi);
      }
      if (drop >= 0) {
        w[static_cast<std::size_t>(drop)] = 0.0;
        passive[static_cast<std::size_t>(drop)] = 0;
      }
      for (long i = 0; i < m; ++i)
        if (passive[static_cast<std::size_t>(i)] && !(w[static_cast<std::size_t>(i)] > 0.0)) {
          passive[static_cast<std::size_t>(i)] = 0;
          w[static_cast<std::size_t>(i)] = 0.0;
        }
    }
    Eigen::VectorXd wv(m);
    for (long i = 0; i < m; ++i) wv(i) = w[static_cast<std::size_t>(i)];
    const Eigen::VectorXd grad = c - P * wv;
    long best = -1;
    double gbest = gtol;
    for (long i = 0; i < m; ++i)
      if (!passive[static_cast<std::size_t>(i)] && grad(i) > gbest) {
        gbest = grad(i);
        best = i;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = 1;
    w[static_cast<std::size_t>(best)] = 0.0;
  }
  return w;
}

struct Candidate {
  double x;
  double value;
};

/// Most negative local minimum of f in each gap between consecutive atoms,
/// among those below `threshold`. Local minima of the node values are
/// refined by Brent's method on the neighbouring node interval.
template <class F>
std::vector<Candidate> gap_minima(F&& f, const std::vector<double>& nodes, const std::vector<double>& atoms,
                                  double threshold, bool refine) {
  const std::size_t N = nodes.size();
  std::vector<double> fv(N);
  for (std::size_t i = 0; i < N; ++i) fv[i] = f(nodes[i]);
  std::vector<Candidate> best(atoms.size() + 1, Candidate{0.0, threshold});
  std::vector<char> have(atoms.size() + 1, 0);
  for (std::size_t i = 0; i < N; ++i) {
    const bool left_ok = i == 0 || fv[i] <= fv[i - 1];
    const bool right_ok = i + 1 == N || fv[i] <= fv[i + 1];
    if (!left_ok || !right_ok) continue;
    Candidate c{nodes[i], fv[i]};
    if (refine && N > 1) {
      const double a = nodes[i == 0 ? 0 : i - 1];
      const double b = nodes[i + 1 == N ? N - 1 : i + 1];
      auto r = boost::math::tools::brent_find_minima(f, a, b, 48);
      if (r.second < c.value) c = {r.first, r.second};
    }
    if (!(c.value < threshold)) continue;
    auto it = std::lower_bound(atoms.begin(), atoms.end(), c.x);
    bool on_atom = false;
    const double eps = 1e-12 * std::max(1.0, std::abs(c.x));
    if (it != atoms.end() && std::abs(*it - c.x) <= eps) on_atom = true;
    if (it != atoms.begin() && std::abs(*(it - 1) - c.x) <= eps) on_atom = true;
    if (on_atom) continue;
    const std::size_t g = static_cast<std::size_t>(std::upper_bound(atoms.begin(), atoms.end(), c.x) - atoms.begin());
    if (!have[g] || c.value < best[g].value || (c.value == best[g].value && c.x < best[g].x)) {
      best[g] = c;
      have[g] = 1;
    }
  }
  std::vector<Candidate> out;
  for (std::size_t g = 0; g < best.size(); ++g)
    if (have[g]) out.push_back(best[g]);
  return out;
}

/// Scan abscissas: breakpoints of the processes in [lo, top], `per_piece`
/// points inside each piece, then a geometric tail to `tail_factor * top`.
inline std::vector<double> scan_nodes(const std::vector<double>& data, const std::vector<double>& atoms, double lo,
                                      double top, int per_piece, double tail_factor) {
  std::vector<double> br;
  br.reserve(data.size() + atoms.size() + 2);
  std::merge(data.begin(), data.end(), atoms.begin(), atoms.end(), std::back_inserter(br));
  br.push_back(top);
  br.erase(std::remove_if(br.begin(), br.end(), [&](double x) { return x < lo || x > top; }), br.end());
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  std::vector<double> nodes;
  nodes.reserve(br.size() * static_cast<std::size_t>(per_piece + 1) + 64);
  for (std::size_t i = 0; i < br.size(); ++i) {
    nodes.push_back(br[i]);
    if (i + 1 < br.size())
      for (int j = 1; j < per_piece; ++j) nodes.push_back(br[i] + (br[i + 1] - br[i]) * j / per_piece);
  }
  for (double x = top * 1.05; x < tail_factor * top; x *= 1.05) nodes.push_back(x);
  return nodes;
}

inline void merge_close(std::vector<double>& atoms, std::vector<double>& w, double rel) {
  std::vector<double> a2, w2;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (!a2.empty() && atoms[i] - a2.back() <= rel * atoms[i]) {
      const double tot = w2.back() + w[i];
      a2.back() = tot > 0.0 ? (w2.back() * a2.back() + w[i] * atoms[i]) / tot : 0.5 * (a2.back() + atoms[i]);
      w2.back() = tot;
    } else {
      a2.push_back(atoms[i]);
      w2.push_back(w[i]);
    }
  }
  atoms = std::move(a2);
  w = std::move(w2);
}

inline void prune_zero(std::vector<double>& atoms, std::vector<double>& w) {
  std::vector<double> a2, w2;
  for (std::size_t i = 0; i < atoms.size(); ++i)
    if (w[i] > 0.0) {
      a2.push_back(atoms[i]);
      w2.push_back(w[i]);
    }
  atoms = std::move(a2);
  w = std::move(w2);
}

/// Unconstrained least squares criterion Phi_n(g) = 0.5 int g^2 - int g dG_n.
class LseProblem {
 public:
  LseProblem(const Sample& s, int k)
      : k_(k), xmin_(s.min()), xmax_(s.max()), upper_(1e3 * s.max()), Y_(yn_piecewise(s, k, 1e3 * s.max())) {
    std::vector<double> c;
    s.distinct(data_, c);
  }

  static constexpr EstimatorKind kind = EstimatorKind::lse;
  int k() const { return k_; }
  const std::vector<double>& data() const { return data_; }
  double lo() const { return xmin_; }
  double top(const std::vector<double>& atoms) const { return std::max(xmax_, atoms.empty() ? 0.0 : atoms.back()); }
  double upper() const { return upper_; }

  void prepare(const std::vector<double>& atoms, const std::vector<double>& w) {
    H_ = htilde_piecewise(MixingMeasure(atoms, w), k_, upper_);
    scale_ = 1.0 + std::max(H_.eval(top(atoms)), Y_.eval(top(atoms)));
  }
  double scale() const { return scale_; }

  double slack(double t) const { return H_.eval(t) - Y_.eval(t); }
  double direction(double t) const { return factorial(k_) * slack(t) / pow_int(t, k_); }

  std::vector<double> initial_atoms() const { return {}; }
  std::vector<double> initial_weights() const { return {}; }

  std::vector<double> solve_restricted(const std::vector<double>& atoms, const std::vector<double>& w0) const {
    Eigen::MatrixXd Q;
    Eigen::VectorXd b;
    system(atoms, Q, b);
    return nnqp(Q, b, w0);
  }

  double objective(const std::vector<double>& atoms, const std::vector<double>& w) const {
    Eigen::MatrixXd Q;
    Eigen::VectorXd b;
    system(atoms, Q, b);
    const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<long>(w.size()));
    return 0.5 * wv.dot(Q * wv) - b.dot(wv);
  }

  /// Rows D(tau_i)/scale and D'(tau_i)/scale; columns (w, tau).
  void newton_system(const std::vector<double>& atoms, const std::vector<double>& w, Eigen::VectorXd& r,
                     Eigen::MatrixXd& J) const {
    const long m = static_cast<long>(atoms.size());
    r.resize(2 * m);
    J.setZero(2 * m, 2 * m);
    for (long i = 0; i < m; ++i) {
      const double t = atoms[static_cast<std::size_t>(i)];
      double D = -Y_.eval(t), D1 = -Y_.eval(t, 1), D2 = -Y_.eval(t, 2);
      for (long j = 0; j < m; ++j) {
        const double s = atoms[static_cast<std::size_t>(j)];
        const double wj = w[static_cast<std::size_t>(j)];
        const auto a = atom_integral(k_, t, s);
        D += wj * a.h;
        D1 += wj * a.ht;
        D2 += wj * a.htt;
        J(i, j) = a.h;
        J(i, m + j) = wj * a.hs;
        J(m + i, j) = a.ht;
        J(m + i, m + j) = wj * a.hts;
      }
      J(i, m + i) += D1;
      J(m + i, m + i) += D2;
      r(i) = D;
      r(m + i) = D1;
    }
    r /= scale_;
    J /= scale_;
  }

 private:
  void system(const std::vector<double>& atoms, Eigen::MatrixXd& Q, Eigen::VectorXd& b) const {
    const long m = static_cast<long>(atoms.size());
    Q.resize(m, m);
    b.resize(m);
    const double kf = factorial(k_);
    for (long i = 0; i < m; ++i) {
      const double ti = atoms[static_cast<std::size_t>(i)];
      b(i) = kf * Y_.eval(ti) / pow_int(ti, k_);
      for (long j = 0; j <= i; ++j) {
        const double tj = atoms[static_cast<std::size_t>(j)];
        Q(i, j) = Q(j, i) = k_ * k_ * kernel_integral(ti, tj, k_ - 1, k_ - 1) / (pow_int(ti, k_) * pow_int(tj, k_));
      }
    }
  }

  int k_;
  double xmin_, xmax_, upper_;
  std::vector<double> data_;
  PiecewisePoly Y_;
  PiecewisePoly H_ = PiecewisePoly::polynomial(0.0, 1.0, {0.0});
  double scale_ = 1.0;
};

/// Adjusted log-likelihood l_n(g) = int log g dG_n - int g, reported negated.
class MleProblem {
 public:
  MleProblem(const Sample& s, int k) : k_(k), n_(static_cast<double>(s.n())), xmin_(s.min()), xmax_(s.max()) {
    s.distinct(data_, counts_);
    upper_ = 1e3 * xmax_;
  }

  static constexpr EstimatorKind kind = EstimatorKind::mle;
  int k() const { return k_; }
  const std::vector<double>& data() const { return data_; }
  double lo() const { return xmin_; }
  double top(const std::vector<double>& atoms) const { return std::max(xmax_, atoms.empty() ? 0.0 : atoms.back()); }
  double upper() const { return upper_; }

  void prepare(const std::vector<double>& atoms, const std::vector<double>& w) {
    const auto f = density(atoms, w);
    std::vector<double> a(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!(f[i] > 0.0)) throw DegenerateFitError("estimate vanishes at an observation");
      a[i] = counts_[i] / (n_ * f[i]);
    }
    R_ = truncated_power_sum(data_, a, k_ - 1, upper_);
  }
  double scale() const { return 1.0; }

  double slack(double t) const { return 1.0 - factorial(k_) * R_.eval(t) / pow_int(t, k_); }
  double direction(double t) const { return slack(t); }

  std::vector<double> initial_atoms() const { return {1.5 * xmax_}; }
  std::vector<double> initial_weights() const { return {1.0}; }

  std::vector<double> solve_restricted(const std::vector<double>& atoms, std::vector<double> w) const {
    const long nd = static_cast<long>(data_.size());
    const long m = static_cast<long>(atoms.size());
    Eigen::MatrixXd K(nd, m);
    for (long i = 0; i < nd; ++i)
      for (long j = 0; j < m; ++j)
        K(i, j) = kernel_left(k_, atoms[static_cast<std::size_t>(j)], data_[static_cast<std::size_t>(i)]);
    const Eigen::Map<const Eigen::VectorXd> c(counts_.data(), nd);
    auto loglik = [&](const Eigen::VectorXd& wv, const Eigen::VectorXd& f) {
      double s = 0.0;
      for (long i = 0; i < nd; ++i) s += c(i) * std::log(f(i));
      return s / n_ - wv.sum();
    };
    Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), m);
    Eigen::VectorXd f = K * wv;
    double l = loglik(wv, f);
    for (int it = 0; it < 200; ++it) {
      const Eigen::VectorXd a = c.cwiseQuotient(f) / n_;
      const Eigen::VectorXd g = K.transpose() * a - Eigen::VectorXd::Ones(m);
      double viol = 0.0;
      for (long j = 0; j < m; ++j) viol = std::max(viol, wv(j) > 0.0 ? std::abs(g(j)) : g(j));
      if (viol <= 1e-13) break;
      const Eigen::VectorXd a2 = a.cwiseQuotient(f);
      Eigen::MatrixXd P = K.transpose() * a2.asDiagonal() * K;
      P.diagonal().array() += 1e-14 * P.trace() / static_cast<double>(m);
      const Eigen::VectorXd rhs = P * wv + g;
      std::vector<double> w0(wv.data(), wv.data() + m);
      const auto v = nnqp(P, rhs, w0);
      const Eigen::VectorXd dir = Eigen::Map<const Eigen::VectorXd>(v.data(), m) - wv;
      const double slope = g.dot(dir);
      if (!(slope > 0.0)) break;
      double alpha = 1.0;
      bool moved = false;
      while (alpha > 1e-12) {
        const Eigen::VectorXd wn = (wv + alpha * dir).cwiseMax(0.0);
        const Eigen::VectorXd fn = K * wn;
        if ((fn.array() > 0.0).all()) {
          const double ln = loglik(wn, fn);
          if (ln >= l + 1e-4 * alpha * slope) {
            wv = wn;
            f = fn;
            l = ln;
            moved = true;
            break;
          }
        }
        alpha *= 0.5;
      }
      if (!moved) break;
    }
    return std::vector<double>(wv.data(), wv.data() + m);
  }

  double objective(const std::vector<double>& atoms, const std::vector<double>& w) const {
    const auto f = density(atoms, w);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!(f[i] > 0.0)) return std::numeric_limits<double>::infinity();
      s += counts_[i] * std::log(f[i]);
    }
    return -(s / n_) + std::accumulate(w.begin(), w.end(), 0.0);
  }

  /// Rows (k-1)! R(tau_j) / (tau_j^k / k) - 1 and (k-1)! R'(tau_j) / tau_j^{k-1} - 1.
  void newton_system(const std::vector<double>& atoms, const std::vector<double>& w, Eigen::VectorXd& r,
                     Eigen::MatrixXd& J) const {
    const long m = static_cast<long>(atoms.size());
    const long nd = static_cast<long>(data_.size());
    const int k = k_;
    const auto f = density(atoms, w);
    Eigen::VectorXd a(nd), b(nd);
    for (long i = 0; i < nd; ++i) {
      a(i) = counts_[static_cast<std::size_t>(i)] / (n_ * f[static_cast<std::size_t>(i)]);
      b(i) = a(i) / f[static_cast<std::size_t>(i)];
    }
    // Psi(j, i) = (tau_j - x_i)_+^{k-1}, Psi1 its tau-derivative / (k-1).
    Eigen::MatrixXd Psi(m, nd), Psi1(m, nd), Kw(nd, m), Ky(nd, m);
    Eigen::VectorXd E(m), F(m), F1(m);
    for (long j = 0; j < m; ++j) {
      const double t = atoms[static_cast<std::size_t>(j)];
      double e = 0.0, e1 = 0.0, e2 = 0.0;
      for (long i = 0; i < nd; ++i) {
        const double x = data_[static_cast<std::size_t>(i)];
        const double d = t - x;
        Psi(j, i) = d > 0.0 ? pow_int(d, k - 1) : 0.0;
        Psi1(j, i) = d > 0.0 ? pow_int(d, k - 2) : 0.0;
        e += a(i) * Psi(j, i);
        e1 += a(i) * Psi1(j, i);
        if (k >= 3 && d > 0.0) e2 += a(i) * pow_int(d, k - 3);
        Kw(i, j) = kernel_left(k, t, x);
        Ky(i, j) = d > 0.0 ? k * (k - 1) * pow_int(d, k - 2) / pow_int(t, k) - k * k * pow_int(d, k - 1) / pow_int(t, k + 1)
                           : 0.0;
      }
      E(j) = e - pow_int(t, k) / k;
      F(j) = (k - 1) * e1 - pow_int(t, k - 1);
      F1(j) = (k - 1) * (k - 2) * e2 - (k - 1) * pow_int(t, k - 2);
    }
    // d a_i / d w_l = -b_i K_il, d a_i / d tau_l = -b_i w_l Ky_il.
    const Eigen::MatrixXd Bw = (-b).asDiagonal() * Kw;
    const Eigen::MatrixXd By = (-b).asDiagonal() * Ky;
    const Eigen::MatrixXd EW = Psi * Bw, ET = Psi * By;
    const Eigen::MatrixXd FW = (k - 1) * (Psi1 * Bw), FT = (k - 1) * (Psi1 * By);
    r.resize(2 * m);
    J.setZero(2 * m, 2 * m);
    for (long j = 0; j < m; ++j) {
      const double t = atoms[static_cast<std::size_t>(j)];
      const double se = pow_int(t, k) / k, sf = pow_int(t, k - 1);
      r(j) = E(j) / se;
      r(m + j) = F(j) / sf;
      for (long l = 0; l < m; ++l) {
        const double wl = w[static_cast<std::size_t>(l)];
        J(j, l) = EW(j, l) / se;
        J(j, m + l) = wl * ET(j, l) / se;
        J(m + j, l) = FW(j, l) / sf;
        J(m + j, m + l) = wl * FT(j, l) / sf;
      }
      // Explicit tau_j dependence, including the normalizers.
      J(j, m + j) += F(j) / se - E(j) * k / (se * t);
      J(m + j, m + j) += F1(j) / sf - F(j) * (k - 1) / (sf * t);
    }
  }

 private:
  std::vector<double> density(const std::vector<double>& atoms, const std::vector<double>& w) const {
    std::vector<double> f(data_.size(), 0.0);
    for (std::size_t i = 0; i < data_.size(); ++i)
      for (std::size_t j = 0; j < atoms.size(); ++j) f[i] += w[j] * kernel_left(k_, atoms[j], data_[i]);
    return f;
  }

  int k_;
  double n_, xmin_, xmax_, upper_ = 1.0;
  std::vector<double> data_, counts_;
  PiecewisePoly R_ = PiecewisePoly::polynomial(0.0, 1.0, {0.0});
};

/// Damped Newton on the knot equations. Returns false (leaving the inputs
/// untouched) unless the normalized residual drops below 1e-10 with all
/// weights positive and knots increasing.
template <class Problem>
bool newton_polish(const Problem& pb, std::vector<double>& atoms, std::vector<double>& w) {
  const std::size_t m = atoms.size();
  if (m == 0) return false;
  std::vector<double> ta = atoms, tw = w;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  pb.newton_system(ta, tw, r, J);
  double nr = r.lpNorm<Eigen::Infinity>();
  auto valid = [&](const std::vector<double>& a, const std::vector<double>& ww) {
    for (std::size_t i = 0; i < m; ++i) {
      if (!(ww[i] > 0.0) || !(a[i] > 0.0) || !(a[i] < pb.upper() * 0.5)) return false;
      if (i > 0 && !(a[i] > a[i - 1])) return false;
    }
    return true;
  };
  for (int it = 0; it < 60 && nr > 1e-13; ++it) {
    // Knots near the origin give rows of order tau^k; equilibrate both ways.
    Eigen::VectorXd rs = J.rowwise().lpNorm<Eigen::Infinity>();
    for (long i = 0; i < rs.size(); ++i) rs(i) = rs(i) > 0.0 ? 1.0 / rs(i) : 1.0;
    Eigen::MatrixXd Js = rs.asDiagonal() * J;
    Eigen::VectorXd cs = Js.colwise().lpNorm<Eigen::Infinity>().transpose();
    for (long i = 0; i < cs.size(); ++i) cs(i) = cs(i) > 0.0 ? 1.0 / cs(i) : 1.0;
    Js = Js * cs.asDiagonal();
    const Eigen::VectorXd step = cs.asDiagonal() * Js.colPivHouseholderQr().solve(-(rs.asDiagonal() * r));
    if (!step.allFinite()) break;
    double alpha = 1.0;
    bool moved = false;
    while (alpha > 1e-6) {
      std::vector<double> na(m), nw(m);
      for (std::size_t i = 0; i < m; ++i) {
        nw[i] = tw[i] + alpha * step(static_cast<long>(i));
        na[i] = ta[i] + alpha * step(static_cast<long>(m + i));
      }
      if (valid(na, nw)) {
        Eigen::VectorXd r2;
        Eigen::MatrixXd J2;
        pb.newton_system(na, nw, r2, J2);
        const double n2 = r2.lpNorm<Eigen::Infinity>();
        if (n2 < (1.0 - 1e-4 * alpha) * nr) {
          ta = std::move(na);
          tw = std::move(nw);
          r = std::move(r2);
          J = std::move(J2);
          nr = n2;
          moved = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!moved) break;
  }
  if (!(nr <= 1e-10)) return false;
  atoms = std::move(ta);
  w = std::move(tw);
  return true;
}

template <class Problem>
CharacterizationReport certify_problem(Problem& pb, const std::vector<double>& atoms, const std::vector<double>& w,
                                       int grid_density, double tol_ineq, double tol_eq);

/// Support reduction: add the most negative local minimum of the directional
/// derivative in each gap between atoms, re-solve the restricted problem,
/// drop zero weights; then merge near-duplicate atoms and polish.
template <class Problem>
FitResult support_reduction(Problem& pb, const FitOptions& opts) {
  const int k = pb.k();
  std::vector<double> atoms = pb.initial_atoms(), w = pb.initial_weights();
  FitResult res;
  res.kind = Problem::kind;
  res.k = k;
  double tol = opts.tol;
  bool converged = false;
  int it = 0;
  const int per_piece = k == 1 ? 1 : 4 + k;
  CharacterizationReport cert;
  int stall = 0;
  for (; it < opts.max_iter; ++it) {
    pb.prepare(atoms, w);
    const double obj = pb.objective(atoms, w);
    if (!res.objective_trace.empty() && obj > res.objective_trace.back() - 1e-15 * (1.0 + std::abs(obj))) ++stall;
    else stall = 0;
    res.objective_trace.push_back(obj);
    const double scale = pb.scale();
    std::vector<double> nodes;
    if (k == 1) nodes = pb.data();
    else nodes = scan_nodes(pb.data(), atoms, pb.lo(), pb.top(atoms), per_piece, std::min(50.0, 0.4 * pb.upper() / pb.top(atoms)));
    // Stop on the slack; once it is violated somewhere, add the steepest
    // directions as well as the slack minima.
    auto viol = gap_minima([&](double t) { return pb.slack(t); }, nodes, atoms, -tol * scale, k > 1);
    std::vector<Candidate> use;
    if (!viol.empty()) {
      auto dirs = gap_minima([&](double t) { return pb.direction(t); }, nodes, atoms, 0.0, k > 1);
      for (auto& c : dirs) c.value = 0.0;
      for (auto& c : viol) c.value = 0.0;
      std::merge(viol.begin(), viol.end(), dirs.begin(), dirs.end(), std::back_inserter(use),
                 [](const Candidate& a, const Candidate& b) { return a.x < b.x; });
      use.erase(std::unique(use.begin(), use.end(), [](const Candidate& a, const Candidate& b) {
                  return std::abs(a.x - b.x) <= 1e-12 * std::max(1.0, std::abs(a.x));
                }),
                use.end());
    }
    // A stalled restricted solve cannot resolve the remaining slack; hand
    // over to the polish.
    if (use.empty() || stall >= 3) {
      stall = 0;
      if (opts.polish && k > 1) {
        // Spurious clusters straddle a single knot; merge them before Newton.
        bool done = false;
        for (double rel : {5e-2, 2e-2, 1e-2, 1e-3, 1e-4, 1e-6, 0.0}) {
          auto a2 = atoms, w2 = w;
          if (rel > 0.0) merge_close(a2, w2, rel);
          if (!newton_polish(pb, a2, w2)) continue;
          if (!(pb.objective(a2, w2) <= obj + 1e-13 * (1.0 + std::abs(obj)))) continue;
          auto c2 = certify_problem(pb, a2, w2, opts.grid_density, opts.tol_ineq, opts.tol_eq);
          if (c2.passed) {
            atoms = std::move(a2);
            w = std::move(w2);
            cert = std::move(c2);
            done = true;
            break;
          }
        }
        if (done) {
          converged = true;
          break;
        }
      }
      cert = certify_problem(pb, atoms, w, opts.grid_density, opts.tol_ineq, opts.tol_eq);
      if (cert.passed) {
        converged = true;
        break;
      }
      if (use.empty()) {
        if (tol < 1e-14) break;
        tol *= 0.01;
        continue;
      }
    }
    std::vector<double> na, nw;
    {
      std::size_t i = 0, j = 0;
      while (i < atoms.size() || j < use.size()) {
        if (j == use.size() || (i < atoms.size() && atoms[i] < use[j].x)) {
          na.push_back(atoms[i]);
          nw.push_back(w[i]);
          ++i;
        } else {
          na.push_back(use[j].x);
          nw.push_back(0.0);
          ++j;
        }
      }
    }
    auto sol = pb.solve_restricted(na, nw);
    prune_zero(na, sol);
    atoms = std::move(na);
    w = std::move(sol);
  }
  res.iterations = it;
  pb.prepare(atoms, w);
  res.objective = pb.objective(atoms, w);
  if (res.objective_trace.empty() || res.objective <= res.objective_trace.back())
    res.objective_trace.push_back(res.objective);
  if (!converged) cert = certify_problem(pb, atoms, w, opts.grid_density, opts.tol_ineq, opts.tol_eq);
  if (Problem::kind == EstimatorKind::mle) {
    const double tot = std::accumulate(w.begin(), w.end(), 0.0);
    if (tot > 0.0)
      for (auto& v : w) v /= tot;
  }
  res.mixing = MixingMeasure(atoms, w);
  res.knots = atoms;
  res.estimate = mixture_to_piecewise(res.mixing, k);
  res.certificate = std::move(cert);
  res.converged = converged && res.certificate.passed;
  return res;
}

template <class Problem>
CharacterizationReport certify_problem(Problem& pb, const std::vector<double>& atoms, const std::vector<double>& w,
                                       int grid_density, double tol_ineq, double tol_eq) {
  const int k = pb.k();
  CharacterizationReport rep;
  rep.kind = Problem::kind;
  rep.tol_ineq = tol_ineq;
  rep.tol_eq = tol_eq;
  pb.prepare(atoms, w);
  rep.scale = pb.scale();
  const double top = pb.top(atoms);
  std::vector<double> grid = scan_nodes(pb.data(), atoms, pb.lo(), top, std::max(1, grid_density),
                                        std::min(3.0, 0.4 * pb.upper() / top));
  for (double a : atoms)
    for (double e : {1e-8, 1e-6, 1e-4, 1e-2}) {
      for (double x : {a * (1.0 - e), a * (1.0 + e)})
        if (x >= pb.lo()) grid.push_back(x);
    }
  // Local minima between grid points, so narrow dips are not missed.
  if (k > 1) {
    std::sort(grid.begin(), grid.end());
    std::vector<double> fine, sv(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) sv[i] = pb.slack(grid[i]);
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
      if (sv[i] < 0.0 && sv[i] <= sv[i - 1] && sv[i] <= sv[i + 1]) {
        auto r = boost::math::tools::brent_find_minima([&](double t) { return pb.slack(t); }, grid[i - 1], grid[i + 1], 48);
        fine.push_back(r.first);
      }
    }
    grid.insert(grid.end(), fine.begin(), fine.end());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  rep.min_slack = std::numeric_limits<double>::infinity();
  for (double x : grid) {
    const double s = pb.slack(x) / rep.scale;
    if (s < rep.min_slack) {
      rep.min_slack = s;
      rep.argmin_slack = x;
    }
  }
  for (double a : atoms) rep.max_knot_residual = std::max(rep.max_knot_residual, std::abs(pb.slack(a)) / rep.scale);
  if (k >= 2 && !atoms.empty()) {
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    pb.newton_system(atoms, w, r, J);
    const long m = static_cast<long>(atoms.size());
    rep.max_derivative_residual = r.tail(m).lpNorm<Eigen::Infinity>();
    // The LSE derivative equation is a knot residual in the same units.
    if (Problem::kind == EstimatorKind::lse)
      rep.max_knot_residual = std::max(rep.max_knot_residual, rep.max_derivative_residual);
  }
  rep.grid = std::move(grid);
  rep.passed = rep.min_slack >= -tol_ineq && rep.max_knot_residual <= tol_eq && rep.max_derivative_residual <= tol_eq;
  return rep;
}

template <class Problem>
FitResult run_fit(const Sample& sample, int k, const FitOptions& opts, const char* name) {
  check_k(k);
  if (sample.n() == 0) throw std::domain_error(std::string(name) + ": empty sample");
  Problem pb(sample, k);
  FitResult res = support_reduction(pb, opts);
  if (sample.n() < static_cast<std::size_t>(k))
    res.warnings.push_back("n < k: the (k-1)st derivative has at most n jumps");
  if (!res.converged)
    throw NonConvergenceError(std::string(name) + ": no certified solution within max_iter", std::move(res));
  return res;
}

}  // namespace detail

/// Least squares estimator over nonnegative mixtures with free total mass.
inline FitResult fit_lse(const Sample& sample, int k, const FitOptions& opts = {}) {
  return detail::run_fit<detail::LseProblem>(sample, k, opts, "fit_lse");
}

/// Maximum likelihood estimator; the fitted mixing measure has unit mass.
inline FitResult fit_mle(const Sample& sample, int k, const FitOptions& opts = {}) {
  return detail::run_fit<detail::MleProblem>(sample, k, opts, "fit_mle");
}

/// Characterization certificate of any mixture fit against a sample. The
/// LSE scale is 1 + max(H~_n, Y_n) at the last data point or knot; the MLE
/// scale is 1.
inline CharacterizationReport certify(const FitResult& fit, const Sample& sample, int k, EstimatorKind which,
                                      int grid_density = 16, double tol_ineq = 1e-7, double tol_eq = 1e-6) {
  check_k(k);
  if (sample.n() == 0) throw std::domain_error("certify: empty sample");
  const auto& atoms = fit.mixing.atoms();
  const auto& w = fit.mixing.weights();
  try {
    if (which == EstimatorKind::lse) {
      detail::LseProblem pb(sample, k);
      return detail::certify_problem(pb, atoms, w, grid_density, tol_ineq, tol_eq);
    }
    detail::MleProblem pb(sample, k);
    return detail::certify_problem(pb, atoms, w, grid_density, tol_ineq, tol_eq);
  } catch (const DegenerateFitError&) {
    CharacterizationReport rep;
    rep.kind = which;
    rep.min_slack = -std::numeric_limits<double>::infinity();
    rep.max_knot_residual = std::numeric_limits<double>::infinity();
    rep.passed = false;
    return rep;
  }
}

inline ProcessTrace process_Htilde(const FitResult& fit, int k, std::span<const double> grid) {
  return process_Htilde(fit.mixing, k, grid);
}

inline ProcessTrace process_Hhat(const Sample& sample, const FitResult& fit, int k, std::span<const double> grid) {
  return process_Hhat(sample, fit.mixing, k, grid);
}

/// (-l_n) of a mixture: -(1/n) sum log g(X_i) + total mass.
inline double negative_loglik(const Sample& sample, const MixingMeasure& mm, int k) {
  const auto g = detail::density_at(mm, k, sample.values());
  double s = 0.0;
  for (double v : g) s += v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
  return -s / static_cast<double>(sample.n()) + mm.total_mass();
}

}  // namespace kmono
