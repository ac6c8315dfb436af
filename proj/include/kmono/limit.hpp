// The limit process Y_k (a (k-1)-fold integrated two-sided Brownian motion
// plus a polynomial drift), its scaling constants, and a discrete invelope H_k
// on a finite window.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmono/detail/bspline.hpp"
#include "kmono/interp.hpp"
#include "kmono/mixture.hpp"
#include "kmono/piecewise_poly.hpp"
#include "kmono/random.hpp"

namespace kmono {

/// Sample path of Y_{a,sigma} on the uniform grid {-c, ..., c}. derivs[j]
/// holds Y^{(j)} for j = 0..k-1 (derivs[0] == Yk). W is the driving standard
/// Brownian motion.
struct LimitPath {
  std::vector<double> grid;
  std::vector<double> W;
  std::vector<double> Yk;
  std::vector<std::vector<double>> derivs;
  int k = 1;
  double drift_a = 1.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  double c = 0.0;
  double delta = 0.0;

  std::size_t center() const { return grid.size() / 2; }
};

/// Drift of Y_{a,sigma}^{(j)}: a (-1)^k k!/(2k-j)! t^{2k-j}.
inline double limit_drift(int k, double a, double t, int j = 0) {
  const double s = (k % 2 == 0) ? 1.0 : -1.0;
  return a * s * detail::factorial(k) / detail::factorial(2 * k - j) * detail::pow_int(t, 2 * k - j);
}

/// Var Y_k(t) = |t|^{2k-1} / ((2k-1) ((k-1)!)^2).
inline double limit_variance(int k, double t) {
  const double f = detail::factorial(k - 1);
  return detail::pow_int(std::abs(t), 2 * k - 1) / ((2 * k - 1) * f * f);
}

/// Cov(Y(s), Y(t)) of the Gaussian part with sigma = 1. The two half-lines are
/// driven by independent motions.
inline double limit_covariance(int k, double s, double t) {
  if (s == 0.0 || t == 0.0 || (s > 0.0) != (t > 0.0)) return 0.0;
  const double m = std::min(std::abs(s), std::abs(t));
  const double M = std::max(std::abs(s), std::abs(t));
  // int_0^m v^{k-1} (M - m + v)^{k-1} dv
  double acc = 0.0;
  for (int r = 0; r < k; ++r)
    acc += detail::binomial(k - 1, r) * detail::pow_int(M - m, k - 1 - r) * detail::pow_int(m, k + r) / (k + r);
  const double f = detail::factorial(k - 1);
  return acc / (f * f);
}

/// Simulates Y_{a,sigma} on [-c, c] with step delta (c / delta must be an
/// integer). The state (W, int W, ..., Y) is advanced cell by cell with its
/// exact Gaussian transition, so grid values carry no discretization error.
/// For t < 0 the iterated integrals run from t to 0.
inline LimitPath simulate_Yk(int k, double c, double delta, std::uint64_t seed, double a = 1.0,
                             double sigma = 1.0) {
  check_k(k);
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("simulate_Yk: c must be positive");
  if (!(delta > 0.0) || delta > c / 64.0 * (1.0 + 1e-12))
    throw std::invalid_argument("simulate_Yk: need 0 < delta <= c/64");
  const double cells = c / delta;
  const long long m = std::llround(cells);
  if (std::abs(cells - static_cast<double>(m)) > 1e-9 * cells)
    throw std::invalid_argument("simulate_Yk: c / delta must be an integer");
  if (!(sigma > 0.0) || !std::isfinite(a)) throw std::invalid_argument("simulate_Yk: need sigma > 0");

  const auto K = static_cast<std::size_t>(k);
  const std::size_t N = static_cast<std::size_t>(2 * m + 1);
  const double h = c / static_cast<double>(m);

  // Cell noise xi_j = int_0^h (h-u)^j / j! dW(u) has covariance
  // h^{a+b+1} / (a! b! (a+b+1)): a diagonally scaled Hilbert matrix.
  Eigen::MatrixXd hil(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) hil(i, j) = 1.0 / (i + j + 1);
  const Eigen::MatrixXd L = hil.llt().matrixL();
  std::vector<double> dscale(K);
  for (int j = 0; j < k; ++j) dscale[static_cast<std::size_t>(j)] = std::pow(h, j + 0.5) / detail::factorial(j);

  LimitPath p;
  p.k = k;
  p.drift_a = a;
  p.noise_sigma = sigma;
  p.seed = seed;
  p.c = c;
  p.delta = h;
  p.grid.resize(N);
  for (std::size_t i = 0; i < N; ++i) p.grid[i] = c * (static_cast<double>(i) - static_cast<double>(m)) / static_cast<double>(m);
  p.grid[static_cast<std::size_t>(m)] = 0.0;
  p.W.assign(N, 0.0);
  // gauss[j][i]: j-fold integral of W at grid i (own convention: from 0 to t).
  std::vector<std::vector<double>> gauss(K, std::vector<double>(N, 0.0));

  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> z(K), xi(K), x(K), nx(K);
  for (int side : {1, -1}) {
    std::fill(x.begin(), x.end(), 0.0);
    const double step = side * h;
    for (long long s = 1; s <= m; ++s) {
      for (auto& v : z) v = nd(rng);
      for (std::size_t j = 0; j < K; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i <= j; ++i) acc += L(static_cast<long>(j), static_cast<long>(i)) * z[i];
        // Backward cells: the noise of the j-fold integral picks up (-1)^j.
        xi[j] = dscale[j] * acc * ((side < 0 && j % 2 == 1) ? -1.0 : 1.0);
      }
      for (std::size_t j = 0; j < K; ++j) {
        double acc = xi[j];
        double f = 1.0;
        for (std::size_t i = j + 1; i-- > 0;) {
          acc += f * x[i];
          f *= step / static_cast<double>(j - i + 1);
        }
        nx[j] = acc;
      }
      x = nx;
      const auto idx = static_cast<std::size_t>(m + side * s);
      for (std::size_t j = 0; j < K; ++j) gauss[j][idx] = x[j];
    }
  }
  p.W = gauss[0];

  // Y^{(j)} = gauss[k-1-j]; for t < 0 integrals from t to 0 differ from those
  // from 0 to t by (-1)^{k-1}.
  const double neg = (k % 2 == 1) ? 1.0 : -1.0;
  p.derivs.assign(K, std::vector<double>(N, 0.0));
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t i = 0; i < N; ++i) {
      const double t = p.grid[i];
      const double g = gauss[K - 1 - j][i] * (t < 0.0 ? neg : 1.0);
      p.derivs[j][i] = sigma * g + limit_drift(k, a, t, static_cast<int>(j));
    }
  }
  p.Yk = p.derivs[0];
  return p;
}

struct ScalingConstants {
  int k = 1;
  double a = 1.0;
  double sigma = 1.0;
  std::vector<double> c;  // c_j, j = 0..k-1
  double s1 = 1.0;
  double s2 = 1.0;
};

/// Constants for a density with value g0 and k-th derivative gk at x0.
inline ScalingConstants scaling_constants(double g0, double gk, int k) {
  check_k(k);
  const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
  if (!(g0 > 0.0) || !std::isfinite(g0)) throw std::domain_error("scaling_constants: g0(x0) must be positive");
  if (!(sgn * gk > 0.0) || !std::isfinite(gk))
    throw std::domain_error("scaling_constants: (-1)^k g0^(k)(x0) must be positive");
  ScalingConstants s;
  s.k = k;
  s.a = sgn * gk / detail::factorial(k);
  s.sigma = std::sqrt(g0);
  const double e = 1.0 / (2 * k + 1);
  for (int j = 0; j < k; ++j) s.c.push_back(std::pow(std::pow(g0, k - j) * std::pow(s.a, 2 * j + 1), e));
  s.s1 = (1.0 / s.sigma) * std::pow(s.a / s.sigma, (2.0 * k - 1) * e);
  s.s2 = std::pow(s.sigma / s.a, 2.0 * e);
  return s;
}

/// s1, s2 from (a, sigma) directly.
inline ScalingConstants scaling_from(double a, double sigma, int k) {
  check_k(k);
  if (!(a > 0.0) || !(sigma > 0.0)) throw std::domain_error("scaling_from: need a, sigma > 0");
  const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
  return scaling_constants(sigma * sigma, sgn * a * detail::factorial(k), k);
}

/// Largest deviation between mean and covariance of Y_{a,sigma} and those of
/// Y_{1,1}(t / s2) / s1 over the grid (all pairs for the covariance).
inline double scaling_identity_check(double a, double sigma, int k, std::span<const double> grid) {
  const auto s = scaling_from(a, sigma, k);
  double dev = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    const double lhs = limit_drift(k, a, t);
    const double rhs = limit_drift(k, 1.0, t / s.s2) / s.s1;
    dev = std::max(dev, std::abs(lhs - rhs));
    for (std::size_t j = i; j < grid.size(); ++j) {
      const double u = grid[j];
      const double cl = sigma * sigma * limit_covariance(k, t, u);
      const double cr = limit_covariance(k, t / s.s2, u / s.s2) / (s.s1 * s.s1);
      dev = std::max(dev, std::abs(cl - cr));
    }
  }
  return dev;
}

// ---------------------------------------------------------------------------
// Invelope

struct InvelopeOptions {
  double tol_ineq = 1e-8;  // condition (i), relative to scale
  double tol_comp = 1e-6;  // condition (iii), relative to scale
  double solver_tol = 1e-12;
  std::size_t max_iter = 0;  // 0: 20 * grid size
};

/// H on the grid with its derivatives of orders 0..2k-1 (H[d][i]), the knots
/// (grid nodes where H^{(2k-1)} jumps) and jumps beta, and the certificate on
/// the central half-window |t| <= c/2.
struct InvelopeResult {
  int k = 1;
  std::vector<double> grid;
  std::vector<double> Y;
  std::vector<std::vector<double>> H;
  std::vector<double> knots;
  std::vector<double> jumps;
  PiecewisePoly spline = PiecewisePoly::polynomial(0, 1, {0});
  double scale = 1.0;
  double min_slack = 0.0;        // min (H - Y) / scale over the central half
  double complementarity = 0.0;  // |sum (H - Y)(t_j) beta_j| / scale over central knots
  double min_slack_all = 0.0;    // over the whole grid
  std::size_t iterations = 0;
  bool passed = false;
};

class InvelopeError : public std::runtime_error {
 public:
  InvelopeError(const std::string& what, double min_slack, double complementarity)
      : std::runtime_error(what + " (min slack " + std::to_string(min_slack) + ", complementarity " +
                           std::to_string(complementarity) + ")"),
        min_slack_(min_slack),
        complementarity_(complementarity) {}
  double min_slack() const { return min_slack_; }
  double complementarity() const { return complementarity_; }

 private:
  double min_slack_, complementarity_;
};

namespace detail {

/// Green's function of (-1)^k D^{2k} on [-c, c] with u^{(j)}(+-c) = 0 for
/// j < k: G(t, s) = sum_{i=k}^{2k-1} alpha_i(s) u^i + (-1)^k (t - s)_+^{2k-1}/(2k-1)!,
/// u = (t + c) / 2c.
template <class T>
class GreenKernel {
 public:
  GreenKernel(int k, double c) : k_(k), c_(c) {
    using M = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    M A(k, k);
    for (int j = 0; j < k; ++j)
      for (int q = 0; q < k; ++q) {
        const int i = k + q;
        T f = 1;
        for (int r = 0; r < j; ++r) f *= T(i - r);
        A(j, q) = f;
      }
    inv_ = A.inverse();
    sign_ = (k % 2 == 0) ? T(1) : T(-1);
    fact_.resize(static_cast<std::size_t>(2 * k));
    fact_[0] = 1;
    for (int i = 1; i < 2 * k; ++i) fact_[static_cast<std::size_t>(i)] = fact_[static_cast<std::size_t>(i - 1)] * T(i);
  }

  /// Polynomial coefficients alpha_k..alpha_{2k-1} for knot s.
  std::vector<T> alpha(const T& s) const {
    const T two_c = T(2) * T(c_);
    std::vector<T> rhs(static_cast<std::size_t>(k_));
    T w = 1;
    for (int j = 0; j < k_; ++j) {
      const int p = 2 * k_ - 1 - j;
      rhs[static_cast<std::size_t>(j)] = -w * sign_ * pow_t(T(c_) - s, p) / fact_[static_cast<std::size_t>(p)];
      w *= two_c;
    }
    std::vector<T> out(static_cast<std::size_t>(k_), T(0));
    for (int q = 0; q < k_; ++q)
      for (int j = 0; j < k_; ++j) out[static_cast<std::size_t>(q)] += inv_(q, j) * rhs[static_cast<std::size_t>(j)];
    return out;
  }

  T eval(const T& t, const T& s, const std::vector<T>& al) const {
    const T u = (t + T(c_)) / (T(2) * T(c_));
    T poly = 0;
    for (int q = k_ - 1; q >= 0; --q) poly = poly * u + al[static_cast<std::size_t>(q)];
    poly *= pow_t(u, k_);
    if (t > s) poly += sign_ * pow_t(t - s, 2 * k_ - 1) / fact_[static_cast<std::size_t>(2 * k_ - 1)];
    return poly;
  }

 private:
  static T pow_t(T x, int p) {
    T r = 1;
    while (p-- > 0) r *= x;
    return r;
  }
  int k_;
  double c_;
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> inv_;
  T sign_;
  std::vector<T> fact_;
};

}  // namespace detail

/// Discrete invelope: minimizes (1/2) int (H^{(k)})^2 over splines of degree
/// 2k-1 with knots at interior grid nodes, subject to H >= Y at every interior
/// node and H^{(j)}(+-c) = Y^{(j)}(+-c) for j < k. The multipliers are the
/// jumps (-1)^k beta_j of H^{(2k-1)}, so (-1)^k H^{(2k-1)} is nondecreasing and
/// complementary slackness holds at the solution. Solved as a nonnegative
/// quadratic program in the multipliers by Lawson-Hanson active sets, with the
/// passive-set systems in quad precision.
inline InvelopeResult invelope_Hk(const LimitPath& path, int k, const InvelopeOptions& opts = {}) {
  using detail::quad;
  check_k(k);
  if (k != path.k) throw std::invalid_argument("invelope_Hk: k does not match the path");
  const std::size_t N = path.grid.size();
  if (N < 5 || path.derivs.size() != static_cast<std::size_t>(k))
    throw std::invalid_argument("invelope_Hk: path too short");
  const double c = path.grid.back();
  const auto& Y = path.Yk;

  double scale = 1.0;
  for (double v : Y) scale = std::max(scale, 1.0 + std::abs(v));

  // Boundary polynomial H0 (degree 2k-1, matches Y^{(j)} at both ends).
  std::vector<double> left(static_cast<std::size_t>(k)), right(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    left[static_cast<std::size_t>(j)] = path.derivs[static_cast<std::size_t>(j)].front();
    right[static_cast<std::size_t>(j)] = path.derivs[static_cast<std::size_t>(j)].back();
  }
  const std::vector<double> none;
  const auto H0 = detail::complete_solve<quad>(k, -c, c, none, none, left, right, 1e30, nullptr);

  // Free nodes are the interior grid points. Multipliers next to the clamped
  // ends can be large, so residuals are accumulated in quad as well.
  const std::size_t m = N - 2;
  std::vector<quad> b(m);
  std::vector<quad> tq(N);
  for (std::size_t i = 0; i < N; ++i) tq[i] = quad(path.grid[i]);
  for (std::size_t i = 0; i < m; ++i) b[i] = quad(Y[i + 1]) - quad(H0.eval(path.grid[i + 1]));

  detail::GreenKernel<quad> gq(k, c);
  std::vector<std::vector<quad>> col(m);  // cached columns G(., t_j) over free nodes
  auto column = [&](std::size_t j) -> const std::vector<quad>& {
    if (col[j].empty()) {
      const auto al = gq.alpha(tq[j + 1]);
      col[j].resize(m);
      for (std::size_t i = 0; i < m; ++i) col[j][i] = gq.eval(tq[i + 1], tq[j + 1], al);
    }
    return col[j];
  };

  std::vector<std::size_t> P;  // passive set, kept sorted
  std::vector<quad> lam;       // multipliers on P
  std::vector<quad> w(m);      // w = b - G lambda = Y - H
  auto residual = [&]() {
    w = b;
    for (std::size_t q = 0; q < P.size(); ++q) {
      const auto& g = column(P[q]);
      for (std::size_t i = 0; i < m; ++i) w[i] -= lam[q] * g[i];
    }
  };
  auto solve_passive = [&](const std::vector<std::size_t>& idx) {
    using MQ = Eigen::Matrix<quad, Eigen::Dynamic, Eigen::Dynamic>;
    using VQ = Eigen::Matrix<quad, Eigen::Dynamic, 1>;
    const auto n = static_cast<long>(idx.size());
    MQ A(n, n);
    VQ r(n);
    for (long a = 0; a < n; ++a) {
      const auto& g = column(idx[static_cast<std::size_t>(a)]);
      r(a) = b[idx[static_cast<std::size_t>(a)]];
      for (long bb = 0; bb < n; ++bb) A(bb, a) = g[idx[static_cast<std::size_t>(bb)]];
    }
    const VQ z = Eigen::PartialPivLU<MQ>(A).solve(r);
    return std::vector<quad>(z.data(), z.data() + n);
  };

  const std::size_t max_iter = opts.max_iter ? opts.max_iter : 20 * N;
  const quad stop = quad(opts.solver_tol * scale);
  std::vector<char> blocked(m, 0), in_p(m, 0);
  std::size_t it = 0;
  bool converged = false;
  residual();
  while (it++ < max_iter) {
    std::size_t best = m;
    quad bw = stop;
    for (std::size_t i = 0; i < m; ++i)
      if (!in_p[i] && !blocked[i] && w[i] > bw) {
        bw = w[i];
        best = i;
      }
    if (best == m) {
      converged = true;
      break;
    }
    auto trial = P;
    trial.insert(std::upper_bound(trial.begin(), trial.end(), best), best);
    std::vector<quad> cur(trial.size(), quad(0));
    for (std::size_t q = 0, r = 0; q < trial.size(); ++q)
      if (trial[q] != best) cur[q] = lam[r++];
    bool entered = true;
    for (bool first = true;; first = false) {
      const auto z = solve_passive(trial);
      bool ok = true;
      for (const auto& v : z) ok = ok && v > 0;
      if (ok) {
        cur = z;
        break;
      }
      if (first) {
        const auto pos = static_cast<std::size_t>(std::lower_bound(trial.begin(), trial.end(), best) - trial.begin());
        if (!(z[pos] > 0)) {
          // The entering node cannot take a positive multiplier numerically.
          entered = false;
          break;
        }
      }
      quad alpha = 1;
      std::size_t drop = z.size();
      for (std::size_t q = 0; q < z.size(); ++q)
        if (z[q] <= 0 && cur[q] / (cur[q] - z[q]) < alpha) {
          alpha = cur[q] / (cur[q] - z[q]);
          drop = q;
        }
      std::vector<std::size_t> nt;
      std::vector<quad> nc;
      for (std::size_t q = 0; q < z.size(); ++q) {
        const quad v = cur[q] + alpha * (z[q] - cur[q]);
        if (q != drop && v > 0) {
          nt.push_back(trial[q]);
          nc.push_back(v);
        }
      }
      trial = std::move(nt);
      cur = std::move(nc);
      if (trial.empty()) break;
    }
    if (!entered) {
      blocked[best] = 1;
      continue;
    }
    P = std::move(trial);
    lam = std::move(cur);
    std::fill(in_p.begin(), in_p.end(), 0);
    for (auto j : P) in_p[j] = 1;
    std::fill(blocked.begin(), blocked.end(), 0);
    residual();
  }

  InvelopeResult res;
  res.k = k;
  res.grid = path.grid;
  res.Y = Y;
  res.scale = scale;
  res.iterations = it;
  const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
  for (std::size_t q = 0; q < P.size(); ++q) {
    res.knots.push_back(path.grid[P[q] + 1]);
    res.jumps.push_back(sgn * static_cast<double>(lam[q]));
  }

  // H = H0 + sum lambda_j G(., t_j) as a piecewise polynomial, with the local
  // Taylor coefficients of every piece formed in quad.
  {
    const int deg = 2 * k - 1;
    const auto S = static_cast<std::size_t>(deg + 1);
    const quad two_c = quad(2) * quad(c);
    std::vector<quad> poly(S, quad(0));  // about -c
    const auto h0 = H0.piece(0);
    for (std::size_t p = 0; p < h0.size(); ++p) poly[p] = quad(h0[p]);
    for (std::size_t q = 0; q < P.size(); ++q) {
      const auto al = gq.alpha(tq[P[q] + 1]);
      quad f = 1;
      for (int i = 0; i < k; ++i) f *= two_c;
      for (int i = 0; i < k; ++i) {
        poly[static_cast<std::size_t>(k + i)] += lam[q] * al[static_cast<std::size_t>(i)] / f;
        f *= two_c;
      }
    }
    const quad jump_scale = quad(sgn) / quad(detail::factorial(deg));
    std::vector<double> br{-c};
    br.insert(br.end(), res.knots.begin(), res.knots.end());
    br.push_back(c);
    std::vector<double> coeffs;
    coeffs.reserve((br.size() - 1) * S);
    for (std::size_t piece = 0; piece + 1 < br.size(); ++piece) {
      const quad x0 = piece == 0 ? quad(-c) : tq[P[piece - 1] + 1];
      std::vector<quad> cf(S, quad(0));
      auto add_shifted = [&](const std::vector<quad>& src, const quad& h) {
        // sum_p src[p] (h + u)^p expanded in u
        for (std::size_t p = 0; p < S; ++p) {
          quad hp = 1;
          for (std::size_t r = p + 1; r-- > 0;) {
            cf[r] += src[p] * quad(detail::binomial(static_cast<int>(p), static_cast<int>(r))) * hp;
            hp *= h;
          }
        }
      };
      add_shifted(poly, x0 + quad(c));
      for (std::size_t q = 0; q + 1 <= piece; ++q) {
        std::vector<quad> term(S, quad(0));
        term[S - 1] = lam[q] * jump_scale;
        add_shifted(term, x0 - tq[P[q] + 1]);
      }
      for (const auto& v : cf) coeffs.push_back(static_cast<double>(v));
    }
    res.spline = PiecewisePoly(std::move(br), deg, std::move(coeffs), deg - 1);
  }
  res.H.assign(static_cast<std::size_t>(2 * k), std::vector<double>(N));
  for (int d = 0; d < 2 * k; ++d) res.H[static_cast<std::size_t>(d)] = res.spline.eval_sorted(path.grid, d);
  res.H[0].front() = Y.front();
  res.H[0].back() = Y.back();
  for (std::size_t i = 0; i < m; ++i) res.H[0][i + 1] = static_cast<double>(quad(Y[i + 1]) - w[i]);

  double ms = INFINITY, ms_all = INFINITY;
  quad comp = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = static_cast<double>(-w[i]) / scale;
    ms_all = std::min(ms_all, e);
    if (std::abs(path.grid[i + 1]) <= 0.5 * c) ms = std::min(ms, e);
  }
  for (std::size_t q = 0; q < P.size(); ++q)
    if (std::abs(res.knots[q]) <= 0.5 * c) comp += -w[P[q]] * quad(sgn) * lam[q];
  res.min_slack = std::isfinite(ms) ? ms : 0.0;
  res.min_slack_all = std::isfinite(ms_all) ? ms_all : 0.0;
  res.complementarity = std::abs(static_cast<double>(comp)) / scale;
  res.passed = converged && res.min_slack >= -opts.tol_ineq && res.complementarity <= opts.tol_comp;
  if (!converged) throw InvelopeError("invelope_Hk: active set did not converge", res.min_slack, res.complementarity);
  return res;
}

}  // namespace kmono
