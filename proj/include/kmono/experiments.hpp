// Localized processes near a point x0 and the Monte Carlo gap and rate
// studies built on them.
#pragma once

#include <algorithm>
#include <atomic>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "kmono/estimators.hpp"
#include "kmono/inversion.hpp"
#include "kmono/mixture.hpp"
#include "kmono/piecewise_poly.hpp"
#include "kmono/processes.hpp"
#include "kmono/random.hpp"

namespace kmono {

// ---------------------------------------------------------------------------
// True densities

class Truth {
 public:
  virtual ~Truth() = default;
  virtual std::string name() const = 0;
  /// g0^{(j)}(x).
  virtual double derivative(double x, int j) const = 0;
  /// Mixing distribution function F(t) for scale mixtures of k-th order kernels.
  virtual double mixing_cdf(double t, int k) const = 0;
  virtual std::vector<double> sample(Rng& rng, std::size_t n) const = 0;
};

/// rate * exp(-rate x): k-monotone for every k, mixing law Gamma(k + 1, rate).
class ExponentialTruth : public Truth {
 public:
  explicit ExponentialTruth(double rate = 1.0) : rate_(rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw std::invalid_argument("ExponentialTruth: rate must be positive");
  }
  std::string name() const override { return rate_ == 1.0 ? "exp" : "exp:" + std::to_string(rate_); }
  double derivative(double x, int j) const override {
    return detail::pow_int(-rate_, j) * rate_ * std::exp(-rate_ * x);
  }
  double mixing_cdf(double t, int k) const override {
    if (t <= 0.0) return 0.0;
    double term = 1.0, sum = 1.0;
    for (int j = 1; j <= k; ++j) {
      term *= rate_ * t / j;
      sum += term;
    }
    return 1.0 - std::exp(-rate_ * t) * sum;
  }
  std::vector<double> sample(Rng& rng, std::size_t n) const override {
    std::exponential_distribution<double> e(rate_);
    std::vector<double> v(n);
    for (auto& x : v) {
      do x = e(rng);
      while (!(x > 0.0));
    }
    return v;
  }

 private:
  double rate_;
};

/// Finite scale mixture of k-th order kernels with unit mass.
class MixtureTruth : public Truth {
 public:
  MixtureTruth(MixingMeasure mm, int k) : mm_(std::move(mm)), k_(k), pp_(mixture_to_piecewise(mm_, k)) {
    check_k(k);
    if (mm_.empty() || std::abs(mm_.total_mass() - 1.0) > 1e-12)
      throw std::invalid_argument("MixtureTruth: need a probability measure");
  }
  std::string name() const override { return "mixture"; }
  double derivative(double x, int j) const override {
    if (x >= pp_.upper()) return 0.0;
    return pp_.eval(x, j);
  }
  double mixing_cdf(double t, int k) const override {
    if (k != k_) throw std::invalid_argument("MixtureTruth: k differs from the kernel order");
    return mm_.cdf(t);
  }
  std::vector<double> sample(Rng& rng, std::size_t n) const override {
    std::discrete_distribution<std::size_t> pick(mm_.weights().begin(), mm_.weights().end());
    std::vector<double> v(n);
    for (auto& x : v) {
      const double y = mm_.atoms()[pick(rng)];
      do x = y * (1.0 - std::pow(uniform_open(rng), 1.0 / k_));
      while (!(x > 0.0));
    }
    return v;
  }

 private:
  MixingMeasure mm_;
  int k_;
  PiecewisePoly pp_;
};

/// Checks (-1)^k g0^{(k)}(x0) > 0.
inline void check_curvature(const Truth& truth, int k, double x0) {
  const double v = truth.derivative(x0, k) * ((k % 2 == 0) ? 1.0 : -1.0);
  if (!(v > 0.0))
    throw std::domain_error("truth '" + truth.name() + "' has (-1)^k g0^(k)(x0) <= 0 at x0 = " + std::to_string(x0));
}

// ---------------------------------------------------------------------------
// Localized processes

struct LocalOptions {
  double half_width = 4.0;  // local t range [-K, K], clipped to x > 0
  std::size_t points = 401;
  double tol = 1e-6;
};

/// Localized Y and H processes on a t-grid, x = x0 + t n^{-1/(2k+1)}. The
/// scale is the fit's certificate scale carried to local coordinates (times
/// n^{2k/(2k+1)}, and for the MLE also g0(x0) max(1, x^k/k!)), so min_diff and
/// max_knot_residual are comparable with the global tolerances.
struct LocalDiagnostics {
  EstimatorKind kind = EstimatorKind::lse;
  int k = 1;
  std::size_t n = 0;
  double x0 = 0.0;
  std::vector<double> t;
  std::vector<double> Y_loc;
  std::vector<double> H_loc;
  std::vector<double> A;
  std::vector<double> knots_local;
  std::vector<double> knot_residuals;  // |H_loc - Y_loc| / scale at the knot images
  double scale = 1.0;
  double min_diff = 0.0;  // min (H_loc - Y_loc) / scale over t and the knot images
  double max_knot_residual = 0.0;
  bool passed = false;
};

namespace detail {

/// sum_{j<k} F^{(j)}(x0) h^j / j!
inline double taylor_part(const PiecewisePoly& f, double x0, int k, double h) {
  double s = 0.0, hp = 1.0;
  for (int j = 0; j < k; ++j) {
    s += f.eval(x0, j) * hp;
    hp *= h / (j + 1);
  }
  return s;
}

/// int_{x0}^{x} (x - v)^{k-1}/(k-1)! f(v) dv, Gauss-Legendre between the
/// given breakpoints.
template <class F>
double cauchy_integral(F&& f, int k, double x0, double x, const std::vector<double>& breaks) {
  if (x == x0) return 0.0;
  const double lo = std::min(x0, x), hi = std::max(x0, x);
  std::vector<double> cuts{lo};
  for (double b : breaks)
    if (b > lo && b < hi) cuts.push_back(b);
  cuts.push_back(hi);
  const double kf = factorial(k - 1);
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    s += boost::math::quadrature::gauss<double, 20>::integrate(
        [&](double v) { return pow_int(x - v, k - 1) / kf * f(v); }, cuts[i], cuts[i + 1]);
  return x >= x0 ? s : -s;
}

}  // namespace detail

/// Localized processes for a converged fit. g0_derivs holds g0^{(j)}(x0) for
/// j = 0..k-1.
inline LocalDiagnostics localized_processes(const Sample& sample, const FitResult& fit, double x0, int k,
                                            std::span<const double> g0_derivs, const LocalOptions& opts = {}) {
  check_k(k);
  if (fit.k != k) throw std::invalid_argument("localized_processes: fit has a different k");
  if (sample.n() == 0) throw std::domain_error("localized_processes: empty sample");
  if (!(x0 > sample.min() && x0 < sample.max()))
    throw std::domain_error("localized_processes: x0 must lie inside the data range");
  if (g0_derivs.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("localized_processes: need g0^(j)(x0) for j < k");
  const double n = static_cast<double>(sample.n());
  const double r = 1.0 / (2 * k + 1);
  const double nr = std::pow(n, -r);     // local length unit
  const double n2k = std::pow(n, 2 * k * r);

  LocalDiagnostics d;
  d.kind = fit.kind;
  d.k = k;
  d.n = sample.n();
  d.x0 = x0;
  const double tmin = std::max(-opts.half_width, -(1.0 - 1e-9) * x0 / nr);
  const std::size_t P = std::max<std::size_t>(opts.points, 2);
  for (std::size_t i = 0; i < P; ++i)
    d.t.push_back(tmin + (opts.half_width - tmin) * static_cast<double>(i) / static_cast<double>(P - 1));
  for (double a : fit.knots) {
    const double tl = (a - x0) / nr;
    if (tl >= tmin && tl <= opts.half_width) d.knots_local.push_back(tl);
  }

  // sum_j g0^{(j)}(x0) h^{j+k}/(j+k)!: the k-fold integral of the Taylor
  // polynomial of g0.
  auto drift = [&](double h) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += g0_derivs[static_cast<std::size_t>(j)] * detail::pow_int(h, j + k) / detail::factorial(j + k);
    return s;
  };
  auto taylor_g0 = [&](double v) {
    double s = 0.0, hp = 1.0;
    for (int j = 0; j < k; ++j) {
      s += g0_derivs[static_cast<std::size_t>(j)] * hp;
      hp *= (v - x0) / (j + 1);
    }
    return s;
  };

  const double top = std::max({2.0 * sample.max(), x0 + 2.0 * opts.half_width * nr,
                               fit.mixing.empty() ? 0.0 : fit.mixing.atoms().back() * 1.01});
  std::function<std::pair<double, double>(double)> eval_pair;  // (Y_loc, H_loc)

  PiecewisePoly Yn = yn_piecewise(sample, k, top);
  if (fit.kind == EstimatorKind::lse) {
    const auto Ht = htilde_piecewise(fit.mixing, k, top);
    for (int j = 0; j < k; ++j)
      d.A.push_back(std::pow(n, (2 * k - j) * r) / detail::factorial(j) * (Ht.eval(x0, j) - Yn.eval(x0, j)));
    d.scale = n2k * fit.certificate.scale;
    eval_pair = [&, Ht](double tl) {
      const double x = x0 + tl * nr, h = x - x0;
      const double y = n2k * (Yn.eval(x) - detail::taylor_part(Yn, x0, k, h) - drift(h));
      double hl = n2k * (Ht.eval(x) - detail::taylor_part(Ht, x0, k, h) - drift(h));
      for (int j = 0; j < k; ++j) hl += d.A[static_cast<std::size_t>(j)] * detail::pow_int(tl, j);
      return std::make_pair(y, hl);
    };
  } else {
    // R(x) = int_0^x (x-t)^{k-1}/(k-1)! dG_n(t)/g(t), so that H^_n(x) = k! R(x)/x^k.
    const auto R = detail::mle_r_piecewise(sample, fit.mixing, k, top);
    const double g0 = g0_derivs[0];
    // The coefficients multiply derivatives of x^k H^_n(x)/k = (k-1)! R(x).
    for (int j = 0; j < k; ++j)
      d.A.push_back(-std::pow(n, (2 * k - j) * r) / detail::factorial(j) * g0 *
                    (R.eval(x0, j) - detail::pow_int(x0, k - j) / detail::factorial(k - j)));
    double xmax = x0 + opts.half_width * nr;
    d.scale = n2k * g0 * std::max(1.0, detail::pow_int(xmax, k) / detail::factorial(k));
    const auto& ghat = fit.estimate;
    const auto& br = ghat.breakpoints();
    eval_pair = [&, R, g0](double tl) {
      const double x = x0 + tl * nr, h = x - x0;
      const double q = detail::cauchy_integral(
          [&](double v) { return taylor_g0(v) / ghat.eval(v); }, k, x0, x, br);
      const double y = g0 * n2k * (R.eval(x) - detail::taylor_part(R, x0, k, h) - q);
      double hl = g0 * n2k * (detail::pow_int(h, k) / detail::factorial(k) - q);
      for (int j = 0; j < k; ++j) hl += d.A[static_cast<std::size_t>(j)] * detail::pow_int(tl, j);
      return std::make_pair(y, hl);
    };
  }

  double md = INFINITY;
  for (double tl : d.t) {
    const auto [y, hl] = eval_pair(tl);
    d.Y_loc.push_back(y);
    d.H_loc.push_back(hl);
    md = std::min(md, (hl - y) / d.scale);
  }
  for (double tl : d.knots_local) {
    const auto [y, hl] = eval_pair(tl);
    d.knot_residuals.push_back(std::abs(hl - y) / d.scale);
    md = std::min(md, (hl - y) / d.scale);
    d.max_knot_residual = std::max(d.max_knot_residual, d.knot_residuals.back());
  }
  d.min_diff = md;
  bool finite = true;
  for (double a : d.A) finite = finite && std::isfinite(a);
  d.passed = finite && d.min_diff >= -opts.tol && d.max_knot_residual <= opts.tol;
  return d;
}

inline LocalDiagnostics localized_processes(const Sample& sample, const FitResult& fit, double x0, int k,
                                            const Truth& truth, const LocalOptions& opts = {}) {
  std::vector<double> g;
  for (int j = 0; j < k; ++j) g.push_back(truth.derivative(x0, j));
  return localized_processes(sample, fit, x0, k, g, opts);
}

// ---------------------------------------------------------------------------
// Monte Carlo studies

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Type-7 empirical quantile of a sorted vector.
inline double quantile_sorted(const std::vector<double>& v, double p) {
  if (v.empty()) return NAN;
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return NAN;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

/// Runs fn(i) for i < count on `threads` workers. Each index writes only its
/// own result slot, so output does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errs(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

struct ExperimentConfig {
  int k = 3;
  std::shared_ptr<const Truth> truth = std::make_shared<ExponentialTruth>();
  double x0 = 1.0;
  std::vector<std::size_t> n_list{500, 2000, 8000};
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  EstimatorKind estimator = EstimatorKind::lse;
  FitOptions fit;
  unsigned threads = 1;
};

/// Sample for replication `rep` at level `level`: its own stream
/// derive_seed(seed, level, rep).
inline Sample replication_sample(const ExperimentConfig& cfg, std::size_t level, std::size_t rep) {
  Rng rng(derive_seed(cfg.seed, level, rep));
  return Sample(cfg.truth->sample(rng, cfg.n_list.at(level)));
}

inline FitResult fit_with(EstimatorKind kind, const Sample& s, int k, const FitOptions& opts) {
  return kind == EstimatorKind::lse ? fit_lse(s, k, opts) : fit_mle(s, k, opts);
}

inline void validate(const ExperimentConfig& cfg) {
  check_k(cfg.k);
  if (!cfg.truth) throw std::invalid_argument("experiment: no truth");
  if (!(cfg.x0 > 0.0)) throw std::invalid_argument("experiment: x0 must be positive");
  if (cfg.n_list.empty()) throw std::invalid_argument("experiment: empty n_list");
  for (auto n : cfg.n_list)
    if (n == 0) throw std::invalid_argument("experiment: n must be positive");
  check_curvature(*cfg.truth, cfg.k, cfg.x0);
}

enum class GapFlag { ok, shifted, insufficient, failed };

inline const char* to_string(GapFlag f) {
  switch (f) {
    case GapFlag::ok: return "ok";
    case GapFlag::shifted: return "shifted";
    case GapFlag::insufficient: return "insufficient";
    case GapFlag::failed: return "failed";
  }
  return "?";
}

struct GapWindow {
  std::vector<double> knots;
  GapFlag flag = GapFlag::ok;
  double gap() const { return knots.size() >= 2 ? knots.back() - knots.front() : NAN; }
};

/// The 2k-2 consecutive knots straddling x0 (k-1 at or below, k-1 above; one
/// on each side when k = 1). With too few on one side the window slides
/// toward the other side and is flagged.
inline GapWindow straddling_knots(std::span<const double> knots, int k, double x0) {
  const std::size_t half = static_cast<std::size_t>(std::max(k - 1, 1));
  const std::size_t need = 2 * half;
  GapWindow w;
  if (knots.size() < need) {
    w.flag = GapFlag::insufficient;
    return w;
  }
  const auto below = static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), x0) - knots.begin());
  const std::size_t above = knots.size() - below;
  std::size_t start;
  if (below >= half && above >= half) {
    start = below - half;
  } else if (below < half) {
    start = 0;
    w.flag = GapFlag::shifted;
  } else {
    start = knots.size() - need;
    w.flag = GapFlag::shifted;
  }
  w.knots.assign(knots.begin() + static_cast<long>(start), knots.begin() + static_cast<long>(start + need));
  return w;
}

struct GapReplication {
  std::size_t n = 0;
  std::size_t rep = 0;
  double gap = NAN;
  GapFlag flag = GapFlag::ok;
};

struct GapRow {
  std::size_t n = 0;
  double median_gap = NAN;
  std::vector<double> quantiles;  // at gap_quantile_levels
  std::size_t used = 0;
  std::size_t shifted = 0;
  std::size_t insufficient = 0;
  std::size_t failed = 0;
};

inline const std::vector<double>& gap_quantile_levels() {
  static const std::vector<double> q{0.1, 0.25, 0.5, 0.75, 0.9};
  return q;
}

struct GapTable {
  std::vector<GapRow> rows;
  std::vector<GapReplication> replications;
  double slope = NAN;  // log median gap on log n
};

/// Shifted windows are kept (flagged); replications without enough knots or
/// whose fit failed are excluded and counted.
inline GapTable gap_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  GapTable out;
  const std::size_t L = cfg.n_list.size();
  out.replications.resize(L * cfg.reps);
  parallel_for(L * cfg.reps, cfg.threads, [&](std::size_t idx) {
    const std::size_t level = idx / cfg.reps, rep = idx % cfg.reps;
    auto& r = out.replications[idx];
    r.n = cfg.n_list[level];
    r.rep = rep;
    const auto s = replication_sample(cfg, level, rep);
    try {
      const auto fit = fit_with(cfg.estimator, s, cfg.k, cfg.fit);
      const auto w = straddling_knots(fit.knots, cfg.k, cfg.x0);
      r.flag = w.flag;
      r.gap = w.gap();
    } catch (const NonConvergenceError&) {
      r.flag = GapFlag::failed;
    }
  });
  std::vector<double> lx, ly;
  for (std::size_t level = 0; level < L; ++level) {
    GapRow row;
    row.n = cfg.n_list[level];
    std::vector<double> g;
    for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
      const auto& r = out.replications[level * cfg.reps + rep];
      if (r.flag == GapFlag::insufficient) ++row.insufficient;
      else if (r.flag == GapFlag::failed) ++row.failed;
      else {
        if (r.flag == GapFlag::shifted) ++row.shifted;
        g.push_back(r.gap);
      }
    }
    std::sort(g.begin(), g.end());
    row.used = g.size();
    row.median_gap = quantile_sorted(g, 0.5);
    for (double p : gap_quantile_levels()) row.quantiles.push_back(quantile_sorted(g, p));
    if (row.used > 0 && row.median_gap > 0.0) {
      lx.push_back(std::log(static_cast<double>(row.n)));
      ly.push_back(std::log(row.median_gap));
    }
    out.rows.push_back(row);
  }
  out.slope = ols_slope(lx, ly);
  return out;
}

struct RateReplication {
  std::size_t n = 0;
  std::size_t rep = 0;
  bool ok = false;
  std::vector<double> raw;       // g^{(j)}(x0) - g0^{(j)}(x0) per requested j
  std::vector<double> rescaled;  // n^{(k-j)/(2k+1)} times raw
  double inverse_raw = NAN;      // F^(x0) - F(x0)
  double inverse_rescaled = NAN;
};

struct RateTable {
  std::vector<int> j_list;
  std::vector<std::size_t> n_list;
  std::vector<RateReplication> replications;
  // median |raw| per (j index, n index), and for the inverse statistic per n
  std::vector<std::vector<double>> median_abs_raw;
  std::vector<double> inverse_median_abs_raw;
  // KS distance between consecutive n levels: ks[j index][level - 1]; empty
  // when there are fewer than two replications (not applicable)
  std::vector<std::vector<double>> ks;
  std::vector<double> inverse_ks;
  std::size_t failed = 0;
  bool ks_applicable = false;
};

inline RateTable rate_experiment(const ExperimentConfig& cfg, std::vector<int> j_list) {
  validate(cfg);
  for (int j : j_list)
    if (j < 0 || j >= cfg.k) throw std::invalid_argument("rate_experiment: need 0 <= j < k");
  RateTable out;
  out.j_list = j_list;
  out.n_list = cfg.n_list;
  const std::size_t L = cfg.n_list.size(), J = j_list.size();
  const double r = 1.0 / (2 * cfg.k + 1);
  const double F0 = cfg.truth->mixing_cdf(cfg.x0, cfg.k);
  out.replications.resize(L * cfg.reps);
  parallel_for(L * cfg.reps, cfg.threads, [&](std::size_t idx) {
    const std::size_t level = idx / cfg.reps, rep = idx % cfg.reps;
    auto& rr = out.replications[idx];
    const double n = static_cast<double>(cfg.n_list[level]);
    rr.n = cfg.n_list[level];
    rr.rep = rep;
    const auto s = replication_sample(cfg, level, rep);
    try {
      const auto fit = fit_with(cfg.estimator, s, cfg.k, cfg.fit);
      for (int j : j_list) {
        const double gj = cfg.x0 < fit.estimate.upper() ? fit.estimate.eval(cfg.x0, j) : 0.0;
        const double e = gj - cfg.truth->derivative(cfg.x0, j);
        rr.raw.push_back(e);
        rr.rescaled.push_back(std::pow(n, (cfg.k - j) * r) * e);
      }
      rr.inverse_raw = invert_mixing(fit, cfg.x0) - F0;
      rr.inverse_rescaled = std::pow(n, r) * rr.inverse_raw;
      rr.ok = true;
    } catch (const NonConvergenceError&) {
      rr.ok = false;
    }
  });
  auto column = [&](std::size_t level, std::size_t jj, bool rescaled) {
    std::vector<double> v;
    for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
      const auto& rr = out.replications[level * cfg.reps + rep];
      if (!rr.ok) continue;
      if (jj == J) v.push_back(rescaled ? rr.inverse_rescaled : rr.inverse_raw);
      else v.push_back(rescaled ? rr.rescaled[jj] : rr.raw[jj]);
    }
    return v;
  };
  for (const auto& rr : out.replications)
    if (!rr.ok) ++out.failed;
  auto median_abs = [](std::vector<double> v) {
    for (auto& x : v) x = std::abs(x);
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.5);
  };
  out.median_abs_raw.assign(J, {});
  out.ks.assign(J, {});
  out.ks_applicable = cfg.reps >= 2 && L >= 2;
  for (std::size_t jj = 0; jj <= J; ++jj) {
    for (std::size_t level = 0; level < L; ++level) {
      const double m = median_abs(column(level, jj, false));
      if (jj == J) out.inverse_median_abs_raw.push_back(m);
      else out.median_abs_raw[jj].push_back(m);
      if (out.ks_applicable && level > 0) {
        const auto a = column(level - 1, jj, true), b = column(level, jj, true);
        const double ks = (a.empty() || b.empty()) ? NAN : ks_distance(a, b);
        if (jj == J) out.inverse_ks.push_back(ks);
        else out.ks[jj].push_back(ks);
      }
    }
  }
  return out;
}

}  // namespace kmono
