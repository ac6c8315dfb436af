// Randomized search for large Hermite interpolation errors over knot
// configurations on [0, 1].
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "kmono/interp.hpp"
#include "kmono/random.hpp"

namespace kmono {

enum class KnotSampler { uniform, dirichlet, clustered, mixed };
enum class ConjectureTarget { perfect_spline, truncated_power, user };

inline const char* to_string(KnotSampler s) {
  switch (s) {
    case KnotSampler::uniform: return "uniform";
    case KnotSampler::dirichlet: return "dirichlet";
    case KnotSampler::clustered: return "clustered";
    case KnotSampler::mixed: return "mixed";
  }
  return "?";
}

inline const char* to_string(ConjectureTarget t) {
  switch (t) {
    case ConjectureTarget::perfect_spline: return "perfect_spline";
    case ConjectureTarget::truncated_power: return "truncated_power";
    case ConjectureTarget::user: return "user";
  }
  return "?";
}

struct ConjectureOptions {
  int k = 3;
  std::size_t trials = 10000;
  KnotSampler sampler = KnotSampler::uniform;
  ConjectureTarget target = ConjectureTarget::perfect_spline;
  int grid_resolution = 2048;     // points per knot interval
  double dirichlet_alpha = 0.5;
  double cluster_width = 1e-4;
  double cond_limit = kHermiteCondLimit;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool keep_trials = false;
  // Target f for ConjectureTarget::user: f(x, d) for d = 0, 1. Returned in
  // 50 digits so that data rounding is not amplified by the collocation matrix.
  std::function<detail::wide(double, int)> user_f;
  // Report bound; defaults to 2/(2k)! for the perfect spline and +inf otherwise.
  std::optional<double> bound;
};

struct ConjectureTrial {
  std::size_t index = 0;
  std::vector<double> knots;  // interior knots y_1..y_{2k-4}
  double t = std::numeric_limits<double>::quiet_NaN();
  double sup_error = 0.0;
  double condition = 0.0;
  bool ill_conditioned = false;
};

struct ConjectureReport {
  int k = 0;
  std::size_t trials = 0;
  std::size_t completed = 0;
  std::size_t ill_conditioned = 0;
  double max_sup_error = 0.0;
  double bound = std::numeric_limits<double>::infinity();
  std::vector<double> argmax_knots;
  double argmax_t = std::numeric_limits<double>::quiet_NaN();
  double max_condition = 0.0;
  bool violated = false;
  std::vector<ConjectureTrial> log;

  double ill_conditioned_fraction() const {
    return trials == 0 ? 0.0 : static_cast<double>(ill_conditioned) / static_cast<double>(trials);
  }
};

inline double perfect_spline_bound(int k) { return 2.0 / detail::factorial(2 * k); }

/// Draws 2k-4 interior knots in (0, 1).
inline std::vector<double> sample_knots(int k, KnotSampler sampler, Rng& rng, std::size_t trial_index,
                                        double dirichlet_alpha = 0.5, double cluster_width = 1e-4) {
  const std::size_t m = static_cast<std::size_t>(2 * k - 4);
  if (sampler == KnotSampler::mixed) {
    static constexpr KnotSampler cycle[] = {KnotSampler::uniform, KnotSampler::dirichlet, KnotSampler::clustered};
    sampler = cycle[trial_index % 3];
  }
  std::vector<double> y;
  y.reserve(m);
  switch (sampler) {
    case KnotSampler::uniform:
    case KnotSampler::mixed:
      for (std::size_t i = 0; i < m; ++i) y.push_back(uniform_open(rng));
      break;
    case KnotSampler::dirichlet: {
      auto gaps = dirichlet(rng, m + 1, dirichlet_alpha);
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) y.push_back(s += gaps[i]);
      break;
    }
    case KnotSampler::clustered: {
      // min(3, 2k-4) knots inside a window of width cluster_width. With only
      // two interior knots the window touches an endpoint, so three sites
      // still cluster.
      const std::size_t c = std::min<std::size_t>(3, m);
      double lo;
      if (c < 3) {
        lo = (uniform_open(rng) < 0.5) ? 0.0 : 1.0 - cluster_width;
      } else {
        lo = cluster_width + (1.0 - 3.0 * cluster_width) * uniform_open(rng);
      }
      for (std::size_t i = 0; i < c; ++i) y.push_back(lo + cluster_width * uniform_open(rng));
      for (std::size_t i = c; i < m; ++i) y.push_back(uniform_open(rng));
      break;
    }
  }
  std::sort(y.begin(), y.end());
  return y;
}

namespace detail {

// d-th derivative (d = 0, 1) of the perfect spline in closed form.
inline wide perfect_spline_wide(int k, const std::vector<double>& knots, double x, int d) {
  const int n = 2 * k;
  const wide q(x);
  wide acc = pow(q, n - d);
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (x <= knots[i]) break;
    const wide term = 2 * pow(q - knots[i], n - d);
    acc += (i % 2 == 0) ? -term : term;
  }
  return acc / factorial(n - d);
}

inline ConjectureTrial run_conjecture_trial(const ConjectureOptions& opt, std::size_t index) {
  ConjectureTrial tr;
  tr.index = index;
  Rng rng(derive_seed(opt.seed, index));
  tr.knots = sample_knots(opt.k, opt.sampler, rng, index, opt.dirichlet_alpha, opt.cluster_width);
  const int k = opt.k;
  std::vector<double> sites{0.0};
  sites.insert(sites.end(), tr.knots.begin(), tr.knots.end());
  sites.push_back(1.0);
  try {
    switch (opt.target) {
      case ConjectureTarget::perfect_spline: {
        auto s = perfect_spline(k, tr.knots);
        auto h = hermite_of(
            k, sites, [&](double x, int d) { return perfect_spline_wide(k, tr.knots, x, d); }, opt.cond_limit,
            &tr.condition);
        tr.sup_error = sup_norm(linear_combination(1.0, s, -1.0, h), opt.grid_resolution).value;
        break;
      }
      case ConjectureTarget::truncated_power: {
        // g_t(x) = (x - t)_+^{k-1}/(k-1)!
        tr.t = uniform_open(rng);
        const double t = tr.t;
        auto g = [&](double x, int d) {
          if (x <= t) return wide(0);
          return wide(pow(wide(x) - t, k - 1 - d) / factorial(k - 1 - d));
        };
        auto h = hermite_of(k, sites, g, opt.cond_limit, &tr.condition);
        std::vector<double> br(h.breakpoints());
        br.push_back(t);
        std::sort(br.begin(), br.end());
        br.erase(std::unique(br.begin(), br.end()), br.end());
        tr.sup_error = sup_norm_fn([&](double x) { return static_cast<double>(g(x, 0)) - h.eval(x); }, br, opt.grid_resolution).value;
        break;
      }
      case ConjectureTarget::user: {
        if (!opt.user_f) throw std::invalid_argument("conjecture: user target requires a function");
        auto h = hermite_of(k, sites, opt.user_f, opt.cond_limit, &tr.condition);
        tr.sup_error =
            sup_norm_fn([&](double x) { return static_cast<double>(opt.user_f(x, 0)) - h.eval(x); }, h.breakpoints(), opt.grid_resolution)
                .value;
        break;
      }
    }
  } catch (const IllConditionedError& e) {
    tr.ill_conditioned = true;
    tr.condition = e.condition();
    tr.sup_error = std::numeric_limits<double>::quiet_NaN();
  }
  return tr;
}

}  // namespace detail

/// Runs opt.trials independent trials and reduces them to a report. Trials
/// flagged ill-conditioned are counted and excluded from the maximum.
inline ConjectureReport conjecture_trial(const ConjectureOptions& opt) {
  check_k(opt.k, 3);
  ConjectureReport rep;
  rep.k = opt.k;
  rep.trials = opt.trials;
  rep.bound = opt.bound.value_or(opt.target == ConjectureTarget::perfect_spline
                                     ? perfect_spline_bound(opt.k)
                                     : std::numeric_limits<double>::infinity());
  std::vector<ConjectureTrial> results(opt.trials);
  const unsigned nt = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(std::max<std::size_t>(1, opt.trials))));
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) results[i] = detail::run_conjecture_trial(opt, i);
  };
  if (nt == 1) {
    work(0, opt.trials);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (opt.trials + nt - 1) / nt;
    for (unsigned t = 0; t < nt; ++t) {
      const std::size_t lo = t * chunk, hi = std::min(opt.trials, lo + chunk);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  bool have = false;
  for (const auto& tr : results) {
    if (tr.ill_conditioned) {
      ++rep.ill_conditioned;
      continue;
    }
    ++rep.completed;
    rep.max_condition = std::max(rep.max_condition, tr.condition);
    if (!have || tr.sup_error > rep.max_sup_error) {
      have = true;
      rep.max_sup_error = tr.sup_error;
      rep.argmax_knots = tr.knots;
      rep.argmax_t = tr.t;
    }
  }
  rep.violated = rep.max_sup_error > rep.bound;
  if (opt.keep_trials) rep.log = std::move(results);
  return rep;
}

}  // namespace kmono
