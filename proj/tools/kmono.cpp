// kmono: batch front end for fits, inversion, the conjecture harness and the
// Monte Carlo studies.
#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kmono.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kmono;

namespace {

constexpr const char* kSchema = "kmono/1";

enum Exit { ok = 0, threshold = 1, bad_input = 2, no_convergence = 3 };

// Bad input or configuration; reported with exit status 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Kind { integer, unsigned_integer, number, text, number_list, boolean };

struct Flag {
  std::string key;
  Kind kind;
  std::string raw;
  CLI::Option* opt = nullptr;
};

double parse_double(std::string_view s, const std::string& what) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw InputError(what + ": not a number: '" + std::string(s) + "'");
  return v;
}

json convert(const Flag& f) {
  switch (f.kind) {
    case Kind::integer: return static_cast<long long>(parse_double(f.raw, "--" + f.key));
    case Kind::unsigned_integer:
      try {
        if (!f.raw.empty() && f.raw.front() == '-') throw std::invalid_argument("negative");
        return static_cast<std::uint64_t>(std::stoull(f.raw));
      } catch (const std::exception&) {
        throw InputError("--" + f.key + ": expected an unsigned integer");
      }
    case Kind::number: return parse_double(f.raw, "--" + f.key);
    case Kind::text: return f.raw;
    case Kind::boolean: return f.raw == "true" || f.raw == "1";
    case Kind::number_list: {
      json a = json::array();
      std::stringstream ss(f.raw);
      std::string item;
      while (std::getline(ss, item, ',')) a.push_back(parse_double(item, "--" + f.key));
      return a;
    }
  }
  return nullptr;
}

// Effective configuration: defaults, overridden by the JSON config file,
// overridden by flags given on the command line.
class Config {
 public:
  Config(json defaults, const std::string& config_path, const std::vector<Flag>& flags) : eff_(std::move(defaults)) {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw InputError("cannot read config file '" + config_path + "'");
      json file;
      try {
        file = json::parse(in);
      } catch (const json::parse_error& e) {
        throw InputError("config file '" + config_path + "': " + e.what());
      }
      if (!file.is_object()) throw InputError("config file must hold a JSON object");
      for (auto it = file.begin(); it != file.end(); ++it) {
        if (it.key() == "schema") continue;
        if (!eff_.contains(it.key())) throw InputError("config: unknown key '" + it.key() + "'");
        eff_[it.key()] = it.value();
      }
    }
    for (const auto& f : flags)
      if (f.opt != nullptr && f.opt->count() > 0) eff_[f.key] = convert(f);
  }

  template <class T>
  T get(const std::string& key) const {
    try {
      return eff_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InputError("config key '" + key + "': " + e.what());
    }
  }
  const json& raw(const std::string& key) const { return eff_.at(key); }
  const json& effective() const { return eff_; }

 private:
  json eff_;
};

struct Command {
  std::string name;
  json defaults;
  std::vector<Flag> flags;
  CLI::App* app = nullptr;
};

void add_flag(Command& c, const std::string& key, Kind kind, const std::string& help) {
  c.flags.push_back({key, kind, "", nullptr});
  std::string name = "--" + key;
  for (auto& ch : name)
    if (ch == '_') ch = '-';
  c.flags.back().opt = c.app->add_option(name, c.flags.back().raw, help);
}

json common_defaults() {
  return json{{"k", 3},         {"seed", 1},           {"out", "."}, {"threads", 1},
              {"tol_ineq", 1e-7}, {"tol_eq", 1e-6}};
}

void add_common(Command& c) {
  add_flag(c, "k", Kind::integer, "order of monotonicity");
  add_flag(c, "seed", Kind::unsigned_integer, "master seed");
  add_flag(c, "out", Kind::text, "output directory");
  add_flag(c, "threads", Kind::integer, "worker threads");
  add_flag(c, "tol_ineq", Kind::number, "inequality tolerance (relative to scale)");
  add_flag(c, "tol_eq", Kind::number, "equality tolerance (relative to scale)");
}

int checked_k(const Config& cfg, int lo = 1) {
  const int k = cfg.get<int>("k");
  if (k < lo || k > kMaxK) throw InputError("k must lie in [" + std::to_string(lo) + ", " + std::to_string(kMaxK) + "]");
  return k;
}

unsigned checked_threads(const Config& cfg) {
  const int t = cfg.get<int>("threads");
  if (t < 1) throw InputError("threads must be positive");
  return static_cast<unsigned>(t);
}

fs::path out_dir(const Config& cfg) {
  const fs::path p = cfg.get<std::string>("out");
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw InputError("cannot create output directory '" + p.string() + "'");
  return p;
}

EstimatorKind parse_estimator(const std::string& s) {
  if (s == "lse") return EstimatorKind::lse;
  if (s == "mle") return EstimatorKind::mle;
  throw InputError("estimator must be 'lse' or 'mle'");
}

// Shortest round-trip formatting, locale independent.
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  out << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json summary_head(const std::string& command, const Config& cfg) {
  return json{{"schema", kSchema}, {"command", command}, {"config", cfg.effective()}};
}

std::vector<double> read_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read input '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  std::vector<double> v;
  if (first != std::string::npos && text[first] == '[') {
    try {
      v = json::parse(text).get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw InputError("input '" + path + "': " + e.what());
    }
  } else {
    std::string line;
    std::size_t lineno = 0;
    std::stringstream ls(text);
    while (std::getline(ls, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if (lineno == 1 && line.find_first_not_of(" \t") == line.find('x') && line.find_first_not_of(" \tx") == std::string::npos)
        continue;
      v.push_back(parse_double(line, "input '" + path + "' line " + std::to_string(lineno)));
    }
  }
  if (v.empty()) throw InputError("input '" + path + "' holds no observations");
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) throw InputError("input '" + path + "': observations must be positive");
  return v;
}

// ---- fit ----

json fit_json(const FitResult& fit, const Config& cfg) {
  json j = summary_head("fit", cfg);
  j["k"] = fit.k;
  j["estimator"] = to_string(fit.kind);
  j["atoms"] = fit.mixing.atoms();
  j["weights"] = fit.mixing.weights();
  j["knots"] = fit.knots;
  j["total_mass"] = fit.mixing.total_mass();
  j["objective"] = fit.objective;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  const auto& c = fit.certificate;
  j["certificate"] = json{{"min_slack", finite_or_null(c.min_slack)},
                          {"argmin_slack", finite_or_null(c.argmin_slack)},
                          {"max_knot_residual", finite_or_null(c.max_knot_residual)},
                          {"max_derivative_residual", finite_or_null(c.max_derivative_residual)},
                          {"scale", c.scale},
                          {"tol_ineq", c.tol_ineq},
                          {"tol_eq", c.tol_eq},
                          {"passed", c.passed}};
  j["warnings"] = fit.warnings;
  return j;
}

void write_fit(const fs::path& dir, const FitResult& fit, const Config& cfg) {
  write_json(dir / "fit.json", fit_json(fit, cfg));
  const int points = cfg.get<int>("grid_points");
  const auto& g = fit.estimate;
  std::string s = "x";
  s += ",g";
  for (int j = 1; j < fit.k; ++j) s += ",g" + std::to_string(j);
  s += "\n";
  const double lo = g.lower(), hi = g.upper();
  for (int i = 0; i < points; ++i) {
    const double x = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
    s += num(x);
    for (int j = 0; j < fit.k; ++j) s += "," + num(g.eval(x, j, i + 1 == points ? Side::left : Side::right));
    s += "\n";
  }
  write_text(dir / "grid.csv", s);
}

int cmd_fit(const Config& cfg) {
  const int k = checked_k(cfg);
  const auto kind = parse_estimator(cfg.get<std::string>("estimator"));
  const auto input = cfg.get<std::string>("input");
  if (input.empty()) throw InputError("fit: no input file");
  if (cfg.get<int>("grid_points") < 1) throw InputError("grid_points must be positive");
  const Sample sample(read_values(input));
  FitOptions opts;
  opts.tol_ineq = cfg.get<double>("tol_ineq");
  opts.tol_eq = cfg.get<double>("tol_eq");
  opts.max_iter = cfg.get<int>("max_iter");
  const auto dir = out_dir(cfg);
  try {
    const auto fit = kind == EstimatorKind::lse ? fit_lse(sample, k, opts) : fit_mle(sample, k, opts);
    write_fit(dir, fit, cfg);
    std::cout << "fit: " << to_string(kind) << " k=" << k << " atoms=" << fit.mixing.size()
              << " certificate " << (fit.certificate.passed ? "passed" : "FAILED") << "\n";
    return fit.certificate.passed ? Exit::ok : Exit::threshold;
  } catch (const NonConvergenceError& e) {
    write_fit(dir, e.best(), cfg);
    std::cerr << "fit: " << e.what() << "; best iterate written\n";
    return Exit::no_convergence;
  }
}

// ---- invert ----

int cmd_invert(const Config& cfg) {
  const auto path = cfg.get<std::string>("fit");
  std::ifstream in(path);
  if (path.empty() || !in) throw InputError("invert: cannot read fit file '" + path + "'");
  json fj;
  try {
    fj = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("invert: fit file: " + std::string(e.what()));
  }
  int k = 0;
  MixingMeasure mm;
  try {
    k = fj.at("k").get<int>();
    mm = MixingMeasure(fj.at("atoms").get<std::vector<double>>(), fj.at("weights").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw InputError("invert: malformed fit file: " + std::string(e.what()));
  } catch (const std::logic_error& e) {
    throw InputError("invert: malformed fit file: " + std::string(e.what()));
  }
  if (k < 1 || k > kMaxK) throw InputError("invert: k out of range in fit file");
  std::vector<double> ts;
  if (!cfg.raw("t").empty()) {
    ts = cfg.get<std::vector<double>>("t");
  } else {
    const double hi = cfg.get<double>("t_max") > 0.0 ? cfg.get<double>("t_max")
                                                      : (mm.empty() ? 1.0 : 1.25 * mm.atoms().back());
    const int count = cfg.get<int>("t_count");
    if (count < 1) throw InputError("t_count must be positive");
    for (int i = 1; i <= count; ++i) ts.push_back(hi * i / count);
  }
  const double mass = mm.total_mass();
  std::string s = "t,F,F_raw,clipped\n";
  std::size_t clipped = 0;
  for (double t : ts) {
    if (!(t > 0.0)) throw InputError("invert: evaluation points must be positive");
    const double raw = mm.empty() ? 0.0 : invert_mixing(mm, k, t);
    const double f = std::clamp(raw, 0.0, mass);
    clipped += f != raw;
    s += num(t) + "," + num(f) + "," + num(raw) + "," + (f != raw ? "1" : "0") + "\n";
  }
  const auto dir = out_dir(cfg);
  write_text(dir / "invert.csv", s);
  json j = summary_head("invert", cfg);
  j["k"] = k;
  j["total_mass"] = mass;
  j["points"] = ts.size();
  j["clipped"] = clipped;
  write_json(dir / "invert.json", j);
  std::cout << "invert: " << ts.size() << " points, " << clipped << " clipped\n";
  return Exit::ok;
}

// ---- conjecture ----

int cmd_conjecture(const Config& cfg) {
  ConjectureOptions o;
  o.k = checked_k(cfg, 3);
  const double trials = cfg.get<double>("trials");
  if (trials < 0) throw InputError("trials must be nonnegative");
  o.trials = static_cast<std::size_t>(trials);
  const auto sampler = cfg.get<std::string>("sampler");
  if (sampler == "uniform") o.sampler = KnotSampler::uniform;
  else if (sampler == "dirichlet") o.sampler = KnotSampler::dirichlet;
  else if (sampler == "clustered") o.sampler = KnotSampler::clustered;
  else if (sampler == "mixed") o.sampler = KnotSampler::mixed;
  else throw InputError("sampler must be uniform, dirichlet, clustered or mixed");
  const auto target = cfg.get<std::string>("target");
  if (target == "perfect_spline") o.target = ConjectureTarget::perfect_spline;
  else if (target == "truncated_power") o.target = ConjectureTarget::truncated_power;
  else throw InputError("target must be perfect_spline or truncated_power");
  o.grid_resolution = cfg.get<int>("grid_resolution");
  if (o.grid_resolution < 2) throw InputError("grid_resolution must be at least 2");
  o.dirichlet_alpha = cfg.get<double>("dirichlet_alpha");
  o.cluster_width = cfg.get<double>("cluster_width");
  o.seed = cfg.get<std::uint64_t>("seed");
  o.threads = checked_threads(cfg);
  o.keep_trials = true;
  const double max_ill = cfg.get<double>("max_ill_fraction");
  const auto dir = out_dir(cfg);
  const auto rep = conjecture_trial(o);

  json j = summary_head("conjecture", cfg);
  j["k"] = rep.k;
  j["trials"] = rep.trials;
  j["completed"] = rep.completed;
  j["ill_conditioned"] = rep.ill_conditioned;
  j["ill_conditioned_fraction"] = rep.ill_conditioned_fraction();
  j["max_sup_error"] = rep.max_sup_error;
  j["bound"] = finite_or_null(rep.bound);
  j["argmax_knots"] = rep.argmax_knots;
  j["argmax_t"] = finite_or_null(rep.argmax_t);
  j["max_condition"] = rep.max_condition;
  j["violated"] = rep.violated;
  const bool pass = !rep.violated && rep.ill_conditioned_fraction() <= max_ill;
  j["passed"] = pass;
  write_json(dir / "conjecture.json", j);

  std::string s = "trial";
  for (int i = 1; i <= 2 * o.k - 4; ++i) s += ",y" + std::to_string(i);
  s += ",t,sup_error,condition,ill_conditioned\n";
  for (const auto& t : rep.log) {
    s += std::to_string(t.index);
    for (double y : t.knots) s += "," + num(y);
    s += "," + num(t.t) + "," + num(t.sup_error) + "," + num(t.condition) + "," + (t.ill_conditioned ? "1" : "0") + "\n";
  }
  write_text(dir / "conjecture_trials.csv", s);
  std::cout << "conjecture: k=" << rep.k << " trials=" << rep.trials << " max sup error " << num(rep.max_sup_error)
            << " bound " << num(rep.bound) << (pass ? " ok" : " FAILED") << "\n";
  return pass ? Exit::ok : Exit::threshold;
}

// ---- experiments ----

json experiment_defaults() {
  return json{{"truth", "exp"}, {"x0", 1.0}, {"n_list", {500, 2000, 8000}}, {"reps", 200}, {"estimator", "lse"}};
}

void add_experiment_flags(Command& c) {
  add_flag(c, "estimator", Kind::text, "lse or mle");
  add_flag(c, "x0", Kind::number, "evaluation point");
  add_flag(c, "n_list", Kind::number_list, "comma-separated sample sizes");
  add_flag(c, "reps", Kind::integer, "replications per sample size");
  add_flag(c, "truth", Kind::text, "'exp' or 'exp:<rate>' (JSON config also accepts {\"atoms\":[..],\"weights\":[..]})");
}

std::shared_ptr<const Truth> parse_truth(const json& t, int k) {
  if (t.is_string()) {
    const auto s = t.get<std::string>();
    if (s == "exp") return std::make_shared<ExponentialTruth>();
    if (s.rfind("exp:", 0) == 0) return std::make_shared<ExponentialTruth>(parse_double(s.substr(4), "truth rate"));
  } else if (t.is_object()) {
    if (t.contains("rate")) return std::make_shared<ExponentialTruth>(t.at("rate").get<double>());
    if (t.contains("atoms"))
      return std::make_shared<MixtureTruth>(
          MixingMeasure(t.at("atoms").get<std::vector<double>>(), t.at("weights").get<std::vector<double>>(),
                        MassConstraint::unit),
          k);
  }
  throw InputError("truth must be 'exp', 'exp:<rate>', {\"rate\": r} or {\"atoms\": [...], \"weights\": [...]}");
}

ExperimentConfig experiment_config(const Config& cfg) {
  ExperimentConfig e;
  e.k = checked_k(cfg);
  try {
    e.truth = parse_truth(cfg.raw("truth"), e.k);
    e.x0 = cfg.get<double>("x0");
    e.n_list.clear();
    for (double n : cfg.get<std::vector<double>>("n_list")) {
      if (!(n >= 1.0) || n != std::floor(n)) throw InputError("n_list entries must be positive integers");
      e.n_list.push_back(static_cast<std::size_t>(n));
    }
    const int reps = cfg.get<int>("reps");
    if (reps < 1) throw InputError("reps must be positive");
    e.reps = static_cast<std::size_t>(reps);
    e.seed = cfg.get<std::uint64_t>("seed");
    e.estimator = parse_estimator(cfg.get<std::string>("estimator"));
    e.fit.tol_ineq = cfg.get<double>("tol_ineq");
    e.fit.tol_eq = cfg.get<double>("tol_eq");
    e.threads = checked_threads(cfg);
    validate(e);
  } catch (const InputError&) {
    throw;
  } catch (const json::exception& ex) {
    throw InputError(ex.what());
  } catch (const std::logic_error& ex) {
    throw InputError(ex.what());
  }
  return e;
}

int cmd_gap_study(const Config& cfg) {
  const auto e = experiment_config(cfg);
  const double target = -1.0 / (2 * e.k + 1);
  const double tol = cfg.raw("slope_tol").is_null() ? (e.k == 1 ? 0.1 : 0.15) : cfg.get<double>("slope_tol");
  const auto dir = out_dir(cfg);
  const auto t = gap_experiment(e);

  std::string s = "n,rep,gap,flag\n";
  for (const auto& r : t.replications)
    s += std::to_string(r.n) + "," + std::to_string(r.rep) + "," + num(r.gap) + "," + to_string(r.flag) + "\n";
  write_text(dir / "gap_replications.csv", s);

  json j = summary_head("gap-study", cfg);
  json rows = json::array();
  for (const auto& r : t.rows) {
    json q = json::object();
    for (std::size_t i = 0; i < r.quantiles.size(); ++i)
      q[num(gap_quantile_levels()[i])] = finite_or_null(r.quantiles[i]);
    rows.push_back(json{{"n", r.n},
                        {"median_gap", finite_or_null(r.median_gap)},
                        {"quantiles", q},
                        {"used", r.used},
                        {"shifted", r.shifted},
                        {"insufficient", r.insufficient},
                        {"failed", r.failed}});
  }
  j["rows"] = rows;
  j["slope"] = finite_or_null(t.slope);
  j["target_slope"] = target;
  j["slope_tol"] = tol;
  const bool pass = std::isfinite(t.slope) && std::abs(t.slope - target) <= tol;
  j["passed"] = pass;
  write_json(dir / "gap_summary.json", j);
  std::cout << "gap-study: k=" << e.k << " slope " << num(t.slope) << " target " << num(target) << " +- " << num(tol)
            << (pass ? " ok" : " FAILED") << "\n";
  return pass ? Exit::ok : Exit::threshold;
}

int cmd_rate_study(const Config& cfg) {
  const auto e = experiment_config(cfg);
  std::vector<int> js;
  if (cfg.raw("j_list").empty()) {
    js = {0};
    if (e.k > 1) js.push_back(e.k - 1);
  } else {
    for (double j : cfg.get<std::vector<double>>("j_list")) {
      if (j != std::floor(j) || j < 0 || j >= e.k) throw InputError("j_list entries must be integers in [0, k)");
      js.push_back(static_cast<int>(j));
    }
  }
  const double ks_max = cfg.get<double>("ks_max");
  const auto dir = out_dir(cfg);
  const auto t = rate_experiment(e, js);

  std::string s = "n,rep,ok";
  for (int j : js) s += ",raw_" + std::to_string(j) + ",rescaled_" + std::to_string(j);
  s += ",inverse_raw,inverse_rescaled\n";
  for (const auto& r : t.replications) {
    s += std::to_string(r.n) + "," + std::to_string(r.rep) + "," + (r.ok ? "1" : "0");
    for (std::size_t i = 0; i < js.size(); ++i)
      s += "," + (r.ok ? num(r.raw[i]) : std::string("nan")) + "," + (r.ok ? num(r.rescaled[i]) : std::string("nan"));
    s += "," + num(r.inverse_raw) + "," + num(r.inverse_rescaled) + "\n";
  }
  write_text(dir / "rate_replications.csv", s);

  json j = summary_head("rate-study", cfg);
  j["j_list"] = js;
  j["n_list"] = t.n_list;
  j["failed"] = t.failed;
  j["ks_max"] = ks_max;
  bool pass = true;
  json stats = json::array();
  auto worst = [&](const std::vector<double>& ks) {
    double w = 0.0;
    for (double v : ks) w = std::isfinite(v) ? std::max(w, v) : INFINITY;
    return w;
  };
  for (std::size_t i = 0; i <= js.size(); ++i) {
    const bool inv = i == js.size();
    json row{{"statistic", inv ? std::string("inverse") : "derivative_" + std::to_string(js[i])}};
    json med = json::array();
    for (double m : inv ? t.inverse_median_abs_raw : t.median_abs_raw[i]) med.push_back(finite_or_null(m));
    row["median_abs_raw"] = med;
    if (t.ks_applicable) {
      const auto& ks = inv ? t.inverse_ks : t.ks[i];
      json kj = json::array();
      for (double v : ks) kj.push_back(finite_or_null(v));
      row["ks"] = kj;
      row["passed"] = worst(ks) < ks_max;
      pass = pass && worst(ks) < ks_max;
    } else {
      row["ks"] = "not_applicable";
    }
    stats.push_back(row);
  }
  j["statistics"] = stats;
  j["ks_applicable"] = t.ks_applicable;
  j["passed"] = pass;
  write_json(dir / "rate_summary.json", j);
  std::cout << "rate-study: k=" << e.k << (t.ks_applicable ? "" : " (stability not applicable)")
            << (pass ? " ok" : " FAILED") << "\n";
  return pass ? Exit::ok : Exit::threshold;
}

int cmd_limit_sim(const Config& cfg) {
  const int k = checked_k(cfg);
  const double c = cfg.get<double>("c");
  const int dexp = cfg.get<int>("delta_exp");
  const int paths = cfg.get<int>("paths");
  const double a = cfg.get<double>("a"), sigma = cfg.get<double>("sigma");
  if (!(c > 0.0)) throw InputError("c must be positive");
  if (dexp < 6 || dexp > 16) throw InputError("delta_exp must lie in [6, 16]");
  if (paths < 1) throw InputError("paths must be positive");
  if (!(a > 0.0) || !(sigma > 0.0)) throw InputError("a and sigma must be positive");
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed");
  InvelopeOptions io;
  io.tol_ineq = cfg.get<double>("tol_ineq");
  io.tol_comp = cfg.get<double>("tol_eq");
  const double delta = std::ldexp(c, -dexp);
  const auto dir = out_dir(cfg);

  json rows = json::array();
  std::string values = "path,seed";
  for (int j = 0; j < 2 * k; ++j) values += ",H" + std::to_string(j) + "_0";
  values += "\n";
  bool pass = true, converged = true;
  for (int p = 0; p < paths; ++p) {
    const std::uint64_t ps = derive_seed(seed, static_cast<std::uint64_t>(p));
    LimitPath path;
    try {
      path = simulate_Yk(k, c, delta, ps, a, sigma);
    } catch (const std::logic_error& e) {
      throw InputError(e.what());
    }
    json row{{"path", p}, {"seed", ps}};
    try {
      const auto r = invelope_Hk(path, k, io);
      row["knots"] = r.knots.size();
      row["iterations"] = r.iterations;
      row["scale"] = r.scale;
      row["min_slack"] = r.min_slack;
      row["complementarity"] = r.complementarity;
      row["min_slack_all"] = r.min_slack_all;
      bool ok = r.passed;
      if (k == 1) {
        const auto f = least_concave_majorant(path.grid, path.Yk);
        double d = 0.0;
        for (std::size_t i = 0; i < path.grid.size(); ++i)
          d = std::max(d, std::abs(path.Yk.front() + f.integral(path.grid[i]) - r.H[0][i]));
        row["oracle_error"] = d / r.scale;
        ok = ok && d <= 1e-10 * r.scale;
      }
      row["passed"] = ok;
      pass = pass && ok;
      const auto z = path.center();
      values += std::to_string(p) + "," + std::to_string(ps);
      for (int j = 0; j < 2 * k; ++j) {
        // H^{(j)}(0) for j >= k comes from the piecewise form.
        const double v = j < static_cast<int>(r.H.size()) ? r.H[static_cast<std::size_t>(j)][z] : r.spline.eval(0.0, j);
        values += "," + num(v);
      }
      values += "\n";
      if (p == 0) {
        std::string s = "t,Y,H\n";
        for (std::size_t i = 0; i < path.grid.size(); ++i)
          s += num(path.grid[i]) + "," + num(path.Yk[i]) + "," + num(r.H[0][i]) + "\n";
        write_text(dir / "limit_path.csv", s);
      }
    } catch (const InvelopeError& e) {
      row["error"] = e.what();
      row["min_slack"] = e.min_slack();
      row["complementarity"] = e.complementarity();
      row["passed"] = false;
      pass = false;
      converged = false;
    }
    rows.push_back(row);
  }
  write_text(dir / "limit_values.csv", values);
  json j = summary_head("limit-sim", cfg);
  j["delta"] = delta;
  j["paths"] = rows;
  j["passed"] = pass;
  write_json(dir / "limit_summary.json", j);
  std::cout << "limit-sim: k=" << k << " paths=" << paths << (pass ? " ok" : " FAILED") << "\n";
  if (!converged) return Exit::no_convergence;
  return pass ? Exit::ok : Exit::threshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"k-monotone density estimation, inversion and limit-process experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override it)");

  std::vector<Command> cmds;
  auto make = [&](const std::string& name, const std::string& help, json extra) -> Command& {
    cmds.push_back({name, common_defaults(), {}, app.add_subcommand(name, help)});
    auto& c = cmds.back();
    for (auto it = extra.begin(); it != extra.end(); ++it) c.defaults[it.key()] = it.value();
    c.flags.reserve(32);
    add_common(c);
    return c;
  };
  cmds.reserve(6);

  auto& fit = make("fit", "fit the LSE or MLE to a sample", {{"input", ""}, {"estimator", "lse"}, {"max_iter", 500}, {"grid_points", 201}});
  fit.app->add_option("input", fit.flags.emplace_back(Flag{"input", Kind::text, "", nullptr}).raw, "sample file (CSV or JSON array)");
  fit.flags.back().opt = fit.app->get_option("input");
  add_flag(fit, "estimator", Kind::text, "lse or mle");
  add_flag(fit, "max_iter", Kind::integer, "support reduction iterations");
  add_flag(fit, "grid_points", Kind::integer, "rows of grid.csv");

  auto& inv = make("invert", "mixing distribution of a fitted density", {{"fit", ""}, {"t", json::array()}, {"t_max", 0.0}, {"t_count", 100}});
  add_flag(inv, "fit", Kind::text, "fit.json written by 'fit'");
  add_flag(inv, "t", Kind::number_list, "comma-separated evaluation points");
  add_flag(inv, "t_max", Kind::number, "grid end when --t is not given");
  add_flag(inv, "t_count", Kind::integer, "grid size when --t is not given");

  auto& conj = make("conjecture", "randomized test of the interpolation error bound",
                    {{"trials", 10000}, {"sampler", "mixed"}, {"target", "perfect_spline"}, {"grid_resolution", 2048},
                     {"dirichlet_alpha", 0.5}, {"cluster_width", 1e-4}, {"max_ill_fraction", 0.001}});
  add_flag(conj, "trials", Kind::integer, "number of knot configurations");
  add_flag(conj, "sampler", Kind::text, "uniform, dirichlet, clustered or mixed");
  add_flag(conj, "target", Kind::text, "perfect_spline or truncated_power");
  add_flag(conj, "grid_resolution", Kind::integer, "points per knot interval");
  add_flag(conj, "dirichlet_alpha", Kind::number, "Dirichlet concentration");
  add_flag(conj, "cluster_width", Kind::number, "width of clustered knot groups");

  json gd = experiment_defaults();
  gd["slope_tol"] = nullptr;
  auto& gap = make("gap-study", "knot gap rate around x0", gd);
  add_experiment_flags(gap);
  add_flag(gap, "slope_tol", Kind::number, "accepted deviation from -1/(2k+1)");

  json rd = experiment_defaults();
  rd["n_list"] = {2000, 8000};
  rd["reps"] = 500;
  rd["j_list"] = json::array();
  rd["ks_max"] = 0.15;
  auto& rate = make("rate-study", "stability of rescaled pointwise errors", rd);
  add_experiment_flags(rate);
  add_flag(rate, "j_list", Kind::number_list, "derivative orders (default 0,k-1)");
  add_flag(rate, "ks_max", Kind::number, "KS threshold");

  auto& lim = make("limit-sim", "simulate Y_k and its invelope",
                   {{"c", 2.0}, {"delta_exp", 10}, {"paths", 1}, {"a", 1.0}, {"sigma", 1.0}});
  lim.defaults["tol_ineq"] = 1e-8;
  lim.defaults["tol_eq"] = 1e-6;
  add_flag(lim, "c", Kind::number, "half window");
  add_flag(lim, "delta_exp", Kind::integer, "grid step is c * 2^-delta_exp");
  add_flag(lim, "paths", Kind::integer, "number of paths");
  add_flag(lim, "a", Kind::number, "drift coefficient");
  add_flag(lim, "sigma", Kind::number, "noise scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return Exit::bad_input;
  }

  for (auto& c : cmds) {
    if (!c.app->parsed()) continue;
    try {
      const Config cfg(c.defaults, config_path, c.flags);
      if (c.name == "fit") return cmd_fit(cfg);
      if (c.name == "invert") return cmd_invert(cfg);
      if (c.name == "conjecture") return cmd_conjecture(cfg);
      if (c.name == "gap-study") return cmd_gap_study(cfg);
      if (c.name == "rate-study") return cmd_rate_study(cfg);
      return cmd_limit_sim(cfg);
    } catch (const InputError& e) {
      std::cerr << "kmono " << c.name << ": " << e.what() << "\n";
      return Exit::bad_input;
    } catch (const std::exception& e) {
      std::cerr << "kmono " << c.name << ": " << e.what() << "\n";
      return Exit::bad_input;
    }
  }
  return Exit::bad_input;
}
