#include "lowrex/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "lowrex/certificates.hpp"
#include "lowrex/parallel.hpp"
#include "lowrex/risk.hpp"
#include "lowrex/rng.hpp"

namespace lowrex {
namespace {

using json = nlohmann::ordered_json;
using Row = std::vector<std::string>;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

/* Stream layout under the master seed: unit u draws from substream u; fixed
 * per-experiment objects (shared design / signal) from 0x4000000000000000+i;
 * calibration pilots from 0x5000000000000000+i. Within a unit seed s,
 * screening attempt a uses lanes 3a (map), 3a+1 (signal), 3a+2 (noise). */
constexpr std::uint64_t kFixedStreamA = 0x4000000000000000ULL;
constexpr std::uint64_t kFixedStreamB = 0x4000000000000001ULL;
constexpr std::uint64_t kPilotStreamBase = 0x5000000000000000ULL;

// ---------------------------------------------------------------------------
// formatting

std::string fmt_int(long long v) { return std::to_string(v); }
std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }
std::string fmt_bool(bool v) { return v ? "1" : "0"; }

double num(const Row& r, std::size_t col) { return std::strtod(r[col].c_str(), nullptr); }
long long inum(const Row& r, std::size_t col) { return std::strtoll(r[col].c_str(), nullptr, 10); }

const char* position_name(SubdiffPosition::Value v) {
  switch (v) {
    case SubdiffPosition::Value::interior: return "interior";
    case SubdiffPosition::Value::boundary: return "boundary";
    default: return "outside";
  }
}

// ---------------------------------------------------------------------------
// config parsing

[[noreturn]] void cfg_error(const std::string& msg) { throw InvalidArgument("config: " + msg); }

void check_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) known = true;
    if (!known) cfg_error("unknown key '" + item.key() + "' in " + where);
  }
}

const json* find_key(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

int get_int(const json& obj, const char* key, int def) {
  const json* v = find_key(obj, key);
  if (!v) return def;
  if (!v->is_number_integer() && !v->is_number_unsigned())
    cfg_error(std::string(key) + " must be an integer");
  return v->get<int>();
}

double get_double(const json& obj, const char* key, double def) {
  const json* v = find_key(obj, key);
  if (!v) return def;
  if (!v->is_number()) cfg_error(std::string(key) + " must be a number");
  return v->get<double>();
}

bool get_bool(const json& obj, const char* key, bool def) {
  const json* v = find_key(obj, key);
  if (!v) return def;
  if (!v->is_boolean()) cfg_error(std::string(key) + " must be a boolean");
  return v->get<bool>();
}

std::string get_string(const json& obj, const char* key, const std::string& def) {
  const json* v = find_key(obj, key);
  if (!v) return def;
  if (!v->is_string()) cfg_error(std::string(key) + " must be a string");
  return v->get<std::string>();
}

std::vector<int> get_int_vec(const json& obj, const char* key) {
  const json* v = find_key(obj, key);
  if (!v) return {};
  if (!v->is_array()) cfg_error(std::string(key) + " must be an array of integers");
  std::vector<int> out;
  for (const auto& e : *v) {
    if (!e.is_number_integer() && !e.is_number_unsigned())
      cfg_error(std::string(key) + " must be an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

std::vector<double> get_double_vec(const json& obj, const char* key) {
  const json* v = find_key(obj, key);
  if (!v) return {};
  if (!v->is_array()) cfg_error(std::string(key) + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : *v) {
    if (!e.is_number()) cfg_error(std::string(key) + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::uint64_t get_required_u64(const json& obj, const char* key) {
  const json* v = find_key(obj, key);
  if (!v) cfg_error(std::string("missing required key '") + key + "'");
  if (!(v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0)))
    cfg_error(std::string(key) + " must be a nonnegative integer");
  return v->get<std::uint64_t>();
}

const char* rule_name(LambdaRule::Kind k) {
  switch (k) {
    case LambdaRule::Kind::fixed: return "fixed";
    case LambdaRule::Kind::cnorm: return "cnorm";
    case LambdaRule::Kind::grid: return "grid";
    case LambdaRule::Kind::ppower: return "ppower";
    default: return "none";
  }
}

// ---------------------------------------------------------------------------
// effective settings (defaults the experiment fills in when the config is
// silent); the meta sidecar echoes these resolved values

std::string effective_screen(const RunConfig& cfg) {
  if (!cfg.screen.empty()) return cfg.screen;
  if (cfg.experiment == "noise-robustness" || cfg.experiment == "model-identification")
    return "interior";
  return "none";
}

LambdaRule effective_lambda(const RunConfig& cfg) {
  LambdaRule lr = cfg.lambda;
  if (lr.kind != LambdaRule::Kind::none) return lr;
  if (cfg.experiment == "noise-robustness") {
    lr.kind = LambdaRule::Kind::cnorm;
    lr.c = 1.0;
  } else if (cfg.experiment == "consistency-sweep") {
    lr.kind = LambdaRule::Kind::ppower;
    lr.exponent = 0.7;
  }
  return lr;
}

json config_json(const RunConfig& cfg) {
  const LambdaRule lr = effective_lambda(cfg);
  json dims;
  dims["N"] = cfg.dimensions.N;
  dims["P"] = cfg.dimensions.P;
  dims["P_grid"] = cfg.dimensions.P_grid;
  dims["k"] = cfg.dimensions.k;
  dims["k_grid"] = cfg.dimensions.k_grid;
  dims["n0"] = cfg.dimensions.n0;
  dims["r"] = cfg.dimensions.r;
  dims["block_size"] = cfg.dimensions.block_size;
  json lam;
  lam["rule"] = rule_name(lr.kind);
  lam["value"] = lr.value;
  lam["c"] = lr.c;
  lam["grid"] = lr.grid;
  lam["exponent"] = lr.exponent;
  json sol;
  sol["step"] = cfg.solver.step ? json(*cfg.solver.step) : json(nullptr);
  sol["accelerate"] = cfg.solver.accelerate;
  sol["max_iter"] = cfg.solver.max_iter;
  sol["tol_rel"] = cfg.solver.tol_rel;
  sol["trace_every"] = cfg.solver.trace_every;
  sol["tol_active"] = cfg.solver.tol_active;
  json out;
  out["experiment"] = cfg.experiment;
  out["dimensions"] = dims;
  out["regularizer"] = cfg.regularizer;
  out["noise_levels"] = cfg.noise_levels;
  out["lambda"] = lam;
  out["trials"] = cfg.trials;
  out["master_seed"] = cfg.master_seed;
  out["output"] = cfg.output;
  out["screen"] = effective_screen(cfg);
  out["mc_probes"] = cfg.mc_probes;
  out["normalize_columns"] = cfg.normalize_columns;
  out["resample_cap"] = cfg.resample_cap;
  out["solver"] = sol;
  return out;
}

// ---------------------------------------------------------------------------
// instance builders

int fixed_complexity(const RunConfig& cfg) {
  if (cfg.regularizer == "nuclear" && cfg.dimensions.r > 0) return cfg.dimensions.r;
  return cfg.dimensions.k;
}

SignalSpec make_signal_spec(const RunConfig& cfg, int complexity, std::uint64_t seed) {
  const Dimensions& d = cfg.dimensions;
  if (cfg.regularizer == "l1") return SignalSpec::sparse(complexity, seed);
  if (cfg.regularizer == "group_l1l2")
    return SignalSpec::group_sparse(contiguous_blocks(d.N, d.block_size), complexity, seed);
  if (cfg.regularizer == "linf") return SignalSpec::flat_saturated(complexity, seed);
  if (cfg.regularizer == "nuclear") return SignalSpec::low_rank(d.n0, complexity, seed);
  return SignalSpec::piecewise_constant(complexity, seed);
}

bool injective_flag(int p, const ModelDescriptor& desc, double sigma_min, double op_norm) {
  const int d = desc.dim();
  return d == 0 || (d <= p && sigma_min > kSvdCutoff * op_norm);
}

struct Screened {
  LinearMap phi;
  Vector x0;
  ModelDescriptor desc;
  Vector eta_f;
  SubdiffPosition pos;
  double sigma_min = 0.0;
  double op_norm = 0.0;
  bool injective = false;
  int attempts = 0;  // accepted attempt index + 1; noise lane = 3*(attempts-1)+2
};

Screened screened_instance(const RunConfig& cfg, const Regularizer& j, int p, int complexity,
                           std::uint64_t seed, const std::string& screen) {
  for (int a = 0; a < cfg.resample_cap; ++a) {
    LinearMap phi = gen_gaussian_map(p, cfg.dimensions.N,
                                     Rng::substream_seed(seed, 3 * static_cast<std::uint64_t>(a)),
                                     cfg.normalize_columns);
    Vector x0 = gen_signal(
        make_signal_spec(cfg, complexity, Rng::substream_seed(seed, 3 * static_cast<std::uint64_t>(a) + 1)),
        cfg.dimensions.N);
    ModelDescriptor desc = model_tangent(j, x0, cfg.solver.tol_active);
    const double smin = restricted_injectivity(phi, desc);
    const double opn = operator_norm(phi);
    const bool inj = injective_flag(p, desc, smin, opn);
    Vector etaf = linearized_precertificate(phi, desc);
    const SubdiffPosition pos = subdiff_position(j, x0, etaf);
    const bool accept =
        screen == "none" ||
        (inj && ((screen == "interior" && pos.value == SubdiffPosition::Value::interior) ||
                 (screen == "outside" && pos.value == SubdiffPosition::Value::outside)));
    if (accept)
      return Screened{std::move(phi), std::move(x0), std::move(desc), std::move(etaf),
                      pos,            smin,          opn,             inj,
                      a + 1};
  }
  throw Infeasible("screening: no " + screen + " instance within " +
                   std::to_string(cfg.resample_cap) + " attempts");
}

SolveResult regularized_solve(const LinearMap& phi, const Vector& y, double lambda,
                              const Regularizer& j, const SolveOptions& opts) {
  if (j.kind == Regularizer::Kind::analysis_l1) return primal_dual_solve(phi, y, lambda, j, opts);
  return fb_solve(phi, y, lambda, j, opts);
}

// ---------------------------------------------------------------------------
// small statistics

double median_of(std::vector<double> v) {
  if (v.empty()) return kNan;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNan;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/* Standard error of the mean; NaN below two samples. */
double se_of(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) return kNan;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

struct LineFit {
  double slope = kNan;
  double intercept = kNan;
  double r_squared = kNan;
  int n = 0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  f.n = static_cast<int>(x.size());
  if (f.n < 2) return f;
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < f.n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

/* P value where the success fraction crosses one half and stays above it for
 * every larger P (linear interpolation between the bracketing grid points).
 * The whole curve at or above one half gives the smallest P; no stable
 * crossing gives NaN. */
double stable_crossing(const std::vector<double>& p, const std::vector<double>& f) {
  const int n = static_cast<int>(p.size());
  for (int i = 0; i + 1 < n; ++i) {
    if (f[i] >= 0.5) continue;
    bool stable = true;
    for (int k = i + 1; k < n; ++k)
      if (f[k] < 0.5) stable = false;
    if (stable) return p[i] + (0.5 - f[i]) * (p[i + 1] - p[i]) / (f[i + 1] - f[i]);
  }
  if (n > 0 && f[0] >= 0.5) {
    bool all = true;
    for (double v : f) all = all && v >= 0.5;
    if (all) return p[0];
  }
  return kNan;
}

// ---------------------------------------------------------------------------
// unit plans: each experiment is a fixed number of units, each a pure
// function of (config, unit index) writing into its own slot

struct UnitOutput {
  std::vector<Row> rows;
  std::optional<Row> extra;  // per-unit curves row (fb-trace)
};

struct UnitPlan {
  int count = 0;
  std::vector<std::string> header;
  std::vector<std::string> curves_header;
  std::function<UnitOutput(int)> run;
  std::function<std::string(int)> label;
  json meta_extra = json::object();
};

struct Finished {
  std::optional<Table> curves;
  json summary = json::object();
};

// ----- identifiability-sweep ------------------------------------------------

UnitPlan plan_identifiability(const RunConfig& cfg) {
  const std::vector<int> ks = cfg.dimensions.k_grid;
  const std::vector<int> ps = cfg.dimensions.P_grid;
  const int trials = cfg.trials;
  const int np = static_cast<int>(ps.size());
  const Regularizer j = make_regularizer(cfg);

  UnitPlan plan;
  plan.count = static_cast<int>(ks.size()) * np * trials;
  plan.header = {"k",        "P",        "trial",     "seed",        "sigma_min_T",
                 "position", "interior", "injective", "identifiable"};
  plan.curves_header = {"k",
                        "P",
                        "n",
                        "frac_interior",
                        "frac_injective",
                        "frac_identifiable",
                        "p_ref_2klogNk",
                        "p_ref_2klogN",
                        "p50_identifiable"};
  plan.label = [ks, ps, trials, np](int u) {
    const int ki = u / (np * trials), pi = (u / trials) % np, t = u % trials;
    return "k=" + std::to_string(ks[ki]) + ",P=" + std::to_string(ps[pi]) +
           ",trial=" + std::to_string(t);
  };
  plan.run = [cfg, j, ks, ps, trials, np](int u) -> UnitOutput {
    const int ki = u / (np * trials), pi = (u / trials) % np, t = u % trials;
    const std::uint64_t s = Rng::substream_seed(cfg.master_seed, static_cast<std::uint64_t>(u));
    const Screened inst = screened_instance(cfg, j, ps[pi], ks[ki], s, "none");
    const bool interior = inst.pos.value == SubdiffPosition::Value::interior;
    Row r = {fmt_int(ks[ki]),
             fmt_int(ps[pi]),
             fmt_int(t),
             fmt_u64(s),
             format_g17(inst.sigma_min),
             position_name(inst.pos.value),
             fmt_bool(interior),
             fmt_bool(inst.injective),
             fmt_bool(inst.injective && interior)};
    return UnitOutput{{std::move(r)}, std::nullopt};
  };
  return plan;
}

Finished finish_identifiability(const RunConfig& cfg, const UnitPlan& plan,
                                const std::vector<Row>& rows) {
  const std::vector<int>& ks = cfg.dimensions.k_grid;
  const std::vector<int>& ps = cfg.dimensions.P_grid;
  struct Cell {
    int n = 0, interior = 0, injective = 0, identifiable = 0;
  };
  std::map<std::pair<int, int>, Cell> cells;
  for (const Row& r : rows) {
    Cell& c = cells[{static_cast<int>(inum(r, 0)), static_cast<int>(inum(r, 1))}];
    c.n += 1;
    c.interior += r[6] == "1";
    c.injective += r[7] == "1";
    c.identifiable += r[8] == "1";
  }

  Table curves;
  curves.header = plan.curves_header;
  Finished fin;
  for (int k : ks) {
    std::vector<double> pvals, fracs;
    bool complete = true;
    for (int p : ps) {
      const Cell c = cells.count({k, p}) ? cells[{k, p}] : Cell{};
      pvals.push_back(p);
      fracs.push_back(c.n > 0 ? static_cast<double>(c.identifiable) / c.n : kNan);
      complete = complete && c.n > 0;
    }
    const double p50 = complete ? stable_crossing(pvals, fracs) : kNan;
    const double dk = k;
    const double ref_nk = k > 0 ? 2.0 * dk * std::log(static_cast<double>(cfg.dimensions.N) / dk) : 0.0;
    const double ref_n = k > 0 ? 2.0 * dk * std::log(static_cast<double>(cfg.dimensions.N)) : 0.0;
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      const Cell c = cells.count({k, ps[pi]}) ? cells[{k, ps[pi]}] : Cell{};
      curves.rows.push_back({fmt_int(k), fmt_int(ps[pi]), fmt_int(c.n),
                             format_g17(c.n > 0 ? static_cast<double>(c.interior) / c.n : kNan),
                             format_g17(c.n > 0 ? static_cast<double>(c.injective) / c.n : kNan),
                             format_g17(fracs[pi]), format_g17(ref_nk), format_g17(ref_n),
                             format_g17(p50)});
    }
  }
  fin.curves = std::move(curves);
  return fin;
}

// ----- noise-robustness -----------------------------------------------------

UnitPlan plan_noise_robustness(const RunConfig& cfg) {
  const Regularizer j = make_regularizer(cfg);
  const std::string screen = effective_screen(cfg);
  const LambdaRule lr = effective_lambda(cfg);
  const int trials = cfg.trials;

  UnitPlan plan;
  plan.count = static_cast<int>(cfg.noise_levels.size()) * trials;
  plan.header = {"noise_level", "trial", "seed",  "attempts",   "position",
                 "lambda",      "error", "ratio", "model_match"};
  plan.curves_header = {"noise_level", "n", "median_error", "median_ratio", "max_ratio",
                        "match_rate"};
  plan.label = [cfg, trials](int u) {
    return "noise=" + format_g17(cfg.noise_levels[u / trials]) +
           ",trial=" + std::to_string(u % trials);
  };
  plan.run = [cfg, j, screen, lr, trials](int u) -> UnitOutput {
    const double level = cfg.noise_levels[u / trials];
    const int t = u % trials;
    const std::uint64_t s = Rng::substream_seed(cfg.master_seed, static_cast<std::uint64_t>(u));
    const Screened inst = screened_instance(cfg, j, cfg.dimensions.P, fixed_complexity(cfg), s, screen);

    Vector w = Vector::Zero(cfg.dimensions.P);
    if (level > 0.0) {
      Rng wr = Rng::substream(s, 3 * static_cast<std::uint64_t>(inst.attempts - 1) + 2);
      const Vector g = wr.normal_vector(cfg.dimensions.P);
      w = g * (level / g.norm());
    }
    const Vector y = inst.phi.A * inst.x0 + w;

    double lambda = 0.0;
    SolveResult res = [&] {
      if (level > 0.0) {
        lambda = lr.c * level;
        return regularized_solve(inst.phi, y, lambda, j, cfg.solver);
      }
      return dr_solve(inst.phi, y, j, cfg.solver);
    }();

    const bool match = res.trace.tags.back() == inst.desc.tag;
    const double err = (res.x - inst.x0).norm();
    Row r = {format_g17(level),
             fmt_int(t),
             fmt_u64(s),
             fmt_int(inst.attempts),
             position_name(inst.pos.value),
             format_g17(lambda),
             format_g17(err),
             format_g17(level > 0.0 ? err / level : kNan),
             fmt_bool(match)};
    return UnitOutput{{std::move(r)}, std::nullopt};
  };
  return plan;
}

Finished finish_noise_robustness(const RunConfig& cfg, const UnitPlan& plan,
                                 const std::vector<Row>& rows) {
  Table curves;
  curves.header = plan.curves_header;
  std::vector<double> log_levels, log_medians;
  for (double level : cfg.noise_levels) {
    const std::string key = format_g17(level);
    std::vector<double> errs, ratios;
    int matches = 0, n = 0;
    for (const Row& r : rows) {
      if (r[0] != key) continue;
      n += 1;
      errs.push_back(num(r, 6));
      ratios.push_back(num(r, 7));
      matches += r[8] == "1";
    }
    const double med_err = median_of(errs);
    double max_ratio = kNan;
    if (level > 0.0 && !ratios.empty()) max_ratio = *std::max_element(ratios.begin(), ratios.end());
    curves.rows.push_back({key, fmt_int(n), format_g17(med_err),
                           format_g17(level > 0.0 ? median_of(ratios) : kNan),
                           format_g17(max_ratio),
                           format_g17(n > 0 ? static_cast<double>(matches) / n : kNan)});
    if (level > 0.0 && n > 0 && med_err > 0.0) {
      log_levels.push_back(std::log(level));
      log_medians.push_back(std::log(med_err));
    }
  }
  Finished fin;
  const LineFit f = fit_line(log_levels, log_medians);
  fin.summary["loglog_slope"] = f.slope;
  fin.summary["loglog_r2"] = f.r_squared;
  fin.summary["levels_fit"] = f.n;
  fin.curves = std::move(curves);
  return fin;
}

// ----- model-identification --------------------------------------------------

struct Calibration {
  bool calibrated = false;
  double c_star = kNan;
  double c = kNan;  // frozen working scale: lambda = c, ||w|| = c^2
};

/* Bisect the largest noise/regularization scale at which a pilot set of
 * interior-certificate instances still lands on the right manifold, then
 * freeze a quarter of it (fresh instances can be harder than every pilot,
 * so the working scale needs headroom below the pilot cap). The theorem's
 * constant is unknown; this pins a concrete reproducible stand-in and the
 * meta sidecar records it. */
Calibration calibrate_identification(const RunConfig& cfg, const Regularizer& j) {
  constexpr int kPilots = 8;
  struct Pilot {
    LinearMap phi;
    Vector x0;
    ManifoldTag tag0;
    Vector w_unit;
  };
  std::vector<Pilot> pilots;
  for (int i = 0; i < kPilots; ++i) {
    const std::uint64_t sp =
        Rng::substream_seed(cfg.master_seed, kPilotStreamBase + static_cast<std::uint64_t>(i));
    Screened inst = screened_instance(cfg, j, cfg.dimensions.P, fixed_complexity(cfg), sp, "interior");
    Rng wr = Rng::substream(sp, 3 * static_cast<std::uint64_t>(inst.attempts - 1) + 2);
    Vector g = wr.normal_vector(cfg.dimensions.P);
    pilots.push_back(Pilot{std::move(inst.phi), std::move(inst.x0), inst.desc.tag, g / g.norm()});
  }
  const auto all_match = [&](double c) {
    for (const Pilot& p : pilots) {
      const Vector y = p.phi.A * p.x0 + (c * c) * p.w_unit;
      const SolveResult res = regularized_solve(p.phi, y, c, j, cfg.solver);
      if (!(res.trace.tags.back() == p.tag0)) return false;
    }
    return true;
  };

  double c_ok = 1.0;
  bool found = false;
  for (int h = 0; h < 60 && !found; ++h) {
    if (all_match(c_ok)) found = true;
    else c_ok *= 0.5;
  }
  if (!found) throw Infeasible("calibration: no workable noise scale down to 2^-60");
  double lo = c_ok, hi = 2.0 * c_ok;
  for (int it = 0; it < 16; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (all_match(mid)) lo = mid;
    else hi = mid;
  }
  return Calibration{true, lo, 0.25 * lo};
}

UnitPlan plan_model_identification(const RunConfig& cfg) {
  const Regularizer j = make_regularizer(cfg);
  const std::string screen = effective_screen(cfg);

  double lambda_fixed = 0.0, wnorm_fixed = 0.0;
  Calibration cal;
  if (cfg.lambda.kind == LambdaRule::Kind::fixed) {
    lambda_fixed = cfg.lambda.value;
    wnorm_fixed = cfg.noise_levels.empty() ? 0.0 : cfg.noise_levels[0];
  } else {
    cal = calibrate_identification(cfg, j);
    lambda_fixed = cal.c;
    wnorm_fixed = cal.c * cal.c;
  }

  UnitPlan plan;
  plan.count = cfg.trials;
  plan.header = {"trial",  "seed",  "attempts", "position",   "sigma_min_T",
                 "lambda", "wnorm", "error",    "model_match"};
  plan.curves_header = {"position", "n", "match_rate", "median_error"};
  if (cal.calibrated) {
    json c;
    c["pilots"] = 8;
    c["c_star"] = cal.c_star;
    c["c"] = cal.c;
    c["rule"] = "lambda = c, ||w|| = c^2";
    plan.meta_extra["calibration"] = c;
  }
  plan.label = [](int u) { return "trial=" + std::to_string(u); };
  plan.run = [cfg, j, screen, lambda_fixed, wnorm_fixed](int u) -> UnitOutput {
    const std::uint64_t s = Rng::substream_seed(cfg.master_seed, static_cast<std::uint64_t>(u));
    const Screened inst = screened_instance(cfg, j, cfg.dimensions.P, fixed_complexity(cfg), s, screen);
    Vector w = Vector::Zero(cfg.dimensions.P);
    if (wnorm_fixed > 0.0) {
      Rng wr = Rng::substream(s, 3 * static_cast<std::uint64_t>(inst.attempts - 1) + 2);
      const Vector g = wr.normal_vector(cfg.dimensions.P);
      w = g * (wnorm_fixed / g.norm());
    }
    const Vector y = inst.phi.A * inst.x0 + w;
    const SolveResult res = regularized_solve(inst.phi, y, lambda_fixed, j, cfg.solver);
    const bool match = res.trace.tags.back() == inst.desc.tag;
    Row r = {fmt_int(u),
             fmt_u64(s),
             fmt_int(inst.attempts),
             position_name(inst.pos.value),
             format_g17(inst.sigma_min),
             format_g17(lambda_fixed),
             format_g17(wnorm_fixed),
             format_g17((res.x - inst.x0).norm()),
             fmt_bool(match)};
    return UnitOutput{{std::move(r)}, std::nullopt};
  };
  return plan;
}

Finished finish_model_identification(const RunConfig&, const UnitPlan& plan,
                                     const std::vector<Row>& rows) {
  Table curves;
  curves.header = plan.curves_header;
  for (const char* pos : {"interior", "boundary", "outside"}) {
    std::vector<double> errs;
    int n = 0, matches = 0;
    for (const Row& r : rows) {
      if (r[3] != pos) continue;
      n += 1;
      matches += r[8] == "1";
      errs.push_back(num(r, 7));
    }
    if (n == 0) continue;
    curves.rows.push_back({pos, fmt_int(n), format_g17(static_cast<double>(matches) / n),
                           format_g17(median_of(errs))});
  }
  Finished fin;
  fin.curves = std::move(curves);
  return fin;
}

// ----- consistency-sweep ------------------------------------------------------

UnitPlan plan_consistency(const RunConfig& cfg) {
  const Regularizer j = make_regularizer(cfg);
  const LambdaRule lr = effective_lambda(cfg);
  const double sigma = cfg.noise_levels[0];
  const std::vector<int> ps = cfg.dimensions.P_grid;
  const int trials = cfg.trials;

  const std::uint64_t sx = Rng::substream_seed(cfg.master_seed, kFixedStreamA);
  const Vector x0 = gen_signal(make_signal_spec(cfg, fixed_complexity(cfg), sx), cfg.dimensions.N);
  const ModelDescriptor desc0 = model_tangent(j, x0, cfg.solver.tol_active);

  UnitPlan plan;
  plan.count = static_cast<int>(ps.size()) * trials;
  plan.header = {"P",           "trial",       "seed",  "lambda",   "position",
                 "etaF_interior", "model_match", "error", "rel_error"};
  plan.curves_header = {"P", "n", "match_rate", "frac_etaF_interior", "median_rel_error"};
  plan.meta_extra["signal"] = {{"seed", sx}, {"norm", x0.norm()}};
  plan.label = [ps, trials](int u) {
    return "P=" + std::to_string(ps[u / trials]) + ",trial=" + std::to_string(u % trials);
  };
  plan.run = [cfg, j, lr, sigma, ps, trials, x0, desc0](int u) -> UnitOutput {
    const int p = ps[u / trials];
    const int t = u % trials;
    const std::uint64_t s = Rng::substream_seed(cfg.master_seed, static_cast<std::uint64_t>(u));
    // Rows i.i.d. standard normal: the population design the theorem assumes.
    const LinearMap phi = gen_gaussian_map(p, cfg.dimensions.N, Rng::substream_seed(s, 0), false);
    Vector w = Vector::Zero(p);
    if (sigma > 0.0) w = sigma * Rng::substream(s, 1).normal_vector(p);
    const Vector y = phi.A * x0 + w;
    const double lambda = std::pow(static_cast<double>(p), lr.exponent);

    const Vector etaf = linearized_precertificate(phi, j, x0);
    const SubdiffPosition pos = subdiff_position(j, x0, etaf);
    const SolveResult res = regularized_solve(phi, y, lambda, j, cfg.solver);
    const bool match = res.trace.tags.back() == desc0.tag;
    const double err = (res.x - x0).norm();
    Row r = {fmt_int(p),
             fmt_int(t),
             fmt_u64(s),
             format_g17(lambda),
             position_name(pos.value),
             fmt_bool(pos.value == SubdiffPosition::Value::interior),
             fmt_bool(match),
             format_g17(err),
             format_g17(err / x0.norm())};
    return UnitOutput{{std::move(r)}, std::nullopt};
  };
  return plan;
}

Finished finish_consistency(const RunConfig& cfg, const UnitPlan& plan,
                            const std::vector<Row>& rows) {
  Table curves;
  curves.header = plan.curves_header;
  double last_rate = kNan;
  for (int p : cfg.dimensions.P_grid) {
    const std::string key = fmt_int(p);
    std::vector<double> rels;
    int n = 0, matches = 0, interior = 0;
    for (const Row& r : rows) {
      if (r[0] != key) continue;
      n += 1;
      interior += r[5] == "1";
      matches += r[6] == "1";
      rels.push_back(num(r, 8));
    }
    const double rate = n > 0 ? static_cast<double>(matches) / n : kNan;
    if (n > 0) last_rate = rate;
    curves.rows.push_back({key, fmt_int(n), format_g17(rate),
                           format_g17(n > 0 ? static_cast<double>(interior) / n : kNan),
                           format_g17(median_of(rels))});
  }
  Finished fin;
  fin.summary["match_rate_at_largest_P"] = last_rate;
  fin.curves = std::move(curves);
  return fin;
}

// ----- sure-curve --------------------------------------------------------------

UnitPlan plan_sure_curve(const RunConfig& cfg) {
  const Regularizer j = make_regularizer(cfg);
  const double sigma = cfg.noise_levels[0];
  const std::uint64_t s_phi = Rng::substream_seed(cfg.master_seed, kFixedStreamA);
  const std::uint64_t s_x0 = Rng::substream_seed(cfg.master_seed, kFixedStreamB);
  const LinearMap phi = gen_gaussian_map(cfg.dimensions.P, cfg.dimensions.N, s_phi,
                                         cfg.normalize_columns);
  const Vector x0 = gen_signal(make_signal_spec(cfg, fixed_complexity(cfg), s_x0), cfg.dimensions.N);
  const Vector mu0 = phi.A * x0;

  UnitPlan plan;
  plan.count = cfg.trials;
  plan.header = {"replicate", "seed",        "lambda",   "solved",     "dof",
                 "dof_is_mc", "mc_se",       "sure",     "residual_sq", "pred_err",
                 "transition", "best_lambda"};
  plan.curves_header = {"lambda",    "n",       "mean_sure", "se_sure",  "mean_pred",
                        "se_pred",   "mean_diff", "se_diff", "mean_dof", "frac_transition"};
  plan.meta_extra["design"] = {{"phi_seed", s_phi}, {"x0_seed", s_x0}, {"sigma", sigma}};
  plan.label = [](int u) { return "replicate=" + std::to_string(u); };
  plan.run = [cfg, j, sigma, phi, x0, mu0](int u) -> UnitOutput {
    const std::uint64_t s = Rng::substream_seed(cfg.master_seed, static_cast<std::uint64_t>(u));
    Vector w = Vector::Zero(cfg.dimensions.P);
    if (sigma > 0.0) w = sigma * Rng::substream(s, 0).normal_vector(cfg.dimensions.P);
    const Vector y = phi.A * x0 + w;

    RiskOptions ro;
    ro.solve = cfg.solver;
    ro.mc_probes = cfg.mc_probes;
    ro.seed = Rng::substream_seed(s, 1);
    ro.jobs = 1;
    const RiskCurve curve = sure_path(phi, y, j, sigma, cfg.lambda.grid, ro);

    UnitOutput out;
    for (const RiskPoint& pt : curve.points) {
      const double pred = pt.solved ? (phi.A * pt.x - mu0).squaredNorm() : kNan;
      out.rows.push_back({fmt_int(u), fmt_u64(s), format_g17(pt.lambda), fmt_bool(pt.solved),
                          format_g17(pt.solved ? pt.dof : kNan), fmt_bool(pt.dof_is_mc),
                          format_g17(pt.mc ? pt.mc->std_error : kNan),
                          format_g17(pt.solved ? pt.sure : kNan),
                          format_g17(pt.solved ? pt.residual_sq : kNan), format_g17(pred),
                          fmt_bool(pt.transition_flag), format_g17(curve.best_lambda)});
    }
    return out;
  };
  return plan;
}

Finished finish_sure_curve(const RunConfig& cfg, const UnitPlan& plan,
                           const std::vector<Row>& rows) {
  Table curves;
  curves.header = plan.curves_header;
  double worst = 0.0;
  bool any = false;
  std::vector<double> grid = cfg.lambda.grid;
  std::sort(grid.begin(), grid.end());
  for (double lambda : grid) {
    const std::string key = format_g17(lambda);
    std::vector<double> sures, preds, diffs, dofs;
    int transitions = 0, n = 0;
    for (const Row& r : rows) {
      if (r[2] != key || r[3] != "1") continue;
      n += 1;
      sures.push_back(num(r, 7));
      preds.push_back(num(r, 9));
      diffs.push_back(num(r, 7) - num(r, 9));
      dofs.push_back(num(r, 4));
      transitions += r[10] == "1";
    }
    const double se_diff = se_of(diffs);
    curves.rows.push_back({key, fmt_int(n), format_g17(mean_of(sures)), format_g17(se_of(sures)),
                           format_g17(mean_of(preds)), format_g17(se_of(preds)),
                           format_g17(mean_of(diffs)), format_g17(se_diff),
                           format_g17(mean_of(dofs)),
                           format_g17(n > 0 ? static_cast<double>(transitions) / n : kNan)});
    if (n >= 2 && se_diff > 0.0) {
      worst = std::max(worst, std::abs(mean_of(diffs)) / se_diff);
      any = true;
    }
  }
  Finished fin;
  fin.summary["max_abs_mean_diff_in_se"] = any ? worst : kNan;
  fin.curves = std::move(curves);
  return fin;
}

// ----- fb-trace ------------------------------------------------------------------

UnitPlan plan_fb_trace(const RunConfig& cfg) {
  const Regularizer j = make_regularizer(cfg);
  const LambdaRule lr = effective_lambda(cfg);
  const double level = cfg.noise_levels[0];

  UnitPlan plan;
  plan.count = 2 * cfg.trials;
  plan.header = {"trial",     "variant", "seed",     "iteration",
                 "objective", "error_to_final", "tag_hash", "identified"};
  plan.curves_header = {"trial",       "variant",     "converged",
                        "total_iterations", "final_objective", "identification_iteration",
                        "fitted_rate", "fit_r2",      "fit_points",
                        "predicted_rate", "rate_gap"};
  plan.label = [](int u) {
    return "trial=" + std::to_string(u / 2) + ",variant=" + (u % 2 ? "fista" : "plain");
  };
  plan.run = [cfg, j, lr, level](int u) -> UnitOutput {
    const int t = u / 2;
    const bool fista = u % 2 == 1;
    // Both variants of a trial share the instance seed (the even unit's).
    const std::uint64_t sp = Rng::substream_seed(cfg.master_seed, 2 * static_cast<std::uint64_t>(t));
    const LinearMap phi = gen_gaussian_map(cfg.dimensions.P, cfg.dimensions.N,
                                           Rng::substream_seed(sp, 0), cfg.normalize_columns);
    const Vector x0 =
        gen_signal(make_signal_spec(cfg, fixed_complexity(cfg), Rng::substream_seed(sp, 1)),
                   cfg.dimensions.N);
    Vector w = Vector::Zero(cfg.dimensions.P);
    if (level > 0.0) {
      const Vector g = Rng::substream(sp, 2).normal_vector(cfg.dimensions.P);
      w = g * (level / g.norm());
    }
    const Vector y = phi.A * x0 + w;
    const double lambda = lr.kind == LambdaRule::Kind::fixed ? lr.value : lr.c * level;

    SolveOptions opts = cfg.solver;
    opts.accelerate = fista;
    const SolveResult res = fb_solve(phi, y, lambda, j, opts);
    const SolveTrace& tr = res.trace;
    const std::optional<int> ident = identification_iteration(tr);

    double fitted = kNan, fit_r2 = kNan, rate_gap = kNan;
    int fit_points = 0;
    try {
      const RateEstimate re = local_rate_estimate(tr);
      fitted = re.rate;
      fit_r2 = re.r_squared;
      fit_points = re.points;
    } catch (const InvalidArgument&) {
    }
    const ModelDescriptor desc = model_tangent(j, res.x, opts.tol_active);
    const double smin = restricted_injectivity(phi, desc);
    const double opn = operator_norm(phi);
    const double tau = opts.step ? *opts.step : 1.0 / (opn * opn);
    double predicted = kNan;
    if (desc.dim() > 0 && std::isfinite(smin)) predicted = 1.0 - tau * smin * smin;
    if (std::isfinite(fitted) && std::isfinite(predicted)) rate_gap = std::abs(fitted - predicted);

    const char* variant = fista ? "fista" : "plain";
    UnitOutput out;
    for (std::size_t i = 0; i < tr.iterations.size(); ++i) {
      const bool id_flag = ident && tr.iterations[i] >= *ident;
      out.rows.push_back({fmt_int(t), variant, fmt_u64(sp), fmt_int(tr.iterations[i]),
                          format_g17(tr.objectives[i]), format_g17(tr.errors_to_final[i]),
                          fmt_u64(tr.tags[i].hash()), fmt_bool(id_flag)});
    }
    out.extra = Row{fmt_int(t),
                    variant,
                    fmt_bool(tr.converged),
                    fmt_int(tr.total_iterations),
                    format_g17(tr.objectives.back()),
                    fmt_int(ident ? *ident : -1),
                    format_g17(fitted),
                    format_g17(fit_r2),
                    fmt_int(fit_points),
                    format_g17(predicted),
                    format_g17(rate_gap)};
    return out;
  };
  return plan;
}

Finished finish_fb_trace(const RunConfig& cfg, const UnitPlan& plan, const std::vector<Row>&,
                         const std::vector<Row>& extras) {
  Table curves;
  curves.header = plan.curves_header;
  curves.rows = extras;
  Finished fin;
  // Final-objective agreement between the two variants of each trial.
  double worst = kNan;
  for (int t = 0; t < cfg.trials; ++t) {
    double obj_plain = kNan, obj_fista = kNan;
    for (const Row& r : extras) {
      if (inum(r, 0) != t) continue;
      (r[1] == "plain" ? obj_plain : obj_fista) = num(r, 4);
    }
    if (std::isfinite(obj_plain) && std::isfinite(obj_fista)) {
      const double gap = std::abs(obj_plain - obj_fista);
      worst = std::isfinite(worst) ? std::max(worst, gap) : gap;
    }
  }
  fin.summary["max_variant_objective_gap"] = worst;
  fin.curves = std::move(curves);
  return fin;
}

// ---------------------------------------------------------------------------

UnitPlan make_plan(const RunConfig& cfg) {
  if (cfg.experiment == "identifiability-sweep") return plan_identifiability(cfg);
  if (cfg.experiment == "noise-robustness") return plan_noise_robustness(cfg);
  if (cfg.experiment == "model-identification") return plan_model_identification(cfg);
  if (cfg.experiment == "consistency-sweep") return plan_consistency(cfg);
  if (cfg.experiment == "sure-curve") return plan_sure_curve(cfg);
  return plan_fb_trace(cfg);
}

}  // namespace

// ---------------------------------------------------------------------------
// public api

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const Table& t) {
  std::string out;
  const auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

Regularizer make_regularizer(const RunConfig& cfg) {
  const Dimensions& d = cfg.dimensions;
  if (cfg.regularizer == "l1") return Regularizer::l1();
  if (cfg.regularizer == "group_l1l2")
    return Regularizer::group(contiguous_blocks(d.N, d.block_size));
  if (cfg.regularizer == "linf") return Regularizer::linf();
  if (cfg.regularizer == "nuclear") return Regularizer::nuclear(d.n0);
  if (cfg.regularizer == "analysis_tv1d") return Regularizer::analysis_tv1d(d.N);
  throw InvalidArgument("config: unknown regularizer '" + cfg.regularizer + "'");
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    cfg_error(std::string("not valid JSON: ") + e.what());
  }
  if (!root.is_object()) cfg_error("top level must be an object");
  check_keys(root, "the top level",
             {"experiment", "dimensions", "regularizer", "noise_levels", "lambda", "trials",
              "master_seed", "output", "screen", "mc_probes", "normalize_columns", "resample_cap",
              "solver"});

  RunConfig cfg;
  cfg.experiment = get_string(root, "experiment", "");
  if (cfg.experiment.empty()) cfg_error("missing required key 'experiment'");

  const json* dims = find_key(root, "dimensions");
  if (!dims) cfg_error("missing required key 'dimensions'");
  if (!dims->is_object()) cfg_error("dimensions must be an object");
  check_keys(*dims, "dimensions", {"N", "P", "P_grid", "k", "k_grid", "n0", "r", "block_size"});
  cfg.dimensions.N = get_int(*dims, "N", 0);
  cfg.dimensions.P = get_int(*dims, "P", 0);
  cfg.dimensions.P_grid = get_int_vec(*dims, "P_grid");
  cfg.dimensions.k = get_int(*dims, "k", 0);
  cfg.dimensions.k_grid = get_int_vec(*dims, "k_grid");
  cfg.dimensions.n0 = get_int(*dims, "n0", 0);
  cfg.dimensions.r = get_int(*dims, "r", 0);
  cfg.dimensions.block_size = get_int(*dims, "block_size", 0);

  cfg.regularizer = get_string(root, "regularizer", "l1");
  cfg.noise_levels = get_double_vec(root, "noise_levels");

  if (const json* lam = find_key(root, "lambda")) {
    if (!lam->is_object()) cfg_error("lambda must be an object");
    check_keys(*lam, "lambda", {"rule", "value", "c", "grid", "exponent"});
    const std::string rule = get_string(*lam, "rule", "");
    if (rule == "fixed") cfg.lambda.kind = LambdaRule::Kind::fixed;
    else if (rule == "cnorm") cfg.lambda.kind = LambdaRule::Kind::cnorm;
    else if (rule == "grid") cfg.lambda.kind = LambdaRule::Kind::grid;
    else if (rule == "ppower") cfg.lambda.kind = LambdaRule::Kind::ppower;
    else cfg_error("lambda.rule must be one of fixed, cnorm, grid, ppower");
    // Only the field the chosen rule reads may appear; typos stay loud.
    const char* want = rule == "fixed"   ? "value"
                       : rule == "cnorm" ? "c"
                       : rule == "grid"  ? "grid"
                                         : "exponent";
    for (const char* f : {"value", "c", "grid", "exponent"})
      if (std::string(f) != want && find_key(*lam, f))
        cfg_error(std::string("lambda.") + f + " does not apply to rule '" + rule + "'");
    cfg.lambda.value = get_double(*lam, "value", cfg.lambda.value);
    cfg.lambda.c = get_double(*lam, "c", cfg.lambda.c);
    cfg.lambda.grid = find_key(*lam, "grid") ? get_double_vec(*lam, "grid") : cfg.lambda.grid;
    cfg.lambda.exponent = get_double(*lam, "exponent", cfg.lambda.exponent);
  }

  if (!find_key(root, "trials")) cfg_error("missing required key 'trials'");
  cfg.trials = get_int(root, "trials", 1);
  cfg.master_seed = get_required_u64(root, "master_seed");
  cfg.output = get_string(root, "output", cfg.output);
  cfg.screen = get_string(root, "screen", cfg.screen);
  cfg.mc_probes = get_int(root, "mc_probes", cfg.mc_probes);
  cfg.normalize_columns = get_bool(root, "normalize_columns", cfg.normalize_columns);
  cfg.resample_cap = get_int(root, "resample_cap", cfg.resample_cap);

  if (const json* sol = find_key(root, "solver")) {
    if (!sol->is_object()) cfg_error("solver must be an object");
    check_keys(*sol, "solver", {"step", "accelerate", "max_iter", "tol_rel", "trace_every",
                                "tol_active"});
    if (find_key(*sol, "step")) cfg.solver.step = get_double(*sol, "step", 0.0);
    cfg.solver.accelerate = get_bool(*sol, "accelerate", cfg.solver.accelerate);
    cfg.solver.max_iter = get_int(*sol, "max_iter", cfg.solver.max_iter);
    cfg.solver.tol_rel = get_double(*sol, "tol_rel", cfg.solver.tol_rel);
    cfg.solver.trace_every = get_int(*sol, "trace_every", cfg.solver.trace_every);
    cfg.solver.tol_active = get_double(*sol, "tol_active", cfg.solver.tol_active);
  }

  validate_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) cfg_error("cannot read " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_run_config(body.str());
}

namespace {

void check_grid_increasing(const std::vector<int>& g, const char* name) {
  if (g.empty()) cfg_error(std::string(name) + " must be nonempty");
  for (std::size_t i = 0; i + 1 < g.size(); ++i)
    if (g[i] >= g[i + 1]) cfg_error(std::string(name) + " must be strictly increasing");
}

/* Largest complexity value the config can ask a signal generator for. */
int max_complexity(const RunConfig& cfg) {
  if (cfg.experiment == "identifiability-sweep") {
    int m = 0;
    for (int k : cfg.dimensions.k_grid) m = std::max(m, k);
    return m;
  }
  return fixed_complexity(cfg);
}

int min_complexity(const RunConfig& cfg) {
  if (cfg.experiment == "identifiability-sweep") {
    int m = std::numeric_limits<int>::max();
    for (int k : cfg.dimensions.k_grid) m = std::min(m, k);
    return m;
  }
  return fixed_complexity(cfg);
}

}  // namespace

void validate_config(const RunConfig& cfg) {
  const Dimensions& d = cfg.dimensions;
  const bool sweep_p = cfg.experiment == "identifiability-sweep" ||
                       cfg.experiment == "consistency-sweep";

  const bool known = cfg.experiment == "identifiability-sweep" ||
                     cfg.experiment == "noise-robustness" ||
                     cfg.experiment == "model-identification" ||
                     cfg.experiment == "consistency-sweep" || cfg.experiment == "sure-curve" ||
                     cfg.experiment == "fb-trace";
  if (!known) cfg_error("unknown experiment '" + cfg.experiment + "'");

  if (d.N < 1) cfg_error("dimensions.N must be positive");
  if (cfg.trials < 1) cfg_error("trials must be positive");
  if (cfg.mc_probes < 1) cfg_error("mc_probes must be positive");
  if (cfg.resample_cap < 1) cfg_error("resample_cap must be positive");
  if (!(cfg.screen.empty() || cfg.screen == "none" || cfg.screen == "interior" ||
        cfg.screen == "outside"))
    cfg_error("screen must be none, interior or outside");
  if (cfg.screen == "interior" || cfg.screen == "outside") {
    if (!(cfg.experiment == "noise-robustness" || cfg.experiment == "model-identification"))
      cfg_error("screening applies to noise-robustness and model-identification only");
  }
  for (double nl : cfg.noise_levels)
    if (!(nl >= 0.0) || !std::isfinite(nl)) cfg_error("noise_levels must be finite and nonnegative");

  if (cfg.solver.max_iter < 1) cfg_error("solver.max_iter must be positive");
  if (!(cfg.solver.tol_rel > 0.0)) cfg_error("solver.tol_rel must be positive");
  if (cfg.solver.trace_every < 1) cfg_error("solver.trace_every must be positive");
  if (!(cfg.solver.tol_active > 0.0)) cfg_error("solver.tol_active must be positive");
  if (cfg.solver.step && !(*cfg.solver.step > 0.0)) cfg_error("solver.step must be positive");

  // Regularizer shape.
  const bool reg_known = cfg.regularizer == "l1" || cfg.regularizer == "group_l1l2" ||
                         cfg.regularizer == "linf" || cfg.regularizer == "nuclear" ||
                         cfg.regularizer == "analysis_tv1d";
  if (!reg_known) cfg_error("unknown regularizer '" + cfg.regularizer + "'");
  if (cfg.regularizer == "group_l1l2") {
    if (d.block_size < 1 || d.N % d.block_size != 0)
      cfg_error("dimensions.block_size must divide N");
    if (max_complexity(cfg) > d.N / d.block_size)
      cfg_error("complexity exceeds the number of blocks");
  }
  if (cfg.regularizer == "nuclear") {
    if (d.n0 < 1 || d.n0 * d.n0 != d.N) cfg_error("dimensions.n0^2 must equal N");
    if (max_complexity(cfg) > d.n0) cfg_error("rank exceeds n0");
    if (d.r < 0 || d.r > d.n0) cfg_error("dimensions.r out of range");
  }
  if (cfg.regularizer == "l1" && max_complexity(cfg) > d.N) cfg_error("k exceeds N");
  if (cfg.regularizer == "linf") {
    if (min_complexity(cfg) < 1) cfg_error("linf needs at least one saturated coordinate");
    if (max_complexity(cfg) > d.N) cfg_error("k exceeds N");
  }
  if (cfg.regularizer == "analysis_tv1d" && max_complexity(cfg) > d.N - 1)
    cfg_error("jump count must stay below N");
  if (max_complexity(cfg) < 0 || (cfg.experiment != "identifiability-sweep" && d.k < 0))
    cfg_error("complexity must be nonnegative");

  // Measurement dimensions.
  if (sweep_p) {
    check_grid_increasing(d.P_grid, "dimensions.P_grid");
    if (d.P_grid.front() < 1) cfg_error("dimensions.P_grid entries must be positive");
  } else if (d.P < 1) {
    cfg_error("dimensions.P must be positive");
  }
  if (cfg.experiment == "identifiability-sweep") {
    check_grid_increasing(d.k_grid, "dimensions.k_grid");
    if (d.k_grid.front() < 0) cfg_error("dimensions.k_grid entries must be nonnegative");
  }

  // Lambda rule compatibility.
  const LambdaRule::Kind lk = cfg.lambda.kind;
  if (cfg.experiment == "identifiability-sweep") {
    if (lk != LambdaRule::Kind::none)
      cfg_error("identifiability-sweep takes no lambda rule");
  } else if (cfg.experiment == "noise-robustness") {
    if (lk != LambdaRule::Kind::none && lk != LambdaRule::Kind::cnorm)
      cfg_error("noise-robustness uses the cnorm lambda rule");
    if (lk == LambdaRule::Kind::cnorm && !(cfg.lambda.c > 0.0))
      cfg_error("lambda.c must be positive");
    if (cfg.noise_levels.empty()) cfg_error("noise-robustness needs noise_levels");
    for (double nl : cfg.noise_levels)
      if (nl == 0.0 && cfg.regularizer == "analysis_tv1d")
        cfg_error("noise level 0 solves the equality-constrained problem, which needs an exact prox (not analysis_tv1d)");
  } else if (cfg.experiment == "model-identification") {
    if (lk != LambdaRule::Kind::none && lk != LambdaRule::Kind::fixed)
      cfg_error("model-identification calibrates lambda; only a fixed override is accepted");
    if (lk == LambdaRule::Kind::fixed && !(cfg.lambda.value > 0.0))
      cfg_error("lambda.value must be positive");
    if (cfg.noise_levels.size() > 1)
      cfg_error("model-identification takes at most one noise level");
  } else if (cfg.experiment == "consistency-sweep") {
    if (lk != LambdaRule::Kind::none && lk != LambdaRule::Kind::ppower)
      cfg_error("consistency-sweep uses the ppower lambda rule");
    if (lk == LambdaRule::Kind::ppower && !(cfg.lambda.exponent > 0.0))
      cfg_error("lambda.exponent must be positive");
    if (cfg.noise_levels.size() != 1)
      cfg_error("consistency-sweep needs exactly one noise level (per-entry sigma)");
    if (cfg.normalize_columns)
      cfg_error("consistency-sweep needs i.i.d. rows; normalize_columns must stay false");
  } else if (cfg.experiment == "sure-curve") {
    if (lk != LambdaRule::Kind::grid) cfg_error("sure-curve needs the grid lambda rule");
    if (cfg.lambda.grid.empty()) cfg_error("lambda.grid must be nonempty");
    for (std::size_t i = 0; i < cfg.lambda.grid.size(); ++i) {
      if (!(cfg.lambda.grid[i] > 0.0)) cfg_error("lambda.grid entries must be positive");
      if (i + 1 < cfg.lambda.grid.size() && cfg.lambda.grid[i] >= cfg.lambda.grid[i + 1])
        cfg_error("lambda.grid must be strictly increasing");
    }
    if (cfg.noise_levels.size() != 1)
      cfg_error("sure-curve needs exactly one noise level (per-entry sigma)");
  } else if (cfg.experiment == "fb-trace") {
    if (lk != LambdaRule::Kind::fixed && lk != LambdaRule::Kind::cnorm)
      cfg_error("fb-trace needs a fixed or cnorm lambda rule");
    if (lk == LambdaRule::Kind::fixed && !(cfg.lambda.value > 0.0))
      cfg_error("lambda.value must be positive");
    if (cfg.noise_levels.size() != 1)
      cfg_error("fb-trace needs exactly one noise level (noise norm)");
    if (lk == LambdaRule::Kind::cnorm && !(cfg.lambda.c > 0.0 && cfg.noise_levels[0] > 0.0))
      cfg_error("cnorm needs a positive c and noise level");
    if (cfg.regularizer == "analysis_tv1d")
      cfg_error("fb-trace drives the proximal gradient solver, which needs an exact prox (not analysis_tv1d)");
  }
}

int unit_count(const RunConfig& cfg) {
  validate_config(cfg);
  const Dimensions& d = cfg.dimensions;
  if (cfg.experiment == "identifiability-sweep")
    return static_cast<int>(d.k_grid.size() * d.P_grid.size()) * cfg.trials;
  if (cfg.experiment == "noise-robustness")
    return static_cast<int>(cfg.noise_levels.size()) * cfg.trials;
  if (cfg.experiment == "consistency-sweep")
    return static_cast<int>(d.P_grid.size()) * cfg.trials;
  if (cfg.experiment == "fb-trace") return 2 * cfg.trials;
  return cfg.trials;  // model-identification, sure-curve
}

std::vector<std::vector<std::string>> replay_unit(const RunConfig& cfg, int unit) {
  validate_config(cfg);
  const UnitPlan plan = make_plan(cfg);
  require(0 <= unit && unit < plan.count, "replay_unit: unit out of range");
  return plan.run(unit).rows;
}

ExperimentResult run_experiment(const RunConfig& cfg, int jobs) {
  validate_config(cfg);
  ExperimentResult res;
  res.experiment = cfg.experiment;

  json meta;
  meta["experiment"] = cfg.experiment;
  meta["config"] = config_json(cfg);
  meta["seeds"] = {
      {"master_seed", cfg.master_seed},
      {"unit_seed", "master_seed xor golden-ratio mix of the unit index; the seed column of each row"}};
  meta["versions"] = {{"lowrex", "0.1.0"},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)}};

  UnitPlan plan;
  try {
    plan = make_plan(cfg);
  } catch (const std::exception& e) {
    res.failures.push_back(std::string("plan: ") + e.what());
    meta["failures"] = res.failures;
    res.meta_json = meta.dump(2) + "\n";
    return res;
  }

  std::vector<UnitOutput> slots(static_cast<std::size_t>(plan.count));
  std::vector<std::string> errors(static_cast<std::size_t>(plan.count));
  parallel_for(plan.count, jobs, [&](int u) {
    try {
      slots[static_cast<std::size_t>(u)] = plan.run(u);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(u)] = e.what();
    }
  });

  res.data.header = plan.header;
  std::vector<Row> extras;
  for (int u = 0; u < plan.count; ++u) {
    if (!errors[static_cast<std::size_t>(u)].empty()) {
      res.failures.push_back("unit " + std::to_string(u) + " (" + plan.label(u) +
                             "): " + errors[static_cast<std::size_t>(u)]);
      continue;
    }
    for (auto& r : slots[static_cast<std::size_t>(u)].rows) res.data.rows.push_back(std::move(r));
    if (slots[static_cast<std::size_t>(u)].extra)
      extras.push_back(std::move(*slots[static_cast<std::size_t>(u)].extra));
  }

  Finished fin;
  if (cfg.experiment == "identifiability-sweep")
    fin = finish_identifiability(cfg, plan, res.data.rows);
  else if (cfg.experiment == "noise-robustness")
    fin = finish_noise_robustness(cfg, plan, res.data.rows);
  else if (cfg.experiment == "model-identification")
    fin = finish_model_identification(cfg, plan, res.data.rows);
  else if (cfg.experiment == "consistency-sweep")
    fin = finish_consistency(cfg, plan, res.data.rows);
  else if (cfg.experiment == "sure-curve")
    fin = finish_sure_curve(cfg, plan, res.data.rows);
  else
    fin = finish_fb_trace(cfg, plan, res.data.rows, extras);

  res.curves = std::move(fin.curves);
  for (const auto& item : plan.meta_extra.items()) meta[item.key()] = item.value();
  if (!fin.summary.empty()) meta["summary"] = fin.summary;
  meta["failures"] = res.failures;
  res.meta_json = meta.dump(2) + "\n";
  return res;
}

void write_outputs(const ExperimentResult& res, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path base = dir.empty() ? fs::path(".") : fs::path(dir);
  fs::create_directories(base);
  const auto put = [&base](const std::string& name, const std::string& body) {
    const fs::path p = base / name;
    std::ofstream f(p, std::ios::binary);
    require(f.good(), "write_outputs: cannot open " + p.string());
    f << body;
    f.close();
    require(f.good(), "write_outputs: short write to " + p.string());
  };
  put(res.experiment + ".csv", to_csv(res.data));
  put(res.experiment + ".meta.json", res.meta_json);
  if (res.curves) put(res.experiment + ".curves.csv", to_csv(*res.curves));
}

}  // namespace lowrex
