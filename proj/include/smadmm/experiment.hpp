#ifndef SMADMM_EXPERIMENT_HPP
#define SMADMM_EXPERIMENT_HPP

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "baselines.hpp"
#include "common.hpp"
#include "linops.hpp"
#include "problem.hpp"
#include "problems.hpp"
#include "schedules.hpp"
#include "solver.hpp"
#include "trace.hpp"

namespace smadmm {

using json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Configuration

struct MetricConfig {
  std::string kind = "linearized";  ///< linearized | linearized_fixed | scaled_identity
  double margin = 0.05;
  double value = 1.0;  ///< r for linearized_fixed, s for scaled_identity

  bool operator==(const MetricConfig&) const = default;
};

struct ProblemConfig {
  std::string type = "synthetic";  ///< synthetic | fused_lasso
  // synthetic
  Index n = 50;
  Index d = 50;
  std::uint64_t seed = 1;
  double sigma = 0.1;
  std::string convexity = "nonconvex_sigmoid";
  double l1 = 0.0;
  Index samples = 200;
  bool finite_sum = false;
  // fused_lasso
  std::string train;
  std::string test;
  double lambda1 = 1e-11;
  double threshold = 0.7;
  bool normalize = false;
  Index n_features = 0;

  MetricConfig H;

  bool operator==(const ProblemConfig&) const = default;
};

struct RuleConfig {
  double coef = 1.0;
  double power = 0.0;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  bool operator==(const RuleConfig&) const = default;
};

struct ScheduleConfig {
  std::string regime = "practical";  ///< practical | constant | dynamic
  RuleConfig rho{1.0, 0.0};
  RuleConfig eta{1.0, 0.0};
  RuleConfig a{1.0, 0.0, 0.0, 1.0};
  Index m = 1;
  double c_nu = 0.0;
  double c_gamma = 0.0;
  std::optional<double> L;  ///< theory regimes; estimated when absent

  bool operator==(const ScheduleConfig&) const = default;
};

struct AlgorithmConfig {
  std::string name = "smadmm";  ///< smadmm | sadmm | svrg | spider | asvrg
  Index batch = 1;
  std::string x_update = "linearized";  ///< linearized | exact (Q = I)
  Index epoch_length = 100;
  Index epoch_batch = 100;
  double extrapolation = 0.5;
  std::optional<ScheduleConfig> schedule;

  bool operator==(const AlgorithmConfig&) const = default;
};

struct DiagnosticsConfig {
  std::string grad_mode = "large_batch";  ///< exact | surrogate_v | large_batch
  Index samples = 1000;
  Index interval = 1;
  bool check_invariants = true;

  bool operator==(const DiagnosticsConfig&) const = default;
};

struct ExperimentConfig {
  ProblemConfig problem;
  std::vector<AlgorithmConfig> algorithms;
  ScheduleConfig schedule;
  Index K = 1000;
  std::optional<double> epochs;         ///< query budget in epochs
  std::optional<double> epoch_queries;  ///< queries per epoch; dataset size by default
  std::vector<std::uint64_t> seeds;
  std::string output = "out";
  DiagnosticsConfig diagnostics;
  unsigned threads = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void get_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline RuleConfig rule_from_json(const json& j, const std::string& where, RuleConfig r) {
  check_keys(j, where, {"coef", "power", "lo", "hi"});
  get_opt(j, "coef", r.coef, where);
  get_opt(j, "power", r.power, where);
  get_opt(j, "lo", r.lo, where);
  if (j.contains("hi") && !j.at("hi").is_null()) get_opt(j, "hi", r.hi, where);
  return r;
}

inline json rule_to_json(const RuleConfig& r) {
  json j{{"coef", r.coef}, {"power", r.power}, {"lo", r.lo}};
  if (std::isfinite(r.hi)) j["hi"] = r.hi;
  return j;
}

inline ScheduleConfig schedule_from_json(const json& j, const std::string& where) {
  check_keys(j, where, {"regime", "rho", "eta", "a", "m", "c_nu", "c_gamma", "L"});
  ScheduleConfig s;
  get_opt(j, "regime", s.regime, where);
  if (j.contains("rho")) s.rho = rule_from_json(j.at("rho"), where + ".rho", s.rho);
  if (j.contains("eta")) s.eta = rule_from_json(j.at("eta"), where + ".eta", s.eta);
  if (j.contains("a")) s.a = rule_from_json(j.at("a"), where + ".a", s.a);
  get_opt(j, "m", s.m, where);
  get_opt(j, "c_nu", s.c_nu, where);
  get_opt(j, "c_gamma", s.c_gamma, where);
  if (j.contains("L") && !j.at("L").is_null()) {
    double L = 0.0;
    get_opt(j, "L", L, where);
    s.L = L;
  }
  return s;
}

inline json schedule_to_json(const ScheduleConfig& s) {
  json j{{"regime", s.regime}};
  if (s.regime == "practical") {
    j["rho"] = rule_to_json(s.rho);
    j["eta"] = rule_to_json(s.eta);
    j["a"] = rule_to_json(s.a);
    j["m"] = s.m;
    j["c_nu"] = s.c_nu;
    j["c_gamma"] = s.c_gamma;
  }
  if (s.L) j["L"] = *s.L;
  return j;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using namespace detail;
  check_keys(j, "config", {"problem", "algorithms", "schedule", "K", "epochs", "epoch_queries",
                           "seeds", "output", "diagnostics", "threads"});
  ExperimentConfig c;
  if (!j.contains("problem")) throw ConfigError("config: missing 'problem'");
  const json& pj = j.at("problem");
  check_keys(pj, "problem", {"type", "n", "d", "seed", "sigma", "convexity", "l1", "samples",
                             "finite_sum", "train", "test", "lambda1", "threshold", "normalize",
                             "n_features", "H"});
  ProblemConfig& p = c.problem;
  get_opt(pj, "type", p.type, "problem");
  get_opt(pj, "n", p.n, "problem");
  get_opt(pj, "d", p.d, "problem");
  get_opt(pj, "seed", p.seed, "problem");
  get_opt(pj, "sigma", p.sigma, "problem");
  get_opt(pj, "convexity", p.convexity, "problem");
  get_opt(pj, "l1", p.l1, "problem");
  get_opt(pj, "samples", p.samples, "problem");
  get_opt(pj, "finite_sum", p.finite_sum, "problem");
  get_opt(pj, "train", p.train, "problem");
  get_opt(pj, "test", p.test, "problem");
  get_opt(pj, "lambda1", p.lambda1, "problem");
  get_opt(pj, "threshold", p.threshold, "problem");
  get_opt(pj, "normalize", p.normalize, "problem");
  get_opt(pj, "n_features", p.n_features, "problem");
  if (pj.contains("H")) {
    const json& hj = pj.at("H");
    check_keys(hj, "problem.H", {"kind", "margin", "value"});
    get_opt(hj, "kind", p.H.kind, "problem.H");
    get_opt(hj, "margin", p.H.margin, "problem.H");
    get_opt(hj, "value", p.H.value, "problem.H");
  }

  if (!j.contains("algorithms") || !j.at("algorithms").is_array()) {
    throw ConfigError("config: 'algorithms' must be an array");
  }
  for (std::size_t i = 0; i < j.at("algorithms").size(); ++i) {
    const json& aj = j.at("algorithms")[i];
    std::string where = "algorithms[" + std::to_string(i) + "]";
    if (aj.is_string()) {
      AlgorithmConfig a;
      a.name = aj.get<std::string>();
      c.algorithms.push_back(a);
      continue;
    }
    check_keys(aj, where, {"name", "batch", "x_update", "epoch_length", "epoch_batch",
                           "extrapolation", "schedule"});
    AlgorithmConfig a;
    get_opt(aj, "name", a.name, where);
    get_opt(aj, "batch", a.batch, where);
    get_opt(aj, "x_update", a.x_update, where);
    get_opt(aj, "epoch_length", a.epoch_length, where);
    get_opt(aj, "epoch_batch", a.epoch_batch, where);
    get_opt(aj, "extrapolation", a.extrapolation, where);
    if (aj.contains("schedule")) a.schedule = schedule_from_json(aj.at("schedule"), where + ".schedule");
    c.algorithms.push_back(a);
  }
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"), "schedule");
  get_opt(j, "K", c.K, "config");
  if (j.contains("epochs") && !j.at("epochs").is_null()) {
    double e = 0.0;
    get_opt(j, "epochs", e, "config");
    c.epochs = e;
  }
  if (j.contains("epoch_queries") && !j.at("epoch_queries").is_null()) {
    double e = 0.0;
    get_opt(j, "epoch_queries", e, "config");
    c.epoch_queries = e;
  }
  get_opt(j, "seeds", c.seeds, "config");
  get_opt(j, "output", c.output, "config");
  get_opt(j, "threads", c.threads, "config");
  if (j.contains("diagnostics")) {
    const json& dj = j.at("diagnostics");
    check_keys(dj, "diagnostics", {"grad_mode", "samples", "interval", "check_invariants"});
    get_opt(dj, "grad_mode", c.diagnostics.grad_mode, "diagnostics");
    get_opt(dj, "samples", c.diagnostics.samples, "diagnostics");
    get_opt(dj, "interval", c.diagnostics.interval, "diagnostics");
    get_opt(dj, "check_invariants", c.diagnostics.check_invariants, "diagnostics");
  }
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  using namespace detail;
  const ProblemConfig& p = c.problem;
  json pj{{"type", p.type}};
  if (p.type == "synthetic") {
    pj.update({{"n", p.n}, {"d", p.d}, {"seed", p.seed}, {"sigma", p.sigma},
               {"convexity", p.convexity}, {"l1", p.l1}, {"samples", p.samples},
               {"finite_sum", p.finite_sum}});
  } else {
    pj.update({{"train", p.train}, {"test", p.test}, {"lambda1", p.lambda1},
               {"threshold", p.threshold}, {"normalize", p.normalize},
               {"n_features", p.n_features}});
  }
  pj["H"] = {{"kind", p.H.kind}, {"margin", p.H.margin}, {"value", p.H.value}};
  json algs = json::array();
  for (const auto& a : c.algorithms) {
    json aj{{"name", a.name}, {"batch", a.batch}, {"x_update", a.x_update},
            {"epoch_length", a.epoch_length}, {"epoch_batch", a.epoch_batch},
            {"extrapolation", a.extrapolation}};
    if (a.schedule) aj["schedule"] = schedule_to_json(*a.schedule);
    algs.push_back(aj);
  }
  json j{{"problem", pj},
         {"algorithms", algs},
         {"schedule", schedule_to_json(c.schedule)},
         {"K", c.K},
         {"seeds", c.seeds},
         {"output", c.output},
         {"threads", c.threads},
         {"diagnostics",
          {{"grad_mode", c.diagnostics.grad_mode},
           {"samples", c.diagnostics.samples},
           {"interval", c.diagnostics.interval},
           {"check_invariants", c.diagnostics.check_invariants}}}};
  if (c.epochs) j["epochs"] = *c.epochs;
  if (c.epoch_queries) j["epoch_queries"] = *c.epoch_queries;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

/// All problems found; empty when the config is usable.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> err;
  namespace fs = std::filesystem;
  const ProblemConfig& p = c.problem;
  if (p.type == "synthetic") {
    if (p.n < 1 || p.d < 1) err.push_back("problem: n and d must be >= 1");
    if (p.convexity != "convex_quadratic" && p.convexity != "nonconvex_sigmoid") {
      err.push_back("problem.convexity: expected convex_quadratic or nonconvex_sigmoid");
    }
    if (p.sigma < 0.0) err.push_back("problem.sigma must be nonnegative");
  } else if (p.type == "fused_lasso") {
    if (p.train.empty()) err.push_back("problem.train: dataset path required");
    else if (!fs::exists(p.train)) err.push_back("problem.train: '" + p.train + "' does not exist");
    if (!p.test.empty() && !fs::exists(p.test)) {
      err.push_back("problem.test: '" + p.test + "' does not exist");
    }
    if (p.lambda1 < 0.0) err.push_back("problem.lambda1 must be nonnegative");
    if (!(p.threshold > 0.0)) err.push_back("problem.threshold must be positive");
  } else {
    err.push_back("problem.type: expected synthetic or fused_lasso, got '" + p.type + "'");
  }
  if (p.H.kind != "linearized" && p.H.kind != "linearized_fixed" && p.H.kind != "scaled_identity") {
    err.push_back("problem.H.kind: expected linearized, linearized_fixed or scaled_identity");
  }
  if (c.seeds.empty()) err.push_back("seeds: at least one seed required");
  if (c.K < 1) err.push_back("K must be >= 1");
  if (c.threads < 1) err.push_back("threads must be >= 1");
  if (c.algorithms.empty()) err.push_back("algorithms: at least one algorithm required");
  if (c.epochs && !(*c.epochs > 0.0)) err.push_back("epochs must be positive");
  if (c.epoch_queries && !(*c.epoch_queries > 0.0)) err.push_back("epoch_queries must be positive");
  const auto& dg = c.diagnostics;
  if (dg.grad_mode != "exact" && dg.grad_mode != "surrogate_v" && dg.grad_mode != "large_batch") {
    err.push_back("diagnostics.grad_mode: expected exact, surrogate_v or large_batch");
  }
  if (dg.samples < 1) err.push_back("diagnostics.samples must be >= 1");
  if (dg.interval < 0) err.push_back("diagnostics.interval must be >= 0");

  auto check_schedule = [&](const ScheduleConfig& s, const AlgorithmConfig& a, const std::string& w) {
    if (s.regime == "practical") {
      if (s.m < 1) err.push_back(w + ".m must be >= 1");
      if (s.a.hi > 1.0) err.push_back(w + ".a.hi must be <= 1");
    } else if (s.regime == "constant" || s.regime == "dynamic") {
      if (p.H.kind != "scaled_identity") {
        err.push_back(w + ": theory regimes need problem.H.kind = scaled_identity (a fixed metric)");
      }
      if (a.x_update != "exact") {
        err.push_back(w + ": theory regimes need x_update = exact; their eta is generally too "
                          "small for the linearized Q to be positive definite");
      }
    } else {
      err.push_back(w + ".regime: expected practical, constant or dynamic");
    }
  };
  std::set<std::string> seen;
  for (std::size_t i = 0; i < c.algorithms.size(); ++i) {
    const auto& a = c.algorithms[i];
    std::string w = "algorithms[" + std::to_string(i) + "]";
    static const std::set<std::string> known{"smadmm", "sadmm", "svrg", "spider", "asvrg"};
    if (!known.count(a.name)) err.push_back(w + ".name: unknown algorithm '" + a.name + "'");
    if (!seen.insert(a.name).second) err.push_back(w + ".name: duplicate algorithm '" + a.name + "'");
    if (a.batch < 1) err.push_back(w + ".batch must be >= 1");
    if (a.x_update != "linearized" && a.x_update != "exact") {
      err.push_back(w + ".x_update: expected linearized or exact");
    }
    if (a.epoch_length < 1 || a.epoch_batch < 1) err.push_back(w + ": epoch settings must be >= 1");
    if ((a.name == "svrg" || a.name == "asvrg") && p.type == "synthetic" && !p.finite_sum &&
        p.sigma > 0.0) {
      err.push_back(w + ": " + a.name + " needs a finite-sum or deterministic oracle");
    }
    check_schedule(a.schedule ? *a.schedule : c.schedule, a, a.schedule ? w + ".schedule" : "schedule");
  }
  return err;
}

// ---------------------------------------------------------------------------
// Building blocks

struct ExperimentProblem {
  std::shared_ptr<const Problem> problem;
  std::shared_ptr<const FusedLasso> fused;  ///< set for fused_lasso
  json metadata;
};

inline HMetric metric_from_config(const MetricConfig& m) {
  if (m.kind == "scaled_identity") return HMetric::scaled_identity(m.value);
  if (m.kind == "linearized_fixed") return HMetric::linearized_fixed(m.value);
  return HMetric::linearized(m.margin);
}

inline ExperimentProblem build_problem(const ProblemConfig& pc) {
  ExperimentProblem ep;
  if (pc.type == "synthetic") {
    SyntheticSpec s;
    s.n = pc.n;
    s.d = pc.d;
    s.seed = pc.seed;
    s.sigma = pc.sigma;
    s.convexity = pc.convexity == "convex_quadratic" ? Convexity::convex_quadratic
                                                     : Convexity::nonconvex_sigmoid;
    s.l1 = pc.l1;
    s.samples = pc.samples;
    s.finite_sum = pc.finite_sum;
    s.H = metric_from_config(pc.H);
    ep.problem = std::make_shared<const Problem>(synthetic_composite(s));
  } else {
    Dataset train = load_libsvm(pc.train, pc.n_features);
    std::optional<Dataset> test;
    if (!pc.test.empty()) test = load_libsvm(pc.test, train.n_features);
    if (pc.normalize) {
      normalize_max_abs(train);
      if (test) {
        for (Index i = 0; i < test->features.outerSize(); ++i)
          for (SparseMatrix::InnerIterator it(test->features, i); it; ++it)
            it.valueRef() *= train.scale[it.col()];
        test->scale = train.scale;
      }
    }
    FusedLassoOptions fo;
    fo.lambda1 = pc.lambda1;
    fo.threshold = pc.threshold;
    fo.H = metric_from_config(pc.H);
    auto fl = std::make_shared<const FusedLasso>(make_fused_lasso(std::move(train), std::move(test), fo));
    ep.fused = fl;
    ep.problem = std::shared_ptr<const Problem>(fl, &fl->problem);
  }
  const Problem& p = *ep.problem;
  ep.metadata = {{"name", p.name}, {"n", p.n()}, {"d", p.d()}, {"p", p.p()}};
  if (ep.fused) {
    ep.metadata["edges"] = ep.fused->graph.edges.size();
    ep.metadata["lambda1"] = ep.fused->lambda1;
    ep.metadata["train_size"] = ep.fused->train->size();
    ep.metadata["test_size"] = ep.fused->test->size();
  }
  return ep;
}

/// Problem constants for the theory regimes with Q = I and H = sI.
inline ProblemConstants problem_constants(const Problem& p, std::optional<double> L) {
  ProblemConstants pc;
  if (L) {
    pc.L = *L;
  } else if (auto l = p.loss().lipschitz()) {
    pc.L = *l;
  } else {
    StochasticOracle o = p.make_oracle(0);
    pc.L = estimate_lipschitz(o, Vector::Zero(p.n()));
  }
  pc.sigma_A = spectral_summary(p.A(), SpectralMode::AAt_min).sigma_A;
  pc.phi_min = pc.phi_max = 1.0;
  MetricValues H = p.metric(1.0);
  pc.sigma_min_H = H.sigma_min;
  pc.sigma_max_H = H.sigma_max;
  pc.normA = p.normA();
  pc.normB = p.normB();
  return pc;
}

inline Schedule build_schedule(const ScheduleConfig& s, const Problem& p, Index K) {
  if (s.regime == "practical") {
    PracticalSchedule ps;
    ps.rho = {s.rho.coef, s.rho.power, s.rho.lo, s.rho.hi};
    ps.eta = {s.eta.coef, s.eta.power, s.eta.lo, s.eta.hi};
    ps.a = {s.a.coef, s.a.power, s.a.lo, s.a.hi};
    ps.m = s.m;
    ps.c_nu = s.c_nu;
    ps.c_gamma = s.c_gamma;
    return Schedule::practical(ps);
  }
  ProblemConstants pc = problem_constants(p, s.L);
  if (s.regime == "constant") return Schedule::constant(constant_regime_constants(pc), K);
  return Schedule::dynamic(dynamic_regime_constants(pc));
}

inline GradRequest grad_request(const DiagnosticsConfig& d) {
  GradRequest g;
  g.samples = d.samples;
  if (d.grad_mode == "exact") g.mode = GradMode::exact;
  else if (d.grad_mode == "surrogate_v") g.mode = GradMode::surrogate_v;
  else g.mode = GradMode::large_batch;
  return g;
}

/// Diagnosed point of a run, for curve aggregation.
struct CurvePoint {
  Index k = 0;
  std::uint64_t queries = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_error = std::numeric_limits<double>::quiet_NaN();
  double kkt = std::numeric_limits<double>::quiet_NaN();
};

struct RunRecord {
  std::string algorithm;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunResult result;
  std::vector<CurvePoint> curve;
};

inline RunRecord run_one(const ExperimentProblem& ep, const ExperimentConfig& cfg,
                         const AlgorithmConfig& alg, std::uint64_t seed) {
  RunRecord rec;
  rec.algorithm = alg.name;
  rec.seed = seed;
  try {
    const Problem& p = *ep.problem;
    Schedule sched = build_schedule(alg.schedule ? *alg.schedule : cfg.schedule, p, cfg.K);
    RunOptions ro;
    ro.x_update = alg.x_update == "exact" ? XUpdateMode::exact : XUpdateMode::linearized;
    ro.grad = grad_request(cfg.diagnostics);
    ro.diagnostic_interval = cfg.diagnostics.interval;
    ro.check_invariants = cfg.diagnostics.check_invariants;
    ro.batch = alg.batch;
    ro.algorithm = alg.name;
    if (cfg.epochs) {
      double eq = cfg.epoch_queries ? *cfg.epoch_queries
                                    : (ep.fused ? static_cast<double>(ep.fused->train->size()) : 1000.0);
      ro.max_queries = static_cast<std::uint64_t>(std::ceil(*cfg.epochs * eq));
    }
    auto fused = ep.fused;
    auto* curve = &rec.curve;
    ro.observer = [curve, fused](const SolverState& s, const TraceRow& row) {
      if (!row.has_kkt()) return;
      CurvePoint cp;
      cp.k = row.k;
      cp.queries = row.oracle_queries;
      cp.objective = row.objective;
      cp.kkt = row.kkt_residual2;
      if (fused) {
        cp.test_loss = fused->test_loss(s.x);
        cp.test_error = fused->test_error(s.x);
      }
      curve->push_back(cp);
    };
    StochasticOracle oracle = p.make_oracle(seed);
    if (alg.name == "smadmm") {
      rec.result = run(p, oracle, sched, cfg.K, ro);
    } else {
      BaselineConfig bc;
      bc.kind = alg.name == "sadmm"    ? BaselineKind::sadmm
                : alg.name == "svrg"   ? BaselineKind::svrg
                : alg.name == "spider" ? BaselineKind::spider
                                       : BaselineKind::asvrg;
      bc.epoch_length = alg.epoch_length;
      bc.epoch_batch = alg.epoch_batch;
      bc.extrapolation = alg.extrapolation;
      rec.result = run_baseline(p, oracle, sched, cfg.K, bc, ro);
    }
    rec.ok = !rec.result.aborted();
    if (!rec.ok) rec.error = rec.result.trace.abort_reason;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

inline json run_summary_json(const RunRecord& r, Index K) {
  json j{{"algorithm", r.algorithm},
         {"seed", r.seed},
         {"K", K},
         {"status", r.ok ? "complete" : "aborted"},
         {"total_queries", r.result.total_queries},
         {"diagnostic_queries", r.result.diagnostic_queries},
         {"wall_time_s", r.result.wall_time_s},
         {"rows", r.result.trace.rows.size()},
         {"max_dual_identity_error", r.result.max_dual_identity_error},
         {"max_feasibility_identity_error", r.result.max_feasibility_identity_error}};
  j["best_k"] = r.result.best_k ? json(*r.result.best_k) : json(nullptr);
  j["best_kkt"] = std::isfinite(r.result.best_kkt) ? json(r.result.best_kkt) : json(nullptr);
  if (!r.error.empty()) j["error"] = r.error;
  if (!r.curve.empty()) {
    const CurvePoint& last = r.curve.back();
    if (std::isfinite(last.objective)) j["final_objective"] = last.objective;
    if (std::isfinite(last.test_loss)) j["final_test_loss"] = last.test_loss;
    if (std::isfinite(last.test_error)) j["final_test_error"] = last.test_error;
  }
  return j;
}

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  if (f.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double m = 0.0;
  for (double x : f) m += x;
  m /= static_cast<double>(f.size());
  double s = 0.0;
  for (double x : f) s += (x - m) * (x - m);
  s = f.size() > 1 ? std::sqrt(s / static_cast<double>(f.size() - 1)) : 0.0;
  return {m, s};
}

}  // namespace detail

inline const char* curves_csv_header() {
  return "algorithm,epoch,queries_mean,objective_mean,objective_std,test_loss_mean,test_loss_std,"
         "test_error_mean,test_error_std,kkt_mean,kkt_std,seeds";
}

/// Per-epoch mean and sample standard deviation over seeds. The value for epoch e
/// is the last diagnosed point with at most e * epoch_queries queries.
inline void write_curves_csv(std::ostream& os, const std::vector<RunRecord>& records,
                             double epoch_queries) {
  using detail::fmt17;
  os << curves_csv_header() << '\n';
  std::vector<std::string> algs;
  for (const auto& r : records)
    if (std::find(algs.begin(), algs.end(), r.algorithm) == algs.end()) algs.push_back(r.algorithm);
  for (const auto& alg : algs) {
    std::uint64_t max_q = 0;
    for (const auto& r : records)
      if (r.algorithm == alg && !r.curve.empty()) max_q = std::max(max_q, r.curve.back().queries);
    Index epochs = static_cast<Index>(std::floor(static_cast<double>(max_q) / epoch_queries));
    for (Index e = 1; e <= epochs; ++e) {
      double cap = static_cast<double>(e) * epoch_queries;
      std::vector<double> q, obj, tl, te, kkt;
      for (const auto& r : records) {
        if (r.algorithm != alg) continue;
        const CurvePoint* pick = nullptr;
        for (const auto& cp : r.curve)
          if (static_cast<double>(cp.queries) <= cap) pick = &cp;
        if (!pick) continue;
        q.push_back(static_cast<double>(pick->queries));
        obj.push_back(pick->objective);
        tl.push_back(pick->test_loss);
        te.push_back(pick->test_error);
        kkt.push_back(pick->kkt);
      }
      if (q.empty()) continue;
      auto [qm, qs] = detail::mean_std(q);
      auto [om, os_] = detail::mean_std(obj);
      auto [lm, ls] = detail::mean_std(tl);
      auto [em, es] = detail::mean_std(te);
      auto [km, ks] = detail::mean_std(kkt);
      (void)qs;
      os << alg << ',' << e << ',' << fmt17(qm) << ',' << fmt17(om) << ',' << fmt17(os_) << ','
         << fmt17(lm) << ',' << fmt17(ls) << ',' << fmt17(em) << ',' << fmt17(es) << ','
         << fmt17(km) << ',' << fmt17(ks) << ',' << q.size() << '\n';
    }
  }
}

struct ExperimentOutcome {
  std::vector<RunRecord> records;
  json summary;
  bool partial = false;
  std::filesystem::path directory;
};

/// Runs every (algorithm, seed) pair on `threads` workers and writes
/// traces/<algorithm>_seed<seed>.csv, summary.json and curves.csv.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  auto errs = validate(cfg);
  if (!errs.empty()) throw ConfigError("config invalid: " + errs.front());
  namespace fs = std::filesystem;
  ExperimentProblem ep = build_problem(cfg.problem);

  struct Job {
    std::size_t alg;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
    for (auto s : cfg.seeds) jobs.push_back({a, s});

  ExperimentOutcome out;
  out.records.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      out.records[i] = run_one(ep, cfg, cfg.algorithms[jobs[i].alg], jobs[i].seed);
    }
  };
  unsigned nt = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  out.directory = cfg.output;
  fs::create_directories(out.directory / "traces");
  json runs = json::array();
  for (const auto& r : out.records) {
    std::string stem = r.algorithm + "_seed" + std::to_string(r.seed);
    std::ofstream tf(out.directory / "traces" / (stem + ".csv"));
    write_trace_csv(tf, r.result.trace);
    json rj = run_summary_json(r, cfg.K);
    std::ofstream sf(out.directory / "traces" / (stem + ".json"));
    sf << rj.dump(2) << '\n';
    runs.push_back(rj);
    out.partial = out.partial || !r.ok;
  }
  double eq = cfg.epoch_queries ? *cfg.epoch_queries
                                : (ep.fused ? static_cast<double>(ep.fused->train->size()) : 1000.0);
  {
    std::ofstream cf(out.directory / "curves.csv");
    write_curves_csv(cf, out.records, eq);
  }
  out.summary = {{"status", out.partial ? "partial" : "complete"},
                 {"K", cfg.K},
                 {"epoch_queries", eq},
                 {"problem", ep.metadata},
                 {"config", config_to_json(cfg)},
                 {"runs", runs}};
  std::ofstream sf(out.directory / "summary.json");
  sf << out.summary.dump(2) << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Rate fitting and trace reports

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<std::pair<double, double>> points;  ///< (log K, log residual)
  std::vector<std::string> warnings;
};

/// Least-squares line through (log K, log value). Non-positive values are dropped
/// with a warning; at least three points must remain.
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& k_and_value) {
  RateFit f;
  for (auto [K, v] : k_and_value) {
    if (!(K > 0.0)) throw std::invalid_argument("fit_rate: horizons must be positive");
    if (!(v > 0.0) || !std::isfinite(v)) {
      f.warnings.push_back("excluded non-positive residual at K = " + detail::fmt17(K));
      continue;
    }
    f.points.emplace_back(std::log(K), std::log(v));
  }
  if (f.points.size() < 3) {
    throw std::invalid_argument("fit_rate: need at least 3 usable points, have " +
                                std::to_string(f.points.size()));
  }
  double n = static_cast<double>(f.points.size());
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : f.points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (auto [x, y] : f.points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_rate: need at least two distinct horizons");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (auto [x, y] : f.points) {
    double e = y - (f.intercept + f.slope * x);
    ssr += e * e;
  }
  f.r2 = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  return f;
}

inline json rate_fit_json(const RateFit& f) {
  json pts = json::array();
  for (auto [x, y] : f.points) pts.push_back({x, y});
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"points", pts},
          {"warnings", f.warnings}};
}

/// (K, mean best_kkt) from an experiment summary or a per-run summary, restricted
/// to `algorithm` when given.
inline std::pair<double, double> summary_point(const json& s, const std::string& algorithm) {
  std::vector<json> runs;
  if (s.contains("runs")) {
    for (const auto& r : s.at("runs")) runs.push_back(r);
  } else {
    runs.push_back(s);
  }
  double K = s.contains("K") ? s.at("K").get<double>() : 0.0;
  double sum = 0.0;
  int cnt = 0;
  std::set<std::string> algs;
  for (const auto& r : runs) {
    std::string a = r.value("algorithm", "");
    if (!algorithm.empty() && a != algorithm) continue;
    algs.insert(a);
    if (r.contains("K")) K = r.at("K").get<double>();
    if (!r.contains("best_kkt") || r.at("best_kkt").is_null()) continue;
    sum += r.at("best_kkt").get<double>();
    ++cnt;
  }
  if (algs.size() > 1) {
    throw std::invalid_argument("summary holds several algorithms; select one with --algorithm");
  }
  if (cnt == 0) throw std::invalid_argument("summary has no best_kkt values");
  return {K, sum / cnt};
}

inline json kkt_report(const Trace& t) {
  json j{{"algorithm", t.algorithm}, {"rows", t.rows.size()}};
  std::size_t diag = 0, dual_viol = 0, feas_viol = 0, nonfinite = 0;
  bool monotone = true;
  std::uint64_t prevq = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (r.has_kkt()) ++diag;
    if (r.invariant_flags & kDualIdentityViolated) ++dual_viol;
    if (r.invariant_flags & kFeasibilityIdentityViolated) ++feas_viol;
    if (r.invariant_flags & kNonFinite) ++nonfinite;
    if (r.oracle_queries < prevq || r.k != static_cast<Index>(i + 1)) monotone = false;
    prevq = r.oracle_queries;
  }
  j["diagnosed_rows"] = diag;
  j["dual_identity_violations"] = dual_viol;
  j["feasibility_identity_violations"] = feas_viol;
  j["non_finite_rows"] = nonfinite;
  j["rows_consistent"] = monotone;
  if (auto best = t.best_kkt()) {
    j["best_k"] = best->first;
    j["best_kkt"] = best->second;
  }
  for (auto it = t.rows.rbegin(); it != t.rows.rend(); ++it) {
    if (!it->has_kkt()) continue;
    json last{{"k", it->k}, {"kkt_residual2", it->kkt_residual2}, {"dual_residual2", it->dual_residual2},
              {"feasibility2", it->feasibility2}, {"oracle_queries", it->oracle_queries}};
    last["prox_residual2"] = std::isfinite(it->prox_residual2) ? json(it->prox_residual2) : json(nullptr);
    j["last_diagnosed"] = last;
    break;
  }
  if (!t.rows.empty()) j["total_queries"] = t.rows.back().oracle_queries;
  return j;
}

}  // namespace smadmm

#endif  // SMADMM_EXPERIMENT_HPP
