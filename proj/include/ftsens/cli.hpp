#pragma once

#include "ftsens/certifier.hpp"
#include "ftsens/continua.hpp"
#include "ftsens/firsttime.hpp"
#include "ftsens/hypmetric_entropy.hpp"
#include "ftsens/report.hpp"
#include "ftsens/sampling.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace ftsens::cli {

using json = nlohmann::ordered_json;

enum Exit { kOk = 0, kError = 1, kSuspected = 2 };

struct Globals {
  std::string system = "shift";
  std::string epsilon;  // default depends on the system
  std::uint64_t seed = 1;
  std::string out = "ftsens_out";
  unsigned jobs = 0;
  long budget = 100000;
};

struct TaskResult {
  json report;
  int exit = kOk;
};

// ---------------------------------------------------------------------------
// Scalars in reports

inline json jv(const Dyadic& d) { return d.to_fraction(); }
inline json jv(double d) { return d; }
inline std::string cell(const Dyadic& d) { return d.to_fraction(); }
inline std::string cell(double d) { return fmt_double(d); }
inline std::string cell(long v) { return std::to_string(v); }

template <class T>
T parse_scalar(const std::string& s) {
  if constexpr (std::is_same_v<T, Dyadic>) return parse_exact(s);
  else return parse_decimal(s);
}
template <class T>
std::vector<T> parse_scalars(const std::string& s) {
  if constexpr (std::is_same_v<T, Dyadic>) return parse_exact_list(s);
  else return parse_decimal_list(s);
}

inline json point_json(const HilbertPoint& x) {
  json v = json::array();
  for (long long i = x.lo(); i < x.hi(); ++i) v.push_back(x.at(i).to_fraction());
  return json{{"fill", x.fill().to_fraction()}, {"lo", x.lo()}, {"values", v}};
}
inline json point_json(const TorusPoint& x) {
  json v = json::array();
  for (int k = 0; k < x.dim; ++k) v.push_back(x[k]);
  return v;
}
template <class P>
  requires requires(P p) { p.base; p.angle; }
json point_json(const P& x) {
  return json{{"base", point_json(x.base)}, {"angle", x.angle}};
}

inline bool exact_system(const std::string& s) { return s == "shift" || s == "shift-rot"; }

inline std::string default_epsilon(const Globals& g) {
  if (!g.epsilon.empty()) return g.epsilon;
  return exact_system(g.system) ? "1/8" : "0.1";
}

inline std::string provenance_of(const Globals& g) {
  return exact_system(g.system) ? provenance::exact() : provenance::sampled(g.seed);
}

// ---------------------------------------------------------------------------
// Artifacts

class Artifacts {
 public:
  Artifacts(const std::string& dir, std::string task) : dir_(dir), task_(std::move(task)) {
    std::filesystem::create_directories(dir_);
  }
  std::filesystem::path path(const std::string& suffix) const { return dir_ / (task_ + suffix); }

  void json_report(const json& j) {
    std::ofstream f(path(".json"), std::ios::binary);
    f << j.dump(2) << "\n";
    written_.push_back(path(".json").string());
  }
  void csv(const std::string& name, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows) {
    auto p = path("_" + name + ".csv");
    std::ofstream f(p, std::ios::binary);
    csv_row(f, header);
    for (const auto& r : rows) csv_row(f, r);
    written_.push_back(p.string());
  }
  void plot(const std::string& name, const std::vector<std::pair<std::string, std::string>>& meta,
            const std::vector<PlotPoint>& series) {
    auto p = path("_" + name + ".dat");
    std::ofstream f(p, std::ios::binary);
    write_plotdata(f, meta, series);
    written_.push_back(p.string());
  }
  const std::vector<std::string>& written() const { return written_; }

 private:
  std::filesystem::path dir_;
  std::string task_;
  std::vector<std::string> written_;
};

// ---------------------------------------------------------------------------
// first-time

struct FirstTimeArgs {
  std::string x, r, threshold;
};

template <class S>
TaskResult run_first_time_on(const S& sys, const typename S::point& x, const Globals& g, const FirstTimeArgs& a,
                             const std::string& r_default) {
  using T = typename S::scalar;
  T eps = parse_scalar<T>(default_epsilon(g));
  T r = parse_scalar<T>(a.r.empty() ? r_default : a.r);
  T thr = a.threshold.empty() ? eps : parse_scalar<T>(a.threshold);
  auto rec = first_increase(sys, x, r, thr, g.budget);

  TaskResult out;
  json trace = json::array();
  std::vector<std::vector<std::string>> rows;
  std::vector<PlotPoint> series;
  for (const auto& t : rec.trace) {
    trace.push_back(json{{"j", t.j}, {"lo", jv(t.diam.lo)}, {"hi", jv(t.diam.hi)}});
    rows.push_back({cell(t.j), cell(t.diam.lo), cell(t.diam.hi), provenance_of(g)});
    series.push_back(plot_point(t.j, t.diam.lo));
  }
  out.report = json{{"task", "first-time"}, {"system", rec.system},   {"seed", g.seed},
                    {"x", point_json(rec.x)}, {"r", jv(rec.r)},        {"threshold", jv(rec.threshold)},
                    {"n1", rec.n1},           {"escalations", rec.escalations},
                    {"tie_unresolved", rec.tie_unresolved}, {"trace", trace}};
  Artifacts art(g.out, "first_time");
  art.json_report(out.report);
  art.csv("trace", {"j", "diam_lo", "diam_hi", "provenance"}, rows);
  art.plot("diam", {{"series", "j vs diameter of the j-th image"}, {"system", rec.system}, {"n1", std::to_string(rec.n1)}},
           series);
  return out;
}

inline TaskResult run_first_time(const Globals& g, const FirstTimeArgs& a) {
  std::mt19937_64 rng(g.seed);
  if (g.system == "shift") {
    ShiftSystem sys;
    sys.epsilon = parse_exact(default_epsilon(g));
    HilbertPoint x = random_shift_point(rng, 3);
    if (!a.x.empty()) x = HilbertPoint(half(), 0, parse_exact_list(a.x));
    return run_first_time_on(sys, x, g, a, ldexp(sys.epsilon, -4).to_fraction());
  }
  auto torus_x = [&]() {
    if (a.x.empty()) return random_torus_point(rng);
    auto v = parse_decimal_list(a.x);
    if (v.size() != 2) throw UsageError("--x needs two coordinates on the torus");
    return TorusPoint{v[0], v[1]};
  };
  if (g.system == "cat") return run_first_time_on(TorusLinearSystem{}, torus_x(), g, a, "0.001");
  if (g.system == "flow") {
    SlowedFlowSystem sys;
    sys.h = 0.01;
    return run_first_time_on(sys, torus_x(), g, a, "0.01");
  }
  throw UsageError("first-time supports --system shift, cat or flow");
}

// ---------------------------------------------------------------------------
// certify

struct CertifyArgs {
  std::string gammas, r1;
  long n_max = 0;  // 0: system default
  long samples = -1;
  bool stable_orbit = false;
  double step = 0.01;
  int cloud = 128;
};

template <class S, class Gen>
TaskResult run_certify_on(const S& sys, const Globals& g, const CertifyArgs& a, long n_max_default, long samples_default,
                          Gen gen) {
  using T = typename S::scalar;
  T eps = parse_scalar<T>(default_epsilon(g));
  long n_max = a.n_max > 0 ? a.n_max : n_max_default;
  long count = a.samples >= 0 ? a.samples : samples_default;
  if (count == 0) throw UsageError("--samples must be positive");
  std::vector<T> gammas;
  if (a.gammas.empty()) gammas = {halve(eps), halve(halve(eps)), halve(halve(halve(eps)))};
  else gammas = parse_scalars<T>(a.gammas);
  if (gammas.empty()) throw UsageError("--gammas is empty");
  T r1 = a.r1.empty() ? halve(eps) : parse_scalar<T>(a.r1);

  std::mt19937_64 rng(g.seed);
  std::vector<typename S::point> samples;
  for (long i = 0; i < count; ++i) samples.push_back(gen(rng));
  auto schedule = geometric_schedule(r1, static_cast<int>(n_max));
  CertifyOptions<S> opt;
  opt.budget = g.budget;
  opt.jobs = g.jobs;
  auto rep = certify(sys, samples, schedule, gammas, eps, opt);

  TaskResult out;
  bool constants_ok = true;
  json per = json::array();
  for (size_t i = 0; i < rep.per_gamma.size(); ++i) {
    const auto& gc = rep.per_gamma[i];
    long f1 = gc.f1.empty() ? 0 : *std::max_element(gc.f1.begin(), gc.f1.end());
    long f2 = gc.f2.empty() ? 0 : *std::max_element(gc.f2.begin(), gc.f2.end());
    json e{{"gamma", jv(gc.gamma)}, {"observed_m", gc.observed_m}, {"max_f1", f1}, {"max_f2", f2},
           {"f1_slope", gc.f1_slope}, {"f2_slope", gc.f2_slope}, {"f1_growing", gc.f1_growing},
           {"f2_growing", gc.f2_growing}};
    if (gc.k_gamma) {
      bool ok = f1 <= 2 && f2 <= *gc.k_gamma + 2;
      constants_ok = constants_ok && ok;
      e["k_gamma"] = *gc.k_gamma;
      e["f2_bound"] = *gc.k_gamma + 2;
      e["within_bounds"] = ok;
    }
    per.push_back(e);
  }
  json sched = json::array();
  for (const auto& r : rep.schedule) sched.push_back(jv(r));
  out.report = json{{"task", "certify"}, {"system", rep.system}, {"seed", g.seed},    {"epsilon", jv(rep.epsilon)},
                    {"samples", count},  {"schedule", sched},    {"per_gamma", per}, {"trend_window", rep.trend_window},
                    {"verdict", to_string(rep.verdict)},          {"flags", rep.flags}};
  if constexpr (std::is_same_v<S, ShiftSystem>) {
    auto m = shift_schedule(64);
    bool mono = true;
    for (long n = 2; n <= 64; ++n) mono = mono && m.at_index(n) >= m.at_index(n - 1);
    out.report["constants_ok"] = constants_ok;
    out.report["monotone_schedule_ok"] = mono;
    if (!constants_ok || !mono) out.exit = kSuspected;
  }
  if (rep.verdict == Verdict::ViolationSuspected) out.exit = kSuspected;

  Artifacts art(g.out, "certify");
  art.json_report(out.report);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rep.rows)
    rows.push_back({std::to_string(r.sample), std::to_string(r.k), cell(rep.per_gamma[r.gamma_index].gamma),
                    to_string(r.kind), std::to_string(r.value), provenance_of(g)});
  art.csv("diffs", {"sample", "k", "gamma", "kind", "value", "provenance"}, rows);
  for (size_t i = 0; i < rep.per_gamma.size(); ++i) {
    std::map<long, long> worst;
    for (const auto& r : rep.rows)
      if (r.gamma_index == i && r.kind == DiffKind::F2) worst[r.k] = std::max(worst[r.k], r.value);
    std::vector<PlotPoint> series;
    for (const auto& [k, v] : worst) series.push_back({std::to_string(k), std::to_string(v), ""});
    art.plot("f2_g" + std::to_string(i),
             {{"series", "k vs max F2 difference over samples"}, {"gamma", cell(rep.per_gamma[i].gamma)}}, series);
  }
  return out;
}

inline TaskResult run_certify(const Globals& g, const CertifyArgs& a) {
  if (g.system == "shift") {
    ShiftSystem sys;
    sys.epsilon = parse_exact(default_epsilon(g));
    return run_certify_on(sys, g, a, 16, 20, [](std::mt19937_64& rng) { return random_shift_point(rng, 3); });
  }
  if (g.system == "shift-rot") {
    ProductSystem<ShiftSystem> sys{ShiftSystem{}, std::numbers::sqrt2 - 1};
    sys.base.epsilon = parse_exact(default_epsilon(g));
    return run_certify_on(sys, g, a, 16, 20, [](std::mt19937_64& rng) {
      auto x = random_shift_point(rng, 3);
      return ProductSystem<ShiftSystem>::point{x, std::uniform_real_distribution<double>(0, 1)(rng)};
    });
  }
  if (g.system == "cat")
    return run_certify_on(TorusLinearSystem{}, g, a, 12, 20, [](std::mt19937_64& rng) { return random_torus_point(rng); });
  if (g.system == "cat-id") {
    ProductSystem<TorusLinearSystem> sys{TorusLinearSystem{}, 0.0};
    return run_certify_on(sys, g, a, 12, 20, [](std::mt19937_64& rng) {
      auto x = random_torus_point(rng);
      return ProductSystem<TorusLinearSystem>::point{x, std::uniform_real_distribution<double>(0, 1)(rng)};
    });
  }
  if (g.system == "flow") {
    SlowedFlowSystem sys;
    sys.h = a.step;
    sys.samples = a.cloud;
    CertifyArgs b = a;
    if (b.gammas.empty()) b.gammas = fmt_double(0.5 * parse_decimal(default_epsilon(g)));
    if (b.r1.empty()) b.r1 = "0.02";
    return run_certify_on(sys, g, b, 7, 2, [&](std::mt19937_64& rng) {
      if (a.stable_orbit) return stable_orbit_point(sys, std::uniform_real_distribution<double>(0.2, 0.5)(rng));
      return random_torus_point(rng);
    });
  }
  throw UsageError("unknown system '" + g.system + "'");
}

// ---------------------------------------------------------------------------
// continuum

struct ContinuumArgs {
  std::string gamma;
  long stages = 0;
};

inline std::vector<long> stage_range(long a, long b) {
  std::vector<long> v(static_cast<size_t>(b - a));
  std::iota(v.begin(), v.end(), a);
  return v;
}

inline TaskResult run_continuum(const Globals& g, const ContinuumArgs& a) {
  std::mt19937_64 rng(g.seed);
  TaskResult out;
  Artifacts art(g.out, "continuum");
  std::vector<PlotPoint> series;
  json stages = json::array();
  if (g.system == "shift") {
    ShiftSystem sys;
    Dyadic eps = parse_exact(default_epsilon(g));
    sys.epsilon = eps;
    Dyadic gamma = a.gamma.empty() ? ldexp(eps, -2) : parse_exact(a.gamma);
    long kg = shift_k_gamma(gamma, eps), mg = shift_raw_m(kg);
    HilbertPoint x = random_shift_point(rng, 3);
    auto rec = build_cw_unstable(sys, x, gamma, mg, stage_range(0, a.stages > 0 ? a.stages : 14), eps);
    std::optional<long> k;
    for (long c = kg + 1; c <= kg + mg; ++c)
      if (hausdorff_box(rec.final_image(), shift_fu_closed_form(x, c, eps)) < Dyadic::pow2(-20)) k = c;
    for (const auto& st : rec.stages) {
      stages.push_back(json{{"m", st.m}, {"r", jv(st.r)}, {"n1", st.n1}, {"diam", jv(box_diam(st.image))},
                            {"residual", st.residual ? json(*st.residual) : json(nullptr)}});
      if (st.residual) series.push_back(plot_point(st.m, *st.residual));
    }
    out.report = json{{"task", "continuum"},     {"system", rec.system},        {"seed", g.seed},
                      {"anchor", point_json(x)}, {"gamma", jv(gamma)},          {"k_gamma", kg},
                      {"m_gamma", mg},           {"converged", rec.converged}, {"residual", rec.hausdorff_residual},
                      {"closed_form_k", k ? json(*k) : json(nullptr)},         {"delta", jv(rec.delta)},
                      {"anchor_in_every_stage", rec.anchor_in_every_stage},    {"stages", stages}};
    if (!rec.converged || !k) out.exit = kSuspected;
  } else if (g.system == "cat-id") {
    TorusLinearSystem cat;
    ProductSystem<TorusLinearSystem> sys{cat, 0.0};
    double gamma = a.gamma.empty() ? 0.05 : parse_decimal(a.gamma);
    // grid anchors keep the backward-then-forward orbit exact
    ProductSystem<TorusLinearSystem>::point anchor{random_grid_torus_point(rng),
                                                   std::uniform_real_distribution<double>(0, 1)(rng)};
    BuildOptions opt{.conv_tol = 1e-6, .grid_ratio = cat.expanding_eigenvalue()};
    auto rec = build_cw_unstable(sys, anchor, gamma, 3, stage_range(1, a.stages > 0 ? a.stages : 24), 0.1, opt);
    auto slice = product_fu_slice_check(sys, rec, 1e-9);
    for (const auto& st : rec.stages) {
      stages.push_back(json{{"m", st.m}, {"r", st.r}, {"n1", st.n1},
                            {"residual", st.residual ? json(*st.residual) : json(nullptr)}});
      if (st.residual) series.push_back(plot_point(st.m, *st.residual));
    }
    out.report = json{{"task", "continuum"}, {"system", rec.system}, {"seed", g.seed},
                      {"anchor", point_json(anchor)}, {"gamma", gamma}, {"converged", rec.converged},
                      {"residual", rec.hausdorff_residual},
                      {"slice", {{"max_circle_dev", slice.max_circle_dev}, {"max_line_dev", slice.max_line_dev},
                                 {"passed", slice.passed}}},
                      {"stages", stages}};
    if (!rec.converged || !slice.passed) out.exit = kSuspected;
  } else {
    throw UsageError("continuum supports --system shift or cat-id");
  }
  art.json_report(out.report);
  art.plot("residual", {{"series", "stage m vs Hausdorff residual to the previous stage"}}, series);
  return out;
}

// ---------------------------------------------------------------------------
// ftmetric

struct FtMetricArgs {
  int catalogs = 1;
  int size = 50;
  int chains = 100;
  long n_hyp = 10;
};

inline TaskResult run_ftmetric(const Globals& g, const FtMetricArgs& a) {
  if (g.system != "shift") throw UsageError("ftmetric supports --system shift");
  if (a.catalogs < 1 || a.size < 2) throw UsageError("need at least one catalog of two boxes");
  ShiftSystem sys;
  Dyadic eps = parse_exact(default_epsilon(g));
  sys.epsilon = eps;
  auto sched = shift_schedule(64);
  auto k = lambda_from_schedule(sched, eps);
  std::mt19937_64 rng(g.seed);

  TaskResult out;
  json cats = json::array();
  std::vector<std::vector<std::string>> hyp_rows;
  std::vector<PlotPoint> series;
  size_t failures = 0;
  for (int c = 0; c < a.catalogs; ++c) {
    auto cat = generate_shift_catalog(rng, static_cast<size_t>(a.size), 2, 3, eps);
    auto r = chain_D(sys, cat.boxes, cat.c, cat.p, cat.q, k, g.budget, true);
    auto boxes = cat.boxes;
    if (r.refined) boxes.push_back(cat.c);
    auto rows = verify_hyperbolic(sys, boxes, cat.c, cat.p, cat.q, a.n_hyp, k, g.budget);
    bool hyp_ok = true;
    for (const auto& row : rows) {
      hyp_ok = hyp_ok && row.ok;
      hyp_rows.push_back({std::to_string(c), std::to_string(row.n), fmt_double(row.D), fmt_double(row.bound),
                          row.ok ? "1" : "0", provenance::bounded(1e-12)});
      if (c == 0) series.push_back(plot_point(row.n, std::log(row.D)));
    }
    size_t compat_fail = 0;
    for (const auto& b : boxes)
      for (int s = 0; s <= 3; ++s) {
        auto cr = compatibility_check(sys, b, ldexp(eps, -s), sched, k, g.budget);
        if (!cr.diam_to_rho || !cr.rho_to_diam) ++compat_fail;
      }
    bool ok = r.sandwich_ok && r.lemma_ok && hyp_ok && compat_fail == 0;
    if (!ok) ++failures;
    cats.push_back(json{{"D", r.D}, {"rho", r.rho_whole.value}, {"rho_exponent", r.rho_whole.exponent},
                        {"witness_length", r.witness.size()}, {"refined", r.refined},
                        {"sandwich_ok", r.sandwich_ok}, {"lemma_ok", r.lemma_ok}, {"hyperbolic_ok", hyp_ok},
                        {"compatibility_failures", compat_fail}});
  }
  size_t chain_fail = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < a.chains; ++i) {
    auto chain = generate_shift_chain(rng, 2 + rng() % 7, eps);
    auto rep = chain_lemma_check(sys, chain, k, g.budget);
    if (!rep.ok) ++chain_fail;
    worst_margin = std::min(worst_margin, rep.margin);
  }
  failures += chain_fail;
  out.report = json{{"task", "ftmetric"},
                    {"system", "shift"},
                    {"seed", g.seed},
                    {"epsilon", jv(eps)},
                    {"lambda", k.lambda},
                    {"m_lambda", k.m},
                    {"catalogs", cats},
                    {"chains", a.chains},
                    {"chain_failures", chain_fail},
                    {"worst_chain_margin", a.chains > 0 ? json(worst_margin) : json(nullptr)},
                    {"failures", failures}};
  if (failures > 0) out.exit = kSuspected;
  Artifacts art(g.out, "ftmetric");
  art.json_report(out.report);
  art.csv("hyperbolic", {"catalog", "n", "D", "bound", "ok", "provenance"}, hyp_rows);
  art.plot("logD", {{"series", "n vs log D of the pulled-back catalog 0"}, {"lambda", fmt_double(k.lambda)}}, series);
  return out;
}

// ---------------------------------------------------------------------------
// entropy

struct EntropyArgs {
  double delta = 0.05;
  long n_max = 0;
  long pool = 0;
  double step = 0.01;
};

inline TaskResult run_entropy(const Globals& g, const EntropyArgs& a) {
  if (!(a.delta > 0)) throw UsageError("--delta must be positive");
  EntropyEstimate e;
  std::optional<double> reference;
  long n_max = a.n_max;
  long pool = a.pool;
  if (g.system == "cat") {
    TorusLinearSystem cat;
    auto [u, s] = cat.eigenvectors();
    n_max = n_max > 0 ? n_max : 12;
    pool = pool > 0 ? pool : 100000;
    e = entropy_estimate(cat, a.delta, n_max,
                         strip_pool({0.3, 0.6}, u, s, a.delta / 4, a.delta / 4, static_cast<size_t>(pool)), g.jobs);
    reference = std::log(cat.expanding_eigenvalue());
  } else if (g.system == "flow") {
    SlowedFlowSystem sys;
    sys.h = a.step;
    n_max = n_max > 0 ? n_max : 64;
    pool = pool > 0 ? pool : 20000;
    e = entropy_estimate(sys, a.delta, n_max,
                         strip_pool({0.55, 0.35}, {1, 0}, {0, 1}, 0.1, 0.1, static_cast<size_t>(pool)), g.jobs);
    reference = 0.0;
  } else {
    throw UsageError("entropy supports --system cat or flow");
  }
  TaskResult out;
  out.report = json{{"task", "entropy"}, {"system", g.system}, {"seed", g.seed},   {"delta", a.delta},
                    {"n_max", n_max},    {"pool", pool},       {"fit_lo", e.fit_lo}, {"fit_hi", e.fit_hi},
                    {"h", e.h},          {"intercept", e.intercept}, {"residual", e.residual},
                    {"reference", *reference}, {"counts", e.counts}};
  if (*reference > 0) out.report["relative_error"] = std::fabs(e.h - *reference) / *reference;
  Artifacts art(g.out, "entropy");
  art.json_report(out.report);
  std::vector<std::vector<std::string>> rows;
  std::vector<PlotPoint> series;
  for (size_t n = 0; n < e.counts.size(); ++n) {
    double ls = std::log(static_cast<double>(e.counts[n]));
    rows.push_back({std::to_string(n), std::to_string(e.counts[n]), fmt_double(ls), provenance::sampled(g.seed)});
    series.push_back(plot_point(static_cast<long>(n), ls));
  }
  art.csv("counts", {"n", "s", "log_s", "provenance"}, rows);
  art.plot("logs", {{"series", "n vs log s(n, delta)"}, {"delta", fmt_double(a.delta)}, {"slope", fmt_double(e.h)}},
           series);
  return out;
}

// ---------------------------------------------------------------------------
// split-tree

struct SplitArgs {
  int depth = 4;
  long M = 0;
  std::string delta;
};

inline TaskResult run_split_tree(const Globals& g, const SplitArgs& a) {
  if (g.system != "shift") throw UsageError("split-tree supports --system shift");
  ShiftSystem sys;
  Dyadic eps = parse_exact(default_epsilon(g));
  sys.epsilon = eps;
  Dyadic delta = a.delta.empty() ? eps : parse_exact(a.delta);
  auto sched = shift_schedule(64);
  auto k = lambda_from_schedule(sched, eps);
  auto prm = split_params(delta, sched, k);
  long M = a.M > 0 ? a.M : prm.M;
  std::mt19937_64 rng(g.seed);
  HilbertPoint x = random_shift_point(rng, 2);
  auto t = split_tree(sys, shift_fu_closed_form(x, prm.k_box, eps), x, M, delta, a.depth, sched, k, g.jobs);

  TaskResult out;
  out.report = json{{"task", "split-tree"},
                    {"system", "shift"},
                    {"seed", g.seed},
                    {"delta", jv(delta)},
                    {"lambda", k.lambda},
                    {"M", M},
                    {"M_min", prm.M_min},
                    {"m_small", prm.m_small},
                    {"k_box", prm.k_box},
                    {"alpha", prm.alpha},
                    {"depth", t.depth},
                    {"leaves", t.leaves.size()},
                    {"pairs_checked", t.pairs_checked},
                    {"separated", t.separated},
                    {"min_witness", jv(t.min_witness)},
                    {"max_chain_diam", jv(t.max_chain_diam)},
                    {"chain_ok", t.chain_ok},
                    {"hausdorff_ok", t.hausdorff_ok},
                    {"lower_bound_h", t.lower_bound_h}};
  if (!t.separated || !t.chain_ok || !t.hausdorff_ok) out.exit = kSuspected;
  Artifacts art(g.out, "split_tree");
  art.json_report(out.report);
  std::vector<std::vector<std::string>> rows;
  std::vector<PlotPoint> series;
  std::map<int, long> per_level;
  for (const auto& n : t.nodes) ++per_level[n.level];
  for (const auto& [lv, c] : per_level) {
    rows.push_back({std::to_string(lv), std::to_string(c), std::to_string(static_cast<long>(lv) * M), provenance::exact()});
    series.push_back({std::to_string(lv), std::to_string(c), ""});
  }
  art.csv("levels", {"level", "nodes", "time", "provenance"}, rows);
  art.plot("nodes", {{"series", "level vs number of nodes"}, {"M", std::to_string(M)}}, series);
  return out;
}

// ---------------------------------------------------------------------------
// demo-notft

struct DemoArgs {
  long anchors = 2;
  long radii = 7;
  double r1 = 0.02;
  int cloud = 128;
  double step = 0.01;
  long pool = 20000;
  long n_max = 64;
};

inline TaskResult run_demo_notft(const Globals& g, const DemoArgs& a) {
  if (g.system != "flow") throw UsageError("demo-notft supports --system flow");
  Globals cg = g;
  cg.out = (std::filesystem::path(g.out) / "demo").string();
  CertifyArgs ca;
  ca.samples = a.anchors;
  ca.n_max = a.radii;
  ca.r1 = fmt_double(a.r1);
  ca.stable_orbit = true;
  ca.step = a.step;
  ca.cloud = a.cloud;
  auto cert = run_certify(cg, ca);
  EntropyArgs ea;
  ea.n_max = a.n_max;
  ea.pool = a.pool;
  ea.step = a.step;
  auto ent = run_entropy(cg, ea);

  TaskResult out;
  double h = ent.report["h"].get<double>();
  bool suspected = cert.report["verdict"] == "violation-suspected";
  out.report = json{{"task", "demo-notft"},
                    {"system", "flow"},
                    {"seed", g.seed},
                    {"entropy", h},
                    {"entropy_small", h <= 0.05},
                    {"verdict", cert.report["verdict"]},
                    {"certify", cert.report},
                    {"entropy_report", ent.report}};
  out.exit = suspected ? kSuspected : kOk;
  Artifacts art(g.out, "demo_notft");
  art.json_report(out.report);
  return out;
}

// ---------------------------------------------------------------------------
// selftest: quick exact checks of the shift path

inline TaskResult run_selftest(const Globals& g) {
  ShiftSystem sys;
  const Dyadic eps = sys.epsilon;
  std::mt19937_64 rng(g.seed);
  json checks = json::array();
  bool all = true;
  auto record = [&](const std::string& name, bool ok) {
    checks.push_back(json{{"check", name}, {"passed", ok}});
    all = all && ok;
  };

  bool window = true, sandwich = true;
  for (int t = 0; t < 10; ++t) {
    auto x = random_shift_point(rng, 3);
    for (long n = 4; n <= 8; ++n)
      for (long s = 1; s <= 3; ++s) {
        Dyadic gamma = ldexp(eps, -s);
        long kg = shift_k_gamma(gamma, eps);
        auto rec = first_increase(sys, x, ldexp(eps, -n), gamma, 100);
        window = window && (rec.n1 == n - kg - 1 || rec.n1 == n - kg);
        for (const auto& e : rec.trace) {
          Dyadic lo = ldexp(eps, e.j - n), hi = ldexp(eps, e.j - n + 1);
          sandwich = sandwich && !(e.diam.lo < lo) && !(e.diam.lo > hi);
        }
      }
  }
  record("first increase window", window);
  record("diameter sandwich", sandwich);

  auto sched = shift_schedule(64);
  auto k = lambda_from_schedule(sched, eps);
  bool lemma = true;
  for (int i = 0; i < 50; ++i) lemma = lemma && chain_lemma_check(sys, generate_shift_chain(rng, 4, eps), k).ok;
  record("chain lemma", lemma);
  record("config validator", validate_config("schema_version = 1\n[certify]\nn-max = 8\n") == std::nullopt &&
                                 validate_config("[certify]\n") != std::nullopt);

  TaskResult out;
  out.report = json{{"task", "selftest"}, {"checks", checks}, {"passed", all}};
  out.exit = all ? kOk : kError;
  return out;
}

// ---------------------------------------------------------------------------
// Entry point

/// Lexical config check ahead of CLI11, so failures carry line and column.
inline void precheck_config(const std::vector<std::string>& args) {
  for (size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    if (path.empty()) continue;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot read config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (auto issue = validate_config(text))
      throw UsageError(path + ":" + std::to_string(issue->line) + ":" + std::to_string(issue->column) + ": " +
                       issue->message);
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"First-time sensitivity laboratory", "ftsens"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  app.set_config("--config", "", "Config file (INI sections per subcommand, schema_version = 1)");

  Globals g;
  app.add_option("--system", g.system, "shift, cat, flow, shift-rot or cat-id")
      ->check(CLI::IsMember({"shift", "cat", "flow", "shift-rot", "cat-id"}));
  app.add_option("--epsilon", g.epsilon, "Expansivity threshold (1/8 on exact paths, 0.1 otherwise)");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads (0: all cores; FTSENS_JOBS overrides)");
  app.add_option("--budget", g.budget, "Iteration budget for first increasing times")->check(CLI::PositiveNumber);

  FirstTimeArgs ft;
  auto* c_ft = app.add_subcommand("first-time", "First increasing time of one ball");
  c_ft->add_option("--x", ft.x, "Base point: coordinates 0.. on the shift, two decimals on the torus");
  c_ft->add_option("--r", ft.r, "Radius");
  c_ft->add_option("--threshold", ft.threshold, "Threshold (default epsilon)");

  CertifyArgs ce;
  auto* c_ce = app.add_subcommand("certify", "F1/F2 differences along a radius schedule");
  c_ce->add_option("--gammas", ce.gammas, "Comma-separated gammas");
  c_ce->add_option("--n-max", ce.n_max, "Schedule length")->check(CLI::PositiveNumber);
  c_ce->add_option("--r1", ce.r1, "First radius (default epsilon/2)");
  c_ce->add_option("--samples", ce.samples, "Number of base points");
  c_ce->add_flag("--stable-orbit", ce.stable_orbit, "Flow: anchors on the stable orbit of the fixed point");
  c_ce->add_option("--step", ce.step, "Flow: integrator step");
  c_ce->add_option("--cloud", ce.cloud, "Flow: points per ball sample")->check(CLI::PositiveNumber);

  ContinuumArgs co;
  auto* c_co = app.add_subcommand("continuum", "Build a local cw-unstable continuum");
  c_co->add_option("--gamma", co.gamma, "Scale gamma");
  c_co->add_option("--stages", co.stages, "Number of stages")->check(CLI::PositiveNumber);

  FtMetricArgs fm;
  auto* c_fm = app.add_subcommand("ftmetric", "Hyperbolic ft-metric checks on generated catalogs");
  c_fm->add_option("--catalogs", fm.catalogs, "Number of catalogs");
  c_fm->add_option("--size", fm.size, "Boxes per catalog");
  c_fm->add_option("--chains", fm.chains, "Random chains for the chain inequality");
  c_fm->add_option("--n-hyp", fm.n_hyp, "Backward iterates");

  EntropyArgs en;
  auto* c_en = app.add_subcommand("entropy", "Separated-set entropy estimate");
  c_en->add_option("--delta", en.delta, "Separation scale");
  c_en->add_option("--n-max", en.n_max, "Largest time");
  c_en->add_option("--pool", en.pool, "Candidate pool size");
  c_en->add_option("--step", en.step, "Flow: integrator step");

  SplitArgs sp;
  auto* c_sp = app.add_subcommand("split-tree", "Separated set from the split tree");
  c_sp->add_option("--depth", sp.depth, "Tree depth")->check(CLI::NonNegativeNumber);
  c_sp->add_option("--M", sp.M, "Split period (default: least admissible)");
  c_sp->add_option("--delta", sp.delta, "Scale delta (default epsilon)");

  DemoArgs de;
  auto* c_de = app.add_subcommand("demo-notft", "Sensitive but not first-time sensitive flow");
  c_de->add_option("--anchors", de.anchors, "Stable-orbit anchors")->check(CLI::PositiveNumber);
  c_de->add_option("--radii", de.radii, "Schedule length")->check(CLI::PositiveNumber);
  c_de->add_option("--r1", de.r1, "First radius");
  c_de->add_option("--pool", de.pool, "Entropy pool size");
  c_de->add_option("--n-max", de.n_max, "Entropy horizon");

  auto* c_st = app.add_subcommand("selftest", "Quick exact checks");

  std::vector<std::string> argv_store = args;
  argv_store.insert(argv_store.begin(), "ftsens");
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    precheck_config(args);
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kError;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kError;
  }

  try {
    TaskResult r;
    if (c_ft->parsed()) r = run_first_time(g, ft);
    else if (c_ce->parsed()) r = run_certify(g, ce);
    else if (c_co->parsed()) r = run_continuum(g, co);
    else if (c_fm->parsed()) r = run_ftmetric(g, fm);
    else if (c_en->parsed()) r = run_entropy(g, en);
    else if (c_sp->parsed()) r = run_split_tree(g, sp);
    else if (c_de->parsed()) r = run_demo_notft(g, de);
    else if (c_st->parsed()) r = run_selftest(g);
    out << r.report.dump(2) << "\n";
    return r.exit;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
  } catch (const Error& e) {
    err << "error[" << e.code() << "]: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kError;
}

}  // namespace ftsens::cli
