#pragma once

#include "ftsens/certifier.hpp"
#include "ftsens/continua.hpp"
#include "ftsens/sampling.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

namespace ftsens {

// ---------------------------------------------------------------------------
// Hyperbolic constant

struct FtConstants {
  Dyadic epsilon;
  long m = 0;         // m_{eps/2} from the monotone schedule
  double lambda = 0;  // 2^{-1/m}
  double pow(long e) const { return std::pow(lambda, static_cast<double>(e)); }
};

inline FtConstants lambda_from_schedule(const MonotoneSchedule& sched, const Dyadic& eps) {
  long m = sched.at_index(2);
  if (m < 1) throw std::invalid_argument("schedule value at eps/2 must be positive");
  return {eps, m, std::exp2(-1.0 / static_cast<double>(m))};
}

/// rho(C) = lambda^{n1(C, eps)}
struct Rho {
  long exponent = 0;
  double value = 1;
};

template <class S>
Rho rho(const S& sys, const typename S::image& c, const FtConstants& k, long budget = 100000) {
  long e = continuum_first_increase(sys, c, k.epsilon, budget).n1;
  return {e, k.pow(e)};
}

template <class S>
struct MarkedContinuum {
  typename S::image continuum;
  typename S::point p, q;
  long n1_eps = 0;
  double rho = 1;
};

template <class S>
MarkedContinuum<S> mark(const S& sys, typename S::image c, typename S::point p, typename S::point q,
                        const FtConstants& k, long budget = 100000) {
  if (!sys.contains(c, p) || !sys.contains(c, q)) throw std::invalid_argument("marked points must lie in the continuum");
  auto r = rho(sys, c, k, budget);
  return {std::move(c), std::move(p), std::move(q), r.exponent, r.value};
}

/// a <= b up to a relative rounding allowance
inline bool le_rel(long double a, long double b) { return a <= b * (1.0L + 1e-12L); }

// ---------------------------------------------------------------------------
// Catalog-restricted chain metric on shift boxes

/// A point of a ∩ b when one exists with a single fill value on both tails.
inline std::optional<HilbertPoint> intersection_point(const BoxContinuum& a, const BoxContinuum& b) {
  if (!boxes_intersect(a, b)) return std::nullopt;
  auto [alo, ahi] = a.special_range();
  auto [blo, bhi] = b.special_range();
  long long lo = std::min(alo, blo), hi = std::max(ahi, bhi);
  // admissible tail values on each side: a point for shrinking profiles, else an interval
  auto side_range = [&](int dir, long long edge) -> std::optional<Interval> {
    SideProfile pa = a.profile(dir, edge), pb = b.profile(dir, edge);
    Interval ia = pa.shrinking ? Interval{pa.v, pa.v} : pa.constant;
    Interval ib = pb.shrinking ? Interval{pb.v, pb.v} : pb.constant;
    Interval r{max(ia.lo, ib.lo), min(ia.hi, ib.hi)};
    if (r.hi < r.lo) return std::nullopt;
    return r;
  };
  auto left = side_range(-1, lo), right = side_range(+1, hi);
  if (!left || !right) return std::nullopt;
  Interval both{max(left->lo, right->lo), min(left->hi, right->hi)};
  if (both.hi < both.lo) return std::nullopt;
  const Dyadic fill = both.contains(half()) ? half() : both.lo;
  HilbertPoint x(fill);
  for (long long i = lo; i <= hi; ++i) x.set(i, max(a.at(i).lo, b.at(i).lo));
  if (!box_contains_point(a, x) || !box_contains_point(b, x)) return std::nullopt;
  return x;
}

struct ChainMetricResult {
  double D = 0;
  std::vector<size_t> witness;                     // catalog indices, p-end first
  std::vector<std::optional<HilbertPoint>> links;  // a_1..a_{n-1}
  Rho rho_whole;
  double rho_union = 1;  // rho of the union of the witness
  bool sandwich_ok = false;
  bool lemma_ok = false;  // rho(union of witness) <= 4 D
  bool restricted = true;
  bool refined = false;  // C itself was appended after D exceeded rho(C)
};

/// rho of a finite union of boxes, exactly through union_diam
inline Rho union_rho(const std::vector<BoxContinuum>& boxes, const FtConstants& k, long budget = 100000) {
  std::vector<BoxContinuum> cur = boxes;
  for (long j = 0; j <= budget; ++j) {
    std::vector<const BoxContinuum*> ptr;
    for (const auto& b : cur) ptr.push_back(&b);
    if (union_diam(ptr) > k.epsilon) return {j, k.pow(j)};
    for (auto& b : cur) b = b.shifted(1);
  }
  throw NotIncreasedWithinBudget(budget);
}

/// Minimum of sum rho over chains in the catalog from a box containing p to a
/// box containing q, consecutive boxes intersecting. Dijkstra with node weights.
/// With `refine`, a catalog whose best chain costs more than rho(C) is
/// extended by C, which is always an admissible one-element chain.
inline ChainMetricResult chain_D(const ShiftSystem& sys, const std::vector<BoxContinuum>& catalog,
                                 const BoxContinuum& c, const HilbertPoint& p, const HilbertPoint& q,
                                 const FtConstants& k, long budget = 100000, bool refine = false) {
  if (!box_contains_point(c, p) || !box_contains_point(c, q)) throw std::invalid_argument("p and q must lie in C");
  const size_t n = catalog.size();
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i) {
    if (!box_contains(c, catalog[i])) throw std::invalid_argument("catalog element " + std::to_string(i) + " is not a subset of C");
    w[i] = rho(sys, catalog[i], k, budget).value;
  }
  std::vector<std::vector<size_t>> adj(n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      if (boxes_intersect(catalog[i], catalog[j])) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }

  const long double inf = std::numeric_limits<long double>::infinity();
  std::vector<long double> dist(n, inf);
  std::vector<size_t> prev(n, n);
  using Item = std::pair<long double, size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (size_t i = 0; i < n; ++i)
    if (box_contains_point(catalog[i], p)) {
      dist[i] = w[i];
      pq.push({dist[i], i});
    }
  while (!pq.empty()) {
    auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[v]) continue;
    for (size_t u : adj[v]) {
      long double nd = d + w[u];
      if (nd < dist[u]) {
        dist[u] = nd;
        prev[u] = v;
        pq.push({nd, u});
      }
    }
  }
  size_t end = n;
  for (size_t i = 0; i < n; ++i)
    if (dist[i] < inf && box_contains_point(catalog[i], q) && (end == n || dist[i] < dist[end])) end = i;
  if (end == n) throw NoChain();

  ChainMetricResult out;
  for (size_t v = end; v != n; v = prev[v]) out.witness.push_back(v);
  std::reverse(out.witness.begin(), out.witness.end());
  out.D = static_cast<double>(dist[end]);
  for (size_t i = 0; i + 1 < out.witness.size(); ++i)
    out.links.push_back(intersection_point(catalog[out.witness[i]], catalog[out.witness[i + 1]]));
  out.rho_whole = rho(sys, c, k, budget);
  std::vector<BoxContinuum> used;
  for (size_t i : out.witness) used.push_back(catalog[i]);
  out.rho_union = union_rho(used, k, budget).value;
  out.sandwich_ok = le_rel(out.D, out.rho_whole.value) && le_rel(out.rho_whole.value, 4.0L * out.D);
  out.lemma_ok = le_rel(out.rho_union, 4.0L * out.D);
  if (refine && !le_rel(out.D, out.rho_whole.value)) {
    auto wider = catalog;
    wider.push_back(c);
    auto r = chain_D(sys, wider, c, p, q, k, budget, false);
    r.refined = true;
    return r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generated shift catalogs

struct ShiftCatalog {
  BoxContinuum c;  // closed form (x, k0)
  std::vector<BoxContinuum> boxes;
  HilbertPoint p, q;
};

/// Closed form at y with index k in [k0, k0 + spread]; y moves x on
/// coordinates -3..3 by at most half the slack that keeps the box inside (x, k0).
inline BoxContinuum random_sub_box(std::mt19937_64& rng, const HilbertPoint& x, long k0, long spread,
                                   const Dyadic& eps) {
  long k = k0 + static_cast<long>(rng() % static_cast<unsigned long>(spread + 1));
  HilbertPoint y = x;
  for (long i = -3; i <= 3; ++i) {
    Dyadic slack = ldexp(eps, i - k0) - ldexp(eps, i - k);
    Dyadic t(static_cast<long long>(rng() % 257) - 128, -8);
    y.set(i, max(Dyadic(0), min(Dyadic(1), x.at(i) + t * slack)));
  }
  return shift_fu_closed_form(y, k, eps);
}

/// Catalog of `size` sub-boxes of a random closed form; p and q are the
/// centers of the first two boxes.
inline ShiftCatalog generate_shift_catalog(std::mt19937_64& rng, size_t size, long k0, long spread, const Dyadic& eps) {
  if (size < 2) throw std::invalid_argument("catalog needs at least two boxes");
  ShiftCatalog cat;
  HilbertPoint x = random_shift_point(rng, 2);
  cat.c = shift_fu_closed_form(x, k0, eps);
  for (size_t i = 0; i < size; ++i) cat.boxes.push_back(random_sub_box(rng, x, k0, spread, eps));
  cat.p = std::get<FormulaTail>(cat.boxes[0].tail()).center;
  cat.q = std::get<FormulaTail>(cat.boxes[1].tail()).center;
  return cat;
}

/// Chain of closed forms with indices in [1, 8]; each center is a point of the previous box.
inline std::vector<BoxContinuum> generate_shift_chain(std::mt19937_64& rng, size_t length, const Dyadic& eps) {
  std::vector<BoxContinuum> chain;
  HilbertPoint x = random_shift_point(rng, 3);
  for (size_t i = 0; i < length; ++i) {
    chain.push_back(shift_fu_closed_form(x, 1 + static_cast<long>(rng() % 8), eps));
    HilbertPoint y = x;
    for (long c = -2; c <= 2; ++c) {
      Interval iv = chain.back().at(c);
      y.set(c, iv.lo + Dyadic(static_cast<long long>(rng() % 257), -8) * iv.length());
    }
    x = y;
  }
  return chain;
}

struct HyperbolicRow {
  long n = 0;
  double D = 0, bound = 0;
  bool ok = false;
  bool rho_scales = false;  // n1(f^{-n} C) = n1(C) + n
};

/// D(f^{-n} C_(p,q)) <= 4 lambda^n D(C_(p,q)) for n = 0..n_max, with the
/// catalog, C and the marks pulled back together.
inline std::vector<HyperbolicRow> verify_hyperbolic(const ShiftSystem& sys, const std::vector<BoxContinuum>& catalog,
                                                    const BoxContinuum& c, const HilbertPoint& p,
                                                    const HilbertPoint& q, long n_max, const FtConstants& k,
                                                    long budget = 100000) {
  std::vector<HyperbolicRow> rows;
  auto base = chain_D(sys, catalog, c, p, q, k, budget);
  for (long n = 0; n <= n_max; ++n) {
    std::vector<BoxContinuum> back;
    for (const auto& b : catalog) back.push_back(b.shifted(-n));
    auto r = chain_D(sys, back, c.shifted(-n), p.shifted(-n), q.shifted(-n), k, budget);
    HyperbolicRow row{n, r.D, 4.0 * k.pow(n) * base.D};
    row.ok = le_rel(row.D, row.bound);
    row.rho_scales = r.rho_whole.exponent == base.rho_whole.exponent + n;
    rows.push_back(row);
  }
  return rows;
}

struct ChainLemmaReport {
  Rho lhs;  // rho of the union
  double rhs = 0;
  double margin = 0;
  bool ok = false;
};

/// rho(U C_i) <= 2 rho(C_1) + 4 rho(C_2) + ... + 4 rho(C_{n-1}) + 2 rho(C_n)
inline ChainLemmaReport chain_lemma_check(const ShiftSystem& sys, const std::vector<BoxContinuum>& chain,
                                          const FtConstants& k, long budget = 100000) {
  if (chain.empty()) throw std::invalid_argument("chain is empty");
  for (size_t i = 0; i + 1 < chain.size(); ++i)
    if (!boxes_intersect(chain[i], chain[i + 1]))
      throw std::invalid_argument("chain elements " + std::to_string(i) + " and " + std::to_string(i + 1) + " do not meet");
  ChainLemmaReport out;
  out.lhs = union_rho(chain, k, budget);
  long double rhs = 0;
  for (size_t i = 0; i < chain.size(); ++i) {
    double coef = (i == 0 || i + 1 == chain.size()) ? 2.0 : 4.0;
    rhs += coef * rho(sys, chain[i], k, budget).value;
  }
  out.rhs = static_cast<double>(rhs);
  out.margin = out.rhs - out.lhs.value;
  out.ok = le_rel(out.lhs.value, rhs);
  return out;
}

struct CompatibilityReport {
  Dyadic delta;
  double gamma_rho = 0;  // lambda^{2 m_delta}
  long m_delta = 0;
  long n_small = 0;  // least n with lambda^n < delta
  Dyadic gamma_diam;  // eps 2^{-n_small}
  bool diam_to_rho = true;  // diam(C) < gamma_diam implies rho(C) < delta
  bool rho_to_diam = true;  // rho(C) < gamma_rho implies diam(C) < delta
};

/// Both directions of the compatibility between diam and rho on one box.
inline CompatibilityReport compatibility_check(const ShiftSystem& sys, const BoxContinuum& c, const Dyadic& delta,
                                               const MonotoneSchedule& sched, const FtConstants& k,
                                               long budget = 100000) {
  CompatibilityReport out;
  out.delta = delta;
  out.m_delta = sched.for_gamma(delta, k.epsilon);
  out.gamma_rho = k.pow(2 * out.m_delta);
  double dd = delta.to_double();
  while (!(k.pow(out.n_small) < dd)) ++out.n_small;
  out.gamma_diam = ldexp(k.epsilon, -out.n_small);
  Dyadic diam = box_diam(c);
  Rho r = rho(sys, c, k, budget);
  if (diam < out.gamma_diam) out.diam_to_rho = r.value < dd;
  if (r.value < out.gamma_rho) out.rho_to_diam = diam < delta;
  return out;
}

// ---------------------------------------------------------------------------
// Separated sets and entropy

template <class S>
struct SeparatedSetResult {
  long n = 0;
  double delta = 0;
  std::vector<typename S::point> points;
  size_t count = 0;
};

namespace detail {

inline double dist_value(const Dyadic& d) { return d.to_double(); }
inline double dist_value(double d) { return d; }

template <class S>
std::vector<std::vector<typename S::point>> orbits(const S& sys, const std::vector<typename S::point>& pool, long n,
                                                   unsigned jobs) {
  std::vector<std::vector<typename S::point>> out(pool.size());
  parallel_for(pool.size(), resolve_jobs(jobs), [&](size_t i) {
    out[i].reserve(static_cast<size_t>(n + 1));
    out[i].push_back(pool[i]);
    for (long k = 1; k <= n; ++k) out[i].push_back(sys.forward(out[i].back(), 1));
  });
  return out;
}

/// Greedy insertion on precomputed orbits, using time n only.
template <class S>
std::vector<size_t> greedy_separated(const S& sys, const std::vector<std::vector<typename S::point>>& orb, long n,
                                     double delta) {
  using P = typename S::point;
  // latest times first: orbits separate late far more often than early
  auto separated = [&](size_t a, size_t b) {
    for (long k = n; k >= 0; --k)
      if (dist_value(sys.dist(orb[a][static_cast<size_t>(k)], orb[b][static_cast<size_t>(k)])) > delta) return true;
    return false;
  };
  std::vector<size_t> kept;
  if constexpr (std::is_same_v<P, TorusPoint>) {
    // non-separated pairs are within delta at time n: bucket by a grid of cell >= delta
    long G = static_cast<long>(std::floor(1.0 / delta));
    if (G >= 3 && !orb.empty()) {
      int dim = orb[0][0].dim;
      auto cell = [&](const TorusPoint& x, int k) {
        long c = static_cast<long>(std::floor(x[k] * static_cast<double>(G)));
        return ((c % G) + G) % G;
      };
      auto key = [&](const std::array<long, 3>& c) { return (c[0] * G + c[1]) * G + c[2]; };
      std::unordered_map<long, std::vector<size_t>> grid;
      for (size_t i = 0; i < orb.size(); ++i) {
        const TorusPoint& x = orb[i][static_cast<size_t>(n)];
        std::array<long, 3> base{0, 0, 0};
        for (int k = 0; k < dim; ++k) base[static_cast<size_t>(k)] = cell(x, k);
        bool ok = true;
        std::array<long, 3> off{0, 0, 0};
        int span0 = 1, span1 = dim > 1 ? 1 : 0, span2 = dim > 2 ? 1 : 0;
        for (off[0] = -span0; ok && off[0] <= span0; ++off[0])
          for (off[1] = -span1; ok && off[1] <= span1; ++off[1])
            for (off[2] = -span2; ok && off[2] <= span2; ++off[2]) {
              std::array<long, 3> c{0, 0, 0};
              for (int k = 0; k < dim; ++k) {
                auto u = static_cast<size_t>(k);
                c[u] = ((base[u] + off[u]) % G + G) % G;
              }
              auto it = grid.find(key(c));
              if (it == grid.end()) continue;
              for (size_t j : it->second)
                if (!separated(i, j)) {
                  ok = false;
                  break;
                }
            }
        if (ok) {
          kept.push_back(i);
          grid[key(base)].push_back(i);
        }
      }
      return kept;
    }
  }
  for (size_t i = 0; i < orb.size(); ++i) {
    bool ok = true;
    for (size_t j : kept)
      if (!separated(i, j)) {
        ok = false;
        break;
      }
    if (ok) kept.push_back(i);
  }
  return kept;
}

}  // namespace detail

/// Greedy maximal (n, delta)-separated subset of the pool; a lower bound on s(n, delta).
template <class S>
SeparatedSetResult<S> separated_set(const S& sys, long n, double delta, const std::vector<typename S::point>& pool,
                                    unsigned jobs = 0) {
  if (n < 0) throw std::invalid_argument("n must be non-negative");
  if (!(delta > 0)) throw std::invalid_argument("delta must be positive");
  auto orb = detail::orbits(sys, pool, n, jobs);
  SeparatedSetResult<S> out;
  out.n = n;
  out.delta = delta;
  for (size_t i : detail::greedy_separated(sys, orb, n, delta)) out.points.push_back(pool[i]);
  out.count = out.points.size();
  return out;
}

struct EntropyEstimate {
  double delta = 0;
  long n_max = 0;
  std::vector<size_t> counts;  // s(n, delta) for n = 0..n_max
  long fit_lo = 0, fit_hi = 0;
  double h = 0, intercept = 0, residual = 0;  // residual: RMS of the fit
};

/// Least-squares slope of log s(n, delta) over n in [ceil(n_max/2), n_max].
template <class S>
EntropyEstimate entropy_estimate(const S& sys, double delta, long n_max, const std::vector<typename S::point>& pool,
                                 unsigned jobs = 0) {
  if (n_max < 1) throw std::invalid_argument("n_max must be at least 1");
  if (pool.empty()) throw std::invalid_argument("pool is empty");
  auto orb = detail::orbits(sys, pool, n_max, jobs);
  EntropyEstimate out;
  out.delta = delta;
  out.n_max = n_max;
  for (long n = 0; n <= n_max; ++n) out.counts.push_back(detail::greedy_separated(sys, orb, n, delta).size());
  out.fit_lo = (n_max + 1) / 2;
  out.fit_hi = n_max;
  double m = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (long n = out.fit_lo; n <= out.fit_hi; ++n) {
    double x = static_cast<double>(n), y = std::log(static_cast<double>(out.counts[static_cast<size_t>(n)]));
    m += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double den = m * sxx - sx * sx;
  out.h = den == 0 ? 0 : (m * sxy - sx * sy) / den;
  out.intercept = (sy - out.h * sx) / m;
  double ss = 0;
  for (long n = out.fit_lo; n <= out.fit_hi; ++n) {
    double e = std::log(static_cast<double>(out.counts[static_cast<size_t>(n)])) - (out.intercept + out.h * static_cast<double>(n));
    ss += e * e;
  }
  out.residual = std::sqrt(ss / m);
  return out;
}

/// Additive-recurrence (plastic-number) sample of the strip
/// origin + s u + t v, s in [0, length], t in [-width/2, width/2];
/// `start` skips that many terms of the sequence.
inline std::vector<TorusPoint> strip_pool(std::array<double, 2> origin, std::array<double, 2> u, std::array<double, 2> v,
                                          double length, double width, size_t count, size_t start = 0) {
  const double a1 = 0.7548776662466927, a2 = 0.5698402909980532;  // plastic-number sequence
  std::vector<TorusPoint> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    double idx = static_cast<double>(start + i + 1);
    double s = std::fmod(0.5 + a1 * idx, 1.0) * length;
    double t = (std::fmod(0.5 + a2 * idx, 1.0) - 0.5) * width;
    out.push_back(TorusPoint{origin[0] + s * u[0] + t * v[0], origin[1] + s * u[1] + t * v[1]});
  }
  return out;
}

/// Same sequence on the whole torus T^2.
inline std::vector<TorusPoint> torus_pool(size_t count, size_t start = 0) {
  return strip_pool({0, 0.5}, {1, 0}, {0, 1}, 1.0, 1.0, count, start);
}

// ---------------------------------------------------------------------------
// Split tree on the shift

struct SplitParams {
  long m_small = 0;  // m_{delta/6}
  long k_box = 0;    // closed-form index of the F^u_{delta/6} boxes
  double alpha = 0;  // D < alpha implies diam < delta/6
  long M_min = 0;    // 2 m_{delta/6}
  long M = 0;        // least M >= M_min with 4 lambda^M / (1 - lambda^M) < alpha
};

/// Constants of the construction for delta <= eps on the shift.
inline SplitParams split_params(const Dyadic& delta, const MonotoneSchedule& sched, const FtConstants& k) {
  if (!(delta > Dyadic(0)) || delta > k.epsilon) throw std::invalid_argument("delta must lie in (0, eps]");
  SplitParams s;
  // grid index of delta/6: least n with n delta/6 >= eps
  long n = 1;
  while (Dyadic(n) * delta < Dyadic(6) * k.epsilon) ++n;
  s.m_small = sched.at_index(n);
  // least k with diam = eps 2^{1-k} <= delta/6
  while (Dyadic(6) * ldexp(k.epsilon, 1 - s.k_box) > delta) ++s.k_box;
  // D < alpha gives rho < 4 alpha = lambda^{2 m} and then diam < delta/6
  s.alpha = k.pow(2 * s.m_small) / 4.0;
  s.M_min = 2 * s.m_small;
  s.M = s.M_min;
  while (!(4.0 * k.pow(s.M) / (1.0 - k.pow(s.M)) < s.alpha)) ++s.M;
  return s;
}

struct SplitNode {
  int level = 0;
  std::string code;  // i_1 ... i_level
  HilbertPoint anchor;
  BoxContinuum box;
};

struct SplitTree {
  long M = 0;
  Dyadic delta;
  int depth = 0;
  std::vector<SplitNode> nodes;  // breadth-first, root first
  std::vector<HilbertPoint> leaves;  // f^{-depth M}(x_{i_1..i_depth}) in code order
  size_t pairs_checked = 0;
  bool separated = true;
  Dyadic min_witness;  // least witness gap over all pairs (coordinate difference)
  Dyadic max_chain_diam;
  bool chain_ok = true;
  bool hausdorff_ok = true;  // d_H of siblings >= delta/3
  double lower_bound_h = 0;  // log 2 / M
};

namespace detail {

/// Widest weighted coordinate of a box; lowest |i| wins ties, then negative i.
inline long long widest_coordinate(const BoxContinuum& b) {
  auto [lo, hi] = b.special_range();
  long long best = 0;
  Dyadic best_w(-1);
  auto better = [&](long long i, const Dyadic& w) {
    if (w > best_w) return true;
    if (w < best_w) return false;
    if (std::llabs(i) != std::llabs(best)) return std::llabs(i) < std::llabs(best);
    return i < best;
  };
  for (long long i = lo - 1; i <= hi + 1; ++i) {
    Dyadic w = b.at(i).length() * coord_weight(i);
    if (better(i, w)) {
      best = i;
      best_w = w;
    }
  }
  return best;
}

}  // namespace detail

/// Binary tree of F^u_{delta/6} boxes: each node's image under f^M is split at
/// two points delta apart; the leaves pulled back by depth*M form an
/// (depth*M, delta/3)-separated set, checked pair by pair.
inline SplitTree split_tree(const ShiftSystem& sys, const BoxContinuum& c0, const HilbertPoint& anchor, long M,
                            const Dyadic& delta, int depth, const MonotoneSchedule& sched, const FtConstants& k,
                            unsigned jobs = 0) {
  if (depth < 0) throw std::invalid_argument("depth must be non-negative");
  auto prm = split_params(delta, sched, k);
  if (M < prm.M_min) throw std::invalid_argument("M must be at least 2 m_{delta/6} = " + std::to_string(prm.M_min));
  const Dyadic three(3);
  if (Dyadic(6) * box_diam(c0) > delta) throw std::invalid_argument("root continuum must have diameter at most delta/6");
  if (!box_contains_point(c0, anchor)) throw std::invalid_argument("anchor must lie in the root continuum");

  SplitTree t;
  t.M = M;
  t.delta = delta;
  t.depth = depth;
  t.lower_bound_h = std::log(2.0) / static_cast<double>(M);
  t.nodes.push_back({0, "", anchor, c0});
  size_t level_begin = 0;
  for (int level = 1; level <= depth; ++level) {
    size_t level_end = t.nodes.size();
    for (size_t i = level_begin; i < level_end; ++i) {
      const SplitNode parent = t.nodes[i];
      BoxContinuum img = sys.advance(parent.box, M);
      if (sys.measure(img).lo < delta) throw SplitFailed(level);
      long long c = detail::widest_coordinate(img);
      Interval iv = img.at(c);
      Dyadic step = ldexp(iv.length(), -3);
      HilbertPoint base = parent.anchor.shifted(M);
      std::array<HilbertPoint, 2> split{base, base};
      split[0].set(c, iv.lo + step);
      split[1].set(c, iv.hi - step);
      if (!(sys.dist(split[0], split[1]) >= delta)) throw SplitFailed(level);
      std::array<BoxContinuum, 2> kids;
      for (int s = 0; s < 2; ++s) {
        if (!box_contains_point(img, split[static_cast<size_t>(s)])) throw SplitFailed(level);
        kids[static_cast<size_t>(s)] = shift_fu_closed_form(split[static_cast<size_t>(s)], prm.k_box, k.epsilon);
        t.nodes.push_back({level, parent.code + static_cast<char>('0' + s), split[static_cast<size_t>(s)],
                           kids[static_cast<size_t>(s)]});
      }
      if (three * hausdorff_box(kids[0], kids[1]) < delta) t.hausdorff_ok = false;
    }
    level_begin = level_end;
  }

  // leaves in code order: the last level occupies nodes[level_begin..]
  const long total = static_cast<long>(depth) * M;
  for (size_t i = level_begin; i < t.nodes.size(); ++i) t.leaves.push_back(t.nodes[i].anchor.shifted(-total));

  // pairwise separation: some time j <= depth*M and coordinate 0 with |gap| > delta/3
  const size_t L = t.leaves.size();
  std::vector<Dyadic> row_min(L, Dyadic(1));
  std::vector<char> row_ok(L, 1);
  parallel_for(L, resolve_jobs(jobs), [&](size_t a) {
    for (size_t b = a + 1; b < L; ++b) {
      Dyadic best(0);
      for (long j = 0; j <= total; ++j) {
        Dyadic g = t.leaves[a].at(j) - t.leaves[b].at(j);
        if (g.sign() < 0) g = -g;
        if (g > best) best = g;
        if (three * best > delta) break;
      }
      if (!(three * best > delta)) row_ok[a] = 0;
      if (best < row_min[a]) row_min[a] = best;
    }
  });
  t.pairs_checked = L * (L - 1) / 2;
  t.min_witness = Dyadic(1);
  for (size_t a = 0; a < L; ++a) {
    if (!row_ok[a]) t.separated = false;
    if (a + 1 < L && row_min[a] < t.min_witness) t.min_witness = row_min[a];
  }

  // chain bound: diam of U_{j=0}^{n-k} f^{-jM}(C_{i_1..i_{k+j}}) < delta/3 along every path
  std::vector<std::vector<size_t>> paths;  // node indices root..leaf
  {
    std::unordered_map<std::string, size_t> by_code;
    for (size_t i = 0; i < t.nodes.size(); ++i) by_code[t.nodes[i].code] = i;
    for (size_t i = level_begin; i < t.nodes.size(); ++i) {
      std::vector<size_t> path;
      const std::string& code = t.nodes[i].code;
      for (size_t l = 0; l <= code.size(); ++l) path.push_back(by_code.at(code.substr(0, l)));
      paths.push_back(std::move(path));
    }
  }
  std::vector<Dyadic> path_max(paths.size(), Dyadic(0));
  parallel_for(paths.size(), resolve_jobs(jobs), [&](size_t pi) {
    const auto& path = paths[pi];
    for (size_t kk = 1; kk < path.size(); ++kk) {
      std::vector<BoxContinuum> pulled;
      for (size_t j = 0; kk + j < path.size(); ++j)
        pulled.push_back(t.nodes[path[kk + j]].box.shifted(-static_cast<long long>(j) * M));
      std::vector<const BoxContinuum*> ptr;
      for (const auto& b : pulled) ptr.push_back(&b);
      Dyadic d = union_diam(ptr);
      if (d > path_max[pi]) path_max[pi] = d;
    }
  });
  t.max_chain_diam = Dyadic(0);
  for (const auto& d : path_max)
    if (d > t.max_chain_diam) t.max_chain_diam = d;
  t.chain_ok = three * t.max_chain_diam < delta;
  return t;
}

}  // namespace ftsens
