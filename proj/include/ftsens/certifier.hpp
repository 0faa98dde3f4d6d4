#pragma once

#include "ftsens/firsttime.hpp"
#include "ftsens/parallel.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ftsens {

// ---------------------------------------------------------------------------
// Shift constants

/// k with eps/2^{k+1} <= gamma < eps/2^k; -1 when gamma == eps.
inline long shift_k_gamma(const Dyadic& gamma, const Dyadic& eps) {
  if (!(gamma > Dyadic(0)) || gamma > eps) throw std::invalid_argument("gamma must lie in (0, eps]");
  long k = -1;
  while (gamma < ldexp(eps, -(k + 1))) ++k;
  return k;
}

/// k for gamma = eps/n (n >= 1): 2^k < n <= 2^{k+1}.
inline long shift_k_grid(long n) {
  if (n < 1) throw std::invalid_argument("grid index must be positive");
  long k = -1;
  while ((1L << (k + 1)) < n) ++k;
  return k;
}

/// F1/F2 bound of the shift at gamma: k_gamma + 2, and 2 at gamma = eps.
inline long shift_raw_m(long k_gamma) { return std::max(k_gamma + 2, 2L); }

// ---------------------------------------------------------------------------
// Monotone schedule

/// m_n for gamma in [eps/n, eps/(n-1)), n >= 1; m_1 is the head of the recursion.
struct MonotoneSchedule {
  std::map<long, long> by_index;

  long at_index(long n) const {
    auto it = by_index.find(n);
    if (it == by_index.end()) throw std::out_of_range("schedule not computed at index " + std::to_string(n));
    return it->second;
  }
  /// index n = ceil(eps / gamma)
  static long index_of(double gamma_over_eps) {
    if (!(gamma_over_eps > 0) || gamma_over_eps > 1) throw std::invalid_argument("gamma must lie in (0, eps]");
    double q = 1.0 / gamma_over_eps;
    long n = static_cast<long>(std::ceil(q - 1e-12));
    return std::max(n, 1L);
  }
  static long index_of(const Dyadic& gamma, const Dyadic& eps) {
    if (!(gamma > Dyadic(0)) || gamma > eps) throw std::invalid_argument("gamma must lie in (0, eps]");
    long n = 1;
    while (Dyadic(n) * gamma < eps) ++n;
    return n;
  }
  long for_gamma(const Dyadic& gamma, const Dyadic& eps) const { return at_index(index_of(gamma, eps)); }
  long for_gamma(double gamma, double eps) const { return at_index(index_of(gamma / eps)); }
};

/// raw maps n (gamma = eps/n, n >= 2, contiguous) to m'.
/// m_1 = 3 m'_{eps/2}; m_n = max(3 m'_{eps/n}, m_{n-1} + 1).
inline MonotoneSchedule monotone_mgamma(const std::map<long, long>& raw) {
  MonotoneSchedule out;
  if (raw.empty()) return out;
  if (raw.begin()->first != 2) throw std::invalid_argument("raw grid must start at eps/2");
  long expect = 2;
  for (const auto& [n, m] : raw) {
    if (n != expect++) throw std::invalid_argument("raw grid must be contiguous");
    if (m < 0) throw std::invalid_argument("raw constants must be non-negative");
  }
  long prev = 3 * raw.at(2);
  out.by_index[1] = prev;
  for (const auto& [n, m] : raw) {
    prev = std::max(3 * m, prev + 1);
    out.by_index[n] = prev;
  }
  return out;
}

/// Shift schedule on the grid eps/n for n = 2..n_max.
inline MonotoneSchedule shift_schedule(long n_max) {
  std::map<long, long> raw;
  for (long n = 2; n <= n_max; ++n) raw[n] = shift_raw_m(shift_k_grid(n));
  return monotone_mgamma(raw);
}

// ---------------------------------------------------------------------------
// Certification

enum class DiffKind { F1, F2 };
inline const char* to_string(DiffKind k) { return k == DiffKind::F1 ? "F1" : "F2"; }

struct DiffRow {
  size_t sample;
  long k;  // schedule index (1-based)
  size_t gamma_index;
  DiffKind kind;
  long value;
};

template <class T>
struct GammaCert {
  T gamma{};
  std::vector<long> f1, f2;
  long observed_m = 0;
  std::optional<long> k_gamma;  // shift only
  double f1_slope = 0, f2_slope = 0;
  bool f1_growing = false, f2_growing = false;
};

enum class Verdict { CertifiedAtScale, ViolationSuspected };
inline const char* to_string(Verdict v) {
  return v == Verdict::CertifiedAtScale ? "certified-at-scale" : "violation-suspected";
}

template <class T>
struct CertReport {
  std::string system;
  T epsilon{};
  std::vector<T> schedule;
  std::vector<GammaCert<T>> per_gamma;
  std::vector<DiffRow> rows;
  int trend_window = 5;
  Verdict verdict = Verdict::CertifiedAtScale;
  std::vector<std::string> flags;  // which (sample, gamma, kind) sequences grew
};

/// least-squares slope of v against 0..n-1
inline double ls_slope(const std::vector<long>& v) {
  if (v.size() < 2) return 0;
  double n = static_cast<double>(v.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    double x = static_cast<double>(i), y = static_cast<double>(v[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double den = n * sxx - sx * sx;
  return den == 0 ? 0 : (n * sxy - sx * sy) / den;
}

/// true when the last `window` increments are all positive
inline bool growing_tail(const std::vector<long>& v, int window) {
  if (static_cast<long>(v.size()) < window + 1) return false;
  for (size_t i = v.size() - static_cast<size_t>(window); i < v.size(); ++i)
    if (v[i] <= v[i - 1]) return false;
  return true;
}

template <class S>
struct CertifyOptions {
  long budget = 100000;
  int trend_window = 5;
  unsigned jobs = 0;
};

/// F1/F2 differences along the schedule for every sample and gamma, keeping
/// only k with r_k <= gamma. The growth test is a statistical surrogate for
/// a refutation of (F1)/(F2).
template <class S>
CertReport<typename S::scalar> certify(const S& sys, const std::vector<typename S::point>& samples,
                                       const std::vector<typename S::scalar>& schedule,
                                       const std::vector<typename S::scalar>& gammas,
                                       const typename S::scalar& epsilon, CertifyOptions<S> opt = {}) {
  using T = typename S::scalar;
  if (samples.empty()) throw std::invalid_argument("sample list is empty");
  if (schedule.empty()) throw std::invalid_argument("schedule is empty");
  for (size_t k = 1; k < schedule.size(); ++k)
    if (!(schedule[k] < schedule[k - 1])) throw std::invalid_argument("schedule must be strictly decreasing");
  for (const auto& g : gammas)
    if (!(g > T(0)) || g > epsilon) throw std::invalid_argument("gamma must lie in (0, eps]");

  CertReport<T> rep;
  rep.system = sys.id();
  rep.epsilon = epsilon;
  rep.schedule = schedule;
  rep.trend_window = opt.trend_window;
  rep.per_gamma.resize(gammas.size());
  for (size_t g = 0; g < gammas.size(); ++g) {
    rep.per_gamma[g].gamma = gammas[g];
    if constexpr (std::is_same_v<S, ShiftSystem>) rep.per_gamma[g].k_gamma = shift_k_gamma(gammas[g], epsilon);
  }

  std::vector<T> thresholds = gammas;
  thresholds.push_back(epsilon);
  // n1[sample][k][t]
  std::vector<std::vector<std::vector<long>>> n1(samples.size());
  parallel_for(samples.size(), resolve_jobs(opt.jobs), [&](size_t s) {
    n1[s].resize(schedule.size());
    for (size_t k = 0; k < schedule.size(); ++k) {
      try {
        n1[s][k] = first_increase_many(sys, samples[s], schedule[k], thresholds, opt.budget);
      } catch (const NotIncreasedWithinBudget& e) {
        std::string which = "epsilon";
        for (size_t t = 0; t < gammas.size(); ++t) {
          try {
            first_increase(sys, samples[s], schedule[k], gammas[t], opt.budget);
          } catch (const NotIncreasedWithinBudget&) {
            which = "gamma index " + std::to_string(t);
            break;
          }
        }
        throw NotIncreasedWithinBudget(e.budget(), "sample " + std::to_string(s) + ", schedule index " +
                                                       std::to_string(k + 1) + ", " + which);
      }
    }
  });

  const size_t eps_t = gammas.size();
  for (size_t s = 0; s < samples.size(); ++s)
    for (size_t g = 0; g < gammas.size(); ++g) {
      auto& gc = rep.per_gamma[g];
      std::vector<long> f1_seq, f2_seq;
      for (size_t k = 0; k < schedule.size(); ++k) {
        if (schedule[k] > gammas[g]) continue;
        long f2 = std::labs(n1[s][k][g] - n1[s][k][eps_t]);
        f2_seq.push_back(f2);
        rep.rows.push_back({s, static_cast<long>(k + 1), g, DiffKind::F2, f2});
        if (k + 1 < schedule.size()) {
          long f1 = std::labs(n1[s][k + 1][g] - n1[s][k][g]);
          f1_seq.push_back(f1);
          rep.rows.push_back({s, static_cast<long>(k + 1), g, DiffKind::F1, f1});
        }
      }
      gc.f1.insert(gc.f1.end(), f1_seq.begin(), f1_seq.end());
      gc.f2.insert(gc.f2.end(), f2_seq.begin(), f2_seq.end());
      for (long v : f1_seq) gc.observed_m = std::max(gc.observed_m, v);
      for (long v : f2_seq) gc.observed_m = std::max(gc.observed_m, v);
      gc.f1_slope = std::max(gc.f1_slope, ls_slope(f1_seq));
      gc.f2_slope = std::max(gc.f2_slope, ls_slope(f2_seq));
      bool g1 = growing_tail(f1_seq, opt.trend_window), g2 = growing_tail(f2_seq, opt.trend_window);
      gc.f1_growing = gc.f1_growing || g1;
      gc.f2_growing = gc.f2_growing || g2;
      if (g1 || g2) {
        rep.verdict = Verdict::ViolationSuspected;
        rep.flags.push_back("sample " + std::to_string(s) + " gamma " + std::to_string(g) + (g1 ? " F1" : "") +
                            (g2 ? " F2" : ""));
      }
    }
  return rep;
}

/// Geometric schedule r_1 * 2^{1-k}, k = 1..count.
template <class T>
std::vector<T> geometric_schedule(const T& r1, int count) {
  std::vector<T> out;
  T r = r1;
  for (int k = 0; k < count; ++k) {
    out.push_back(r);
    r = halve(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Syndetic increase

template <class T>
struct IncreasingTimeSet {
  T threshold{};
  long horizon = 0;
  std::vector<long> hits;
  long max_gap = 0;
};

/// S = {n <= horizon : diam f^n(C) >= c}; max_gap over {0} u S u {horizon}.
template <class S>
IncreasingTimeSet<typename S::scalar> syndetic_gaps(const S& sys, const typename S::image& c,
                                                    const typename S::scalar& threshold, long horizon) {
  if (horizon < 0) throw std::invalid_argument("horizon must be non-negative");
  IncreasingTimeSet<typename S::scalar> out;
  out.threshold = threshold;
  out.horizon = horizon;
  auto img = c;
  for (long n = 0; n <= horizon; ++n) {
    if (!(sys.measure(img).lo < threshold)) out.hits.push_back(n);
    if (n < horizon) img = sys.advance(img, 1);
  }
  long prev = 0;
  for (long h : out.hits) {
    out.max_gap = std::max(out.max_gap, h - prev);
    prev = h;
  }
  out.max_gap = std::max(out.max_gap, horizon - prev);
  return out;
}

}  // namespace ftsens
