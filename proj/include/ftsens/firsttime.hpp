#pragma once

#include "ftsens/systems.hpp"

#include <string>
#include <vector>

namespace ftsens {

inline Dyadic halve(const Dyadic& x) { return ldexp(x, -1); }
inline double halve(double x) { return 0.5 * x; }
inline double as_double(const Dyadic& x) { return x.to_double(); }
inline double as_double(double x) { return x; }

template <class T>
struct TraceEntry {
  long j;
  Bound<T> diam;
};

/// n1 = least j with diam f^j(B) > threshold; diam f^j(B) <= threshold for j < n1.
template <class S>
struct FirstTimeRecord {
  using scalar = typename S::scalar;
  std::string system;
  typename S::point x{};
  scalar r{}, threshold{};
  long n1 = 0;
  std::vector<TraceEntry<scalar>> trace;
  long budget_used = 0;
  int escalations = 0;
  bool tie_unresolved = false;  // sampled paths: bounds still straddled after refinement
};

namespace detail {

template <class S>
int refinements_of(const S& sys) {
  if constexpr (requires { sys.max_refinements; }) return sys.max_refinements;
  else return 0;
}

/// Drives the set forward until its diameter exceeds the threshold.
template <class S>
void run_first_increase(const S& sys, typename S::image img, const typename S::scalar& threshold, long budget,
                        FirstTimeRecord<S>& rec) {
  if (budget < 1) throw std::invalid_argument("budget must be at least 1");
  for (long j = 0; j <= budget; ++j) {
    auto b = sys.measure(img);
    Cmp c = compare(b, threshold);
    // the refinement budget covers the whole run: refined sets are kept for later steps
    while (c == Cmp::Undecided && rec.escalations < refinements_of(sys)) {
      img = sys.refine(img);
      b = sys.measure(img);
      c = compare(b, threshold);
      ++rec.escalations;
    }
    if (c == Cmp::Undecided) {
      rec.tie_unresolved = true;
      c = b.lo > threshold ? Cmp::Above : Cmp::NotAbove;
    }
    rec.trace.push_back({j, b});
    rec.budget_used = j;
    if (c == Cmp::Above) {
      rec.n1 = j;
      return;
    }
    if (j < budget) img = sys.advance(img, 1);
  }
  throw NotIncreasedWithinBudget(budget);
}

}  // namespace detail

template <class S>
FirstTimeRecord<S> first_increase(const S& sys, const typename S::point& x, const typename S::scalar& r,
                                  const typename S::scalar& threshold, long budget) {
  FirstTimeRecord<S> rec;
  rec.system = sys.id();
  rec.x = x;
  rec.r = r;
  rec.threshold = threshold;
  detail::run_first_increase(sys, sys.ball_image(x, r, 0), threshold, budget, rec);
  return rec;
}

/// n1 of an arbitrary set; x and r of the record stay default.
template <class S>
FirstTimeRecord<S> continuum_first_increase(const S& sys, const typename S::image& c,
                                            const typename S::scalar& threshold, long budget) {
  FirstTimeRecord<S> rec;
  rec.system = sys.id();
  rec.threshold = threshold;
  detail::run_first_increase(sys, c, threshold, budget, rec);
  return rec;
}

/// n1 for several thresholds from a single forward run; out[t] matches
/// first_increase(sys, x, r, thresholds[t], budget).n1.
template <class S>
std::vector<long> first_increase_many(const S& sys, const typename S::point& x, const typename S::scalar& r,
                                      const std::vector<typename S::scalar>& thresholds, long budget) {
  if (budget < 1) throw std::invalid_argument("budget must be at least 1");
  std::vector<long> out(thresholds.size(), -1);
  size_t open = thresholds.size();
  int escalations = 0;
  auto img = sys.ball_image(x, r, 0);
  for (long j = 0; j <= budget && open > 0; ++j) {
    auto b = sys.measure(img);
    for (size_t t = 0; t < thresholds.size(); ++t) {
      if (out[t] >= 0) continue;
      Cmp c = compare(b, thresholds[t]);
      while (c == Cmp::Undecided && escalations < detail::refinements_of(sys)) {
        ++escalations;
        img = sys.refine(img);
        b = sys.measure(img);
        c = compare(b, thresholds[t]);
      }
      if (c == Cmp::Undecided) c = b.lo > thresholds[t] ? Cmp::Above : Cmp::NotAbove;
      if (c == Cmp::Above) {
        out[t] = j;
        --open;
      }
    }
    if (open > 0 && j < budget) img = sys.advance(img, 1);
  }
  if (open > 0) throw NotIncreasedWithinBudget(budget);
  return out;
}

/// Sample maximum of n1(x, r, threshold).
template <class S>
long uniform_bound(const S& sys, const typename S::scalar& r, const std::vector<typename S::point>& sample,
                   const typename S::scalar& threshold, long budget) {
  if (sample.empty()) throw std::invalid_argument("sample must be nonempty");
  long N = 0;
  for (const auto& x : sample) N = std::max(N, first_increase(sys, x, r, threshold, budget).n1);
  return N;
}

/// Next radius of the refining sequence: r < r_k with diam f^{n}(B(x, r)) within
/// tol of epsilon (from below), n = n1(x, r_k, epsilon). Then n1(x, r, epsilon) > n.
template <class S>
typename S::scalar refine_radius(const S& sys, const typename S::point& x, const typename S::scalar& r_k,
                                 const typename S::scalar& epsilon, const typename S::scalar& tol,
                                 long budget = 100000, int max_iter = 200) {
  using T = typename S::scalar;
  long n = first_increase(sys, x, r_k, epsilon, budget).n1;
  auto diam_at = [&](const T& r) { return sys.measure(sys.ball_image(x, r, n)); };
  T lo = T(0), hi = r_k;
  Bound<T> dlo{T(0), T(0)};
  T prev_hi_lo = diam_at(hi).lo;
  for (int it = 0; it < max_iter; ++it) {
    T mid = halve(lo + hi);
    auto d = diam_at(mid);
    if (d.lo > prev_hi_lo || d.lo < dlo.lo) throw BisectionStalled("diameter is not monotone in the radius");
    if (compare(d, epsilon) == Cmp::Above) {
      hi = mid;
      prev_hi_lo = d.lo;
    } else {
      lo = mid;
      dlo = d;
    }
    if (!(lo == T(0)) && !(dlo.lo < epsilon - tol)) return lo;
  }
  throw BisectionStalled("radius bisection did not reach the tolerance");
}

}  // namespace ftsens
