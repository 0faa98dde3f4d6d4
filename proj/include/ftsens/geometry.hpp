#pragma once

#include "ftsens/dyadic.hpp"
#include "ftsens/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <variant>
#include <vector>

namespace ftsens {

inline const Dyadic& half() {
  static const Dyadic h = Dyadic::pow2(-1);
  return h;
}

/// weight 2^{-|i|} of coordinate i in the Hilbert-cube metric
inline Dyadic coord_weight(long long i) { return Dyadic::pow2(-std::llabs(i)); }

/// Point of [0,1]^Z equal to `fill` outside a finite block of explicit values.
class HilbertPoint {
 public:
  HilbertPoint() : fill_(half()) {}
  explicit HilbertPoint(Dyadic fill) : fill_(std::move(fill)) { check(fill_); }
  HilbertPoint(Dyadic fill, long long lo, std::vector<Dyadic> vals)
      : fill_(std::move(fill)), lo_(lo), vals_(std::move(vals)) {
    check(fill_);
    for (const auto& v : vals_) check(v);
    trim();
  }

  const Dyadic& fill() const noexcept { return fill_; }
  /// explicit block is [lo(), hi()) ; empty when lo() == hi()
  long long lo() const noexcept { return lo_; }
  long long hi() const noexcept { return lo_ + static_cast<long long>(vals_.size()); }

  const Dyadic& at(long long i) const {
    if (i < lo_ || i >= hi()) return fill_;
    return vals_[static_cast<size_t>(i - lo_)];
  }

  void set(long long i, Dyadic v) {
    check(v);
    if (vals_.empty()) {
      lo_ = i;
      vals_.push_back(std::move(v));
    } else if (i < lo_) {
      vals_.insert(vals_.begin(), static_cast<size_t>(lo_ - i), fill_);
      lo_ = i;
      vals_[0] = std::move(v);
    } else if (i >= hi()) {
      vals_.resize(static_cast<size_t>(i - lo_ + 1), fill_);
      vals_.back() = std::move(v);
    } else {
      vals_[static_cast<size_t>(i - lo_)] = std::move(v);
    }
    trim();
  }

  /// sigma^n: coordinate i of the result is coordinate i+n of this point
  HilbertPoint shifted(long long n) const {
    HilbertPoint r = *this;
    r.lo_ -= n;
    return r;
  }

  friend bool operator==(const HilbertPoint& a, const HilbertPoint& b) {
    if (a.fill_ != b.fill_) return false;
    long long l = std::min(a.lo(), b.lo()), h = std::max(a.hi(), b.hi());
    for (long long i = l; i < h; ++i)
      if (a.at(i) != b.at(i)) return false;
    return true;
  }

 private:
  static void check(const Dyadic& v) {
    if (v < Dyadic(0) || v > Dyadic(1)) throw std::invalid_argument("coordinate outside [0,1]");
  }
  void trim() {
    size_t b = 0;
    while (b < vals_.size() && vals_[b] == fill_) ++b;
    size_t e = vals_.size();
    while (e > b && vals_[e - 1] == fill_) --e;
    if (b == e) {
      vals_.clear();
      lo_ = 0;
      return;
    }
    vals_ = std::vector<Dyadic>(vals_.begin() + static_cast<long>(b), vals_.begin() + static_cast<long>(e));
    lo_ += static_cast<long long>(b);
  }

  Dyadic fill_;
  long long lo_ = 0;
  std::vector<Dyadic> vals_;
};

/// Exact weighted sup-distance. Outside the union of explicit blocks the
/// coordinate difference is constant, so the nearest such indices dominate.
inline Dyadic hilbert_dist(const HilbertPoint& x, const HilbertPoint& y) {
  long long l = std::min({x.lo(), y.lo(), 0LL}) - 1;
  long long h = std::max({x.hi(), y.hi(), 1LL});
  Dyadic best;
  for (long long i = l; i <= h; ++i) {
    Dyadic v = ldexp(abs(x.at(i) - y.at(i)), -std::llabs(i));
    if (v > best) best = std::move(v);
  }
  return best;
}

struct Interval {
  Dyadic lo, hi;
  Dyadic length() const { return hi - lo; }
  bool contains(const Dyadic& v) const { return lo <= v && v <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Closed interval [c - r, c + r] intersected with [0,1].
inline Interval clipped(const Dyadic& c, const Dyadic& r) {
  static const Dyadic zero(0), one(1);
  return {max(zero, c - r), min(one, c + r)};
}

inline Dyadic hausdorff_interval(const Interval& a, const Interval& b) {
  return max(abs(a.lo - b.lo), abs(a.hi - b.hi));
}

struct WeightedInterval {
  long long index;
  Interval iv;
  Dyadic weight() const { return coord_weight(index); }
};

/// Tail rules: what a box looks like at every index outside its explicit window.
struct PointTail {
  Dyadic value;
};
struct FullTail {};
/// interval at i: center_i +- radius * 2^{e(i)}, e(i) = slope_right*(i+offset)
/// when i+offset >= 0 and slope_left*(i+offset) otherwise.
struct FormulaTail {
  HilbertPoint center;
  Dyadic radius;
  long long offset = 0;
  int slope_right = 1;
  int slope_left = 1;
};
using TailRule = std::variant<PointTail, FullTail, FormulaTail>;

/// Asymptotic shape of a box beyond one edge of its special range: either a
/// fixed interval, or v +- r0 * 2^{-t} (never clipped) at distance t >= 1.
struct SideProfile {
  bool shrinking = false;
  Interval constant;
  Dyadic v, r0;
};

class BoxContinuum {
 public:
  explicit BoxContinuum(TailRule tail = PointTail{half()}) : tail_(std::move(tail)) {}

  /// Box x_i +- radius * 2^{|i + offset|}; with offset j this is sigma^j of the ball B(sigma^{-j} x, radius).
  static BoxContinuum ball_like(HilbertPoint center, Dyadic radius, long long offset) {
    return BoxContinuum(FormulaTail{std::move(center), std::move(radius), offset, 1, -1});
  }
  /// Box x_i +- radius * 2^{i + offset}.
  static BoxContinuum unstable_like(HilbertPoint center, Dyadic radius, long long offset = 0) {
    return BoxContinuum(FormulaTail{std::move(center), std::move(radius), offset, 1, 1});
  }
  /// Box x_i +- radius at every coordinate.
  static BoxContinuum uniform(HilbertPoint center, Dyadic radius) {
    return BoxContinuum(FormulaTail{std::move(center), std::move(radius), 0, 0, 0});
  }
  static BoxContinuum singleton(const HilbertPoint& x) {
    BoxContinuum b(PointTail{x.fill()});
    for (long long i = x.lo(); i < x.hi(); ++i) b.set(i, {x.at(i), x.at(i)});
    return b;
  }

  const TailRule& tail() const noexcept { return tail_; }
  const std::map<long long, Interval>& window() const noexcept { return window_; }

  void set(long long i, Interval iv) {
    if (iv.lo > iv.hi || iv.lo < Dyadic(0) || iv.hi > Dyadic(1))
      throw std::invalid_argument("coordinate interval must satisfy 0 <= lo <= hi <= 1");
    window_[i] = std::move(iv);
  }

  Interval tail_at(long long i) const {
    if (auto* p = std::get_if<PointTail>(&tail_)) return {p->value, p->value};
    if (std::holds_alternative<FullTail>(tail_)) return {Dyadic(0), Dyadic(1)};
    const auto& f = std::get<FormulaTail>(tail_);
    long long u = i + f.offset;
    long long e = u >= 0 ? f.slope_right * u : f.slope_left * u;
    return clipped(f.center.at(i), ldexp(f.radius, e));
  }

  Interval at(long long i) const {
    auto it = window_.find(i);
    return it != window_.end() ? it->second : tail_at(i);
  }

  /// sigma^n of the box
  BoxContinuum shifted(long long n) const {
    BoxContinuum r(tail_);
    if (auto* f = std::get_if<FormulaTail>(&r.tail_)) {
      f->center = f->center.shifted(n);
      f->offset += n;
    }
    for (const auto& [i, iv] : window_) r.window_.emplace(i - n, iv);
    return r;
  }

  /// explicit coordinates for |i| <= W
  std::vector<WeightedInterval> materialize(long long W) const {
    std::vector<WeightedInterval> out;
    for (long long i = -W; i <= W; ++i) out.push_back({i, at(i)});
    return out;
  }

  /// Smallest index range [lo, hi] outside of which the box follows its side
  /// profiles (see SideProfile).
  std::pair<long long, long long> special_range() const {
    long long lo = 0, hi = 0;
    if (!window_.empty()) {
      lo = std::min(lo, window_.begin()->first);
      hi = std::max(hi, window_.rbegin()->first);
    }
    if (auto* f = std::get_if<FormulaTail>(&tail_)) {
      if (f->center.hi() > f->center.lo()) {
        lo = std::min(lo, f->center.lo());
        hi = std::max(hi, f->center.hi() - 1);
      }
      lo = std::min(lo, -f->offset);
      hi = std::max(hi, -f->offset);
      if (!f->radius.is_zero()) {
        const Dyadic& v = f->center.fill();
        // growing sides: extend until the radius reaches 1 (interval saturates to [0,1]);
        // shrinking sides: extend until the radius is below the distance from v to {0,1}.
        long long lr = f->radius.floor_log2();
        long long sat = -lr;  // radius * 2^u >= 1 once u >= sat
        long long unclip = unclip_exponent(v) - lr - 1;  // radius * 2^u below the gap once u <= unclip
        auto grow_to = [&](long long u_needed, int dir) {
          // right side: u = i + offset, left side: u = -(i + offset)
          long long i = dir > 0 ? u_needed - f->offset : -u_needed - f->offset;
          if (dir > 0) hi = std::max(hi, i);
          else lo = std::min(lo, i);
        };
        if (f->slope_right > 0) grow_to(sat, +1);
        if (f->slope_right < 0) grow_to(-unclip, +1);
        if (f->slope_left < 0) grow_to(sat, -1);
        if (f->slope_left > 0) grow_to(-unclip, -1);
      }
    }
    return {lo, hi};
  }

  /// Profile valid strictly beyond `edge` on side dir (+1 right, -1 left);
  /// `edge` must be at or past the corresponding end of special_range().
  SideProfile profile(int dir, long long edge) const {
    SideProfile p;
    long long first = edge + dir;
    Interval iv = tail_at(first);
    if (auto* f = std::get_if<FormulaTail>(&tail_)) {
      int slope = dir > 0 ? f->slope_right : -f->slope_left;  // growth rate of the exponent moving outward
      bool saturated = iv.lo == Dyadic(0) && iv.hi == Dyadic(1);
      if (slope < 0 && !f->radius.is_zero() && !saturated) {
        p.shrinking = true;
        p.v = f->center.fill();
        long long u = first + f->offset;
        long long e = u >= 0 ? f->slope_right * u : f->slope_left * u;
        p.r0 = ldexp(f->radius, e);
        return p;
      }
    }
    p.constant = iv;
    return p;
  }

 private:
  // floor(log2(min positive of {v, 1 - v})) or 0 when v is 0 or 1
  static long long unclip_exponent(const Dyadic& v) {
    Dyadic g = min(v, Dyadic(1) - v);
    if (g.is_zero()) return 0;
    return g.floor_log2();
  }

  std::map<long long, Interval> window_;
  TailRule tail_;
};

namespace detail {

/// sup over all i of value(i) * 2^{-|i|} where value depends on the coordinate
/// intervals of `boxes`. `kernel` maps the intervals at one index to a Dyadic.
/// Exact when the tails are eventually monotone; otherwise the range is widened
/// until the tail bound 2^{-E} falls below the running maximum.
template <class Kernel>
Dyadic weighted_sup(const std::vector<const BoxContinuum*>& boxes, Kernel kernel) {
  long long lo = 0, hi = 0;
  for (auto* b : boxes) {
    auto [l, h] = b->special_range();
    lo = std::min(lo, l);
    hi = std::max(hi, h);
  }
  auto monotone_side = [&](int dir, long long edge) {
    // all constant, or every shrinking profile shares v and every constant is the point {v}
    bool any_shrink = false;
    std::optional<Dyadic> v;
    for (auto* b : boxes) {
      SideProfile p = b->profile(dir, edge);
      if (p.shrinking) {
        any_shrink = true;
        if (v && *v != p.v) return false;
        v = p.v;
      }
    }
    if (!any_shrink) return true;
    for (auto* b : boxes) {
      SideProfile p = b->profile(dir, edge);
      if (!p.shrinking && !(p.constant.lo == *v && p.constant.hi == *v)) return false;
    }
    return true;
  };
  std::vector<Interval> ivs(boxes.size());
  auto eval = [&](long long i) {
    for (size_t k = 0; k < boxes.size(); ++k) ivs[k] = boxes[k]->at(i);
    return ldexp(kernel(ivs), -std::llabs(i));
  };
  Dyadic best;
  for (long long i = lo - 1; i <= hi + 1; ++i) {
    Dyadic v = eval(i);
    if (v > best) best = std::move(v);
  }
  // beyond hi+1 / lo-1 the monotone sides cannot exceed what was seen
  bool right_ok = monotone_side(+1, hi), left_ok = monotone_side(-1, lo);
  long long r = hi + 1, l = lo - 1;
  constexpr long long cap = 1 << 14;
  while (!(right_ok && left_ok)) {
    long long E = std::min(right_ok ? cap : r, left_ok ? cap : -l);
    if (best > Dyadic::pow2(-E - 1)) break;
    if (E >= cap) throw PrecisionEscalation("tail comparison not decided within 2^-" + std::to_string(cap));
    long long step = std::max<long long>(64, E);
    if (!right_ok) {
      for (long long i = r + 1; i <= r + step; ++i) {
        Dyadic v = eval(i);
        if (v > best) best = std::move(v);
      }
      r += step;
    }
    if (!left_ok) {
      for (long long i = l - 1; i >= l - step; --i) {
        Dyadic v = eval(i);
        if (v > best) best = std::move(v);
      }
      l -= step;
    }
  }
  return best;
}

/// Exact universal check over all coordinates of a pairwise predicate, using
/// side profiles to settle the infinitely many coordinates beyond the range.
template <class Pred, class Beyond>
bool all_coords(const BoxContinuum& a, const BoxContinuum& b, Pred pred, Beyond beyond) {
  auto [la, ha] = a.special_range();
  auto [lb, hb] = b.special_range();
  long long lo = std::min(la, lb), hi = std::max(ha, hb);
  for (long long i = lo - 1; i <= hi + 1; ++i)
    if (!pred(a.at(i), b.at(i))) return false;
  return beyond(a.profile(+1, hi), b.profile(+1, hi)) && beyond(a.profile(-1, lo), b.profile(-1, lo));
}

}  // namespace detail

/// Exact weighted sup of coordinate lengths.
inline Dyadic box_diam(const BoxContinuum& c) {
  return detail::weighted_sup({&c}, [](const std::vector<Interval>& iv) { return iv[0].length(); });
}

/// Exact Hausdorff distance of two boxes: sup_i d_H(I_i, J_i) 2^{-|i|}.
inline Dyadic hausdorff_box(const BoxContinuum& a, const BoxContinuum& b) {
  return detail::weighted_sup({&a, &b}, [](const std::vector<Interval>& iv) {
    return hausdorff_interval(iv[0], iv[1]);
  });
}

/// Exact diameter of a finite union of boxes; equals the diameter of the
/// coordinatewise hull because the metric is a weighted sup.
inline Dyadic union_diam(const std::vector<const BoxContinuum*>& boxes) {
  if (boxes.empty()) return Dyadic(0);
  return detail::weighted_sup(boxes, [](const std::vector<Interval>& iv) {
    Dyadic lo = iv[0].lo, hi = iv[0].hi;
    for (const auto& v : iv) {
      if (v.lo < lo) lo = v.lo;
      if (v.hi > hi) hi = v.hi;
    }
    return hi - lo;
  });
}

inline bool boxes_intersect(const BoxContinuum& a, const BoxContinuum& b) {
  return detail::all_coords(
      a, b, [](const Interval& x, const Interval& y) { return x.overlaps(y); },
      [](const SideProfile& p, const SideProfile& q) {
        if (!p.shrinking && !q.shrinking) return p.constant.overlaps(q.constant);
        if (p.shrinking && q.shrinking) return p.v == q.v;
        const SideProfile& s = p.shrinking ? p : q;
        const SideProfile& c = p.shrinking ? q : p;
        return c.constant.contains(s.v);
      });
}

/// a is a subset of b
inline bool box_contains(const BoxContinuum& b, const BoxContinuum& a) {
  return detail::all_coords(
      a, b, [](const Interval& x, const Interval& y) { return y.contains(x); },
      [](const SideProfile& p, const SideProfile& q) {
        if (!p.shrinking && !q.shrinking) return q.constant.contains(p.constant);
        if (p.shrinking && q.shrinking) return p.v == q.v && p.r0 <= q.r0;
        if (p.shrinking) return q.constant.contains(clipped(p.v, p.r0));
        return p.constant.lo == q.v && p.constant.hi == q.v;
      });
}

inline bool box_contains_point(const BoxContinuum& b, const HilbertPoint& x) {
  return box_contains(b, BoxContinuum::singleton(x));
}

// ---------------------------------------------------------------------------
// Torus

/// Point of the torus T^d (d in 1..3), coordinates reduced to [0,1).
struct TorusPoint {
  std::array<double, 3> c{0, 0, 0};
  int dim = 2;

  TorusPoint() = default;
  TorusPoint(std::initializer_list<double> xs) : dim(static_cast<int>(xs.size())) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("torus dimension must be 1, 2 or 3");
    int k = 0;
    for (double x : xs) c[static_cast<size_t>(k++)] = x;
    reduce();
  }
  double operator[](int k) const { return c[static_cast<size_t>(k)]; }
  double& operator[](int k) { return c[static_cast<size_t>(k)]; }
  void reduce() {
    for (int k = 0; k < dim; ++k) {
      double& x = c[static_cast<size_t>(k)];
      x -= std::floor(x);
      if (x >= 1.0) x = 0.0;
    }
  }
};

/// |a - b| on the circle R/Z
inline double circle_dist(double a, double b) {
  double d = std::fabs(a - b);
  d -= std::floor(d);
  return std::min(d, 1.0 - d);
}

/// sup metric on T^d; diameter of the torus is 1/2
inline double torus_dist(const TorusPoint& a, const TorusPoint& b) {
  double m = 0;
  for (int k = 0; k < a.dim; ++k) m = std::max(m, circle_dist(a[k], b[k]));
  return m;
}

/// Hausdorff distance between finite point clouds under `dist`. The caller
/// adds the clouds' dispersion bounds to get a bound for the sampled sets.
template <class P, class Dist>
double cloud_hausdorff(const std::vector<P>& a, const std::vector<P>& b, Dist dist) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empty point cloud");
  auto one_sided = [&](const std::vector<P>& x, const std::vector<P>& y) {
    double worst = 0;
    for (const auto& p : x) {
      double near = INFINITY;
      for (const auto& q : y) near = std::min(near, dist(p, q));
      worst = std::max(worst, near);
    }
    return worst;
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

}  // namespace ftsens
