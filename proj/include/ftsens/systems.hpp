#pragma once

#include "ftsens/geometry.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

namespace ftsens {

/// Lower/upper bound on a diameter; lo == hi on exact paths.
template <class T>
struct Bound {
  T lo, hi;
  bool exact() const { return lo == hi; }
};

enum class Cmp { Above, NotAbove, Undecided };

template <class T>
Cmp compare(const Bound<T>& b, const T& threshold) {
  if (b.lo > threshold) return Cmp::Above;
  if (!(b.hi > threshold)) return Cmp::NotAbove;
  return Cmp::Undecided;
}

// ---------------------------------------------------------------------------

/// Two-sided shift on the Hilbert cube, sigma(x)_i = x_{i+1}.
struct ShiftSystem {
  using point = HilbertPoint;
  using image = BoxContinuum;
  using scalar = Dyadic;

  Dyadic epsilon = Dyadic::pow2(-3);

  std::string id() const { return "shift"; }

  point forward(const point& x, long steps) const { return x.shifted(steps); }
  scalar dist(const point& a, const point& b) const { return hilbert_dist(a, b); }

  /// sigma^j(B(x, r)): coordinate i is x_{i+j} +- 2^{|i+j|} r, clipped to [0,1]
  image ball_image(const point& x, const scalar& r, long j) const {
    if (r.sign() <= 0) throw UnsupportedRadius("radius must be positive");
    return BoxContinuum::ball_like(x.shifted(j), r, j);
  }
  image closed_ball(const point& x, const scalar& r) const { return ball_image(x, r, 0); }
  image advance(const image& c, long steps) const { return c.shifted(steps); }
  Bound<scalar> measure(const image& c) const {
    Dyadic d = box_diam(c);
    return {d, d};
  }
  image refine(const image& c) const { return c; }
  /// d(sigma x, sigma y) <= 2 d(x, y)
  scalar lipschitz() const { return Dyadic(2); }
  bool contains(const image& c, const point& x) const { return box_contains_point(c, x); }
  scalar hausdorff(const image& a, const image& b) const { return hausdorff_box(a, b); }
};

// ---------------------------------------------------------------------------

using Mat2 = std::array<std::array<long long, 2>, 2>;

inline Mat2 mat_mul(const Mat2& a, const Mat2& b) {
  Mat2 r{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      __int128 s = static_cast<__int128>(a[i][0]) * b[0][j] + static_cast<__int128>(a[i][1]) * b[1][j];
      if (s > std::numeric_limits<long long>::max() || s < std::numeric_limits<long long>::min())
        throw std::overflow_error("integer matrix power overflows 64 bits");
      r[i][j] = static_cast<long long>(s);
    }
  return r;
}

/// Image of the parallelogram center + s b1 + t b2 (|s|,|t| <= 1) under an
/// integer matrix M, in the universal cover; generators are g_k = M b_k.
/// The sup-metric ball B(c, r) is the case b_k = r e_k.
struct Parallelogram {
  std::array<double, 2> center{0, 0};
  Mat2 power{{{1, 0}, {0, 1}}};
  std::array<std::array<double, 2>, 2> base{{{0, 0}, {0, 0}}};  // base[k] = b_k

  static Parallelogram square(std::array<double, 2> c, double r) {
    Parallelogram p;
    p.center = c;
    p.base = {{{r, 0}, {0, r}}};
    return p;
  }
  /// segment c + s v, |s| <= 1
  static Parallelogram segment(std::array<double, 2> c, std::array<double, 2> v) {
    Parallelogram p;
    p.center = c;
    p.base = {{v, {0, 0}}};
    return p;
  }

  std::array<double, 2> generator(int k) const {
    const auto& b = base[static_cast<size_t>(k)];
    return {static_cast<double>(power[0][0]) * b[0] + static_cast<double>(power[0][1]) * b[1],
            static_cast<double>(power[1][0]) * b[0] + static_cast<double>(power[1][1]) * b[1]};
  }
  /// vertex for signs (s,t) in {-1,1}^2, in cover coordinates
  std::array<double, 2> vertex(int s, int t) const {
    auto g1 = generator(0), g2 = generator(1);
    return {center[0] + s * g1[0] + t * g2[0], center[1] + s * g1[1] + t * g2[1]};
  }
  /// sup-norm diameter in the cover: 2 max_row (|g1_row| + |g2_row|)
  double cover_diam() const {
    auto g1 = generator(0), g2 = generator(1);
    return 2.0 * std::max(std::fabs(g1[0]) + std::fabs(g2[0]), std::fabs(g1[1]) + std::fabs(g2[1]));
  }
};

/// Linear toral automorphism x -> A x mod 1 on T^2.
struct TorusLinearSystem {
  using point = TorusPoint;
  using image = Parallelogram;
  using scalar = double;

  Mat2 A{{{2, 1}, {1, 1}}};

  explicit TorusLinearSystem(Mat2 a = {{{2, 1}, {1, 1}}}) : A(a) {
    long long det = A[0][0] * A[1][1] - A[0][1] * A[1][0];
    if (det != 1 && det != -1) throw std::invalid_argument("matrix must be unimodular");
    double tr = static_cast<double>(A[0][0] + A[1][1]);
    double disc = tr * tr - 4.0 * static_cast<double>(det);
    if (disc <= 0 || expanding_eigenvalue() <= 1.0) throw std::invalid_argument("matrix must have a real eigenvalue > 1");
  }

  std::string id() const { return "cat"; }

  Mat2 inverse() const {
    long long det = A[0][0] * A[1][1] - A[0][1] * A[1][0];
    return {{{A[1][1] * det, -A[0][1] * det}, {-A[1][0] * det, A[0][0] * det}}};
  }
  Mat2 power(long n) const {
    Mat2 base = n >= 0 ? A : inverse();
    Mat2 r{{{1, 0}, {0, 1}}};
    for (long k = 0; k < std::labs(n); ++k) r = mat_mul(r, base);
    return r;
  }
  double expanding_eigenvalue() const {
    double tr = static_cast<double>(A[0][0] + A[1][1]);
    double det = static_cast<double>(A[0][0] * A[1][1] - A[0][1] * A[1][0]);
    double s = std::sqrt(tr * tr - 4 * det);
    return std::max(std::fabs((tr + s) / 2), std::fabs((tr - s) / 2));
  }
  /// unit eigenvectors (unstable, stable)
  std::pair<std::array<double, 2>, std::array<double, 2>> eigenvectors() const {
    double tr = static_cast<double>(A[0][0] + A[1][1]);
    double det = static_cast<double>(A[0][0] * A[1][1] - A[0][1] * A[1][0]);
    double s = std::sqrt(tr * tr - 4 * det);
    double l1 = (tr + s) / 2, l2 = (tr - s) / 2;
    if (std::fabs(l2) > std::fabs(l1)) std::swap(l1, l2);
    auto vec = [&](double l) {
      // (A - l I) v = 0
      double a = static_cast<double>(A[0][0]) - l, b = static_cast<double>(A[0][1]);
      std::array<double, 2> v = std::fabs(b) > 1e-300 ? std::array<double, 2>{b, -a}
                                                       : std::array<double, 2>{static_cast<double>(A[1][1]) - l,
                                                                               -static_cast<double>(A[1][0])};
      double n = std::hypot(v[0], v[1]);
      return std::array<double, 2>{v[0] / n, v[1] / n};
    };
    return {vec(l1), vec(l2)};
  }

  point forward(const point& x, long steps) const {
    Mat2 P = power(steps);
    long double a = static_cast<long double>(P[0][0]) * x[0] + static_cast<long double>(P[0][1]) * x[1];
    long double b = static_cast<long double>(P[1][0]) * x[0] + static_cast<long double>(P[1][1]) * x[1];
    return TorusPoint{static_cast<double>(a - std::floor(a)), static_cast<double>(b - std::floor(b))};
  }
  scalar dist(const point& a, const point& b) const { return torus_dist(a, b); }

  image ball_image(const point& x, scalar r, long j) const {
    if (!(r > 0) || r >= 0.5) throw UnsupportedRadius("torus radius must lie in (0, 1/2)");
    return advance(Parallelogram::square({x[0], x[1]}, r), j);
  }
  image closed_ball(const point& x, scalar r) const { return ball_image(x, r, 0); }
  image advance(const image& p, long steps) const {
    Parallelogram q = p;
    Mat2 P = power(steps);
    q.power = mat_mul(P, p.power);
    long double a = static_cast<long double>(P[0][0]) * p.center[0] + static_cast<long double>(P[0][1]) * p.center[1];
    long double b = static_cast<long double>(P[1][0]) * p.center[0] + static_cast<long double>(P[1][1]) * p.center[1];
    q.center = {static_cast<double>(a - std::floor(a)), static_cast<double>(b - std::floor(b))};
    return q;
  }
  /// cover diameter, saturated at the torus diameter 1/2 once it exceeds 1/2
  Bound<scalar> measure(const image& p) const {
    double d = std::min(p.cover_diam(), 0.5);
    return {d, d};
  }
  image refine(const image& p) const { return p; }

  /// sup-norm Lipschitz constant of A
  double lipschitz() const {
    return static_cast<double>(std::max(std::llabs(A[0][0]) + std::llabs(A[0][1]), std::llabs(A[1][0]) + std::llabs(A[1][1])));
  }
  /// Upper bound on the Hausdorff distance: center offset plus sup_s |(G_a - G_b) s|.
  scalar hausdorff(const image& a, const image& b) const {
    double dc = std::max(circle_dist(a.center[0], b.center[0]), circle_dist(a.center[1], b.center[1]));
    double rows = 0;
    for (int i = 0; i < 2; ++i) {
      double acc = 0;
      for (int k = 0; k < 2; ++k) acc += std::fabs(a.generator(k)[static_cast<size_t>(i)] - b.generator(k)[static_cast<size_t>(i)]);
      rows = std::max(rows, acc);
    }
    return std::min(0.5, dc + rows);
  }
  bool contains(const image& p, const point& x, double slack = 1e-9) const {
    auto wrap = [](double v) { return v - std::floor(v + 0.5); };
    double ox = wrap(x[0] - p.center[0]), oy = wrap(x[1] - p.center[1]);
    auto g1 = p.generator(0), g2 = p.generator(1);
    double det = g1[0] * g2[1] - g1[1] * g2[0];
    double scale = std::max({std::fabs(g1[0]), std::fabs(g1[1]), std::fabs(g2[0]), std::fabs(g2[1]), 1e-300});
    if (std::fabs(det) > 1e-12 * scale * scale) {
      double s = (ox * g2[1] - oy * g2[0]) / det, t = (g1[0] * oy - g1[1] * ox) / det;
      return std::fabs(s) <= 1 + slack && std::fabs(t) <= 1 + slack;
    }
    // degenerate: segment along the longer generator
    auto g = std::hypot(g1[0], g1[1]) >= std::hypot(g2[0], g2[1]) ? g1 : g2;
    double gg = g[0] * g[0] + g[1] * g[1];
    if (gg == 0) return std::max(std::fabs(ox), std::fabs(oy)) <= slack;
    double s = (ox * g[0] + oy * g[1]) / gg;
    double px = ox - s * g[0], py = oy - s * g[1];
    double reach = (std::hypot(g1[0], g1[1]) + std::hypot(g2[0], g2[1])) / std::sqrt(gg);
    return std::fabs(s) <= reach + slack && std::max(std::fabs(px), std::fabs(py)) <= slack;
  }
};

// ---------------------------------------------------------------------------

/// Closed arc of the circle R/Z: center angle and an exact length.
template <class T>
struct Arc {
  double center = 0;
  T length{};
};

template <class T>
T arc_diam(const Arc<T>& a) {
  T h;
  if constexpr (std::is_same_v<T, Dyadic>) h = half();
  else h = T(0.5);
  return a.length < h ? a.length : h;
}

/// base x circle, with a rotation by alpha (or the identity when alpha == 0)
/// on the circle factor and the sup product metric.
template <class Base>
struct ProductSystem {
  using base_point = typename Base::point;
  using scalar = typename Base::scalar;
  struct point {
    base_point base;
    double angle = 0;
  };
  struct image {
    typename Base::image base;
    Arc<scalar> arc;
  };

  Base base;
  double alpha = 0;

  std::string id() const { return base.id() + (alpha == 0 ? "xid" : "xrot"); }

  point forward(const point& p, long steps) const {
    double a = p.angle + alpha * static_cast<double>(steps);
    return {base.forward(p.base, steps), a - std::floor(a)};
  }
  /// sup of the component distances; the circle factor is only known in floating point
  double dist(const point& a, const point& b) const {
    double d;
    if constexpr (std::is_same_v<scalar, Dyadic>) d = base.dist(a.base, b.base).to_double();
    else d = base.dist(a.base, b.base);
    return std::max(d, circle_dist(a.angle, b.angle));
  }
  image ball_image(const point& p, const scalar& r, long j) const {
    image img{base.ball_image(p.base, r, j), {}};
    double a = p.angle + alpha * static_cast<double>(j);
    img.arc.center = a - std::floor(a);
    img.arc.length = r + r;
    return img;
  }
  image closed_ball(const point& p, const scalar& r) const { return ball_image(p, r, 0); }
  image advance(const image& c, long steps) const {
    image r{base.advance(c.base, steps), c.arc};
    double a = c.arc.center + alpha * static_cast<double>(steps);
    r.arc.center = a - std::floor(a);
    return r;
  }
  Bound<scalar> measure(const image& c) const {
    auto b = base.measure(c.base);
    scalar a = arc_diam(c.arc);
    return {b.lo < a ? a : b.lo, b.hi < a ? a : b.hi};
  }
  image refine(const image& c) const { return {base.refine(c.base), c.arc}; }

  /// the rotation is an isometry; the product constant is the base constant
  auto lipschitz() const { return base.lipschitz(); }
  double hausdorff(const image& a, const image& b) const {
    double d;
    if constexpr (std::is_same_v<scalar, Dyadic>) d = base.hausdorff(a.base, b.base).to_double();
    else d = base.hausdorff(a.base, b.base);
    double la, lb;
    if constexpr (std::is_same_v<scalar, Dyadic>) {
      la = a.arc.length.to_double();
      lb = b.arc.length.to_double();
    } else {
      la = a.arc.length;
      lb = b.arc.length;
    }
    return std::max(d, circle_dist(a.arc.center, b.arc.center) + 0.5 * std::fabs(la - lb));
  }
  bool contains(const image& c, const point& p) const {
    double len;
    if constexpr (std::is_same_v<scalar, Dyadic>) len = c.arc.length.to_double();
    else len = c.arc.length;
    return base.contains(c.base, p.base) && circle_dist(c.arc.center, p.angle) <= 0.5 * len + 1e-12;
  }
};

// ---------------------------------------------------------------------------

/// Finite sample of a set with per-point Jacobians of the map that produced it.
struct PointCloud {
  std::vector<TorusPoint> points;
  std::vector<std::array<double, 4>> jac;  // row-major 2x2 per point
  double dispersion0 = 0;                  // covering radius of the initial sample
  double lipschitz = 1;                    // max Jacobian sup-norm seen so far
  TorusPoint origin;
  double radius = 0;
  int size_hint = 0;
  long steps = 0;  // iterates applied since sampling
};

/// Time-1 map of the slowed irrational flow q' = g(q) F on T^2,
/// g(q) = sin^2(pi(q1-p1)) + sin^2(pi(q2-p2)), integrated with RK4.
struct SlowedFlowSystem {
  using point = TorusPoint;
  using image = PointCloud;
  using scalar = double;

  std::array<double, 2> F{1.0, std::numbers::sqrt2 - 1.0};
  TorusPoint p{0.0, 0.0};
  double h = 1e-3;
  int samples = 512;
  int max_refinements = 2;

  std::string id() const { return "flow"; }

  double g(double x, double y) const {
    double s1 = std::sin(std::numbers::pi * (x - p[0])), s2 = std::sin(std::numbers::pi * (y - p[1]));
    return s1 * s1 + s2 * s2;
  }
  std::array<double, 2> grad_g(double x, double y) const {
    return {std::numbers::pi * std::sin(2 * std::numbers::pi * (x - p[0])),
            std::numbers::pi * std::sin(2 * std::numbers::pi * (y - p[1]))};
  }

  /// one RK4 step of size dt in cover coordinates
  void rk4(double& x, double& y, double dt) const {
    double k1 = g(x, y);
    double k2 = g(x + 0.5 * dt * k1 * F[0], y + 0.5 * dt * k1 * F[1]);
    double k3 = g(x + 0.5 * dt * k2 * F[0], y + 0.5 * dt * k2 * F[1]);
    double k4 = g(x + dt * k3 * F[0], y + dt * k3 * F[1]);
    double s = dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6;
    x += s * F[0];
    y += s * F[1];
  }
  /// RK4 on the state and its variational equation J' = F grad(g)^T J
  void rk4_var(double& x, double& y, std::array<double, 4>& J, double dt) const {
    auto deriv = [&](double px, double py, const std::array<double, 4>& M, std::array<double, 4>& dM) {
      auto gr = grad_g(px, py);
      double r0 = gr[0] * M[0] + gr[1] * M[2], r1 = gr[0] * M[1] + gr[1] * M[3];
      dM = {F[0] * r0, F[0] * r1, F[1] * r0, F[1] * r1};
      return g(px, py);
    };
    std::array<double, 4> d1, d2, d3, d4, M;
    double k1 = deriv(x, y, J, d1);
    for (int i = 0; i < 4; ++i) M[static_cast<size_t>(i)] = J[static_cast<size_t>(i)] + 0.5 * dt * d1[static_cast<size_t>(i)];
    double k2 = deriv(x + 0.5 * dt * k1 * F[0], y + 0.5 * dt * k1 * F[1], M, d2);
    for (int i = 0; i < 4; ++i) M[static_cast<size_t>(i)] = J[static_cast<size_t>(i)] + 0.5 * dt * d2[static_cast<size_t>(i)];
    double k3 = deriv(x + 0.5 * dt * k2 * F[0], y + 0.5 * dt * k2 * F[1], M, d3);
    for (int i = 0; i < 4; ++i) M[static_cast<size_t>(i)] = J[static_cast<size_t>(i)] + dt * d3[static_cast<size_t>(i)];
    double k4 = deriv(x + dt * k3 * F[0], y + dt * k3 * F[1], M, d4);
    for (int i = 0; i < 4; ++i) {
      auto u = static_cast<size_t>(i);
      J[u] += dt * (d1[u] + 2 * d2[u] + 2 * d3[u] + d4[u]) / 6;
    }
    double s = dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6;
    x += s * F[0];
    y += s * F[1];
  }

  /// flow for time t (sign gives direction) with step h
  void flow(double& x, double& y, double t, double step) const {
    long n = std::lround(std::ceil(std::fabs(t) / step - 1e-9));
    if (n == 0) return;
    double dt = t / static_cast<double>(n);
    for (long k = 0; k < n; ++k) rk4(x, y, dt);
  }

  point forward(const point& q, long steps) const {
    double x = q[0], y = q[1];
    flow(x, y, static_cast<double>(steps), h);
    if (!std::isfinite(x) || !std::isfinite(y)) throw IntegratorDivergence("non-finite state");
    return TorusPoint{x, y};
  }

  /// Time-1 map with step-halving: returns the h/2^k result once two
  /// consecutive halvings agree to `tol`; throws after `budget` halvings.
  point forward_checked(const point& q, long steps, double tol, int budget = 8) const {
    double step = h;
    double x0 = q[0], y0 = q[1];
    flow(x0, y0, static_cast<double>(steps), step);
    for (int k = 0; k < budget; ++k) {
      step /= 2;
      double x1 = q[0], y1 = q[1];
      flow(x1, y1, static_cast<double>(steps), step);
      if (std::max(std::fabs(x1 - x0), std::fabs(y1 - y0)) <= tol) return TorusPoint{x1, y1};
      x0 = x1;
      y0 = y1;
    }
    throw IntegratorDivergence("step halving did not settle within budget");
  }

  scalar dist(const point& a, const point& b) const { return torus_dist(a, b); }

  /// deterministic low-discrepancy (R2 sequence) sample of the sup-ball plus its center
  image sample_ball(const point& x, double r, int n) const {
    if (!(r > 0) || r >= 0.5) throw UnsupportedRadius("flow radius must lie in (0, 1/2)");
    PointCloud c;
    c.origin = x;
    c.radius = r;
    c.size_hint = n;
    const double g2 = 1.32471795724474602596;  // plastic number
    const double a1 = 1.0 / g2, a2 = 1.0 / (g2 * g2);
    c.points.push_back(x);
    for (int k = 1; k < n; ++k) {
      double u = std::fmod(0.5 + a1 * k, 1.0), v = std::fmod(0.5 + a2 * k, 1.0);
      c.points.push_back(TorusPoint{x[0] + r * (2 * u - 1), x[1] + r * (2 * v - 1)});
    }
    c.jac.assign(c.points.size(), {1, 0, 0, 1});
    // covering radius of an R2 sample of n points in a square of side 2r
    c.dispersion0 = 2 * r * 1.5 / std::sqrt(static_cast<double>(n));
    return c;
  }

  image ball_image(const point& x, scalar r, long j) const {
    return advance(sample_ball(x, r, samples), j);
  }
  image closed_ball(const point& x, scalar r) const { return sample_ball(x, r, samples); }

  image advance(const image& c, long steps) const {
    PointCloud out = c;
    if (steps == 0) return out;
    long n = std::lround(std::ceil(std::fabs(static_cast<double>(steps)) / h - 1e-9));
    double dt = static_cast<double>(steps) / static_cast<double>(n);
    double lip = 0;
    for (size_t k = 0; k < out.points.size(); ++k) {
      double x = out.points[k][0], y = out.points[k][1];
      auto& J = out.jac[k];
      for (long s = 0; s < n; ++s) rk4_var(x, y, J, dt);
      if (!std::isfinite(x) || !std::isfinite(y)) throw IntegratorDivergence("non-finite state");
      out.points[k] = TorusPoint{x, y};
      lip = std::max(lip, std::max(std::fabs(J[0]) + std::fabs(J[1]), std::fabs(J[2]) + std::fabs(J[3])));
    }
    out.lipschitz = lip;
    out.steps += steps;
    return out;
  }

  /// farthest pair (lower bound) and lower + 2 * propagated dispersion (upper)
  Bound<scalar> measure(const image& c) const {
    const auto& P = c.points;
    double far_from_center = 0;
    for (const auto& q : P) far_from_center = std::max(far_from_center, torus_dist(P[0], q));
    double best = far_from_center;
    for (size_t a = 0; a < P.size(); ++a)
      for (size_t b = a + 1; b < P.size(); ++b) best = std::max(best, torus_dist(P[a], P[b]));
    double disp = c.dispersion0 * c.lipschitz;
    return {best, std::min(0.5, best + 2 * disp)};
  }

  /// cloud Hausdorff distance plus both propagated dispersions (upper bound)
  scalar hausdorff(const image& a, const image& b) const {
    return std::min(0.5, cloud_hausdorff(a.points, b.points, torus_dist) + a.dispersion0 * a.lipschitz +
                             b.dispersion0 * b.lipschitz);
  }

  /// the same set sampled at twice the density
  image refine(const image& c) const {
    return advance(sample_ball(c.origin, c.radius, 2 * std::max(c.size_hint, 1)), c.steps);
  }
};

}  // namespace ftsens
