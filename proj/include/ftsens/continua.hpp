#pragma once

#include "ftsens/certifier.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ftsens {

// ---------------------------------------------------------------------------
// Shift closed forms

/// prod_i [x_i - 2^{i-k} eps, x_i + 2^{i-k} eps] cap [0,1]
inline BoxContinuum shift_fu_closed_form(const HilbertPoint& x, long k, const Dyadic& eps) {
  if (k < 0) throw std::invalid_argument("k must be non-negative");
  if (!(eps < Dyadic::pow2(-2))) throw std::invalid_argument("eps must be below 1/4");
  return BoxContinuum::unstable_like(x, eps, -k);
}

/// sigma^j of the closed ball B(sigma^{-j} x, eps / 2^{j+k})
inline BoxContinuum shift_fu_approximant(const HilbertPoint& x, long k, const Dyadic& eps, long j) {
  return BoxContinuum::ball_like(x, ldexp(eps, -(j + k)), j);
}

struct FuLimitCheck {
  Dyadic residual;
  bool inner_agree = true;  // coordinates |i| < j coincide
};

inline FuLimitCheck verify_fu_limit(const HilbertPoint& x, long k, const Dyadic& eps, long j) {
  if (j < 0) throw std::invalid_argument("j must be non-negative");
  auto closed = shift_fu_closed_form(x, k, eps);
  auto approx = shift_fu_approximant(x, k, eps, j);
  FuLimitCheck out{hausdorff_box(closed, approx)};
  for (long i = -j + 1; i < j; ++i)
    if (!(closed.at(i) == approx.at(i))) out.inner_agree = false;
  return out;
}

/// Remark controls: [0, r] at coordinate 0 over the zero sequence; and the
/// uniform box prod [x_i - eps, x_i + eps] cap [0,1].
inline BoxContinuum shift_flat_control(const Dyadic& r) {
  BoxContinuum c(PointTail{Dyadic(0)});
  c.set(0, {Dyadic(0), r});
  return c;
}
inline BoxContinuum shift_uniform_control(const HilbertPoint& x, const Dyadic& eps) {
  return BoxContinuum::uniform(x, eps);
}

// ---------------------------------------------------------------------------
// Backward-forward construction

template <class S>
struct Stage {
  long m = 0;
  typename S::scalar r{};
  long n1 = 0;
  typename S::image image;
  std::optional<double> residual;  // to the previous stage
};

template <class S>
struct ContinuumRecord {
  std::string system;
  typename S::point anchor{};
  typename S::scalar gamma{};
  long m_gamma = 0;
  std::vector<Stage<S>> stages;
  bool converged = false;
  double hausdorff_residual = 0;
  typename S::scalar delta{};  // lower bound on diam of every stage
  bool anchor_in_every_stage = true;
  const typename S::image& final_image() const { return stages.back().image; }
};

struct BuildOptions {
  double conv_tol = 0x1p-20;
  int consecutive = 3;
  double grid_ratio = 2.0;
  int refine_iters = 60;
  int grid_steps = 400;
};

namespace detail {

template <class S>
std::optional<long> n1_capped(const S& sys, const typename S::point& y, const typename S::scalar& r,
                              const typename S::scalar& gamma, long cap) {
  try {
    return first_increase(sys, y, r, gamma, cap).n1;
  } catch (const NotIncreasedWithinBudget&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Largest radius on the grid r_top * ratio^{-t} with n1(y, r, gamma) in
/// (m, m + m_gamma]. When consecutive grid points jump over the window, the
/// gap is bisected; exhaustion is reported as RadiusWindowEmpty.
template <class S>
std::pair<typename S::scalar, long> window_radius(const S& sys, const typename S::point& y,
                                                  const typename S::scalar& r_top, const typename S::scalar& gamma,
                                                  long m, long m_gamma, const BuildOptions& opt) {
  using T = typename S::scalar;
  const long top = m + m_gamma;
  auto in_window = [&](const std::optional<long>& n) { return n && *n > m && *n <= top; };
  auto n1 = [&](const T& r) { return detail::n1_capped(sys, y, r, gamma, top); };
  auto shrink = [&](const T& r) {
    if constexpr (std::is_same_v<T, Dyadic>) {
      if (opt.grid_ratio != 2.0) throw std::invalid_argument("exact radii need grid ratio 2");
      return halve(r);
    } else {
      return r / opt.grid_ratio;
    }
  };

  T hi = r_top, lo = r_top;
  auto n_lo = n1(lo);
  for (int t = 0; t < opt.grid_steps && n_lo && *n_lo <= m; ++t) {
    hi = lo;
    lo = shrink(lo);
    n_lo = n1(lo);
  }
  if (n_lo && *n_lo <= m) throw RadiusWindowEmpty(m);
  if (in_window(n_lo)) return {lo, *n_lo};
  if (lo == hi) throw RadiusWindowEmpty(m);
  T a = lo, b = hi;
  for (int it = 0; it < opt.refine_iters; ++it) {
    T mid = halve(a + b);
    auto n = n1(mid);
    if (in_window(n)) return {mid, *n};
    if (!n || *n > top) a = mid;
    else b = mid;
  }
  throw RadiusWindowEmpty(m);
}

/// C_m = f^m(closed B(f^{-m} x, r_m)) with n1(f^{-m} x, r_m, gamma) in
/// (m, m + m_gamma], for each m in `stages`.
template <class S>
ContinuumRecord<S> build_cw_unstable(const S& sys, const typename S::point& x, const typename S::scalar& gamma,
                                     long m_gamma, const std::vector<long>& stages, const typename S::scalar& r_top,
                                     BuildOptions opt = {}) {
  using T = typename S::scalar;
  if (stages.empty()) throw std::invalid_argument("no stages given");
  for (size_t i = 1; i < stages.size(); ++i)
    if (stages[i] <= stages[i - 1]) throw std::invalid_argument("stages must increase");
  if (m_gamma < 1) throw std::invalid_argument("m_gamma must be positive");

  ContinuumRecord<S> rec;
  rec.system = sys.id();
  rec.anchor = x;
  rec.gamma = gamma;
  rec.m_gamma = m_gamma;
  if constexpr (requires { sys.lipschitz(); }) {
    // diam f^{m_gamma}(C_m) > gamma forces diam C_m >= gamma / L^{m_gamma}
    if constexpr (std::is_same_v<T, Dyadic>) {
      Dyadic L = sys.lipschitz();
      Dyadic p(1);
      for (long i = 0; i < m_gamma; ++i) p = p * L;
      if (p.mantissa() != 1) throw std::logic_error("exact delta needs a power-of-two constant");
      rec.delta = ldexp(gamma, -p.exponent());
    } else {
      rec.delta = gamma / std::pow(sys.lipschitz(), static_cast<double>(m_gamma));
    }
  }

  int below = 0;
  for (long m : stages) {
    auto y = sys.forward(x, -m);
    auto [r, n] = window_radius(sys, y, r_top, gamma, m, m_gamma, opt);
    Stage<S> st;
    st.m = m;
    st.r = r;
    st.n1 = n;
    st.image = sys.ball_image(y, r, m);
    if constexpr (requires { sys.contains(st.image, x); })
      if (!sys.contains(st.image, x)) rec.anchor_in_every_stage = false;
    if (!rec.stages.empty()) {
      double res = as_double(sys.hausdorff(st.image, rec.stages.back().image));
      st.residual = res;
      rec.hausdorff_residual = res;
      below = res < opt.conv_tol ? below + 1 : 0;
    }
    rec.stages.push_back(std::move(st));
  }
  rec.converged = below >= opt.consecutive;
  // residuals that stopped shrinking while still above the tolerance
  if (!rec.converged && rec.stages.size() >= 4) {
    size_t n = rec.stages.size();
    double a = *rec.stages[n - 3].residual, b = *rec.stages[n - 2].residual, c = *rec.stages[n - 1].residual;
    if (c >= opt.conv_tol && b >= a && c >= b) throw NoConvergence("stage residuals stagnate above the tolerance");
  }
  return rec;
}

/// diam(f^{-j}(C_m)) <= eps for 0 <= j <= m at every stage
template <class S>
bool check_backward_stages(const S& sys, const ContinuumRecord<S>& rec, const typename S::scalar& eps) {
  for (const auto& st : rec.stages)
    for (long j = 0; j <= st.m; ++j)
      if (sys.measure(sys.advance(st.image, -j)).lo > eps) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Properties of F^u continua

struct GrowthReport {
  std::optional<long> ell;           // least l in [0, 2 m_gamma] with diam f^l(C) >= eps
  std::vector<long> regular_failures;  // n with no n' in [n, n + m_eps] reaching eps
  std::vector<long> floor_failures;    // n >= 2 m_gamma with diam f^n(C) < delta
  bool ok() const { return ell && regular_failures.empty() && floor_failures.empty(); }
};

template <class S>
GrowthReport check_growth(const S& sys, const typename S::image& c, const typename S::scalar& eps, long m_gamma,
                          long m_eps, long horizon, const typename S::scalar& delta) {
  GrowthReport rep;
  long last = std::max(horizon + m_eps, 2 * m_gamma);
  std::vector<bool> hit(static_cast<size_t>(last + 1));
  std::vector<bool> above_floor(static_cast<size_t>(last + 1));
  auto img = c;
  for (long n = 0; n <= last; ++n) {
    auto b = sys.measure(img);
    hit[static_cast<size_t>(n)] = !(b.lo < eps);
    above_floor[static_cast<size_t>(n)] = !(b.lo < delta);
    if (n < last) img = sys.advance(img, 1);
  }
  for (long l = 0; l <= 2 * m_gamma; ++l)
    if (hit[static_cast<size_t>(l)]) {
      rep.ell = l;
      break;
    }
  for (long n = 0; n <= horizon; ++n) {
    bool found = false;
    for (long q = n; q <= n + m_eps && !found; ++q) found = hit[static_cast<size_t>(q)];
    if (!found) rep.regular_failures.push_back(n);
  }
  for (long n = 2 * m_gamma; n <= horizon; ++n)
    if (!above_floor[static_cast<size_t>(n)]) rep.floor_failures.push_back(n);
  return rep;
}

template <class T>
struct ShrinkRow {
  T alpha{};
  long m_alpha = 0;
  std::optional<long> first_below;  // least n with diam f^{-n}(C) <= alpha
  std::vector<long> failures;       // n >= m_alpha + 1 with diam f^{-n}(C) > alpha
};

/// For each (alpha, m_alpha): diam f^{-n}(C) <= alpha for m_alpha < n <= n_max.
template <class S>
std::vector<ShrinkRow<typename S::scalar>> check_backward_shrink(
    const S& sys, const typename S::image& c,
    const std::vector<std::pair<typename S::scalar, long>>& alphas, long n_max) {
  std::vector<typename S::scalar> diams;
  auto img = c;
  for (long n = 0; n <= n_max; ++n) {
    diams.push_back(sys.measure(img).hi);
    if (n < n_max) img = sys.advance(img, -1);
  }
  std::vector<ShrinkRow<typename S::scalar>> out;
  for (const auto& [alpha, m_alpha] : alphas) {
    ShrinkRow<typename S::scalar> row{alpha, m_alpha, std::nullopt, {}};
    for (long n = 0; n <= n_max; ++n) {
      bool ok = !(diams[static_cast<size_t>(n)] > alpha);
      if (ok && !row.first_below) row.first_below = n;
      if (!ok && n >= m_alpha + 1) row.failures.push_back(n);
    }
    out.push_back(std::move(row));
  }
  return out;
}

/// The ball B(x, r) is controlled by C at threshold c when n1(x, r, c) = n1(C, c).
template <class S>
bool controlled_by(const S& sys, const typename S::point& x, const typename S::scalar& r,
                   const typename S::image& c, const typename S::scalar& threshold, long budget) {
  long a = first_increase(sys, x, r, threshold, budget).n1;
  try {
    return continuum_first_increase(sys, c, threshold, budget).n1 == a;
  } catch (const NotIncreasedWithinBudget&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Anosov x identity

struct SliceReport {
  double max_circle_dev = 0;
  double max_line_dev = 0;
  bool passed = true;
};

/// points as (x, y, angle) on T^3
inline std::vector<TorusPoint> slice_cloud(const ProductSystem<TorusLinearSystem>::image& c, int grid) {
  std::vector<TorusPoint> out;
  double half_len = 0.5 * c.arc.length;
  auto g1 = c.base.generator(0), g2 = c.base.generator(1);
  for (int a = 0; a <= grid; ++a)
    for (int b = 0; b <= grid; ++b)
      for (int t : {-1, 0, 1}) {
        double s = grid == 0 ? 0 : -1 + 2.0 * a / grid, u = grid == 0 ? 0 : -1 + 2.0 * b / grid;
        out.push_back(TorusPoint{c.base.center[0] + s * g1[0] + u * g2[0], c.base.center[1] + s * g1[1] + u * g2[1],
                                 c.arc.center + t * half_len});
      }
  return out;
}

/// Circle coordinates within tol of the anchor's; torus part within tol
/// (Euclidean, in the cover) of the unstable line through the anchor.
inline SliceReport product_fu_slice_check(const TorusLinearSystem& base, const TorusPoint& anchor,
                                          const std::vector<TorusPoint>& cloud, double tol) {
  SliceReport rep;
  auto [u, s] = base.eigenvectors();
  (void)s;
  auto wrap = [](double v) { return v - std::floor(v + 0.5); };
  for (const auto& p : cloud) {
    rep.max_circle_dev = std::max(rep.max_circle_dev, circle_dist(p[2], anchor[2]));
    double ox = wrap(p[0] - anchor[0]), oy = wrap(p[1] - anchor[1]);
    rep.max_line_dev = std::max(rep.max_line_dev, std::fabs(ox * u[1] - oy * u[0]));
  }
  rep.passed = rep.max_circle_dev <= tol && rep.max_line_dev <= tol;
  return rep;
}

inline SliceReport product_fu_slice_check(const ProductSystem<TorusLinearSystem>& sys,
                                          const ContinuumRecord<ProductSystem<TorusLinearSystem>>& rec, double tol,
                                          int grid = 8) {
  const auto& a = rec.anchor;
  return product_fu_slice_check(sys.base, TorusPoint{a.base[0], a.base[1], a.angle}, slice_cloud(rec.final_image(), grid),
                                tol);
}

}  // namespace ftsens
