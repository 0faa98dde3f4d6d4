#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <compare>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ftsens {

/// Exact binary rational m * 2^e kept in canonical form (m odd, or m == 0 with e == 0).
class Dyadic {
 public:
  using integer = boost::multiprecision::cpp_int;

  Dyadic() = default;
  Dyadic(long long v) : m_(v), e_(0) { canonicalize(); }  // NOLINT: implicit by design
  Dyadic(integer m, long long e) : m_(std::move(m)), e_(e) { canonicalize(); }
  template <std::floating_point F>
  Dyadic(F) = delete;

  static Dyadic pow2(long long e) { return Dyadic(integer(1), e); }

  /// Accepts "p", "p/q" with q a positive power of two. Anything else throws.
  static Dyadic parse(std::string_view s) {
    auto trim = [](std::string_view v) {
      while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
      while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
      return v;
    };
    s = trim(s);
    auto slash = s.find('/');
    std::string_view num = trim(s.substr(0, slash));
    if (!is_integer_literal(num)) throw std::invalid_argument("not an exact dyadic: " + std::string(s));
    integer p{std::string(num)};
    if (slash == std::string_view::npos) return Dyadic(p, 0);
    std::string_view den = trim(s.substr(slash + 1));
    if (!is_integer_literal(den) || den.front() == '-')
      throw std::invalid_argument("not an exact dyadic: " + std::string(s));
    integer q{std::string(den)};
    if (q <= 0 || (q & (q - 1)) != 0)
      throw std::invalid_argument("denominator is not a power of two: " + std::string(s));
    return Dyadic(p, -static_cast<long long>(boost::multiprecision::msb(q)));
  }

  const integer& mantissa() const noexcept { return m_; }
  long long exponent() const noexcept { return e_; }
  int sign() const noexcept { return m_.sign(); }
  bool is_zero() const noexcept { return m_.is_zero(); }

  /// floor(log2 |x|); undefined for zero.
  long long floor_log2() const {
    return static_cast<long long>(boost::multiprecision::msb(abs_integer(m_))) + e_;
  }

  Dyadic operator-() const { return Dyadic(integer(-m_), e_); }

  friend Dyadic operator+(const Dyadic& a, const Dyadic& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.e_ == b.e_) return Dyadic(integer(a.m_ + b.m_), a.e_);
    if (a.e_ < b.e_) return Dyadic(integer(a.m_ + (b.m_ << static_cast<unsigned>(b.e_ - a.e_))), a.e_);
    return Dyadic(integer((a.m_ << static_cast<unsigned>(a.e_ - b.e_)) + b.m_), b.e_);
  }
  friend Dyadic operator-(const Dyadic& a, const Dyadic& b) { return a + (-b); }
  friend Dyadic operator*(const Dyadic& a, const Dyadic& b) {
    return Dyadic(integer(a.m_ * b.m_), a.e_ + b.e_);
  }
  Dyadic& operator+=(const Dyadic& o) { return *this = *this + o; }
  Dyadic& operator-=(const Dyadic& o) { return *this = *this - o; }
  Dyadic& operator*=(const Dyadic& o) { return *this = *this * o; }

  /// Multiplication by 2^k, exact for every k.
  friend Dyadic ldexp(const Dyadic& a, long long k) {
    if (a.is_zero()) return a;
    Dyadic r = a;
    r.e_ += k;
    return r;
  }
  friend Dyadic abs(const Dyadic& a) { return a.sign() < 0 ? -a : a; }

  friend bool operator==(const Dyadic& a, const Dyadic& b) { return a.e_ == b.e_ && a.m_ == b.m_; }
  friend std::strong_ordering operator<=>(const Dyadic& a, const Dyadic& b) {
    int sa = a.sign(), sb = b.sign();
    if (sa != sb) return sa <=> sb;
    if (sa == 0) return std::strong_ordering::equal;
    // same sign, nonzero: compare magnitudes via bit length before shifting
    long long la = a.floor_log2(), lb = b.floor_log2();
    if (la != lb) return sa > 0 ? (la <=> lb) : (lb <=> la);
    int c = (a - b).sign();
    return c <=> 0;
  }

  double to_double() const {
    if (is_zero()) return 0.0;
    // keep 64 significant bits before converting
    long long bits = static_cast<long long>(boost::multiprecision::msb(abs_integer(m_))) + 1;
    integer m = m_;
    long long e = e_;
    if (bits > 64) {
      m >>= static_cast<unsigned>(bits - 64);
      e += bits - 64;
    }
    return std::ldexp(m.convert_to<double>(), static_cast<int>(e));
  }

  /// Reduced fraction "p/q" (or "p" for integers).
  std::string to_fraction() const {
    if (e_ >= 0) return integer(m_ << static_cast<unsigned>(e_)).str();
    integer q = integer(1) << static_cast<unsigned>(-e_);
    return m_.str() + "/" + q.str();
  }

  /// Terminating decimal expansion; exact.
  std::string to_decimal() const {
    if (e_ >= 0) return to_fraction();
    // m / 2^k = m * 5^k / 10^k
    unsigned k = static_cast<unsigned>(-e_);
    integer num = abs_integer(m_) * boost::multiprecision::pow(integer(5), k);
    std::string digits = num.str();
    if (digits.size() <= k) digits.insert(0, k - digits.size() + 1, '0');
    std::string out = digits.substr(0, digits.size() - k) + "." + digits.substr(digits.size() - k);
    return (sign() < 0 ? "-" : "") + out;
  }

 private:
  static integer abs_integer(const integer& v) { return v.sign() < 0 ? integer(-v) : v; }
  static bool is_integer_literal(std::string_view v) {
    if (!v.empty() && (v.front() == '-' || v.front() == '+')) v.remove_prefix(1);
    if (v.empty()) return false;
    for (char c : v)
      if (c < '0' || c > '9') return false;
    return true;
  }

  void canonicalize() {
    if (m_.is_zero()) {
      e_ = 0;
      return;
    }
    unsigned tz = boost::multiprecision::lsb(abs_integer(m_));
    if (tz) {
      m_ >>= tz;
      e_ += tz;
    }
  }

  integer m_{0};
  long long e_ = 0;
};

inline const Dyadic& min(const Dyadic& a, const Dyadic& b) { return b < a ? b : a; }
inline const Dyadic& max(const Dyadic& a, const Dyadic& b) { return a < b ? b : a; }

}  // namespace ftsens
