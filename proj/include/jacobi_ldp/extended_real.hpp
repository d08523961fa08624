#ifndef JACOBI_LDP_EXTENDED_REAL_HPP
#define JACOBI_LDP_EXTENDED_REAL_HPP

#include <cmath>
#include <compare>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace jacobi_ldp {

/// A real number extended by +inf and -inf.
///
/// Log-densities and potentials of the Jacobi log-gas take infinite values at
/// singular endpoints and coincident particles. This type keeps those cases
/// explicit: it never holds a NaN, and an undefined combination such as
/// (+inf) + (-inf) throws instead of producing one.
class ExtendedReal {
 public:
  enum class Kind { Finite, PosInf, NegInf };

  constexpr ExtendedReal() = default;

  // IEEE infinities map to the matching infinite kind; NaN is rejected.
  ExtendedReal(double v) {  // NOLINT(google-explicit-constructor)
    if (std::isnan(v)) throw std::domain_error("ExtendedReal: NaN is not an extended real");
    if (std::isinf(v)) {
      kind_ = v > 0 ? Kind::PosInf : Kind::NegInf;
    } else {
      value_ = v;
    }
  }

  static constexpr ExtendedReal pos_inf() { return ExtendedReal(Kind::PosInf); }
  static constexpr ExtendedReal neg_inf() { return ExtendedReal(Kind::NegInf); }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_finite() const { return kind_ == Kind::Finite; }
  constexpr bool is_pos_inf() const { return kind_ == Kind::PosInf; }
  constexpr bool is_neg_inf() const { return kind_ == Kind::NegInf; }

  /// The finite value. Throws std::domain_error for an infinite value.
  double value() const {
    if (!is_finite()) throw std::domain_error("ExtendedReal: value() on an infinite value");
    return value_;
  }

  /// IEEE representation (+/-infinity for the infinite kinds).
  double to_double() const {
    switch (kind_) {
      case Kind::PosInf: return std::numeric_limits<double>::infinity();
      case Kind::NegInf: return -std::numeric_limits<double>::infinity();
      default: return value_;
    }
  }

  ExtendedReal operator-() const {
    switch (kind_) {
      case Kind::PosInf: return neg_inf();
      case Kind::NegInf: return pos_inf();
      default: return ExtendedReal(-value_);
    }
  }

  friend ExtendedReal operator+(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.is_finite() && b.is_finite()) return ExtendedReal(a.value_ + b.value_);
    if ((a.is_pos_inf() && b.is_neg_inf()) || (a.is_neg_inf() && b.is_pos_inf())) {
      throw std::domain_error("ExtendedReal: (+inf) + (-inf) is undefined");
    }
    return a.is_finite() ? b : a;
  }
  friend ExtendedReal operator-(const ExtendedReal& a, const ExtendedReal& b) { return a + (-b); }

  // Scaling by zero returns zero, matching the 0 * log 0 = 0 convention used
  // for vanishing potential coefficients.
  friend ExtendedReal operator*(double s, const ExtendedReal& a) {
    if (std::isnan(s) || std::isinf(s)) throw std::domain_error("ExtendedReal: non-finite scale");
    if (s == 0.0) return ExtendedReal(0.0);
    if (a.is_finite()) return ExtendedReal(s * a.value_);
    return s > 0 ? a : -a;
  }
  friend ExtendedReal operator*(const ExtendedReal& a, double s) { return s * a; }

  ExtendedReal& operator+=(const ExtendedReal& o) { return *this = *this + o; }
  ExtendedReal& operator-=(const ExtendedReal& o) { return *this = *this - o; }

  friend std::partial_ordering operator<=>(const ExtendedReal& a, const ExtendedReal& b) {
    return a.to_double() <=> b.to_double();
  }
  friend bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return a.kind_ == b.kind_ && (!a.is_finite() || a.value_ == b.value_);
  }

  friend std::ostream& operator<<(std::ostream& os, const ExtendedReal& x) {
    switch (x.kind_) {
      case Kind::PosInf: return os << "+inf";
      case Kind::NegInf: return os << "-inf";
      default: return os << x.value_;
    }
  }

 private:
  constexpr explicit ExtendedReal(Kind k) : kind_(k) {}

  Kind kind_ = Kind::Finite;
  double value_ = 0.0;
};

inline ExtendedReal min(const ExtendedReal& a, const ExtendedReal& b) { return b < a ? b : a; }
inline ExtendedReal max(const ExtendedReal& a, const ExtendedReal& b) { return a < b ? b : a; }

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_EXTENDED_REAL_HPP
