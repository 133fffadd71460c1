#pragma once

// Regularized incomplete beta and the Student t / Fisher F distribution
// functions built on it.

#include <cmath>
#include <cstdint>
#include <limits>

#include "fairedu/error.hpp"

namespace fairedu {

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
template <typename Scalar>
Scalar beta_continued_fraction(Scalar a, Scalar b, Scalar x) {
  constexpr int kMaxIterations = 100000;
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar tiny = std::numeric_limits<Scalar>::min() / eps;

  const Scalar qab = a + b;
  const Scalar qap = a + Scalar(1);
  const Scalar qam = a - Scalar(1);
  Scalar c = 1;
  Scalar d = Scalar(1) - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = Scalar(1) / d;
  Scalar h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const Scalar m2 = Scalar(2 * m);
    Scalar aa = Scalar(m) * (b - Scalar(m)) * x / ((qam + m2) * (a + m2));
    d = Scalar(1) + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = Scalar(1) + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = Scalar(1) / d;
    h *= d * c;
    aa = -(a + Scalar(m)) * (qab + Scalar(m)) * x / ((a + m2) * (qap + m2));
    d = Scalar(1) + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = Scalar(1) + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = Scalar(1) / d;
    const Scalar delta = d * c;
    h *= delta;
    if (std::abs(delta - Scalar(1)) <= eps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b), with the complement y = 1 - x
/// supplied separately so callers can avoid cancellation near x = 1.
template <typename Scalar>
Scalar incomplete_beta(Scalar a, Scalar b, Scalar x, Scalar y) {
  if (!(a > 0) || !(b > 0)) throw DomainError("incomplete_beta requires a > 0 and b > 0");
  if (!(x >= 0) || !(y >= 0)) throw DomainError("incomplete_beta argument outside [0, 1]");
  if (x == 0) return 0;
  if (y == 0) return 1;
  using std::lgamma;
  using std::log;
  const Scalar log_front =
      lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(y);
  const Scalar front = std::exp(log_front);
  if (x < (a + Scalar(1)) / (a + b + Scalar(2))) {
    return front * detail::beta_continued_fraction(a, b, x) / a;
  }
  return Scalar(1) - front * detail::beta_continued_fraction(b, a, y) / b;
}

template <typename Scalar>
Scalar incomplete_beta(Scalar a, Scalar b, Scalar x) {
  return incomplete_beta(a, b, x, Scalar(1) - x);
}

/// P(T <= -|t|) for Student's t with `dof` degrees of freedom.
template <typename Scalar>
Scalar student_t_lower_tail(Scalar t, std::int64_t dof) {
  if (dof < 1) throw DomainError("student t requires dof >= 1");
  if (std::isnan(t)) throw DomainError("student t evaluated at NaN");
  if (std::isinf(t)) return 0;
  const Scalar nu = Scalar(dof);
  const Scalar t2 = t * t;
  const Scalar denom = nu + t2;
  return Scalar(0.5) * incomplete_beta(nu / Scalar(2), Scalar(0.5), nu / denom, t2 / denom);
}

/// CDF of Student's t distribution.
template <typename Scalar>
Scalar student_t_cdf(Scalar t, std::int64_t dof) {
  const Scalar tail = student_t_lower_tail(t, dof);
  return t > 0 ? Scalar(1) - tail : tail;
}

/// Two-sided p-value of a t statistic: P(|T| >= |t|).
template <typename Scalar>
Scalar student_t_two_sided_p(Scalar t, std::int64_t dof) {
  return Scalar(2) * student_t_lower_tail(t, dof);
}

/// Upper tail P(F >= f) of the F distribution with (d1, d2) degrees of freedom.
template <typename Scalar>
Scalar f_distribution_sf(Scalar f, std::int64_t d1, std::int64_t d2) {
  if (d1 < 1 || d2 < 1) throw DomainError("F distribution requires d1, d2 >= 1");
  if (std::isnan(f)) throw DomainError("F distribution evaluated at NaN");
  if (f <= 0) return 1;
  if (std::isinf(f)) return 0;
  const Scalar a = Scalar(d1) * f;
  const Scalar denom = Scalar(d2) + a;
  return incomplete_beta(Scalar(d2) / Scalar(2), Scalar(d1) / Scalar(2), Scalar(d2) / denom,
                         a / denom);
}

template <typename Scalar>
Scalar f_distribution_cdf(Scalar f, std::int64_t d1, std::int64_t d2) {
  return Scalar(1) - f_distribution_sf(f, d1, d2);
}

}  // namespace fairedu
