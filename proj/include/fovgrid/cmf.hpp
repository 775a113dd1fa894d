#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fovgrid {

/// Thrown when an argument is outside the domain of a geometric operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Cortical magnification model M(r) = k_a / (r + a).
///
/// `k_a` normalizes the area under M over [0, r_max] to 1, so the cortical
/// coordinate w runs from 0 at the fovea to 1 at the field-of-view edge.
/// Construct through `CmfParams::make`; the normalization constant is
/// computed once and shared by every module that consumes the params.
struct CmfParams {
  double a = 0.5;
  double r_max = 8.0;
  double k_a = 0.0;

  static CmfParams make(double a, double r_max) {
    if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("foveation parameter a must be positive");
    if (!(r_max > 0.0) || !std::isfinite(r_max)) throw DomainError("r_max must be positive");
    return CmfParams{a, r_max, 1.0 / std::log1p(r_max / a)};
  }

  bool operator==(const CmfParams&) const = default;
};

/// Normalized magnification k_a / (r + a), in 1/degrees.
inline double magnification(const CmfParams& p, double r) {
  if (r < 0.0) throw DomainError("eccentricity must be nonnegative");
  return p.k_a / (r + p.a);
}

/// Cortical position w(r) = k_a * ln((r + a) / a). w(0) = 0 and w(r_max) = 1.
inline double integrate_cmf(const CmfParams& p, double r) {
  if (r < 0.0) throw DomainError("eccentricity must be nonnegative");
  return p.k_a * std::log1p(r / p.a);
}

/// Largest cortical position accepted by `invert_cmf`; values above 1 address padding rings.
inline constexpr double kMaxCorticalPosition = 4.0;

/// Eccentricity at cortical position w: r = a * (exp(w / k_a) - 1).
inline double invert_cmf(const CmfParams& p, double w) {
  if (!(w >= 0.0) || w > kMaxCorticalPosition)
    throw DomainError("cortical position outside [0, " + std::to_string(kMaxCorticalPosition) + "]");
  if (w == 1.0) return p.r_max;
  return p.a * std::expm1(w / p.k_a);
}

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle into [0, 2pi).
inline double wrap_angle(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;
  return t;
}

/// Wraps an angle difference into (-pi, pi].
inline double wrap_delta(double d) {
  double t = std::remainder(d, kTwoPi);
  if (t <= -std::numbers::pi) t += kTwoPi;
  return t;
}

}  // namespace fovgrid
