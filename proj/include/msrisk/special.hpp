#pragma once

// Univariate Gaussian and Student-t kernels.

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "msrisk/error.hpp"

namespace msrisk {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

/// Inverse of normal_cdf on (0,1); clamps to +-38.5 at the ends.
inline double normal_quantile(double p) {
  if (p <= 0.0) return -38.5;
  if (p >= 1.0) return 38.5;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// log Gamma((nu + d)/2) - log Gamma(nu/2), accurate for large nu.
inline double log_gamma_half_ratio(double nu, double d) {
  return -std::log(boost::math::tgamma_delta_ratio(0.5 * nu, 0.5 * d));
}

inline double t_std_logpdf(double x, double nu) {
  return log_gamma_half_ratio(nu, 1.0) - 0.5 * std::log(nu * std::numbers::pi) -
         0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

inline double t_logpdf(double y, double mu, double sigma2, double nu) {
  const double s = std::sqrt(sigma2);
  return t_std_logpdf((y - mu) / s, nu) - std::log(s);
}

namespace detail {
/// P(T <= -|x|) for the standard t with nu dof, via the regularized
/// incomplete beta function.
inline double t_lower_tail(double x, double nu) {
  const double x2 = x * x;
  if (nu < 2.0 * x2) return 0.5 * boost::math::ibeta(0.5 * nu, 0.5, nu / (nu + x2));
  return 0.5 * boost::math::ibetac(0.5, 0.5 * nu, x2 / (nu + x2));
}
}  // namespace detail

inline double t_std_cdf(double x, double nu) {
  if (std::isinf(x)) return x < 0 ? 0.0 : 1.0;
  if (x == 0.0) return 0.5;
  const double tail = detail::t_lower_tail(x, nu);
  return x < 0.0 ? tail : 1.0 - tail;
}

inline double t_cdf(double y, double mu, double sigma2, double nu) {
  require(sigma2 > 0.0, ErrorCode::InvalidArgument, "t_cdf needs sigma2 > 0");
  require(nu > 0.0, ErrorCode::InvalidArgument, "t_cdf needs nu > 0");
  return t_std_cdf((y - mu) / std::sqrt(sigma2), nu);
}

inline double t_std_quantile(double tau, double nu) {
  if (tau == 0.5) return 0.0;
  const double lower = std::min(tau, 1.0 - tau);
  double x;
  if (2.0 * lower < 0.25) {
    const double w = boost::math::ibeta_inv(0.5 * nu, 0.5, 2.0 * lower);
    x = std::sqrt(nu * (1.0 - w) / w);
  } else {
    const double u = boost::math::ibeta_inv(0.5, 0.5 * nu, 1.0 - 2.0 * lower);
    x = std::sqrt(nu * u / (1.0 - u));
  }
  if (tau < 0.5) x = -x;
  // Newton polish on the CDF itself.
  for (int it = 0; it < 3; ++it) {
    const double f = std::exp(t_std_logpdf(x, nu));
    if (!(f > 0.0)) break;
    const double step = (t_std_cdf(x, nu) - tau) / f;
    if (!std::isfinite(step)) break;
    x -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

inline double t_quantile(double tau, double mu, double sigma2, double nu) {
  require(tau > 0.0 && tau < 1.0, ErrorCode::InvalidArgument, "t_quantile needs tau in (0,1)");
  require(sigma2 > 0.0, ErrorCode::InvalidArgument, "t_quantile needs sigma2 > 0");
  require(nu > 0.0, ErrorCode::InvalidArgument, "t_quantile needs nu > 0");
  return mu + std::sqrt(sigma2) * t_std_quantile(tau, nu);
}

/// kappa_nu(a) = -E[Z 1{Z <= a}] for the standard Student-t Z with nu > 1
/// dof; tends to the Gaussian density phi(a) as nu grows.
inline double t_partial_expectation_kernel(double a, double nu) {
  const double ratio = boost::math::tgamma_delta_ratio(0.5 * (nu - 1.0), 0.5);
  return ratio * std::sqrt(nu) / (2.0 * std::sqrt(std::numbers::pi)) *
         std::exp(-0.5 * (nu - 1.0) * std::log1p(a * a / nu));
}

}  // namespace msrisk
